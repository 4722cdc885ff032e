"""
actgraph command line: train a fixture DNN, corrupt inputs, score, rank,
evaluate and run whole prioritization experiments
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np
from click.core import ParameterSource
from pydantic import ValidationError

from data.architectures import MLP_WIDTHS, lenet5_spec, mlp_spec
from data.synthetic import make_blobs, make_glyphs
from models.embedding import build_embedding_store
from models.experiment import CorruptionSpec, RankerParams, load_experiment_config
from services.actgraph_service import FeatureExtractor, export_graph
from services.baseline_service import (
    act_features_from_capture,
    deepgini_scores,
    dsa_scores,
    last_hidden,
    mcp_prioritize,
)
from services.corruption_service import concat_datasets, corrupt
from services.evaluation_service import (
    cutoff_label,
    distance_report,
    label_faults_from_probs,
    parse_cutoffs,
    rauc_table,
    write_distance_report,
)
from services.experiment_service import (
    SWEEPABLE_PARAMS,
    benchmark,
    execute_experiment,
    sweep_params,
    sweep_trainset_sizes,
    write_report,
)
from services.nn_engine_service import InferenceEngine, accuracy, load_model, save_model, train_sgd
from services.ranker_service import balance_trainset, fit, load_ranker, prioritize, save_ranker, score
from services.tensor_io_service import (
    read_dataset,
    read_features_csv,
    read_labels,
    read_scores_csv,
    read_tensor,
    scores_frame,
    write_dataset,
    write_features_csv,
)
from src.config import Config
from src.errors import EXIT_DATA, EXIT_OK, EXIT_USAGE, ActGraphError, ConfigError, CountMismatch, ModelFormatError
from utils.number_format import NumberFormatter
from workers.chunk_worker import ChunkWorker

logger = logging.getLogger("actgraph")

EXISTING_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)
OUTPUT_FILE = click.Path(dir_okay=False, path_type=Path)


def _configure_logging(verbose: int):
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def seed_option(fn):
    return click.option(
        "--seed", type=int, default=Config.DEFAULT_SEED, show_default=True, help="Seed for stochastic stages"
    )(fn)


def threads_option(fn):
    return click.option(
        "--threads",
        type=click.IntRange(min=1),
        default=Config.DEFAULT_THREADS,
        show_default=True,
        help="Worker threads for per-case stages",
    )(fn)


def graph_options(fn):
    fn = click.option("--k", "k", type=click.IntRange(min=2), default=Config.DEFAULT_K, show_default=True)(fn)
    fn = click.option(
        "--cnf-layers", type=click.IntRange(min=1), default=Config.DEFAULT_CNF_LAYERS, show_default=True
    )(fn)
    fn = click.option(
        "--aggregation",
        type=click.Choice(Config.AGGREGATIONS),
        default=Config.DEFAULT_AGGREGATION,
        show_default=True,
    )(fn)
    return fn


def _emit_csv(frame, out: Optional[Path]):
    text = frame.to_csv(index=False, lineterminator="\n")
    if out is None:
        click.echo(text, nl=False)
    else:
        out.write_text(text)
        click.echo(f"✅ wrote {out}", err=True)


def _corruption(text: Optional[str]) -> Optional[CorruptionSpec]:
    if not text:
        return None
    try:
        return CorruptionSpec(ops=text)
    except (ValidationError, ValueError) as e:
        raise click.BadParameter(str(e), param_hint="--ops/--corruption") from e


def _cutoffs(text: str):
    try:
        return parse_cutoffs(text)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--cutoffs") from e


# ------------------- group -------------------
@click.group(invoke_without_command=True)
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug")
@click.pass_context
def cli(ctx, verbose):
    """Activation-graph test input prioritization toolkit."""
    _configure_logging(verbose)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help(), err=True)
        ctx.exit(EXIT_USAGE)


@cli.command("make-data")
@click.option("--kind", type=click.Choice(["blobs", "glyphs"]), required=True)
@click.option("--n", "n", type=click.IntRange(min=1), required=True)
@click.option("--classes", type=click.IntRange(min=2), default=4, show_default=True, help="blobs only")
@click.option("--inputs", "inputs_out", type=OUTPUT_FILE, required=True)
@click.option("--labels", "labels_out", type=OUTPUT_FILE, required=True)
@seed_option
def make_data(kind, n, classes, inputs_out, labels_out, seed):
    """Generate a synthetic dataset as AGTD/AGLB files."""
    if kind == "blobs":
        dataset = make_blobs(n, num_classes=classes, seed=seed)
    else:
        dataset = make_glyphs(n, seed=seed)
    write_dataset(dataset, inputs_out, labels_out)
    click.echo(f"✅ {n} {kind} cases -> {inputs_out}, {labels_out}", err=True)


@cli.command("train-dnn")
@click.option("--inputs", type=EXISTING_FILE, required=True)
@click.option("--labels", type=EXISTING_FILE, required=True)
@click.option("--arch", type=click.Choice(["mlp", "lenet5"]), default="mlp", show_default=True)
@click.option("--widths", default=",".join(str(w) for w in MLP_WIDTHS), show_default=True)
@click.option("--classes", type=click.IntRange(min=2), default=None, help="defaults to max label + 1")
@click.option("--epochs", type=click.IntRange(min=0), default=Config.TRAIN_EPOCHS, show_default=True)
@click.option("--lr", type=click.FloatRange(min=0, min_open=True), default=Config.TRAIN_LR, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=Config.TRAIN_BATCH_SIZE, show_default=True)
@click.option("--out", type=OUTPUT_FILE, required=True)
@seed_option
def train_dnn(inputs, labels, arch, widths, classes, epochs, lr, batch_size, out, seed):
    """Train a fixture classifier and save it as an AGMF model."""
    dataset = read_dataset(inputs, labels)
    num_classes = classes or int(dataset.labels.max()) + 1
    if arch == "lenet5":
        spec = lenet5_spec(num_classes)
    else:
        try:
            layer_widths = [int(w) for w in widths.split(",") if w.strip()]
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--widths") from e
        spec = mlp_spec(dataset.case_shape, num_classes, layer_widths)
    result = train_sgd(spec, dataset, epochs=epochs, lr=lr, seed=seed, batch_size=batch_size)
    save_model(out, spec, result.weights)
    acc = accuracy(spec, result.weights, dataset)
    click.echo(
        f"✅ trained {arch}: loss {result.losses[0]:.4f} -> {result.final_loss:.4f}, "
        f"train accuracy {acc:.4f} -> {out}",
        err=True,
    )


@cli.command("corrupt")
@click.option("--inputs", type=EXISTING_FILE, required=True)
@click.option("--labels", type=EXISTING_FILE, required=True)
@click.option("--ops", required=True, help="e.g. 'rotate:90;flip:h;translate:1,0'")
@click.option("--out-inputs", type=OUTPUT_FILE, required=True)
@click.option("--out-labels", type=OUTPUT_FILE, required=True)
@seed_option
def corrupt_cmd(inputs, labels, ops, out_inputs, out_labels, seed):
    """Apply one seeded natural corruption per case."""
    spec = _corruption(ops)
    corrupted = corrupt(read_dataset(inputs, labels), spec, seed)
    write_dataset(corrupted, out_inputs, out_labels)
    click.echo(f"✅ corrupted {len(corrupted)} cases -> {out_inputs}", err=True)


@cli.command("score")
@click.option("--model", type=EXISTING_FILE, required=True)
@click.option("--inputs", type=EXISTING_FILE, required=True)
@click.option("--method", type=click.Choice(Config.UNSUPERVISED_METHODS), required=True)
@click.option("--train-inputs", type=EXISTING_FILE, default=None, help="dsa only")
@click.option("--train-labels", type=EXISTING_FILE, default=None, help="dsa only")
@click.option("--out", type=OUTPUT_FILE, default=None, help="index,score CSV (stdout if omitted)")
@threads_option
def score_cmd(model, inputs, method, train_inputs, train_labels, out, threads):
    """Score cases with an unsupervised baseline (DeepGini, MCP, DSA)."""
    if method == "dsa" and (train_inputs is None or train_labels is None):
        raise click.UsageError("--method dsa needs --train-inputs and --train-labels")
    spec, weights = load_model(model)
    engine = InferenceEngine(spec, weights, ChunkWorker(threads))
    probs, capture = engine.run(read_tensor(inputs).to_array(), stage="test")
    if method == "gini":
        scores = deepgini_scores(probs)
    elif method == "mcp":
        scores = mcp_prioritize(probs).scores
    else:
        train = read_dataset(train_inputs, train_labels)
        _, train_capture = engine.run(train.array(), stage="train")
        store = build_embedding_store(last_hidden(train_capture), train.labels)
        scores = dsa_scores(last_hidden(capture), np.argmax(probs, axis=1), store)
    _emit_csv(scores_frame(scores, prioritize(scores).order), out)


def _features(method, spec, weights, probs, capture, k, cnf_layers, aggregation, worker):
    if method == "actgraph":
        return FeatureExtractor(spec, weights, k, cnf_layers, aggregation, worker).transform(capture)
    return act_features_from_capture(probs, capture)


@cli.command("fit-ranker")
@click.option("--model", type=EXISTING_FILE, required=True)
@click.option("--inputs", type=EXISTING_FILE, required=True)
@click.option("--labels", type=EXISTING_FILE, required=True)
@click.option("--method", type=click.Choice(Config.SUPERVISED_METHODS), default="actgraph", show_default=True)
@click.option("--corruption", default=None, help="also train on a corrupted copy, e.g. 'rotate:90;flip:h'")
@click.option("--balance-target", type=click.IntRange(min=1), default=Config.BALANCE_TARGET, show_default=True)
@click.option("--n-estimators", type=click.IntRange(min=0), default=Config.N_ESTIMATORS, show_default=True)
@click.option("--max-depth", type=click.IntRange(min=0), default=Config.MAX_DEPTH, show_default=True)
@click.option("--learning-rate", type=float, default=Config.LEARNING_RATE, show_default=True)
@click.option("--colsample-bytree", type=float, default=Config.COLSAMPLE_BYTREE, show_default=True)
@click.option("--reg-lambda", type=float, default=Config.REG_LAMBDA, show_default=True)
@click.option("--gamma", type=float, default=Config.GAMMA, show_default=True)
@click.option("--out", type=OUTPUT_FILE, required=True)
@graph_options
@seed_option
@threads_option
def fit_ranker(
    model, inputs, labels, method, corruption, balance_target, n_estimators, max_depth,
    learning_rate, colsample_bytree, reg_lambda, gamma, out, k, cnf_layers, aggregation, seed, threads,
):
    """Train the boosted-tree ranker on validation-set features."""
    if cnf_layers > k:
        raise click.BadParameter("cannot exceed --k", param_hint="--cnf-layers")
    try:
        params = RankerParams(
            learning_rate=learning_rate,
            colsample_bytree=colsample_bytree,
            max_depth=max_depth,
            n_estimators=n_estimators,
            reg_lambda=reg_lambda,
            gamma=gamma,
            seed=seed,
        )
    except ValidationError as e:
        raise click.UsageError(str(e)) from e
    ops = _corruption(corruption)

    spec, weights = load_model(model)
    worker = ChunkWorker(threads)
    dataset = read_dataset(inputs, labels)
    if ops is not None:
        dataset = concat_datasets([dataset, corrupt(dataset, ops, seed)])
    probs, capture = InferenceEngine(spec, weights, worker).run(dataset.array(), stage="validation")
    flags = label_faults_from_probs(probs, dataset.labels)
    features = _features(method, spec, weights, probs, capture, k, cnf_layers, aggregation, worker)
    ranker = fit(balance_trainset(features, flags, balance_target, seed), params)
    ranker.params["features"] = {
        "method": method,
        "k": k,
        "cnf_layers": cnf_layers,
        "aggregation": aggregation,
    }
    save_ranker(ranker, out)
    click.echo(
        f"✅ ranker on {len(dataset)} cases ({int(flags.sum())} faults), "
        f"loss {ranker.loss_history[0]:.4f} -> {ranker.loss_history[-1]:.4f} -> {out}",
        err=True,
    )


@cli.command("rank")
@click.option("--model", type=EXISTING_FILE, required=True)
@click.option("--ranker", "ranker_path", type=EXISTING_FILE, required=True)
@click.option("--inputs", type=EXISTING_FILE, required=True)
@click.option("--out", type=OUTPUT_FILE, default=None, help="index,score CSV in priority order")
@click.option("--features-out", type=OUTPUT_FILE, default=None)
@threads_option
def rank_cmd(model, ranker_path, inputs, out, features_out, threads):
    """Score and order cases with a fitted ranker."""
    ranker = load_ranker(ranker_path)
    settings = ranker.params.get("features", {})
    method = settings.get("method", "actgraph")
    aggregation = settings.get("aggregation", Config.DEFAULT_AGGREGATION)
    if method not in Config.SUPERVISED_METHODS or aggregation not in Config.AGGREGATIONS:
        raise ModelFormatError(f"{ranker_path}: unknown feature settings {settings}")
    spec, weights = load_model(model)
    worker = ChunkWorker(threads)
    probs, capture = InferenceEngine(spec, weights, worker).run(
        read_tensor(inputs).to_array(), stage="test"
    )
    features = _features(
        method,
        spec,
        weights,
        probs,
        capture,
        settings.get("k", Config.DEFAULT_K),
        settings.get("cnf_layers", Config.DEFAULT_CNF_LAYERS),
        aggregation,
        worker,
    )
    scores = score(ranker, features)
    if features_out is not None:
        write_features_csv(features_out, features)
    _emit_csv(scores_frame(scores, prioritize(scores).order), out)


@cli.command("evaluate")
@click.option("--scores", type=EXISTING_FILE, required=True, help="index,score CSV")
@click.option("--labels", type=EXISTING_FILE, required=True, help="AGLB with fault flags, or ground truth")
@click.option("--model", type=EXISTING_FILE, default=None, help="labels faults when the AGLB has no flags")
@click.option("--inputs", type=EXISTING_FILE, default=None)
@click.option("--cutoffs", default="100,500,1000,all", show_default=True)
def evaluate(scores, labels, model, inputs, cutoffs):
    """Print RAUC per cutoff as `rauc_<n>,<value>` lines."""
    cutoff_values = _cutoffs(cutoffs)
    values = read_scores_csv(scores)
    truth, flags = read_labels(labels)
    if flags is None:
        if model is None or inputs is None:
            raise click.UsageError("labels carry no fault flags; pass --model and --inputs")
        spec, weights = load_model(model)
        probs, _ = InferenceEngine(spec, weights).run(read_tensor(inputs).to_array(), stage="label")
        flags = label_faults_from_probs(probs, truth)
    if flags.size != values.size:
        raise CountMismatch(f"{values.size} scores but {flags.size} labels")
    table = rauc_table(prioritize(values).order, flags, cutoff_values)
    for cutoff in cutoff_values:
        label = cutoff_label(cutoff)
        click.echo(f"{label},{NumberFormatter.format_ratio(table[label])}")


@cli.command("export-graph")
@click.option("--model", type=EXISTING_FILE, required=True)
@click.option("--inputs", type=EXISTING_FILE, required=True)
@click.option("--case", "case_index", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--threshold", type=click.FloatRange(0, 1), default=Config.EXPORT_THRESHOLD, show_default=True)
@click.option("--out-dot", type=OUTPUT_FILE, default=None, help="stdout if omitted")
@click.option("--out-csv", type=OUTPUT_FILE, default=None)
@graph_options
def export_graph_cmd(model, inputs, case_index, threshold, out_dot, out_csv, k, cnf_layers, aggregation):
    """Write one case's thresholded activation graph as DOT and CSV."""
    array = read_tensor(inputs).to_array()
    if case_index >= array.shape[0]:
        raise click.BadParameter(f"only {array.shape[0]} cases", param_hint="--case")
    spec, weights = load_model(model)
    _, capture = InferenceEngine(spec, weights).run(array[case_index : case_index + 1], stage="export")
    graph = FeatureExtractor(spec, weights, k, min(cnf_layers, k), aggregation).graph(capture)
    dot, csv = export_graph(graph, threshold)
    if out_csv is not None:
        out_csv.write_text(csv)
    if out_dot is None:
        click.echo(dot, nl=False)
    else:
        out_dot.write_text(dot)
        click.echo(f"✅ graph of case {case_index} -> {out_dot}", err=True)


# ------------------- experiments -------------------
PIPELINE_OVERRIDES = ("seed", "threads", "method", "k", "cutoffs")


def _experiment_config(ctx, config_path: Path, **flags):
    """Config file as base; a flag wins only when given on the command line"""
    config = load_experiment_config(config_path)
    update = {
        name: value
        for name, value in flags.items()
        if ctx.get_parameter_source(name) == ParameterSource.COMMANDLINE
    }
    if not update:
        return config
    try:
        merged = type(config).model_validate({**config.model_dump(exclude_unset=True), **update})
    except ValidationError as e:
        raise ConfigError(f"flags conflict with {config_path}: {e}") from e
    return merged


def config_overrides(fn):
    fn = click.option("--seed", type=int, default=Config.DEFAULT_SEED, show_default=True)(fn)
    fn = threads_option(fn)
    fn = click.option("--method", type=click.Choice(Config.METHODS), default="actgraph", show_default=True)(fn)
    fn = click.option("--k", "k", type=click.IntRange(min=2), default=Config.DEFAULT_K, show_default=True)(fn)
    fn = click.option("--cutoffs", default="100,500,1000,all", show_default=True)(fn)
    return fn


@cli.command("pipeline")
@click.option("--config", "config_path", type=EXISTING_FILE, required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=Path("report"))
@config_overrides
@click.pass_context
def pipeline(ctx, config_path, out_dir, seed, threads, method, k, cutoffs):
    """Run a whole experiment from an ExperimentConfig JSON file."""
    config = _experiment_config(ctx, config_path, seed=seed, threads=threads, method=method, k=k, cutoffs=cutoffs)
    result = execute_experiment(config)
    paths = write_report(result, out_dir)
    for label, value in result.report["rauc"].items():
        click.echo(f"{label},{NumberFormatter.format_ratio(value)}")
    click.echo(f"✅ report -> {paths['json']}", err=True)


@cli.command("distance-report")
@click.option("--features", type=EXISTING_FILE, required=True, help="features CSV")
@click.option("--types", type=EXISTING_FILE, required=True, help="AGLB whose labels are type ids")
@click.option("--out", type=OUTPUT_FILE, default=None)
def distance_report_cmd(features, types, out):
    """Intra/inter-type mean Euclidean distances of feature vectors."""
    matrix = read_features_csv(features)
    type_labels, _ = read_labels(types)
    if out is None:
        _emit_csv(distance_report(matrix, type_labels), None)
    else:
        write_distance_report(out, matrix, type_labels)
        click.echo(f"✅ distance report -> {out}", err=True)


@cli.command("sweep")
@click.option("--config", "config_path", type=EXISTING_FILE, required=True)
@click.option("--sizes", default=None, help="balanced per-class trainset sizes, e.g. 50,100,200")
@click.option("--param", type=click.Choice(SWEEPABLE_PARAMS), default=None)
@click.option("--values", "param_values", default=None, help="comma-separated values for --param")
@click.option("--out", type=OUTPUT_FILE, default=None)
@config_overrides
@click.pass_context
def sweep(ctx, config_path, sizes, param, param_values, out, seed, threads, method, k, cutoffs):
    """RAUC sensitivity to trainset size or one ranker parameter."""
    if (sizes is None) == (param is None):
        raise click.UsageError("pass exactly one of --sizes or --param/--values")
    config = _experiment_config(ctx, config_path, seed=seed, threads=threads, method=method, k=k, cutoffs=cutoffs)
    if sizes is not None:
        try:
            frame = sweep_trainset_sizes(config, [int(s) for s in sizes.split(",") if s.strip()])
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--sizes") from e
    else:
        if not param_values:
            raise click.UsageError("--param needs --values")
        cast = int if param in ("max_depth", "n_estimators") else float
        try:
            values = [cast(v) for v in param_values.split(",") if v.strip()]
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--values") from e
        frame = sweep_params(config, {param: values})
    _emit_csv(frame, out)


@cli.command("benchmark")
@click.option("--config", "config_path", type=EXISTING_FILE, required=True)
@click.option("--methods", default=",".join(Config.METHODS), show_default=True)
@click.option("--repeats", type=click.IntRange(min=1), default=Config.BENCHMARK_REPEATS, show_default=True)
@click.option("--out", type=OUTPUT_FILE, default=None)
@threads_option
@click.pass_context
def benchmark_cmd(ctx, config_path, methods, repeats, out, threads):
    """Mean seconds to prioritize the test set, per method."""
    chosen = [m.strip() for m in methods.split(",") if m.strip()]
    unknown = [m for m in chosen if m not in Config.METHODS]
    if unknown:
        raise click.BadParameter(f"unknown methods {unknown}", param_hint="--methods")
    config = _experiment_config(ctx, config_path, threads=threads)
    _emit_csv(benchmark(config, chosen, repeats), out)


def main(argv=None) -> int:
    """Run the CLI and map failures onto exit codes (1 usage, 2 data/model)"""
    try:
        rv = cli.main(args=argv, prog_name="actgraph", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("❌ aborted", err=True)
        return EXIT_USAGE
    except ActGraphError as e:
        logger.debug("command failed", exc_info=True)
        click.echo(f"❌ {type(e).__name__}: {e}", err=True)
        return e.exit_code
    except OSError as e:
        click.echo(f"❌ I/O failure: {e}", err=True)
        return EXIT_DATA
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
