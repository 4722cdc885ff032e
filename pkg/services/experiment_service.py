"""
End-to-end prioritization experiment: skeleton, validation features, ranker,
test scenario, scores, ranking and RAUC report
"""

import contextlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from models.embedding import build_embedding_store
from models.experiment import ExperimentConfig, RankerParams
from models.network import ActivationCapture
from models.ranking import GBDTModel, RankedList
from models.tensor import LabeledDataset
from services.actgraph_service import FeatureExtractor
from services.baseline_service import (
    act_features_from_capture,
    deepgini_scores,
    dsa_scores,
    last_hidden,
    mcp_prioritize,
)
from services.corruption_service import Scenario, compose_scenario, concat_datasets, corrupt
from services.evaluation_service import (
    cutoff_label,
    distance_matrix,
    label_faults_from_probs,
    random_rauc_mean,
    rauc_by_type,
    rauc_table,
)
from services.nn_engine_service import InferenceEngine, load_model
from services.ranker_service import balance_trainset, fit, prioritize, score
from services.tensor_io_service import read_dataset, write_scores_csv
from src.config import Config
from src.errors import ConfigError, StageError
from utils.number_format import NumberFormatter
from utils.rng import SplitMix64
from workers.chunk_worker import ChunkWorker

logger = logging.getLogger(__name__)

RANDOM_SHUFFLES = 1000

# sub-stream ids for stochastic stages
_VALIDATION_CORRUPTION = 1
_TEST_CORRUPTION = 2
_SCENARIO = 3
_BALANCE = 4
_RANDOM_BASELINE = 5


def stage_seed(seed: int, stream: int) -> int:
    return SplitMix64(seed).spawn(stream).seed


@contextlib.contextmanager
def _stage(name: str, timings: Dict[str, float]):
    logger.info("stage %s", name)
    started = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e
    finally:
        timings[name] = round((time.perf_counter() - started) * 1000.0, 3)


@dataclass
class ExperimentResult:
    report: dict
    ranked: RankedList
    scenario: Scenario
    features: Optional[np.ndarray] = None
    ranker: Optional[GBDTModel] = None


def _ranker_params(config: ExperimentConfig) -> RankerParams:
    if "seed" in config.ranker.model_fields_set:
        return config.ranker
    return config.ranker.model_copy(update={"seed": config.seed})


def _with_flags(dataset: LabeledDataset, flags: np.ndarray) -> LabeledDataset:
    return LabeledDataset(inputs=dataset.inputs, labels=dataset.labels, flags=flags)


def _subset_capture(capture: ActivationCapture, rows: np.ndarray) -> ActivationCapture:
    return ActivationCapture([layer[rows] for layer in capture.layers])


def _supervised_features(method: str, probs, capture, extractor: Optional[FeatureExtractor]) -> np.ndarray:
    if method == "actgraph":
        return extractor.transform(capture)
    return act_features_from_capture(probs, capture)


def _validation_set(config: ExperimentConfig, validation: LabeledDataset) -> LabeledDataset:
    ops = config.validation_corruption or config.corruption
    if ops is None:
        return validation
    corrupted = corrupt(validation, ops, stage_seed(config.seed, _VALIDATION_CORRUPTION))
    return concat_datasets([validation, corrupted])


def _test_scenario(config: ExperimentConfig, test: LabeledDataset, extra: List[LabeledDataset], engine: InferenceEngine):
    """Forward every pool case once, then draw the scenario from the results"""
    pools = [test]
    if config.corruption is not None:
        pools.append(corrupt(test, config.corruption, stage_seed(config.seed, _TEST_CORRUPTION)))
    pools.extend(extra)
    pooled = pools[0] if len(pools) == 1 else concat_datasets(pools)
    probs, capture = engine.run(pooled.array(), stage="test")
    flags = label_faults_from_probs(probs, pooled.labels)

    if len(pools) == 1:
        n = len(test)
        scenario = Scenario(
            dataset=_with_flags(test, flags),
            types=np.zeros(n, dtype=np.int64),
            source=np.arange(n),
        )
        return scenario, probs, capture

    offsets = np.cumsum([0] + [len(pool) for pool in pools])
    flagged = [
        _with_flags(pool, flags[offsets[i] : offsets[i + 1]]) for i, pool in enumerate(pools)
    ]
    scenario = compose_scenario(
        flagged[0],
        flagged[1:],
        config.test_normal,
        config.test_fault,
        stage_seed(config.seed, _SCENARIO),
    )
    return scenario, probs[scenario.source], _subset_capture(capture, scenario.source)


def execute_experiment(config: ExperimentConfig) -> ExperimentResult:
    timings: Dict[str, float] = {}
    method = config.method
    worker = ChunkWorker(config.threads, config.chunk_size)

    with _stage("load", timings):
        spec, weights = load_model(config.model)
        validation = read_dataset(config.validation.inputs, config.validation.labels)
        test = read_dataset(config.test.inputs, config.test.labels)
        train = read_dataset(config.train.inputs, config.train.labels) if config.train else None
        extra = [read_dataset(ref.inputs, ref.labels) for ref in config.fault_datasets]
        for dataset in [validation, test, *extra] + ([train] if train else []):
            dataset.validate_classes(spec.num_classes)
    engine = InferenceEngine(spec, weights, worker)

    extractor = None
    if method == "actgraph":
        with _stage("skeleton", timings):
            extractor = FeatureExtractor(
                spec, weights, config.k, config.cnf_layers, config.aggregation, worker
            )

    ranker = None
    validation_cases = 0
    if method in Config.SUPERVISED_METHODS:
        with _stage("validation", timings):
            validation_set = _validation_set(config, validation)
            validation_cases = len(validation_set)
            probs, capture = engine.run(validation_set.array(), stage="validation")
            flags = label_faults_from_probs(probs, validation_set.labels)
            features = _supervised_features(method, probs, capture, extractor)
        with _stage("fit", timings):
            trainset = balance_trainset(
                features, flags, config.balance_target, stage_seed(config.seed, _BALANCE)
            )
            ranker = fit(trainset, _ranker_params(config))

    with _stage("test", timings):
        scenario, probs, capture = _test_scenario(config, test, extra, engine)

    test_features = None
    with _stage("score", timings):
        if method in Config.SUPERVISED_METHODS:
            test_features = _supervised_features(method, probs, capture, extractor)
            scores = score(ranker, test_features)
        elif method == "gini":
            scores = deepgini_scores(probs)
        elif method == "mcp":
            scores = mcp_prioritize(probs).scores
        else:
            _, train_capture = engine.run(train.array(), stage="train")
            store = build_embedding_store(last_hidden(train_capture), train.labels)
            scores = dsa_scores(last_hidden(capture), np.argmax(probs, axis=1), store)

    with _stage("rank", timings):
        ranked = prioritize(scores, scenario.dataset.flags)

    with _stage("evaluate", timings):
        flags = ranked.flags
        cutoffs = config.cutoff_values()
        report = {
            "method": method,
            "seed": config.seed,
            "rauc": rauc_table(ranked.order, flags, cutoffs),
            "random_rauc_all": random_rauc_mean(
                flags, None, RANDOM_SHUFFLES, stage_seed(config.seed, _RANDOM_BASELINE)
            ),
            "cases": {
                "validation": validation_cases,
                "test": len(ranked),
                "test_faults": int(flags.sum()),
            },
            "forward_cases": dict(sorted(engine.invocations.items())),
        }
        if np.any(scenario.types > 0):
            report["rauc_by_type"] = {
                str(t): value
                for t, value in rauc_by_type(ranked.order, flags, scenario.types).items()
            }
            if test_features is not None and np.unique(scenario.types).size > 1:
                types, matrix, singleton = distance_matrix(test_features, scenario.types)
                report["distance"] = {
                    "types": types.tolist(),
                    "matrix": matrix.tolist(),
                    "singleton": singleton.tolist(),
                }
        report["timings_ms"] = timings
        report["config"] = config.echo()

    logger.info(
        "%s: %s", method, ", ".join(f"{k}={v:.4f}" for k, v in report["rauc"].items())
    )
    return ExperimentResult(report, ranked, scenario, test_features, ranker)


def run_experiment(config: ExperimentConfig) -> dict:
    return execute_experiment(config).report


# ------------------- report files -------------------
def report_frame(report: dict) -> pd.DataFrame:
    """`metric,value` rows: RAUC per cutoff, random baseline, per-type RAUC-ALL"""
    rows = list(report["rauc"].items())
    rows.append(("random_rauc_all", report["random_rauc_all"]))
    for t, value in report.get("rauc_by_type", {}).items():
        rows.append((f"rauc_all_type{t}", value))
    return pd.DataFrame(
        {
            "metric": [name for name, _ in rows],
            "value": NumberFormatter.format_row(value for _, value in rows),
        }
    )


def write_report(result: ExperimentResult, out_dir) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "report.json",
        "csv": out_dir / "report.csv",
        "scores": out_dir / "scores.csv",
    }
    paths["json"].write_text(json.dumps(result.report, sort_keys=True, indent=2) + "\n")
    report_frame(result.report).to_csv(paths["csv"], index=False, lineterminator="\n")
    write_scores_csv(paths["scores"], result.ranked.scores, result.ranked.order)
    return paths


# ------------------- studies -------------------
def _rauc_row(report: dict) -> dict:
    return dict(report["rauc"])


def sweep_trainset_sizes(config: ExperimentConfig, sizes: Iterable[int]) -> pd.DataFrame:
    """RAUC per balanced per-class trainset size"""
    if config.method not in Config.SUPERVISED_METHODS:
        raise ConfigError(f"trainset sweep needs a supervised method, got {config.method!r}")
    rows = []
    for size in sizes:
        report = run_experiment(config.model_copy(update={"balance_target": int(size)}))
        rows.append({"balance_target": int(size), **_rauc_row(report)})
    return pd.DataFrame(rows)


SWEEPABLE_PARAMS = ("max_depth", "colsample_bytree", "learning_rate", "n_estimators")


def sweep_params(config: ExperimentConfig, grid: Dict[str, Sequence]) -> pd.DataFrame:
    """Vary one ranker parameter at a time, others at the config value"""
    if config.method not in Config.SUPERVISED_METHODS:
        raise ConfigError(f"parameter sweep needs a supervised method, got {config.method!r}")
    rows = []
    for param, values in grid.items():
        if param not in SWEEPABLE_PARAMS:
            raise ConfigError(f"cannot sweep {param!r}; choose from {', '.join(SWEEPABLE_PARAMS)}")
        for value in values:
            ranker = config.ranker.model_copy(update={param: value})
            ranker = RankerParams.model_validate(ranker.model_dump(exclude_unset=True))
            report = run_experiment(config.model_copy(update={"ranker": ranker}))
            rows.append({"param": param, "value": value, **_rauc_row(report)})
    return pd.DataFrame(rows)


PRIORITIZE_STAGES = ("test", "score", "rank")


def benchmark(
    config: ExperimentConfig,
    methods: Iterable[str] = Config.METHODS,
    repeats: int = Config.BENCHMARK_REPEATS,
) -> pd.DataFrame:
    """Mean seconds to forward, score and rank the test set, per method"""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows = []
    for method in methods:
        if method == "dsa" and config.train is None:
            logger.warning("skipping dsa: no train dataset configured")
            continue
        run_config = config.model_copy(update={"method": method})
        seconds = []
        for _ in range(repeats):
            report = run_experiment(run_config)
            seconds.append(sum(report["timings_ms"][s] for s in PRIORITIZE_STAGES) / 1000.0)
        rows.append(
            {
                "method": method,
                "mean_seconds": float(np.mean(seconds)),
                "rauc_all": report["rauc"].get(cutoff_label(None)),
            }
        )
    return pd.DataFrame(rows)
