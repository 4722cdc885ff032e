#!/usr/bin/env python3
"""Build a desk-scale experiment: glyph datasets, a trained MLP and a pipeline config"""
import argparse
import json
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from data.architectures import MLP_WIDTHS, mlp_spec  # noqa: E402
from data.synthetic import GLYPH_PATTERNS, make_glyphs  # noqa: E402
from services.experiment_service import stage_seed  # noqa: E402
from services.nn_engine_service import accuracy, save_model, train_sgd  # noqa: E402
from services.tensor_io_service import write_dataset  # noqa: E402
from src.config import Config  # noqa: E402

logger = logging.getLogger(__name__)

FIXTURE_CORRUPTION = "rotate:90;flip:h;translate:1,0"
SPLITS = ("train", "validation", "test")


def build_fixtures(
    out_dir,
    seed: int = Config.DEFAULT_SEED,
    n_train: int = 400,
    n_validation: int = 400,
    n_test: int = 500,
    epochs: int = 30,
    method: str = "actgraph",
    balance_target: int = Config.BALANCE_TARGET,
) -> Path:
    """Write every fixture file into out_dir and return the config path"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sizes = {"train": n_train, "validation": n_validation, "test": n_test}
    refs = {}
    datasets = {}
    for stream, split in enumerate(SPLITS, start=1):
        dataset = make_glyphs(sizes[split], seed=stage_seed(seed, stream))
        inputs, labels = out_dir / f"{split}.agtd", out_dir / f"{split}.aglb"
        write_dataset(dataset, inputs, labels)
        refs[split] = {"inputs": inputs.name, "labels": labels.name}
        datasets[split] = dataset

    spec = mlp_spec(datasets["train"].case_shape, len(GLYPH_PATTERNS), MLP_WIDTHS)
    result = train_sgd(spec, datasets["train"], epochs=epochs, seed=seed)
    save_model(out_dir / "model.agmf", spec, result.weights)
    logger.info(
        "fixture model: loss %.4f, test accuracy %.4f",
        result.final_loss,
        accuracy(spec, result.weights, datasets["test"]),
    )

    n_fault = n_test // 5
    config = {
        "model": "model.agmf",
        "train": refs["train"],
        "validation": refs["validation"],
        "test": refs["test"],
        "method": method,
        "corruption": FIXTURE_CORRUPTION,
        "test_normal": n_test - n_fault,
        "test_fault": n_fault,
        "balance_target": balance_target,
        "seed": seed,
    }
    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return config_path


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="fixtures")
    parser.add_argument("--seed", type=int, default=Config.DEFAULT_SEED)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--full-scale", action="store_true", help="10000-case test pool, 5000 per ranker class")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    sizes = {}
    if args.full_scale:
        n_test = Config.FULL_TEST_NORMAL + Config.FULL_TEST_FAULT
        sizes = {"n_train": n_test, "n_validation": n_test, "n_test": n_test, "balance_target": Config.FULL_BALANCE_TARGET}
    path = build_fixtures(args.out, seed=args.seed, epochs=args.epochs, **sizes)
    print(f"✅ fixture experiment written to {path}", file=sys.stderr)
