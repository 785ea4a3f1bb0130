from pathlib import Path
import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

src_dir = Path(__file__).parent.parent
if str(src_dir) not in sys.path:
    sys.path.insert(0, str(src_dir))

from models.oblivious_boosting import BoostConfig, predict, train
from modules.data_io import generate_synthetic
from modules.harness import paired_t_test
from modules.metrics import REPORT_SCALE, MetricSpec, per_query_metric
from modules.objectives import SmoothingConfig
from modules.ranking_core import RankForgeError

OUTPUT_DIR = "./data/experiments"
CHECKPOINT_FILE = f"{OUTPUT_DIR}/checkpoint.json"
RESULTS_FILE = f"{OUTPUT_DIR}/results.csv"
PER_QUERY_DIR = f"{OUTPUT_DIR}/per_query"

PRESETS = {
    "acceptance": {"queries": (2000, 500, 500), "iterations": 300, "depth": 6, "learning_rate": 0.1, "seeds": 5},
    "quick": {"queries": (300, 100, 100), "iterations": 50, "depth": 4, "learning_rate": 0.1, "seeds": 2},
}
TARGETS = ("ndcg@10", "map", "mrr", "err")


def load_checkpoint():
    """Load checkpoint with finished and failed run ids."""
    if os.path.exists(CHECKPOINT_FILE):
        with open(CHECKPOINT_FILE, "r") as f:
            return json.load(f)
    return {"processed": [], "failed": []}


def save_checkpoint(checkpoint):
    with open(CHECKPOINT_FILE, "w") as f:
        json.dump(checkpoint, f, indent=2)


def append_result(row):
    """Append one finished run to the results CSV."""
    new_row = pd.DataFrame([row])
    if os.path.exists(RESULTS_FILE):
        df = pd.concat([pd.read_csv(RESULTS_FILE), new_row], ignore_index=True)
    else:
        df = new_row
    df.to_csv(RESULTS_FILE, index=False)


def per_query_path(run_id):
    safe = run_id.replace("|", "__").replace(":", "-").replace("@", "at")
    return f"{PER_QUERY_DIR}/{safe}.npy"


def plan_runs(seeds):
    """Every (experiment, target, loss, variant, seed) run of the study."""
    runs = []
    for seed in range(seeds):
        for target in TARGETS:
            losses = ["query-rmse", f"lambdamart:{target}", "yetirank", f"yetiloss:{target}"]
            if target != "map":
                losses.append(f"stochasticrank:{target}")
            for loss in losses:
                runs.append({"experiment": "comparison", "target": target, "loss": loss, "variant": "default",
                             "seed": seed})
        for distribution in ("logistic", "gaussian", "none"):
            runs.append({"experiment": "smoothing", "target": "ndcg@10", "loss": "yetiloss:ndcg@10",
                         "variant": distribution, "seed": seed})
        for window in ("1", "2", "3", "all"):
            runs.append({"experiment": "window", "target": "ndcg@10", "loss": "yetiloss:ndcg@10",
                         "variant": window, "seed": seed})
    for run in runs:
        run["id"] = f"{run['experiment']}|{run['target']}|{run['loss']}|{run['variant']}|{run['seed']}"
    return runs


def build_config(run, preset):
    smoothing = SmoothingConfig(run["variant"] if run["experiment"] == "smoothing" else "logistic",
                                seed=run["seed"])
    window, exact = 1, False
    if run["experiment"] == "window" and run["variant"] != "all":
        window, exact = int(run["variant"]), True
    elif run["experiment"] == "window":
        window = "all"
    return BoostConfig(loss=run["loss"], eval_metric=run["target"], iterations=preset["iterations"],
                       learning_rate=preset["learning_rate"], depth=preset["depth"], smoothing=smoothing,
                       neighbor_window=window, exact_distance=exact, seed=run["seed"])


def execute(run, preset, splits):
    metric = MetricSpec.parse(run["target"])
    train_set, valid_set, test_set = (d.map_labels(metric.label_transform()) for d in splits)
    result = train(train_set, valid_set, build_config(run, preset))
    test_values = per_query_metric(predict(result.model, test_set), test_set, metric)
    train_value = REPORT_SCALE * per_query_metric(predict(result.model, train_set), train_set, metric).mean()
    baseline = REPORT_SCALE * per_query_metric(np.zeros(test_set.document_count), test_set, metric).mean()
    np.save(per_query_path(run["id"]), test_values)
    test_value = REPORT_SCALE * test_values.mean()
    return {**{k: run[k] for k in ("id", "experiment", "target", "loss", "variant", "seed")},
            "metric": metric.name, "test": test_value, "train": train_value, "gap": train_value - test_value,
            "baseline": baseline, "best_iteration": result.log.best_iteration}


def run_all(preset_name):
    preset = PRESETS[preset_name]
    Path(PER_QUERY_DIR).mkdir(parents=True, exist_ok=True)
    train_q, valid_q, test_q = preset["queries"]
    data = generate_synthetic(train_q + valid_q + test_q, (10, 30), 20, 0.1, 42)
    splits = (data.subset(range(train_q)), data.subset(range(train_q, train_q + valid_q)),
              data.subset(range(train_q + valid_q, train_q + valid_q + test_q)))

    checkpoint = load_checkpoint()
    processed = set(checkpoint["processed"])
    runs = [run for run in plan_runs(preset["seeds"]) if run["id"] not in processed]
    if processed:
        print(f"Resuming from checkpoint: {len(processed)} done, {len(runs)} pending")

    for index, run in enumerate(runs):
        print(f"Run {index + 1} of {len(runs)}: {run['id']}")
        try:
            append_result(execute(run, preset, splits))
            checkpoint["processed"].append(run["id"])
            if run["id"] in checkpoint["failed"]:
                checkpoint["failed"].remove(run["id"])
            save_checkpoint(checkpoint)
        except KeyboardInterrupt:
            print("\nInterrupted. Progress saved in checkpoint.")
            save_checkpoint(checkpoint)
            sys.exit(0)
        except RankForgeError as e:
            print(f"Run {run['id']} failed: {e}")
            if run["id"] not in checkpoint["failed"]:
                checkpoint["failed"].append(run["id"])
                save_checkpoint(checkpoint)

    print(f"\nDone. Processed: {len(checkpoint['processed'])}, failed: {len(checkpoint['failed'])}")


def _per_query_mean(run_ids):
    return np.mean([np.load(per_query_path(run_id)) for run_id in run_ids], axis=0)


def summarize():
    results = pd.read_csv(RESULTS_FILE)
    for experiment, frame in results.groupby("experiment", sort=False):
        table = frame.pivot_table(index=["target", "loss"] if experiment == "comparison" else ["variant"],
                                  values=["test", "train", "gap", "baseline"], aggfunc="mean")
        print(f"\n== {experiment}")
        print(table.to_string(float_format=lambda v: f"{v:.2f}"))

    comparison = results[results["experiment"] == "comparison"]
    print("\n== paired one-tailed t-tests, best loss against the rest (seed-averaged per-query values)")
    for target, frame in comparison.groupby("target", sort=False):
        means = frame.groupby("loss")["test"].mean().sort_values(ascending=False)
        best = means.index[0]
        best_values = _per_query_mean(frame.loc[frame["loss"] == best, "id"])
        for loss in means.index[1:]:
            test = paired_t_test(best_values, _per_query_mean(frame.loc[frame["loss"] == loss, "id"]))
            print(f"{target:8s} {best:24s} vs {loss:24s} t={test.t:8.3f} p={test.p:.3g}"
                  f"{' *' if test.significant else ''}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Objective comparison and ablations on synthetic data.")
    parser.add_argument("--preset", choices=sorted(PRESETS), default="quick")
    parser.add_argument("--summary-only", action="store_true")
    args = parser.parse_args()
    if not args.summary_only:
        run_all(args.preset)
    summarize()
