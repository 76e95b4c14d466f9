"""Run every CLI stage into a directory; shared by the CLI tests and the acceptance suite."""

from __future__ import annotations

from pathlib import Path

from osl.cli import main

SMALL = ["--dim", "6", "--classes", "4", "--foreign-classes", "2", "--samples-per-class", "60"]


def run(args) -> None:
    code = main([str(a) for a in args])
    if code != 0:
        raise AssertionError(f"osl {' '.join(map(str, args))} exited {code}")


def run_pipeline(root: Path, seed: int = 0, data_args=SMALL) -> dict[str, Path]:
    """Every stage in order; returns the directory of each stage."""
    d = {name: root / name for name in ("data", "model", "logits", "craft", "openmax", "eval_lc", "eval_om", "eval_adv", "plot")}
    run(["gen-data", "--seed", seed, "--out-dir", d["data"], *data_args])
    run(["train", "--data", d["data"] / "train.csv", "--seed", seed, "--epochs", "10", "--hidden", "16", "--out-dir", d["model"]])
    model = d["model"] / "classifier.json"
    run(["craft", "--model", model, "--kind", "fooling", "--n", "20", "--seed", seed + 1, "--out-dir", d["craft"]])
    run(["craft", "--model", model, "--kind", "adversarial", "--base", d["data"] / "test_domestic.csv",
         "--n", "20", "--seed", seed + 2, "--out-dir", d["craft"]])
    run(["extract-logits", "--model", model, "--out-dir", d["logits"], "--data",
         d["data"] / "train.csv", d["data"] / "test_domestic.csv", d["data"] / "test_foreign.csv",
         d["craft"] / "crafted_fooling.csv", d["craft"] / "crafted_adversarial.csv"])
    L = d["logits"]
    run(["calibrate-openmax", "--train-logits", L / "train_logits.csv", "--eta", "20", "--out-dir", d["openmax"]])
    scenario = ["--domestic", L / "test_domestic_logits.csv", "--foreign", L / "test_foreign_logits.csv",
                "--fooling", L / "crafted_fooling_logits.csv", "--seed", seed]
    run(["evaluate", "--method", "lc-exp", "--sweep", *scenario, "--out-dir", d["eval_lc"]])
    run(["evaluate", "--method", "openmax", "--model", d["openmax"] / "openmax_model.json", "--m-top", "3",
         "--sweep", *scenario, "--format", "csv", "--out-dir", d["eval_om"]])
    run(["evaluate", "--method", "lc-exp", "--domestic", L / "test_domestic_logits.csv",
         "--fooling", L / "crafted_adversarial_logits.csv", "--out-dir", d["eval_adv"]])
    run(["plot", "--scores", d["eval_lc"] / "scores.csv", "--adversarial", d["eval_adv"] / "scores.csv",
         "--log-scale", "--out-dir", d["plot"]])
    return d


def snapshot(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
