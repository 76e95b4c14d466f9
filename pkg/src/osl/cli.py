"""Command-line pipeline: gen-data -> train -> extract-logits -> craft ->
calibrate-openmax -> evaluate -> plot.

Exit codes: 0 success, 2 invalid input or arguments, 3 calibration/fit failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import metrics, openmax, pipeline, plots, synth
from .core import FOOLING, InvalidInputError, LogitSet, read_logits, write_logits, write_table
from .weibull import ConvergenceError, InsufficientDataError

log = logging.getLogger("osl")

EXIT_OK, EXIT_INVALID, EXIT_FIT = 0, 2, 3


def _out(args, name: str) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8", newline="")


def _require_seed(args) -> int:
    if args.seed is None:
        raise InvalidInputError(f"{args.command} is stochastic: --seed is required")
    return args.seed


# ---------------------------------------------------------------- subcommands


def cmd_gen_data(args) -> int:
    spec = synth.SyntheticDatasetSpec(
        dim=args.dim,
        n_domestic_classes=args.classes,
        n_foreign_classes=args.foreign_classes,
        samples_per_class=args.samples_per_class,
        cluster_separation=args.separation,
        seed=_require_seed(args),
    )
    data = synth.gen_dataset(spec)
    synth.write_inputs(_out(args, "train.csv"), data.train)
    synth.write_inputs(_out(args, "test_domestic.csv"), data.test_domestic)
    synth.write_inputs(_out(args, "test_foreign.csv"), data.test_foreign)
    return EXIT_OK


def cmd_train(args) -> int:
    data = synth.read_inputs(args.data)
    cfg = synth.TrainConfig(
        hidden=args.hidden,
        learning_rate=args.lr,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        val_fraction=args.val_fraction,
        seed=_require_seed(args),
    )
    K = args.classes or int(data.truth.max())
    model = synth.train_classifier(data, K, cfg)
    model.save(_out(args, "classifier.json"))
    print(json.dumps({"train_accuracy": model.train_accuracy, "val_accuracy": model.val_accuracy}))
    return EXIT_OK


def cmd_extract(args) -> int:
    model = synth.ToyClassifier.load(args.model)
    for path in args.data:
        inputs = synth.read_inputs(path)
        write_logits(_out(args, f"{Path(path).stem}_logits.csv"), synth.extract_logits(model, inputs))
    return EXIT_OK


def cmd_craft(args) -> int:
    model = synth.ToyClassifier.load(args.model)
    seed = _require_seed(args)
    if args.kind == "fooling":
        results = synth.craft_many_fooling(model, args.n, seed, args.alpha, args.max_iters, args.step_size)
    else:
        if not args.base:
            raise InvalidInputError("--kind adversarial needs --base with domestic samples")
        bases = synth.read_inputs(args.base)
        results = synth.craft_many_adversarial(model, bases, args.n, seed, args.alpha, args.max_iters, args.step_size)
    crafted = synth.crafted_inputs(results, args.kind)
    synth.write_inputs(_out(args, f"crafted_{args.kind}.csv"), crafted)
    ok = [r for r in results if r.success]
    summary = {
        "kind": args.kind,
        "attempts": len(results),
        "successes": len(ok),
        "success_rate": len(ok) / len(results) if results else 0.0,
        "mean_iterations": float(np.mean([r.iterations for r in ok])) if ok else None,
        "mean_perturbation_norm": float(np.mean([r.perturbation_norm for r in ok])) if ok else None,
    }
    _write_json(_out(args, f"craft_{args.kind}_summary.json"), summary)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    train = read_logits(args.train_logits)
    start = time.perf_counter()
    model = openmax.calibrate(train, args.eta, args.distance, args.alpha_rule, args.eucos_scale)
    if args.timing:
        model = openmax.OpenMaxModel(model.classes, model.eta, model.distance_kind, model.alpha_rule,
                                     model.eucos_scale, time.perf_counter() - start)
    model.save(_out(args, "openmax_model.json"))
    return EXIT_OK


def _load_scenario(args) -> tuple[LogitSet, float]:
    domestic = read_logits(args.domestic)
    if np.any(domestic.truth < 1):
        raise InvalidInputError(f"{args.domestic}: domestic file contains non-domestic truth labels")
    foreign = read_logits(args.foreign) if args.foreign else None
    fooling = read_logits(args.fooling) if args.fooling else None
    if foreign is not None and np.any(foreign.truth != 0):
        raise InvalidInputError(f"{args.foreign}: foreign file must have truth 0 on every row")
    if fooling is not None and np.any(fooling.truth != FOOLING):
        raise InvalidInputError(f"{args.fooling}: fooling file must have truth -1 on every row")

    groups = metrics.group_foreign(foreign) if foreign is not None else {}
    per_class = args.images_per_foreign_class
    spec = metrics.ScenarioSpec(
        n_domestic=args.n_domestic if args.n_domestic is not None else len(domestic),
        n_fooling=args.n_fooling if args.n_fooling is not None else (len(fooling) if fooling is not None else 0),
        images_per_foreign_class=per_class if per_class is not None else max((len(g) for g in groups.values()), default=0),
        n_foreign_classes=args.n_foreign_classes if args.n_foreign_classes is not None else len(groups),
    )
    if per_class is None and len({len(g) for g in groups.values()}) > 1:
        raise InvalidInputError("foreign classes differ in size; pass --images-per-foreign-class")
    scenario = metrics.build_scenario(spec, domestic, groups, fooling, args.seed or 0)
    data = scenario.data
    if args.drop_misclassified:
        data = pipeline.drop_misclassified(data)
    n_dom = int(np.sum(data.truth >= 1))
    return data, n_dom / len(data)


def cmd_evaluate(args) -> int:
    model = None
    if args.method == "openmax":
        if not args.model:
            raise InvalidInputError("--method openmax requires --model (run calibrate-openmax first)")
        model = openmax.OpenMaxModel.load(args.model)
    data, comfort = _load_scenario(args)
    if model is not None and model.K != data.K:
        raise InvalidInputError(f"{args.model}: model has K={model.K} but logits have K={data.K}")

    theta = args.theta
    if args.epsilon_pred is not None:
        if args.method != "openmax":
            raise InvalidInputError("--epsilon-pred applies to --method openmax only")
        if not 0.0 <= args.epsilon_pred <= 1.0:
            raise InvalidInputError("--epsilon-pred must lie in [0, 1]")
        theta = args.epsilon_pred
    M = min(args.m_top, data.K)
    ev = pipeline.evaluate_method(args.method, data, model, M, theta=theta, sweep=args.sweep)
    if args.timing:
        if args.method == "openmax":
            ev.timing.domestic_learning_s = model.calibration_seconds or 0.0
        ev.timing.base_per_image_s = args.base_time_per_image

    report = ev.report(comfort, with_timing=args.timing)
    if args.format == "json":
        _write_json(_out(args, "report.json"), report)
    else:
        flat = [(k, v) for k, v in report.items() if not isinstance(v, (dict, list))]
        flat += [(f"f_class_{k}", v) for k, v in report["per_class_f"].items()]
        write_table(_out(args, "report.csv"), ["key", "value"], flat)
    write_table(_out(args, "confusion.csv"), metrics.CrIc.CONFUSION_HEADER, metrics.cr_ic(ev.counts).confusion_rows())
    write_table(
        _out(args, "scores.csv"),
        ["sample_id", "truth", "cognizance", "predicted_label"],
        ([sid, int(t), float(s), int(p)] for sid, t, s, p in zip(data.ids, data.truth, ev.scores, ev.predictions)),
    )
    if ev.curve is not None:
        write_table(_out(args, "q1_curve.csv"), ["theta", "q1"], zip(map(float, ev.curve[0]), map(float, ev.curve[1])))
    print(json.dumps({k: report[k] for k in ("method", "theta", "q1", "f_acc", "c_acc")}))
    return EXIT_OK


def cmd_plot(args) -> int:
    dump = plots.read_score_dump(args.scores)
    adv = None
    if args.adversarial:
        adv_dump = plots.read_score_dump(args.adversarial)
        adv = adv_dump.subset(adv_dump.truth == FOOLING)
    groups = plots.score_groups(dump, adv)
    stats = plots.boxplot_table(groups)
    write_table(_out(args, "boxplot.csv"), plots.BOX_HEADER, stats)
    plots.render_boxplot(groups, _out(args, "boxplot.svg"), log_scale=args.log_scale)
    if adv is not None and len(adv):
        curves = plots.adversarial_pr(dump, adv)
        aucs = {}
        for name, pts in curves.items():
            write_table(_out(args, f"pr_{name}.csv"), ["threshold", "recall", "precision"], pts)
            aucs[name] = metrics.auc_pr(pts)
        plots.render_pr(curves, _out(args, "pr.svg"))
        _write_json(_out(args, "pr_auc.json"), aucs)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for stochastic stages")
    common.add_argument("--out-dir", default=".", help="directory for outputs (default: %(default)s)")
    common.add_argument("--format", choices=("csv", "json"), default="json", help="report format")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="osl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="synthetic domestic/foreign clusters")
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--foreign-classes", type=int, default=5)
    s.add_argument("--samples-per-class", type=int, default=500)
    s.add_argument("--separation", type=float, default=6.0)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", parents=[common], help="train the toy classifier")
    s.add_argument("--data", required=True)
    s.add_argument("--classes", type=int, default=None, help="K (default: largest training label)")
    s.add_argument("--hidden", type=int, default=64)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--momentum", type=float, default=0.9)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--val-fraction", type=float, default=0.1)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("extract-logits", parents=[common], help="write penultimate vectors for input files")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True, nargs="+")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("craft", parents=[common], help="craft fooling or adversarial inputs")
    s.add_argument("--model", required=True)
    s.add_argument("--kind", choices=("fooling", "adversarial"), default="fooling")
    s.add_argument("--alpha", type=float, default=0.9)
    s.add_argument("--max-iters", type=int, default=500)
    s.add_argument("--step-size", type=float, default=0.05)
    s.add_argument("--n", type=int, default=100, help="number of attempts")
    s.add_argument("--base", default=None, help="domestic inputs CSV (adversarial only)")
    s.set_defaults(func=cmd_craft)

    s = sub.add_parser("calibrate-openmax", parents=[common], help="fit OpenMax centroids and Weibull tails")
    s.add_argument("--train-logits", required=True)
    s.add_argument("--eta", type=int, default=openmax.DEFAULT_ETA)
    s.add_argument("--distance", choices=openmax.DISTANCES, default="eucos")
    s.add_argument("--alpha-rule", choices=openmax.ALPHA_RULES, default="paper")
    s.add_argument("--eucos-scale", type=float, default=openmax.EUCOS_SCALE)
    s.add_argument("--timing", action="store_true", help="record calibration wall time in the model (non-deterministic)")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("evaluate", parents=[common], help="score a scenario and write the metric report")
    s.add_argument("--method", choices=pipeline.METHODS, required=True)
    s.add_argument("--domestic", required=True)
    s.add_argument("--foreign", default=None)
    s.add_argument("--fooling", default=None)
    s.add_argument("--model", default=None, help="OpenMax model JSON")
    s.add_argument("--m-top", type=int, default=openmax.DEFAULT_M)
    th = s.add_mutually_exclusive_group()
    th.add_argument("--theta", type=float, default=None, help="LC cognizance threshold")
    th.add_argument("--epsilon-pred", type=float, default=None, help="OpenMax probability threshold")
    th.add_argument("--sweep", action="store_true", help="pick the threshold maximising Q1")
    s.add_argument("--n-domestic", type=int, default=None)
    s.add_argument("--n-fooling", type=int, default=None)
    s.add_argument("--images-per-foreign-class", type=int, default=None)
    s.add_argument("--n-foreign-classes", type=int, default=None)
    s.add_argument("--drop-misclassified", action="store_true")
    s.add_argument("--timing", action="store_true", help="add wall-clock timing (non-deterministic)")
    s.add_argument("--base-time-per-image", type=float, default=None, help="base classifier seconds per image")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("plot", parents=[common], help="boxplot and PR artifacts from score dumps")
    s.add_argument("--scores", required=True)
    s.add_argument("--adversarial", default=None, help="score dump whose truth -1 rows are adversarial")
    s.add_argument("--log-scale", action="store_true")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (openmax.CalibrationError, ConvergenceError, InsufficientDataError, synth.TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (InvalidInputError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
