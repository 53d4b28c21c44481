"""Command-line front end.

``wassdrl <train|crossval|interval|worstcase|radius> ...`` writes JSON
reports and plot-ready CSV files to ``--out``. Exit codes: 0 success, 2 bad
input or IO, 3 solver failure, 4 unsupported configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    HypothesisBox,
    IntervalReport,
    LightTailParams,
    error_interval,
    radius_basic,
    radius_improved,
    risk_interval,
)
from .classification import (
    KAPPA_GRID,
    ClassificationProblem,
    train_lipschitz_classification,
    train_pwl_classification,
    wc_expected_loss_classification,
)
from .core import (
    Dataset,
    LinearHypothesis,
    LossSpec,
    SupportPolytope,
    Task,
    TransportCost,
    load_dataset,
    save_dataset,
)
from .errors import (
    InputError,
    InsufficientData,
    ParseError,
    SolverError,
    UnsupportedError,
    UnsupportedNorm,
    WassDRLError,
)
from .extremal import (
    DEFAULT_GAMMA,
    worstcase_classification_exact,
    worstcase_classification_sequence,
    worstcase_regression_exact,
    worstcase_regression_sequence,
)
from .kernelized import (
    KernelHypothesis,
    KernelSpec,
    kernel_predict,
    train_kernel_classification,
    train_kernel_regression,
)
from .neural import MLPSpec, SPGDOptions, drnn_convex_objective, nn_predict, train_spgd, weights_to_dict
from .regression import (
    RegressionProblem,
    train_lipschitz_regression,
    train_pwl_regression,
    wc_expected_loss_regression,
)
from .solver.norms import parse_p

DEFAULT_RHO_GRID = tuple(sorted(b * 10.0 ** e for b in (1, 5) for e in (-1, -2, -3, -4)))


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else "inf"


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------------------
# shared setup


def _dataset(args) -> Dataset:
    if args.data is None:
        raise InputError("--data is required")
    return load_dataset(args.data, Task.parse(args.task))


def _support(args, ds: Dataset) -> SupportPolytope | None:
    if not args.support:
        return None
    try:
        d = json.loads(Path(args.support).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read support file: {exc}") from None
    return SupportPolytope.from_dict(d, ds.n, with_output=ds.task is Task.REGRESSION)


def _metric(task: Task, p, kappa, separable: bool) -> TransportCost:
    if task is Task.CLASSIFICATION:
        return TransportCost.classification(p, kappa)
    if separable:
        return TransportCost.separable_regression(p, kappa)
    return TransportCost.joint(p)


def _problem(ds, loss, support, metric, rho):
    if ds.task is Task.REGRESSION:
        return RegressionProblem(ds, loss, support, metric, rho)
    return ClassificationProblem(ds, loss, support, metric, rho)


def fit_linear(ds: Dataset, loss: LossSpec, rho: float, *, p=2.0, kappa=np.inf, support=None,
               separable=False, lp_method="simplex"):
    """Dispatch to the LP route for piecewise-linear losses, else the composite route."""
    prob = _problem(ds, loss, support, _metric(ds.task, p, kappa, separable), rho)
    reg = ds.task is Task.REGRESSION
    if loss.is_pwl:
        return prob, (train_pwl_regression if reg else train_pwl_classification)(prob, lp_method=lp_method)
    return prob, (train_lipschitz_regression if reg else train_lipschitz_classification)(prob)


def _fit(args, ds, loss, rho, kappa, kernel):
    """Train one model; returns (model dict, objective, extra report fields)."""
    if kernel is not None:
        if args.p != 2.0:
            raise UnsupportedNorm("kernel models use the Euclidean feature-space metric (p = 2)")
        if ds.task is Task.REGRESSION:
            res = train_kernel_regression(ds, kernel, loss, rho)
        else:
            res = train_kernel_classification(ds, kernel, loss, rho, kappa)
        model = res.hypothesis.to_dict()
        return model, res.value, {"route": res.route, "converged": res.converged}
    if getattr(args, "hidden", None):
        sizes = [ds.n] + [int(s) for s in args.hidden.split(",") if s] + [1]
        acts = [args.activation] * (len(sizes) - 2) + [args.output_activation]
        spec = MLPSpec(sizes, acts, args.p)
        opts = SPGDOptions(epochs=args.epochs, eta0=args.step, seed=args.seed)
        res = train_spgd(spec, ds, loss, rho, opts)
        model = {"type": "mlp", **weights_to_dict(spec, res.weights)}
        value = drnn_convex_objective(spec, res.weights, ds, loss, rho)
        return model, value, {"route": "spgd", "converged": res.converged, "trace": res.trace}
    support = _support(args, ds)
    prob, res = fit_linear(ds, loss, rho, p=args.p, kappa=kappa, support=support,
                           separable=args.metric == "separable", lp_method=args.lp_method)
    model = res.hypothesis.to_dict()
    if ds.task is Task.REGRESSION:
        wc = wc_expected_loss_regression(prob, res.hypothesis, lp_method=args.lp_method)
    else:
        wc = wc_expected_loss_classification(prob, res.hypothesis, lp_method=args.lp_method)
    return model, res.value, {"route": res.route, "converged": res.converged, "worst_case_value": wc}


def _model_meta(args, ds, loss, rho, kappa):
    return {"task": ds.task.value, "loss": loss.to_dict(), "rho": rho, "kappa": _num(kappa),
            "p": _num(args.p), "metric": args.metric if ds.task is Task.REGRESSION else "classification"}


def _predict(model: dict, X: np.ndarray) -> np.ndarray:
    kind = model.get("type")
    if kind == "linear":
        return X @ np.asarray(model["w"], float)
    if kind == "kernel":
        return kernel_predict(KernelHypothesis.from_dict(model), X)
    if kind == "mlp":
        from .neural import weights_from_dict

        spec, ws = weights_from_dict(model)
        return nn_predict(spec, ws, X)
    raise InputError(f"unknown model type {kind!r}")


def _score(task: Task, scores: np.ndarray, y: np.ndarray) -> float:
    """Correct classification rate, or minus the mean absolute error."""
    if task is Task.CLASSIFICATION:
        return float(np.mean(np.where(scores >= 0, 1.0, -1.0) == y))
    return -float(np.mean(np.abs(scores - y)))


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    ds = _dataset(args)
    loss = LossSpec.parse(args.loss, args.loss_param)
    kernel = KernelSpec.parse(args.kernel) if args.kernel else None
    rho = args.rho if args.rho is not None else 0.0
    t0 = time.perf_counter()
    model, value, extra = _fit(args, ds, loss, rho, args.kappa, kernel)
    wall = time.perf_counter() - t0
    trace = extra.pop("trace", None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.update(_model_meta(args, ds, loss, rho, args.kappa))
    _write_json(out / "model.json", model)
    report = {"objective": value, "rho": rho, "kappa": _num(args.kappa), "wall_time": wall, **extra}
    _write_json(out / "report.json", report)
    if trace is not None:
        with open(out / "trace.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "objective", "reg_term"])
            wr.writerows(trace)
    return 0


def make_folds(ds: Dataset, k: int, seed: int) -> np.ndarray:
    """Fold index per sample.

    Samples are shuffled with ``seed``; classification data is then dealt
    round-robin class by class so each fold keeps the class proportions.

    Raises
    ------
    InsufficientData
        If some fold would be empty.
    """
    if k < 2:
        raise InputError("at least two folds are required")
    if ds.N < k:
        raise InsufficientData(f"{ds.N} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.N)
    folds = np.empty(ds.N, dtype=int)
    if ds.task is Task.CLASSIFICATION:
        offset = 0
        for label in (-1.0, 1.0):
            members = perm[ds.outputs[perm] == label]
            folds[members] = (offset + np.arange(members.size)) % k
            offset += members.size
    else:
        folds[perm] = np.arange(ds.N) % k
    return folds


def cmd_crossval(args) -> int:
    ds = _dataset(args)
    loss = LossSpec.parse(args.loss, args.loss_param)
    rhos = sorted(args.rho_grid) if args.rho_grid else ([args.rho] if args.rho is not None else list(DEFAULT_RHO_GRID))
    if ds.task is Task.CLASSIFICATION or args.metric == "separable":
        kappas = sorted(args.kappa_grid) if args.kappa_grid else (
            [args.kappa] if args.kappa_given else list(KAPPA_GRID))
    else:
        kappas = [np.inf]
    kernels = [KernelSpec.parse(s) for s in args.kernel_grid] if args.kernel_grid else (
        [KernelSpec.parse(args.kernel)] if args.kernel else [None])
    if any(r < 0 for r in rhos):
        raise InputError("grid radii must be nonnegative")
    folds = make_folds(ds, args.folds, args.seed)
    rows, table = [], []
    for kernel in kernels:
        kname = json.dumps(kernel.to_dict()) if kernel else ""
        for kappa in kappas:
            for rho in rhos:
                scores = []
                for f in range(args.folds):
                    train, test = ds.subset(folds != f), ds.subset(folds == f)
                    model, _, _ = _fit(args, train, loss, rho, kappa, kernel)
                    s = _score(ds.task, _predict(model, test.inputs), test.outputs)
                    scores.append(s)
                    rows.append([rho, _num(kappa), kname, f, s])
                table.append((float(np.mean(scores)), rho, kappa, kernel, scores))
    # highest mean score; ties go to the smallest rho, then the smallest kappa
    best = max(table, key=lambda t: (t[0], -t[1], -t[2]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cv_scores.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["rho", "kappa", "kernel", "fold", "score"])
        wr.writerows(rows)
    mean_score, rho, kappa, kernel, scores = best
    model, value, _ = _fit(args, ds, loss, rho, kappa, kernel)
    model.update(_model_meta(args, ds, loss, rho, kappa))
    _write_json(out / "model.json", model)
    _write_json(out / "cv_best.json", {
        "rho": rho, "kappa": _num(kappa), "kernel": kernel.to_dict() if kernel else None,
        "score": mean_score, "fold_scores": scores,
        "metric": "ccr" if ds.task is Task.CLASSIFICATION else "neg_mae", "objective": value,
    })
    return 0


def _load_model(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read model file: {exc}") from None


def _linear_model(args):
    if not args.model:
        raise InputError("--model is required")
    model = _load_model(args.model)
    if model.get("type") != "linear":
        raise UnsupportedError("this command needs a linear model")
    return model, LinearHypothesis(np.asarray(model["w"], float))


def _light_tail(args) -> LightTailParams:
    return LightTailParams(a=args.a, A=args.A, c1=args.c1, c2=args.c2, c3=args.c3, c4=args.c4)


def cmd_interval(args) -> int:
    ds = _dataset(args)
    model, h = _linear_model(args)
    kappa = args.kappa if args.kappa_given else float(model.get("kappa", np.inf))
    if args.rho is not None:
        rho, source = args.rho, "user"
    else:
        rho, source = radius_basic(ds.N, ds.n, args.eta / 2, _light_tail(args)), "basic"
    if ds.task is Task.REGRESSION:
        lo, hi = error_interval(ds, h, rho, args.p)
        rep = IntervalReport(rho, None, lo, hi, source)
    else:
        lo, hi = risk_interval(ds, h, rho, kappa, args.p)
        rep = IntervalReport(rho, kappa, lo, hi, source)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "interval.json", {**rep.to_dict(), "radius": rho, "eta": args.eta})
    return 0


def cmd_worstcase(args) -> int:
    ds = _dataset(args)
    model, h = _linear_model(args)
    loss = LossSpec.parse(args.loss, args.loss_param) if args.loss else LossSpec.from_dict(model["loss"])
    rho = args.rho if args.rho is not None else float(model.get("rho", 0.0))
    kappa = args.kappa if args.kappa_given else float(model.get("kappa", np.inf))
    prob = _problem(ds, loss, _support(args, ds), _metric(ds.task, args.p, kappa, args.metric == "separable"), rho)
    mode = args.mode or ("exact" if loss.is_pwl else "sequence")
    reg = ds.task is Task.REGRESSION
    if mode == "exact":
        if args.p == 2.0:
            raise UnsupportedNorm("exact worst-case distributions need p in {1, inf}")
        fn = worstcase_regression_exact if reg else worstcase_classification_exact
        dist = fn(prob, h, lp_method=args.lp_method)
    elif reg:
        dist = worstcase_regression_sequence(prob, h, args.gamma)
    else:
        dist = worstcase_classification_sequence(prob, h, args.gamma, lp_method=args.lp_method)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = dist.to_dict()
    payload.update({"mode": mode, "rho": rho, "kappa": _num(kappa)})
    _write_json(out / "worstcase.json", payload)
    stressed = dist.sample(ds.N, np.random.default_rng(args.seed), ds.task)
    save_dataset(stressed, out / "stressed.csv")
    return 0


def cmd_radius(args) -> int:
    if args.data:
        ds = _dataset(args)
        N, n = ds.N, ds.n
    else:
        if args.N is None or args.n is None:
            raise InputError("either --data or both --N and --n are required")
        N, n = args.N, args.n
    params = _light_tail(args)
    try:
        basic, basic_note = radius_basic(N, n, args.eta, params), None
    except UnsupportedError as exc:
        basic, basic_note = None, str(exc)
    box = HypothesisBox(args.omega_lower, args.omega_upper, args.M_n)
    imp = radius_improved(N, n, args.eta, params, box, strict=False)
    report = {
        "N": N, "n": n, "eta": args.eta,
        "rho_basic": basic,
        "rho_improved": imp.value if imp.precondition_ok else None,
        "preconditions": {"basic_ok": basic is not None, "basic_note": basic_note,
                          "improved_ok": imp.precondition_ok, "required_N": imp.required_N},
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "radius.json", report)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wassdrl", description="Wasserstein distributionally robust learning")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", help="CSV file; the last column is the output")
    common.add_argument("--task", choices=["reg", "cls", "regression", "classification"], default="cls")
    common.add_argument("--loss", default=None, help="loss name (hinge, logloss, absolute, huber, ...)")
    common.add_argument("--loss-param", type=_float, default=None, help="loss parameter (delta, eps, tau)")
    common.add_argument("--rho", type=_float, default=None, help="Wasserstein radius")
    common.add_argument("--kappa", type=_float, default=None, help="label or output transport weight")
    common.add_argument("--p", default="2", help="norm on the input space: 1, 2 or inf")
    common.add_argument("--metric", choices=["joint", "separable"], default="joint",
                        help="regression transport cost")
    common.add_argument("--kernel", default=None, help="e.g. linear, gaussian:0.5, polynomial:1:3")
    common.add_argument("--support", default=None, help="JSON file {C1, c2, d}")
    common.add_argument("--lp-method", choices=["simplex", "highs"], default="simplex")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one model")
    p.add_argument("--hidden", default=None, help="comma-separated hidden widths for a network model")
    p.add_argument("--activation", default="tanh")
    p.add_argument("--output-activation", default="identity")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--step", type=_float, default=1e-3)

    p = sub.add_parser("crossval", parents=[common], help="grid search with k-fold cross validation")
    p.add_argument("--rho-grid", type=_float, nargs="+", default=None)
    p.add_argument("--kappa-grid", type=_float, nargs="+", default=None)
    p.add_argument("--kernel-grid", nargs="+", default=None)
    p.add_argument("--folds", type=int, default=5)

    tail = argparse.ArgumentParser(add_help=False)
    tail.add_argument("--eta", type=_float, default=0.05, help="significance level")
    for name, default in (("a", 2.0), ("A", np.e), ("c1", np.e), ("c2", 1.0), ("c3", np.e), ("c4", 1.0)):
        tail.add_argument(f"--{name}", type=_float, default=default)

    p = sub.add_parser("interval", parents=[common, tail], help="error or risk interval of a linear model")
    p.add_argument("--model", required=True)

    p = sub.add_parser("worstcase", parents=[common], help="worst-case distribution and stressed dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=["exact", "sequence"], default=None)
    p.add_argument("--gamma", type=_float, default=DEFAULT_GAMMA)

    p = sub.add_parser("radius", parents=[common, tail], help="generalization radii")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--omega-lower", type=_float, default=1.0)
    p.add_argument("--omega-upper", type=_float, default=1.0)
    p.add_argument("--M-n", dest="M_n", type=_float, default=1.0)
    return parser


COMMANDS = {"train": cmd_train, "crossval": cmd_crossval, "interval": cmd_interval,
            "worstcase": cmd_worstcase, "radius": cmd_radius}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.task = Task.parse(args.task).value
    try:
        args.p = parse_p(args.p)
    except UnsupportedError as exc:
        print(f"wassdrl: {exc}", file=sys.stderr)
        return 4
    args.kappa_given = args.kappa is not None
    if args.kappa is None:
        args.kappa = np.inf
    if args.loss is None and args.command in ("train", "crossval"):
        args.loss = "hinge" if args.task == "classification" else "absolute"
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"wassdrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"wassdrl: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"wassdrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except UnsupportedError as exc:
        print(f"wassdrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except WassDRLError as exc:
        print(f"wassdrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
