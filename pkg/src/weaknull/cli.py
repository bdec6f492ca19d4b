"""Command line interface: ``weaknull {test,ci,simulate,weights}``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .asymptotics import PopulationSpec, limit_weights
from .contrast import (
    anova_contrast,
    assemble_vector_contrast,
    factorial_contrast,
    make_hypothesis,
    split_vector_contrast,
    treatment_control_contrast,
    trend_contrast,
)
from .data import ExperimentDataset
from .engine import DEFAULT_DRAWS, _resolve_seed, frt_pvalue
from .errors import ContrastError, ParseError, ValidationError, WeakNullError
from .inference import confidence_region, hl_estimate
from .ingest import read_csv
from .simulate import SCENARIOS, SimulationSpec, type1_study, write_csv
from .statistics import Statistic


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"could not parse numbers from {text!r}") from None


def _contrast_matrix(spec: str, data: ExperimentDataset, doses) -> np.ndarray:
    J = data.J
    if spec == "anova":
        return anova_contrast(J)
    if spec == "tc":
        return treatment_control_contrast(J)
    if spec == "trend":
        if doses is None:
            raise ContrastError("--contrast trend needs --doses")
        return trend_contrast(doses, data.arm_sizes)
    if spec.startswith("factorial:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ContrastError("factorial contrast syntax is factorial:K:a1,a2,...")
        K = int(parts[1])
        if 2**K != J:
            raise ContrastError(f"a 2^{K} factorial needs {2**K} arms, data has {J}")
        return factorial_contrast(K, [int(a) for a in parts[2].split(",")])
    if spec.startswith("file:"):
        path = spec[5:]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # empty file; caught by validation
                return np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from None
    raise ContrastError(f"unknown contrast {spec!r}")


def _hypothesis(args, data: ExperimentDataset):
    stat = Statistic.parse(args.stat)
    contrast = args.contrast or ("trend" if stat is Statistic.TREND else "anova")
    C = _contrast_matrix(contrast, data, _floats(args.doses))
    x = _floats(args.null)
    orientation = "one_sided_ge" if stat in (Statistic.T, Statistic.T_PLUS) else "two_sided"
    d = data.d
    if d == 1:
        return make_hypothesis(C, x, orientation=orientation)
    if C.shape[1] == data.J * d:
        return split_vector_contrast(C, d, x)
    m = C.shape[0]
    x = np.zeros(m * d) if x is None else np.asarray(x)
    if x.size != m * d:
        raise ContrastError(f"--null needs {m * d} values for {d} outcome coordinates")
    return assemble_vector_contrast([(C, x[k * m : (k + 1) * m]) for k in range(d)])


def _jitter(data: ExperimentDataset, eps: float, seed: int) -> ExperimentDataset:
    """Add uniform noise on ``[-eps, eps]`` times each coordinate's interquartile range."""
    if eps <= 0:
        return data
    rng = np.random.default_rng([seed, 1])
    q75, q25 = np.percentile(data.outcome, [75, 25], axis=0)
    iqr = np.where(q75 > q25, q75 - q25, 1.0)
    noise = rng.uniform(-eps, eps, size=data.outcome.shape) * iqr
    return data.with_outcome(data.outcome + noise)


def _load(args) -> ExperimentDataset:
    return read_csv(args.input, stratified=args.stratified, clustered=args.cluster)


def _pct(p) -> str:
    return "NA" if p is None else f"{100 * p:.2f}%"


def cmd_test(args) -> dict:
    data = _load(args)
    seed = _resolve_seed(args.seed)
    data = _jitter(data, args.jitter, seed)
    h = _hypothesis(args, data)
    res = frt_pvalue(data, h, args.stat, draws=args.draws, seed=seed, exhaustive=args.exact, workers=args.workers)
    report = res.to_dict()
    report.update(
        {
            "seed": seed,
            "alpha": args.alpha,
            "rejected": res.p_frt <= args.alpha,
            "estimate": hl_estimate(data, h).tolist(),
            "design": data.design,
            "N": data.N,
            "arms": [str(a) for a in data.arm_labels],
        }
    )
    if args.output == "json":
        print(json.dumps(report))
    else:
        print(f"design           {data.design} (N={data.N}, arms={len(data.arm_labels)})")
        print(f"statistic        {res.statistic}")
        print(f"observed value   {res.t_obs:.6g}")
        if res.exhaustive:
            print(f"p (FRT, exact)   {_pct(res.p_frt)}  ({res.exceedance_count}/{res.draws_used})")
        else:
            print(f"p (FRT)          {_pct(res.p_frt)}  ({res.draws_used} draws, seed {seed})")
        print(f"p (reference)    {_pct(res.p_reference)}")
        if res.degeneracy_count:
            print(f"degenerate draws {res.degeneracy_count}")
        verdict = "reject" if report["rejected"] else "do not reject"
        print(f"decision         {verdict} at alpha={args.alpha}")
    return report


def cmd_ci(args) -> dict:
    data = _load(args)
    seed = _resolve_seed(args.seed)
    data = _jitter(data, args.jitter, seed)
    args.stat = "x2"
    h = _hypothesis(args, data)
    region = confidence_region(
        data, h, alpha=args.alpha, grid=args.grid, inflation=args.inflation,
        mode=args.mode, draws=args.draws, seed=seed, workers=args.workers,
    )
    report = {
        "alpha": region.alpha,
        "mode": region.mode,
        "seed": seed,
        "center": region.center.tolist(),
        "shape": region.shape.tolist(),
        "radius": region.radius,
        "grid": region.rows(),
        "errors": {str(k): v for k, v in region.errors.items()},
    }
    if args.output == "json":
        print(json.dumps(report))
    else:
        acc = region.points[region.accepted]
        print(f"center   {np.array2string(region.center, precision=6)}")
        print(f"accepted {acc.shape[0]} of {region.points.shape[0]} grid points ({region.mode}, seed {seed})")
        if acc.size:
            for k in range(acc.shape[1]):
                print(f"row {k + 1}   [{acc[:, k].min():.6g}, {acc[:, k].max():.6g}]")
    return report


def cmd_simulate(args) -> dict:
    spec = SimulationSpec(
        scenario=args.scenario,
        n=args.n,
        R_outer=args.replications,
        R_inner=args.permutations,
        alphas=tuple(_floats(args.alphas)),
        seed=args.seed if args.seed is not None else 0,
        u=tuple(_floats(args.u)) if args.u else None,
        n_strata=args.strata,
        workers=args.workers,
    )
    study = type1_study(spec)
    rates, hist = study.rejection_table(), study.histogram()
    if args.prefix:
        write_csv(rates, f"{args.prefix}_rates.csv")
        write_csv(hist, f"{args.prefix}_hist.csv")
    report = {"rates": rates, "histogram": hist, "failures": study.failures}
    if args.output == "json":
        print(json.dumps(report))
    else:
        print("statistic  alpha   rate     se")
        for r in rates:
            print(f"{r['statistic']:<10} {r['alpha']:<7g} {r['rate']:.4f}  {r['se']:.4f}")
        for stat in study.pvalues:
            print(f"{stat}: density of p in [0, 0.02] = {study.density(stat):.3f}")
    return report


def _population(args) -> PopulationSpec:
    if args.population:
        spec = json.loads(Path(args.population).read_text())
        if "u" in spec:
            return PopulationSpec.rank_one(spec["u"], spec.get("p"))
        return PopulationSpec(p=spec["p"], S=spec["S"])
    if args.u:
        return PopulationSpec.rank_one(_floats(args.u), _floats(args.p))
    raise ValidationError("weights needs --u or --population")


def cmd_weights(args) -> dict:
    pop = _population(args)
    J = pop.J
    if args.contrast in (None, "anova"):
        C = anova_contrast(J)
    elif args.contrast.startswith("factorial:"):
        K, subset = args.contrast.split(":")[1:]
        C = factorial_contrast(int(K), [int(a) for a in subset.split(",")])
    elif args.contrast.startswith("file:"):
        C = np.loadtxt(args.contrast[5:], delimiter=",", ndmin=2)
    elif args.contrast == "tc":
        C = treatment_control_contrast(J)
    else:
        raise ContrastError(f"unsupported contrast {args.contrast!r} for weights")
    keys = args.stat.split(",") if args.stat else ["x2", "box"]
    report = {k: limit_weights(pop, C, k).weights.tolist() for k in keys}
    if args.output == "json":
        print(json.dumps(report))
    else:
        for k, w in report.items():
            print(f"{k:<20} (" + ", ".join(f"{v:.3f}" for v in w) + ")")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weaknull", description="Randomization tests for weak null hypotheses.")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("input", help="CSV with treatment and outcome columns")
        p.add_argument("--contrast", help="anova | tc | trend | factorial:K:a1,a2 | file:PATH")
        p.add_argument("--doses", help="comma separated doses, one per arm (trend)")
        p.add_argument("--null", help="comma separated target vector x (default 0)")
        p.add_argument("--draws", type=int, default=DEFAULT_DRAWS)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--jitter", type=float, default=0.0, metavar="EPS")
        p.add_argument("--stratified", action="store_true", default=None)
        p.add_argument("--cluster", action="store_true", default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--output", choices=("table", "json"), default="table")

    p = sub.add_parser("test", help="randomization test of C mean = x")
    data_args(p)
    p.add_argument("--stat", default="x2", choices=[s.value for s in Statistic] + ["stratifiedx2"])
    p.add_argument("--exact", action="store_true", help="enumerate all assignments")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("ci", help="confidence region by test inversion")
    data_args(p)
    p.add_argument("--grid", type=int, default=41)
    p.add_argument("--inflation", type=float, default=1.5)
    p.add_argument("--mode", choices=("frt_inverted", "asymptotic_only"), default="frt_inverted")
    p.set_defaults(func=cmd_ci, draws=1000)

    p = sub.add_parser("simulate", help="type I error study on a generated population")
    p.add_argument("--scenario", choices=SCENARIOS, default="anova_J3")
    p.add_argument("--n", type=int, default=40, help="units per arm")
    p.add_argument("--replications", type=int, default=2000)
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--alphas", default="0.01,0.05,0.1")
    p.add_argument("--u", help="custom scenario scale vector")
    p.add_argument("--strata", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--prefix", help="write PREFIX_rates.csv and PREFIX_hist.csv")
    p.add_argument("--output", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("weights", help="limiting chi-square weights for a population")
    p.add_argument("--u", help="rank-one covariance S = u u'")
    p.add_argument("--p", help="arm proportions (default balanced)")
    p.add_argument("--population", help='JSON file with {"p": [...], "S": [[...]]} or {"u": [...]}')
    p.add_argument("--contrast", help="anova | tc | factorial:K:a1,a2 | file:PATH")
    p.add_argument("--stat", help="comma list of x2, box, f, box_randomization, ...")
    p.add_argument("--output", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except WeakNullError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
