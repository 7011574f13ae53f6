"""Command-line interface: ``dpsynth release | audit | bench``.

Exit codes: 0 success, 1 input/output or parse error, 2 privacy gate
infeasible, 3 audit failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from . import bench as bench_mod
from . import plots
from .core import DomainError, check_rng, load_dataset, save_dataset, write_key_values
from .exponential import McmcConfig
from .mechanisms import (MechanismKind, MechanismSpec, PrivacyGateError, plan_smoothed_histogram,
                         release_exponential, release_exponential_mean,
                         release_perturbed_histogram, release_perturbed_series,
                         release_smoothed_histogram)
from .metrics import DistanceKind

EXIT_OK, EXIT_IO, EXIT_GATE, EXIT_AUDIT = 0, 1, 2, 3

DELTA_ZERO_MESSAGE = ("sampling from the usual histogram corresponding to delta=0 "
                      "does not preserve differential privacy")


class CliError(Exception):
    def __init__(self, message, code=EXIT_IO):
        super().__init__(message)
        self.code = code


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _density_list(text):
    return [v.strip() for v in str(text).split(";") if v.strip()]


def _str_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _resolve_seed(args):
    if args.seed is None:
        args.seed = check_rng(None).seed
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _echo_config(args, out: Path):
    items = sorted((k, v) for k, v in vars(args).items() if k not in ("func", "config"))
    write_key_values(out / "config.txt", [(k, "" if v is None else v) for k, v in items])


# ---------------------------------------------------------------------------
# release


def cmd_release(args) -> int:
    out = Path(args.out)
    data = load_dataset(args.input, args.dim)
    seed = _resolve_seed(args)
    rng = check_rng(seed)
    kind = MechanismKind(args.mechanism)
    if kind is MechanismKind.SMOOTHED_HISTOGRAM:
        if args.delta is not None and args.delta == 0.0:
            raise PrivacyGateError(DELTA_ZERO_MESSAGE)
        if args.m is None or args.k is None or args.delta is None:
            plan = plan_smoothed_histogram(data.n, data.dim, args.alpha, args.target)
            spec = dataclasses.replace(
                plan,
                m=plan.m if args.m is None else args.m,
                k=plan.k if args.k is None else args.k,
                delta=plan.delta if args.delta is None else args.delta)
        else:
            spec = MechanismSpec(kind, args.alpha, m=args.m, delta=args.delta, k=args.k)
        report = release_smoothed_histogram(data, spec, rng)
    elif kind is MechanismKind.PERTURBED_HISTOGRAM:
        if args.m is None:
            raise CliError("--m is required for perturbed-hist")
        report = release_perturbed_histogram(data, args.m, args.alpha, args.k, rng)
    elif kind is MechanismKind.EXPONENTIAL:
        mcmc = McmcConfig(burn_in=args.burn_in, thin=args.thin,
                          proposal_scale=args.proposal_scale, chain_init=args.chain_init)
        spec = MechanismSpec(kind, args.alpha, k=args.k, gamma=args.gamma,
                             distance=DistanceKind.parse(args.distance), mcmc=mcmc,
                             log_sup_density=args.log_sup_density)
        report = release_exponential(data, spec, rng)
    elif kind is MechanismKind.EXPONENTIAL_MEAN:
        report = release_exponential_mean(data, args.alpha, rng)
    else:
        report = release_perturbed_series(data, args.gamma or 2.0, args.alpha, args.k, rng)

    out.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out)
    noisy = report.diagnostics.pop("noisy_counts", None)
    # the report goes first so a sanitized file never exists without one
    report.write(out / "report.txt")
    save_dataset(report.sanitized, out / "sanitized.csv")
    if args.emit_counts and noisy is not None:
        with open(out / "noisy_counts.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin", "noisy_count"])
            for j, v in enumerate(noisy):
                w.writerow([j, repr(float(v))])
    print(f"released {report.sanitized.n} points to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# audit

AUDIT_GRIDS = {
    "small": dict(n=(2, 4), m=(2, 3), delta=(0.2, 0.5, 0.8), k=(1, 2)),
    "full": dict(n=(2, 4, 8), m=(2, 4), delta=(0.2, 0.5, 0.8), k=(1, 2, 3)),
}
LAPLACE_GRIDS = {
    "small": dict(n=(3,), m=(2, 4), alpha=(0.1, 1.0)),
    "full": dict(n=(4,), m=(2, 4, 8), alpha=(0.01, 0.1, 1.0)),
}


def _audit_smoothed(args, lines):
    grid = AUDIT_GRIDS[args.grid]
    deltas = grid["delta"] if args.delta is None else (args.delta,)
    ok = True
    for n in grid["n"]:
        for m in grid["m"]:
            for d in deltas:
                for k in grid["k"]:
                    res = audit_mod.audit_smoothed(n, m, d, k)
                    ok &= res.passed
                    lines.append((f"smoothed n={n} m={m} delta={d!r} k={k}",
                                  f"ratio={res.ratio!r} bound={res.bound!r} "
                                  f"{'pass' if res.passed else 'fail'}"))
    return ok


def _audit_laplace(args, lines):
    grid = LAPLACE_GRIDS[args.grid]
    ok = True
    for n in grid["n"]:
        for m in grid["m"]:
            for a in grid["alpha"]:
                ratio = audit_mod.worst_case_ratio_laplace_counts(n, m, a)
                bound = math.exp(a)
                passed = ratio <= bound + 1e-9
                ok &= passed
                lines.append((f"laplace n={n} m={m} alpha={a!r}",
                              f"ratio={ratio!r} bound={bound!r} {'pass' if passed else 'fail'}"))
    return ok


def _audit_power(args, lines):
    delta = 0.5 if args.delta is None else args.delta
    rep = audit_mod.power_bound_experiment(2, 2, delta, 1, level=args.level,
                                           replications=args.replications,
                                           rng=check_rng(args.seed).child(3))
    lines.append((f"power n=2 m=2 delta={delta!r} k=1 level={args.level!r}",
                  f"power={rep.power_exact!r} estimate={rep.power_estimate!r} "
                  f"se={rep.std_error!r} bound={rep.bound!r} "
                  f"{'pass' if rep.passed else 'fail'}"))
    return rep.passed


def cmd_audit(args) -> int:
    if args.delta is not None and not 0.0 < args.delta < 1.0:
        raise PrivacyGateError(DELTA_ZERO_MESSAGE if args.delta == 0.0
                               else f"delta must lie in (0,1), got {args.delta!r}")
    _resolve_seed(args)
    out = Path(args.out)
    suites = ("smoothed", "laplace", "power") if args.suite == "all" else (args.suite,)
    lines = []
    ok = True
    for suite in suites:
        ok &= {"smoothed": _audit_smoothed, "laplace": _audit_laplace,
               "power": _audit_power}[suite](args, lines)
    lines.append(("result", "pass" if ok else "fail"))
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(args, out)
    write_key_values(out / "audit.txt", lines)
    for key, value in lines:
        print(f"{key}: {value}")
    return EXIT_OK if ok else EXIT_AUDIT


# ---------------------------------------------------------------------------
# bench


def _figure1(args, density, rng, out, summary):
    res = bench_mod.mise_experiment(density, args.n_values, args.alpha_values,
                                    range(args.m_min, args.m_max + 1), args.reps, rng,
                                    workers=args.threads)
    means = res.mean_by("mechanism", "n", "alpha", "m", metric="ise")
    panels = {}
    for (mech, n, a, m), v in sorted(means.items()):
        ms, vals = panels.setdefault((n, a), {}).setdefault(mech, ([], []))
        ms.append(m)
        vals.append(v)
    slug = density.label.replace("(", "_").replace(")", "").replace(",", "_")
    plots.mise_panels(panels, out / "plots" / f"mise_{slug}.svg", title=density.label)
    for (n, a), curves in sorted(panels.items()):
        ms, plain = curves["histogram"]
        _, pert = curves["perturbed-hist"]
        gaps = [p - q for p, q in zip(pert, plain)]
        best = ms[int(np.argmin(plain))]
        best_pert = ms[int(np.argmin(pert))]
        summary.append((f"figure1 {density.label} n={n} alpha={a!r}",
                        f"argmin_plain={best} argmin_perturbed={best_pert} "
                        f"min_gap={min(gaps)!r} dominance={'yes' if min(gaps) >= 0 else 'no'}"))
    return res


def _rates(args, density, rng, out, summary):
    res = bench_mod.BenchResult()
    for i, mech in enumerate(args.rates):
        try:
            rr = bench_mod.rate_experiment(density, mech, args.n_grid, args.rate_alpha,
                                           args.rate_reps, rng.child(100 + i), gamma=args.gamma,
                                           workers=args.threads)
        except DomainError as exc:
            summary.append((f"rate {mech}", f"skipped: {exc}"))
            continue
        res.extend(rr.result)
        ns = sorted(rr.per_n_means)
        if len(ns) >= 2:
            plots.rate_plot(ns, [rr.per_n_means[n] for n in ns], rr.slope, rr.theory,
                            out / "plots" / f"rate_{mech}.svg", title=f"{mech} {density.label}")
        summary.append((f"rate {mech} {density.label}",
                        f"measured slope {rr.slope:.3f} vs theory {rr.theory:.3f}"))
        for n in rr.dropped:
            summary.append((f"rate {mech} dropped", f"n={n}"))
    return res


def cmd_bench(args) -> int:
    seed = _resolve_seed(args)
    rng = check_rng(seed)
    out = Path(args.out)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    _echo_config(args, out)
    summary = []
    result = bench_mod.BenchResult()
    if args.figure1:
        for text in args.density:
            result.extend(_figure1(args, bench_mod.TrueDensity.parse(text), rng, out, summary))
    if args.rates:
        result.extend(_rates(args, bench_mod.TrueDensity.parse(args.rate_density), rng,
                             out, summary))
    result.write_csv(out / "results.csv")
    for note in result.notes:
        summary.append(("note", note))
    write_key_values(out / "summary.txt", summary)
    for key, value in summary:
        print(f"{key}: {value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the parse-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dpsynth",
                                     description="Differentially private synthetic data release.")
    sub = parser.add_subparsers(dest="command", required=True)

    rel = sub.add_parser("release", help="sanitize a CSV dataset")
    rel.add_argument("input", help="CSV file with one point per row")
    rel.add_argument("--mechanism", required=True, choices=[k.value for k in MechanismKind])
    rel.add_argument("--alpha", type=float, required=True)
    rel.add_argument("--dim", type=int, default=1)
    rel.add_argument("--m", type=int, default=None, help="total number of bins")
    rel.add_argument("--k", type=int, default=None, help="release size")
    rel.add_argument("--delta", type=float, default=None)
    rel.add_argument("--gamma", type=float, default=None)
    rel.add_argument("--target", choices=("ks", "l2"), default="ks",
                     help="planner target when m, k or delta is omitted")
    rel.add_argument("--distance", default="ks", choices=[d.value for d in DistanceKind])
    rel.add_argument("--log-sup-density", type=float, default=None)
    rel.add_argument("--burn-in", type=int, default=None)
    rel.add_argument("--thin", type=int, default=None)
    rel.add_argument("--proposal-scale", type=float, default=1.0)
    rel.add_argument("--chain-init", choices=("uniform", "resample"), default="uniform")
    rel.add_argument("--emit-counts", action="store_true",
                     help="also write the noisy histogram counts")
    rel.add_argument("--seed", type=int, default=None)
    rel.add_argument("--out", default="release_out")
    rel.set_defaults(func=cmd_release)

    aud = sub.add_parser("audit", help="brute-force privacy checks")
    aud.add_argument("--suite", choices=("smoothed", "laplace", "power", "all"), default="all")
    aud.add_argument("--grid", choices=tuple(AUDIT_GRIDS), default="small")
    aud.add_argument("--delta", type=float, default=None)
    aud.add_argument("--level", type=float, default=0.05)
    aud.add_argument("--replications", type=int, default=100_000)
    aud.add_argument("--seed", type=int, default=None)
    aud.add_argument("--out", default="audit_out")
    aud.set_defaults(func=cmd_audit)

    ben = sub.add_parser("bench", help="simulation study and rate estimates")
    ben.add_argument("--config", default=None, help="key = value file; flags override it")
    ben.add_argument("--figure1", action="store_true")
    ben.add_argument("--density", type=_density_list, default="beta:10,10",
                     help="truth for --figure1; several separated by ';', e.g. beta:10,10;mixture:10,3,3,10")
    ben.add_argument("--n-values", type=_int_list, default="100,1000")
    ben.add_argument("--alpha-values", type=_float_list, default="0.1,0.01")
    ben.add_argument("--m-min", type=int, default=2)
    ben.add_argument("--m-max", type=int, default=30)
    ben.add_argument("--reps", type=int, default=1000)
    ben.add_argument("--rates", type=_str_list, default="")
    ben.add_argument("--rate-density", default="beta:3,3")
    ben.add_argument("--n-grid", type=_int_list, default="250,500,1000,2000,4000,8000")
    ben.add_argument("--rate-alpha", type=float, default=1.0)
    ben.add_argument("--rate-reps", type=int, default=200)
    ben.add_argument("--gamma", type=float, default=2.0)
    ben.add_argument("--threads", type=int, default=1)
    ben.add_argument("--seed", type=int, default=None)
    ben.add_argument("--out", default="bench_out")
    ben.set_defaults(func=cmd_bench)
    parser.bench_parser = ben
    return parser


def _read_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError(f"{path}:{lineno}: expected key = value")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bench" and args.config:
        values = _read_config_file(args.config)
        ben = parser.bench_parser
        known = {a.dest: a for a in ben._actions}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise CliError(f"{args.config}: unknown keys {', '.join(unknown)}")
        for key, value in values.items():
            if known[key].const is True:  # store_true flag
                values[key] = value.lower() in ("1", "true", "yes", "on")
        ben.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        return args.func(args)
    except PrivacyGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GATE
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
