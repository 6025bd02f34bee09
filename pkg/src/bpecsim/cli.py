"""Command-line front end: region reports, sweeps, simulations, figure data.

Subcommands
-----------
region    print the outer-bound regions and achievable sums for one parameter set
sweep     write a CSV of sum-rate bounds over an eta grid
simulate  run the Monte Carlo harness and emit a JSON report
figure    emit the canned CSV datasets fig3 / fig4 / fig5

Flags override values from an optional JSON config file (--config).  All CSV
and JSON output is byte-stable for identical inputs.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from . import montecarlo, rates
from .protocol import Scheme
from .rates import ModeParams

CSV_HEADER = "eta,outer_sum,c1_sum,c2_sum,c3_sum,inter_modal_sum,intra_modal_sum,no_feedback_sum"

_SCHEMES = {"inter": Scheme.INTER_MODAL, "intra": Scheme.INTRA_MODAL, "nofb": Scheme.NO_FEEDBACK}


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _eta_grid(grid: str) -> list[float]:
    try:
        start_s, stop_s, step_s = grid.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError as exc:
        raise ValueError(f"grid must be start:stop:step, got {grid!r}") from exc
    if not (0.0 <= start <= stop <= 1.0) or step <= 0.0:
        raise ValueError(f"grid must satisfy 0 <= start <= stop <= 1 with step > 0, got {grid!r}")
    count = int(round((stop - start) / step)) + 1
    grid = [min(start + k * step, stop) for k in range(count)]
    grid[-1] = stop
    return grid


def _region_report(delta_a: float, delta_b: float, eta: float) -> dict:
    p = ModeParams(delta_a=delta_a, delta_b=delta_b, eta=eta)
    regions = {
        "c1": rates.region_c1(p),
        "c2": rates.region_c2(p),
        "c3": rates.region_c3(p),
    }
    sums = {name: rates.max_sum_rate(reg) for name, reg in regions.items()}
    outer = rates.outer_region(p)
    verts = rates.vertices(outer)
    inter: Optional[float] = None
    if delta_a >= delta_b and delta_b < 1.0:
        inter = rates.achievable_intermodal_sum(p)
    report = {
        "delta_a": delta_a,
        "delta_b": delta_b,
        "eta": eta,
        "avg_erasure": rates.avg_erasure(p),
        "kappa": rates.kappa(p),
        "c1_halfspaces": [[h.c1, h.c2, h.bound] for h in regions["c1"].halfspaces],
        "c2_halfspaces": [[h.c1, h.c2, h.bound] for h in regions["c2"].halfspaces],
        "c3_halfspaces": [[h.c1, h.c2, h.bound] for h in regions["c3"].halfspaces],
        "vertices": [[v.r1, v.r2] for v in verts],
        "max_sum_rate": rates.max_sum_rate(outer),
        "c1_sum": sums["c1"],
        "c2_sum": sums["c2"],
        "c3_sum": sums["c3"],
        "binding_region": min(sums, key=lambda k: sums[k]),
        "outer_bound_achievable": rates.outer_bound_achievable(p),
        "inter_modal_sum": inter,
        "intra_modal_sum": rates.achievable_intramodal_sum(p),
        "no_feedback_sum": rates.achievable_nofeedback_sum(p),
    }
    return report


def _print_region_text(report: dict, out) -> None:
    print(
        f"delta_a={_fmt(report['delta_a'])} delta_b={_fmt(report['delta_b'])} "
        f"eta={_fmt(report['eta'])} avg_erasure={_fmt(report['avg_erasure'])} "
        f"kappa={_fmt(report['kappa'])}",
        file=out,
    )
    for name in ("c1", "c2", "c3"):
        parts = [
            f"{_fmt(c1)}*R1 + {_fmt(c2)}*R2 <= {_fmt(b)}"
            for c1, c2, b in report[f"{name}_halfspaces"]
        ]
        print(f"{name}: " + " ; ".join(parts) + f"  (max sum {_fmt(report[f'{name}_sum'])})", file=out)
    verts = " ".join(f"({_fmt(r1)}, {_fmt(r2)})" for r1, r2 in report["vertices"])
    print(f"vertices: {verts}", file=out)
    print(f"max_sum_rate={_fmt(report['max_sum_rate'])}", file=out)
    print(f"binding_region={report['binding_region']}", file=out)
    print(f"outer_bound_achievable={str(report['outer_bound_achievable']).lower()}", file=out)
    inter = report["inter_modal_sum"]
    print(
        f"inter_modal_sum={_fmt(inter) if inter is not None else 'n/a'} "
        f"intra_modal_sum={_fmt(report['intra_modal_sum'])} "
        f"no_feedback_sum={_fmt(report['no_feedback_sum'])}",
        file=out,
    )


def sweep_rows(delta_a: float, delta_b: float, grid: list[float]) -> list[str]:
    """CSV lines (header included) for the sum-rate bounds over an eta grid."""
    lines = [CSV_HEADER]
    for eta in grid:
        p = ModeParams(delta_a=delta_a, delta_b=delta_b, eta=eta)
        outer = rates.max_sum_rate(rates.outer_region(p))
        c1 = rates.max_sum_rate(rates.region_c1(p))
        c2 = rates.max_sum_rate(rates.region_c2(p))
        c3 = rates.max_sum_rate(rates.region_c3(p))
        if delta_a >= delta_b and delta_b < 1.0:
            inter = _fmt(rates.achievable_intermodal_sum(p))
        else:
            inter = ""
        intra = rates.achievable_intramodal_sum(p)
        nofb = rates.achievable_nofeedback_sum(p)
        lines.append(
            f"{_fmt(eta)},{_fmt(outer)},{_fmt(c1)},{_fmt(c2)},{_fmt(c3)},"
            f"{inter},{_fmt(intra)},{_fmt(nofb)}"
        )
    return lines


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _cmd_region(args) -> int:
    report = _region_report(args.delta_a, args.delta_b, args.eta)
    if args.format == "json":
        _write_text(args.out, json.dumps(report, indent=2) + "\n")
    else:
        if args.out and args.out != "-":
            with open(args.out, "w", encoding="utf-8") as fh:
                _print_region_text(report, fh)
        else:
            _print_region_text(report, sys.stdout)
    return 0


def _cmd_sweep(args) -> int:
    grid = _eta_grid(args.eta_grid)
    lines = sweep_rows(args.delta_a, args.delta_b, grid)
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_simulate(args) -> int:
    p = ModeParams(delta_a=args.delta_a, delta_b=args.delta_b, eta=args.eta)
    n_t = args.n_t
    if n_t is None:
        n_t = montecarlo.default_transient_length(args.n, args.eta)
    scheme = _SCHEMES[args.scheme]
    agg = montecarlo.simulate(
        p, args.n, n_t, args.delta_t, scheme, args.guard_coeff, args.trials, args.seed
    )
    if scheme is Scheme.INTER_MODAL:
        analytic = rates.achievable_intermodal_sum(p)
    elif scheme is Scheme.INTRA_MODAL:
        analytic = rates.achievable_intramodal_sum(p)
    else:
        analytic = rates.achievable_nofeedback_sum(p)
    report = {
        "delta_a": args.delta_a,
        "delta_b": args.delta_b,
        "delta_t": args.delta_t,
        "eta": args.eta,
        "n": args.n,
        "n_t": n_t,
        "scheme": args.scheme,
        "trials": args.trials,
        "seed": args.seed,
        "guard_coeff": args.guard_coeff,
        "mean_sum_rate": agg.mean_sum_rate,
        "sum_rate_ci95": list(agg.sum_rate_ci95),
        "failure_rate_1": agg.failure_rate_1,
        "failure_rate_2": agg.failure_rate_2,
        "analytic_sum_rate": analytic,
        "outer_max_sum_rate": rates.max_sum_rate(rates.outer_region(p)),
    }
    _write_text(args.out, json.dumps(report, indent=2) + "\n")
    return 0


def _cmd_figure(args) -> int:
    if args.name == "fig3":
        # include the exact threshold point where inner meets outer
        grid = sorted(set(_eta_grid("0:1:0.01")) | {32.0 / 35.0})
        lines = sweep_rows(0.75, 0.0, grid)
        _write_text(args.out, "\n".join(lines) + "\n")
        return 0
    if args.name == "fig4":
        lines = sweep_rows(0.75, 0.125, _eta_grid("0:1:0.01"))
        _write_text(args.out, "\n".join(lines) + "\n")
        return 0
    # fig5: region comparison in the regime where inner and outer bounds split
    p = ModeParams(delta_a=0.75, delta_b=0.0, eta=1.0 / 6.0)
    lines = ["label,r1,r2,value"]
    for v in rates.vertices(rates.outer_region(p)):
        lines.append(f"vertex,{_fmt(v.r1)},{_fmt(v.r2)},")
    lines.append(f"outer_max_sum,,,{_fmt(rates.max_sum_rate(rates.outer_region(p)))}")
    lines.append(f"inter_modal_sum,,,{_fmt(rates.achievable_intermodal_sum(p))}")
    lines.append(f"intra_modal_sum,,,{_fmt(rates.achievable_intramodal_sum(p))}")
    # alternative weighted-average figure for this setup, kept for comparison
    lines.append("intra_modal_reported,,,0.875")
    lines.append(f"no_feedback_sum,,,{_fmt(rates.achievable_nofeedback_sum(p))}")
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bpecsim",
        description="Rate bounds and feedback-coding simulation for two-user "
        "broadcast erasure channels with scheduled statistics changes.",
    )
    parser.add_argument(
        "--config",
        default=None,
        help="JSON file with default values for the subcommand flags",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("region", help="outer-bound regions and achievable sums")
    sp.add_argument("delta_a", type=float)
    sp.add_argument("delta_b", type=float)
    sp.add_argument("eta", type=float)
    sp.add_argument("--format", choices=("text", "json"), default="text")
    _add_common(sp)
    sp.set_defaults(func=_cmd_region)

    sp = sub.add_parser("sweep", help="sum-rate bounds over an eta grid (CSV)")
    sp.add_argument("--delta-a", dest="delta_a", type=float, required=True)
    sp.add_argument("--delta-b", dest="delta_b", type=float, required=True)
    sp.add_argument(
        "--eta-grid", dest="eta_grid", default="0:1:0.01", help="grid as start:stop:step"
    )
    _add_common(sp)
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("simulate", help="Monte Carlo run (JSON report)")
    sp.add_argument("--delta-a", dest="delta_a", type=float, default=0.75)
    sp.add_argument("--delta-b", dest="delta_b", type=float, default=0.0)
    sp.add_argument("--delta-t", dest="delta_t", type=float, default=None)
    sp.add_argument("--eta", type=float, default=32.0 / 35.0)
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument(
        "--n-t",
        dest="n_t",
        type=int,
        default=None,
        help="transient length (default: ceil(n^(2/3)), clamped)",
    )
    sp.add_argument("--scheme", choices=sorted(_SCHEMES), default="inter")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--seed", type=int, default=12345)
    sp.add_argument("--guard-coeff", dest="guard_coeff", type=float, default=3.0)
    _add_common(sp)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("figure", help="canned figure datasets (CSV)")
    sp.add_argument("name", choices=("fig3", "fig4", "fig5"))
    _add_common(sp)
    sp.set_defaults(func=_cmd_figure)

    return parser


def _validate_simulate(args, parser) -> None:
    for name in ("delta_a", "delta_b", "delta_t", "eta"):
        value = getattr(args, name, None)
        if value is not None and not 0.0 <= value <= 1.0:
            parser.error(f"{name.replace('_', '-')} must lie in [0, 1], got {value}")
    if getattr(args, "n", 1) < 1:
        parser.error("n must be at least 1")
    if getattr(args, "n_t", None) is not None and args.n_t < 0:
        parser.error("n-t must be non-negative")
    if getattr(args, "trials", 1) < 1:
        parser.error("trials must be at least 1")
    if getattr(args, "guard_coeff", 0.0) < 0.0:
        parser.error("guard-coeff must be non-negative")


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    tokens = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(tokens)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        explicit = {t.split("=", 1)[0] for t in tokens if t.startswith("--")}
        for key, value in defaults.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and f"--{key.replace('_', '-')}" not in explicit:
                setattr(args, attr, value)
    if args.command == "simulate" and args.delta_t is None:
        args.delta_t = args.delta_b
    if args.command in ("region", "sweep", "simulate"):
        _validate_simulate(args, parser)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
