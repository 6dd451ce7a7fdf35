"""Command-line interface.

Exit codes: 0 on success, 1 when a library computation fails, 2 on a bad
command line or config file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import bounds_upper, quad, rate, refs, sampler, sweep
from .errors import CapacityError, InvalidConfig
from .model import ChannelParams


def _channel_args(p: argparse.ArgumentParser):
    p.add_argument("--sigma-delta-sq", type=float, default=1e-3,
                   help="phase innovation variance, rad^2 (default 1e-3)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sigma-w-sq", type=float, help="per-component noise variance")
    g.add_argument("--snr-db", type=float, help="es / (2 sigma_w_sq) in dB (default 20)")
    p.add_argument("--es", type=float, default=1.0, help="average symbol power")


def _output_args(p: argparse.ArgumentParser):
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--out", help="output path (default stdout)")


def _params(args) -> ChannelParams:
    if args.sigma_w_sq is not None:
        return ChannelParams(args.sigma_w_sq, args.sigma_delta_sq, args.es)
    snr = 20.0 if args.snr_db is None else args.snr_db
    return ChannelParams.from_snr_db(snr, args.sigma_delta_sq, args.es)


def _render(record, fmt: str) -> str:
    """A dict (one record) or list of dicts as JSON or CSV text."""
    if fmt == "json":
        return json.dumps(record, indent=2, default=_json_default) + "\n"
    records = record if isinstance(record, list) else [record]
    flat = [{k: v for k, v in r.items() if not isinstance(v, (dict, list))}
            for r in records]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(flat[0]), lineterminator="\n")
    w.writeheader()
    for r in flat:
        w.writerow({k: ("%.9g" % v if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_solve_aux(args):
    p = _params(args)
    aux = quad.solve_aux_params(p, args.mu)
    return {"sigma_w_sq": p.sigma_w_sq, "sigma_delta_sq": p.sigma_delta_sq, "es": p.es,
            "mu": aux.mu, "alpha_u": aux.alpha_u, "beta_u": aux.beta_u,
            "mass_residual": aux.residuals[0], "moment_residual": aux.residuals[1]}


def cmd_solve_input(args):
    p = _params(args)
    d = quad.solve_input_params(p, args.m, seed=args.seed, n_samples=args.samples)
    return {"sigma_w_sq": p.sigma_w_sq, "sigma_delta_sq": p.sigma_delta_sq, "es": p.es,
            "m": d.m, "alpha_l": d.alpha_l, "beta_l": d.beta_l,
            "mass_residual": d.residuals[0], "moment_residual": d.residuals[1],
            "provenance": d.provenance}


def cmd_upper_bound(args):
    p = _params(args)
    res = bounds_upper.upper_bound_cu(p, n_samples=args.samples, seed=args.seed)
    return {"snr_db": res.snr_db, "c_u": res.c_u, "c_u_tilde": res.c_u_tilde,
            "argmax_R": res.argmax_R, "argmin_mu": res.argmin_mu,
            "alpha_u": res.aux.alpha_u, "beta_u": res.aux.beta_u,
            "n_samples": args.samples, "seed": args.seed,
            "diagnostics": res.diagnostics}


def cmd_lower_bound(args):
    p = _params(args)
    if args.input in rate.REFERENCE_INPUTS:
        spec = args.input
    else:
        spec = quad.solve_input_params(p, args.m, n_samples=args.samples,
                                       seed=args.seed + 2015)
    est = rate.estimate_rate(p, spec, args.uses, args.particles, args.seed)
    return {"snr_db": 10 * np.log10(p.snr()), **est.as_dict()}


def cmd_sample_input(args):
    p = _params(args)
    d = quad.solve_input_params(p, args.m, n_samples=args.samples, seed=args.seed + 2015)
    n_blocks = -(-args.uses // args.m)
    block = sampler.draw_input_block(p, d, n_blocks, args.seed)
    return [{"k": k, "amplitude": float(a), "phase": float(t)}
            for k, (a, t) in enumerate(zip(block.amplitudes, block.phases))]


def cmd_refs(args):
    p = _params(args)
    return {"snr_db": 10 * np.log10(p.snr()), "c_awgn": refs.c_awgn(p),
            "c_lapidoth": refs.c_lapidoth(p)}


def cmd_crossover(args):
    p = ChannelParams(1.0, args.sigma_delta_sq, args.es)
    return {"sigma_delta_sq": args.sigma_delta_sq,
            "crossover_snr_db": refs.crossover_snr_db(p)}


def cmd_sweep(args):
    configs = sweep.load_config(args.config)
    if args.section:
        configs = [c for c in configs if c.name == args.section]
        if not configs:
            raise InvalidConfig(f"no section [{args.section}]")
    all_rows, provs = [], []
    for cfg in configs:
        rows, prov = sweep.run_sweep(cfg)
        all_rows.extend(rows)
        provs.append(prov)
    prov = provs[0] if len(provs) == 1 else {"sweeps": provs}
    if args.out:
        side = sweep.write_outputs(all_rows, prov, args.out)
        sys.stderr.write(f"wrote {args.out} and {side}\n")
    else:
        sys.stdout.write(sweep.emit_csv(all_rows))
    return None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wiener-capacity",
                                 description="Capacity bounds for the Wiener phase-noise channel.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-aux", help="solve the auxiliary output density")
    _channel_args(p)
    p.add_argument("--mu", type=float, default=0.0)
    _output_args(p)
    p.set_defaults(func=cmd_solve_aux)

    p = sub.add_parser("solve-input", help="solve the block input density")
    _channel_args(p)
    p.add_argument("--m", type=int, choices=(2, 3), default=2)
    p.add_argument("--samples", type=int, default=10_000_000,
                   help="Monte-Carlo samples for M=3")
    p.add_argument("--seed", type=int, default=2015)
    _output_args(p)
    p.set_defaults(func=cmd_solve_input)

    p = sub.add_parser("upper-bound", help="Monte-Carlo and closed-form upper bounds")
    _channel_args(p)
    p.add_argument("--samples", type=int, default=100_000, help="entropy samples per R")
    p.add_argument("--seed", type=int, default=0)
    _output_args(p)
    p.set_defaults(func=cmd_upper_bound)

    p = sub.add_parser("lower-bound", help="simulated achievable rate")
    _channel_args(p)
    p.add_argument("--m", type=int, choices=(2, 3), default=2)
    p.add_argument("--input", choices=("optimized", *rate.REFERENCE_INPUTS),
                   default="optimized")
    p.add_argument("--particles", type=int, default=10_000)
    p.add_argument("--uses", type=int, default=1000)
    p.add_argument("--samples", type=int, default=10_000_000,
                   help="Monte-Carlo samples for solving the M=3 input")
    p.add_argument("--seed", type=int, default=0)
    _output_args(p)
    p.set_defaults(func=cmd_lower_bound)

    p = sub.add_parser("sample-input", help="draw symbols from the optimized input")
    _channel_args(p)
    p.add_argument("--m", type=int, choices=(2, 3), default=2)
    p.add_argument("--uses", type=int, default=1000, help="number of symbols")
    p.add_argument("--samples", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample_input)

    p = sub.add_parser("refs", help="AWGN and high-SNR phase-noise capacities")
    _channel_args(p)
    _output_args(p)
    p.set_defaults(func=cmd_refs)

    p = sub.add_parser("crossover", help="SNR where the two reference curves meet")
    p.add_argument("--sigma-delta-sq", type=float, default=1e-3)
    p.add_argument("--es", type=float, default=1.0)
    _output_args(p)
    p.set_defaults(func=cmd_crossover)

    p = sub.add_parser("sweep", help="run an SNR sweep from an INI config")
    p.add_argument("config")
    p.add_argument("--section", help="run only this section")
    p.add_argument("--out", help="CSV path; a .json sidecar is written next to it")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except InvalidConfig as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except CapacityError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    if result is not None:
        _emit(_render(result, args.format), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
