"""Command line interface.

Exit codes: 0 success, 1 configuration or IO error, 2 numerical failure,
3 infeasible experiment.
"""
import argparse
import json
import math
import sys

import numpy as np

from .. import attacks, channel, detectors, statdist
from ..errors import ConfigError, InfeasibleTarget, NumericalFailure, RiscmaError
from ..rng import substream
from .config import EXPERIMENTS, dbm_to_watt, load_config, make_config
from .experiments import run
from .output import ResultRow, emit

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def build_parser():
    ap = _Parser(prog="riscma", description="RIS controller-manipulation attack experiments")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a table or figure experiment")
    r.add_argument("experiment", nargs="?", choices=EXPERIMENTS)
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--trials", type=int, default=None)
    r.add_argument("--full", action="store_true", help="use the full published trial counts")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--set", type=_kv, action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field (JSON value)")
    _common(r)

    c = sub.add_parser("channel", help="draw a Rayleigh channel and report its coherent SNR")
    c.add_argument("--N", type=int, default=64)
    c.add_argument("--P-dBm", type=float, default=30.0)
    c.add_argument("--sigma-w2-dBm", type=float, default=-10.0)
    _common(c)

    a = sub.add_parser("attack", help="design one attack on a drawn channel")
    a.add_argument("--detector", choices=("energy", "cusum", "csi"), default="energy")
    a.add_argument("--N", type=int, default=64)
    a.add_argument("--K", type=int, default=50)
    a.add_argument("--rho", type=float, default=0.05)
    a.add_argument("--xi", type=float, default=0.5)
    a.add_argument("--a-glr", type=float, default=0.01)
    a.add_argument("--tau", type=float, default=10.0)
    a.add_argument("--nu-ks", type=float, default=0.1)
    a.add_argument("--eps-ks", type=float, default=0.02)
    a.add_argument("--iota", type=float, default=0.23)
    a.add_argument("--sigma-e2", type=float, default=0.01)
    a.add_argument("--trials", type=int, default=1000)
    a.add_argument("--P-dBm", type=float, default=30.0)
    a.add_argument("--sigma-w2-dBm", type=float, default=-10.0)
    _common(a)

    d = sub.add_parser("detect", help="simulate one block under a variance ratio and test it")
    d.add_argument("--detector", choices=("energy", "cusum"), default="energy")
    d.add_argument("--K", type=int, default=50)
    d.add_argument("--rho", type=float, default=0.05)
    d.add_argument("--a-glr", type=float, default=0.01)
    d.add_argument("--ratio", type=float, default=1.0, help="sigma^2 / sigma0^2 of the simulated block")
    d.add_argument("--min-ratio", type=float, default=0.01, help="sigma_min^2 / sigma0^2 (cusum)")
    d.add_argument("--sigma02", type=float, default=1.0)
    d.add_argument("--max-len", type=int, default=10000)
    _common(d)

    m = sub.add_parser("moments", help="closed-form SNR moments vs Monte Carlo")
    m.add_argument("--N", type=int, default=64)
    m.add_argument("--b", type=int, default=None, help="phase bits (omit for continuous phases)")
    m.add_argument("--kappa", type=float, default=1.0)
    m.add_argument("--samples", type=int, default=0, help="Monte Carlo draws (0 to skip)")
    _common(m)
    return ap


def _emit_records(recs, args):
    fmt = args.format or "json"
    labels = {k: v for k, v in recs.items() if isinstance(v, str)}
    rows = [ResultRow(args.cmd, k, v, 0.0, 1, labels) if not isinstance(v, (list, dict)) else None
            for k, v in recs.items() if k not in labels]
    if fmt == "json" or any(r is None for r in rows):
        text = json.dumps(recs, indent=1, default=float) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return
    emit(rows, "csv", args.out)


def _cmd_run(args):
    overrides = dict(args.set)
    for k in ("seed", "trials", "workers", "format", "out"):
        v = getattr(args, k)
        if v is not None:
            overrides[k] = v
    if args.config:
        cfg = load_config(args.config, args.experiment, overrides, full=args.full)
    elif args.experiment:
        cfg = make_config(args.experiment, overrides, full=args.full)
    else:
        raise ConfigError("name an experiment or pass --config")
    rows = run(cfg)
    emit(rows, cfg["format"], cfg["out"])


def _psi(args, n, seed):
    ch = channel.sample_rayleigh(n, 1.0, 1.0, substream(seed, 0))
    return ch, channel.composite(ch, dbm_to_watt(args.sigma_w2_dBm), dbm_to_watt(args.P_dBm))


def _cmd_channel(args):
    seed = 0 if args.seed is None else args.seed
    ch, psi = _psi(args, args.N, seed)
    g0 = psi.max_gain_bound()
    _emit_records({"N": args.N, "coherent_gain": g0, "sigma02": psi.noise_var + psi.p_tx * g0,
                   "coherent_snr": psi.snr_scale * g0,
                   "optimal_phases": [float(x) for x in channel.optimal_phases(ch).phases]}, args)


def _cmd_attack(args):
    seed = 0 if args.seed is None else args.seed
    _, psi = _psi(args, args.N, seed)
    rng = substream(seed, 1)
    g0 = psi.max_gain_bound()
    s0 = psi.noise_var + psi.p_tx * g0
    if args.detector == "energy":
        plan = attacks.design_ump_attack(psi, args.rho, args.xi, args.K, args.trials, rng)
    elif args.detector == "cusum":
        smin = attacks.estimate_sigma_min(psi, args.trials, substream(seed, 2))
        eps = detectors.cusum_threshold(args.a_glr, smin, s0)
        plan = attacks.design_cusum_attack(psi, eps, smin, s0, args.tau, args.trials, rng)
    else:
        ss2 = psi.p_tx * args.N * args.sigma_e2
        test = detectors.DoubleThresholdTest.design(args.K, args.iota, args.eps_ks,
                                                    statdist.CsiEnergyDist(s0, ss2))
        plan = attacks.design_csi_attack(psi, args.nu_ks, test.r_l, args.sigma_e2, psi.noise_var,
                                         args.N, args.trials, rng)
    if not plan.feasible:
        raise InfeasibleTarget(plan.diagnostics.get("reason", "attack infeasible"))
    rec = plan.to_record()
    rec["rate_decrease_pct"] = 100 * (1 - math.log2(1 + psi.snr_scale * plan.achieved_metric)
                                      / math.log2(1 + psi.snr_scale * g0))
    _emit_records(rec, args)


def _cmd_detect(args):
    seed = 0 if args.seed is None else args.seed
    rng = substream(seed, 3)
    s0 = args.sigma02
    s2 = args.ratio * s0
    if args.detector == "energy":
        test = detectors.EnergyTest.design(args.K, args.rho, s0)
        y = channel.complex_normal(rng, s2, args.K)
        out = detectors.energy_detect(y, test)
    else:
        smin = args.min_ratio * s0
        eps = detectors.cusum_threshold(args.a_glr, smin, s0)
        det = detectors.GlrCusum(s0, smin, eps, window=args.K)
        out = None
        for _ in range(args.max_len):
            out = det.step(complex(channel.complex_normal(rng, s2, 1)[0]))
            if out.attack:
                break
    _emit_records(out.to_record(), args)


def _cmd_moments(args):
    if args.b is None:
        ms = statdist.snr_moments_continuous(args.N, args.kappa)
    else:
        ms = statdist.snr_moments_discrete(args.N, args.kappa, b=args.b)
    rec = {"model": ms.model, "m1": ms.m1, "m2": ms.m2}
    if args.samples > 0:
        rng = substream(0 if args.seed is None else args.seed, 4)
        if args.b is None:
            z = rng.standard_normal((4, args.samples, args.N))
            amp = np.abs((z[0] + 1j * z[1]) * (z[2] + 1j * z[3])) / 2.0
            snr = args.kappa * np.sum(amp, axis=1) ** 2
        else:
            from .experiments import quantized_optimal_snr
            snr = quantized_optimal_snr(args.N, args.b, args.kappa, 1.0, 1.0, args.samples, rng)
        rec.update(mc_m1=float(np.mean(snr)), mc_m2=float(np.mean(snr ** 2)))
    _emit_records(rec, args)


_COMMANDS = {"run": _cmd_run, "channel": _cmd_channel, "attack": _cmd_attack, "detect": _cmd_detect,
             "moments": _cmd_moments}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.cmd](args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleTarget as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RiscmaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
