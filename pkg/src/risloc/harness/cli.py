"""Command-line entry point.

Subcommands::

    crb             bound report at one trajectory point (JSON)
    estimate        one noisy trial end to end, with diagnostics (JSON)
    sweep-distance  estimator RMSE and CRB along the trajectory (CSV)
    sweep-ris-size  PEB for several RIS sizes (CSV)
    selftest        finite-difference checks of derivatives and FIM
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from ..channel import random_profiles
from ..estimator import EstimationError
from ..fim import SingularFimError, crb
from ..geometry import GeometryError
from . import selftest
from .campaign import (Campaign, PebRow, ResultRow, run_distance_sweep, run_ris_size_sweep, run_trial,
                       trial_rng, write_csv)
from .config import ConfigError, ExperimentConfig

log = logging.getLogger("risloc")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file overriding the defaults")
    common.add_argument("--full", action="store_true", help="start from the full-scale parameter table")
    common.add_argument("--seed", type=_u64, help="master seed (default from config)")
    common.add_argument("--out", help="output path, '-' for stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="risloc", description="RIS-aided localization bounds and estimator.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("crb", parents=[common], help="bound report at one point")
    c.add_argument("--distance", type=float, default=1.0, help="trajectory parameter r in metres")

    e = sub.add_parser("estimate", parents=[common], help="one trial end to end")
    e.add_argument("--distance", type=float, default=1.0)
    e.add_argument("--noiseless", action="store_true")

    s = sub.add_parser("sweep-distance", parents=[common], help="RMSE vs CRB along the trajectory")
    s.add_argument("--trials", type=_positive)
    s.add_argument("--points", type=_float_list, help="distances r, comma or space separated")
    s.add_argument("--noiseless", action="store_true")

    m = sub.add_parser("sweep-ris-size", parents=[common], help="PEB vs RIS size")
    m.add_argument("--trials", type=_positive, help="random draws per point")
    m.add_argument("--points", type=_float_list, help="RIS side lengths")
    m.add_argument("--distances", type=_float_list, help="trajectory parameters r")

    t = sub.add_parser("selftest", parents=[common], help="finite-difference oracle suite")
    t.add_argument("--scenarios", type=_positive, default=50)
    return p


def _emit_json(obj, path):
    text = json.dumps(obj, indent=2)
    if path in (None, "-"):
        print(text)
        return
    try:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write output file {path}: {exc}") from exc


def _crb_dict(rep):
    if rep is None:
        return None
    return {
        "peb_m": rep.peb, "ceb_m": rep.ceb_m, "ceb_s": rep.ceb,
        "crb_tau_b_s": rep.crb_tau_b, "crb_tau_r_s": rep.crb_tau_r,
        "crb_phi_az_rad": rep.crb_phi_az, "crb_phi_el_rad": rep.crb_phi_el,
        "condition": rep.condition,
    }


def _check_writable(path):
    # fail before a long run rather than after it
    if path in (None, "-"):
        return
    try:
        open(path, "a").close()
    except OSError as exc:
        raise ConfigError(f"cannot write output file {path}: {exc}") from exc


def _seed(args, exp):
    return int(args.seed) if args.seed is not None else int(exp.raw["seed"])


def cmd_crb(args, exp):
    rng = trial_rng(_seed(args, exp), 0, 0)
    base = exp.scenario(exp.ue_position(args.distance))
    profiles = random_profiles(base.n_symbols, base.ris, rng)
    cfg = base.with_(gain_phase_b=rng.uniform(0, 2 * np.pi), gain_phase_r=rng.uniform(0, 2 * np.pi))
    try:
        rep = crb(cfg, profiles)
    except (SingularFimError, GeometryError) as exc:
        _emit_json({"r_m": args.distance, "error": str(exc)}, args.out)
        return 2
    _emit_json({"r_m": args.distance, "ue_position": cfg.ue_position.tolist(), **_crb_dict(rep)}, args.out)
    return 0


def cmd_estimate(args, exp):
    rng = trial_rng(_seed(args, exp), 0, 0)
    out = run_trial(exp, args.distance, rng, 0.0 if args.noiseless else None)
    out["crb"] = _crb_dict(out["crb"])
    _emit_json({"r_m": args.distance, **{k: (v.item() if isinstance(v, np.generic) else v)
                                         for k, v in out.items()}}, args.out)
    return 1 if out["failed"] else 0


def cmd_sweep_distance(args, exp):
    campaign = Campaign(
        exp, args.points or exp.distance_points(), args.trials or int(exp.raw["trials"]), _seed(args, exp),
        noise_variance=0.0 if args.noiseless else None,
    )
    rows = run_distance_sweep(campaign, progress=lambda r: log.info("r=%.4g done", r.r_m))
    write_csv(rows, args.out, ResultRow)
    return 0


def cmd_sweep_ris_size(args, exp):
    sizes = args.points or exp.raw["sweep"]["ris_sizes"]
    if any(s < 1 or s != int(s) for s in sizes):
        raise ConfigError("RIS sizes must be positive integers")
    campaign = Campaign(
        exp, [int(s) for s in sizes], args.trials or int(exp.raw["sweep"]["ris_size_draws"]), _seed(args, exp),
        distances=args.distances or [],
    )
    rows = run_ris_size_sweep(campaign, progress=lambda r: log.info("M=%d r=%.4g done", r.ris_size, r.r_m))
    write_csv(rows, args.out, PebRow)
    return 0


def cmd_selftest(args, exp):
    return 0 if selftest.run(args.scenarios, _seed(args, exp)) else 1


COMMANDS = {
    "crb": cmd_crb,
    "estimate": cmd_estimate,
    "sweep-distance": cmd_sweep_distance,
    "sweep-ris-size": cmd_sweep_ris_size,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        exp = ExperimentConfig.load(args.config, full=args.full)
        _check_writable(args.out)
        return COMMANDS[args.command](args, exp)
    except ConfigError as exc:
        print(f"risloc: error: {exc}", file=sys.stderr)
        return 2
    except (EstimationError, GeometryError, ValueError) as exc:
        print(f"risloc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
