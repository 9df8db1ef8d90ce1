"""Monte Carlo campaigns: distance sweep (estimator vs. bound) and RIS-size sweep (bound only).

Seeding: trial ``i`` of sweep point ``j`` uses
``numpy.random.SeedSequence([master_seed, j, i])``. Within a trial the draws
happen in a fixed order: phase profiles, LOS gain phase, reflected gain
phase, clock bias, then the noise matrix. Adding trials never changes the
draws of earlier trials.
"""

from __future__ import annotations

import csv
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..channel import SPEED_OF_LIGHT, derive_channel_params, random_profiles, synthesize
from ..estimator import AodDictionary, EstimationError, estimate, los_dominance_ratio
from ..fim import SingularFimError, crb
from ..geometry import GeometryError, wrap_angle
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

FLOAT_FORMAT = "{:.9g}"


@dataclass
class Campaign:
    config: ExperimentConfig
    points: list
    trials: int
    seed: int = 0
    noise_variance: float | None = None  # override, e.g. 0 for noiseless runs
    distances: list = field(default_factory=list)  # RIS-size sweep only

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.points:
            raise ConfigError("sweep needs at least one point")


def trial_rng(master_seed: int, point: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(point), int(trial)]))


@dataclass
class ResultRow:
    r_m: float
    trials: int
    seed: int
    rmse_pos_m: float
    rmse_clock_m: float
    rmse_clock_s: float
    rmse_tau_b_m: float
    rmse_tau_b_s: float
    rmse_tau_r_m: float
    rmse_tau_r_s: float
    rmse_phi_az_rad: float
    rmse_phi_el_rad: float
    peb_m: float
    ceb_m: float
    ceb_s: float
    crb_tau_b_m: float
    crb_tau_b_s: float
    crb_tau_r_m: float
    crb_tau_r_s: float
    crb_phi_az_rad: float
    crb_phi_el_rad: float
    singular_fim_rate: float
    estimation_failure_rate: float
    range_clamped_rate: float
    branch_clamped_rate: float
    nonconverged_rate: float
    tau_order_violation_rate: float
    min_los_dominance: float


@dataclass
class PebRow:
    ris_size: int
    n_elements: int
    r_m: float
    draws: int
    seed: int
    peb_m: float
    ceb_m: float
    singular_fim_rate: float


def _wrapped(x, period):
    return (x + period / 2) % period - period / 2


def _rms(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(v**2))) if v.size else math.nan


def _median(values) -> float:
    return float(np.median(values)) if len(values) else math.nan


def _check_delay_range(cfg):
    excess = (np.linalg.norm(cfg.ue_position - cfg.ris.origin) + np.linalg.norm(cfg.bs_position - cfg.ris.origin)
              - np.linalg.norm(cfg.ue_position - cfg.bs_position))
    if excess / SPEED_OF_LIGHT >= 0.5 / cfg.subcarrier_spacing:
        raise ConfigError("geometry exceeds the unambiguous delay range of the waveform")


def run_trial(exp: ExperimentConfig, r: float, rng: np.random.Generator, noise_variance=None, est_cfg=None):
    """One Monte Carlo trial at distance ``r``; returns a dict of errors, bounds and flags."""
    base = exp.scenario(exp.ue_position(r), noise_variance=noise_variance)
    profiles = random_profiles(base.n_symbols, base.ris, rng)
    phase_b = rng.uniform(0, 2 * np.pi)
    phase_r = rng.uniform(0, 2 * np.pi)
    clock = rng.uniform(0, 1 / base.subcarrier_spacing)
    cfg = base.with_(gain_phase_b=phase_b, gain_phase_r=phase_r, clock_bias=clock)
    _check_delay_range(cfg)
    truth = derive_channel_params(cfg)
    Y = synthesize(cfg, profiles, rng)

    est_cfg = est_cfg or exp.estimator()
    out = {"los_dominance": los_dominance_ratio(truth, cfg, profiles)}
    period = 1 / cfg.subcarrier_spacing
    try:
        rep = estimate(Y, cfg, profiles, est_cfg, AodDictionary(profiles, cfg, est_cfg), strict=False)
    except EstimationError as exc:
        log.warning("estimation failed at r=%g: %s", r, exc)
        out["failed"] = True
    else:
        d = rep.diagnostics
        out.update(
            failed=False,
            pos=float(np.linalg.norm(rep.p_hat - cfg.ue_position)),
            clock=float(_wrapped(rep.clock_bias_hat - cfg.clock_bias, period)),
            tau_b=float(_wrapped(rep.tau_b_hat - truth.tau_b, period)),
            tau_r=float(_wrapped(rep.tau_r_hat - truth.tau_r, period)),
            az=float(wrap_angle(rep.phi_hat.az - truth.phi.az)),
            el=float(rep.phi_hat.el - truth.phi.el),
            range_clamped=d["range_clamped"],
            branch_clamped=d["branch_clamped"],
            nonconverged=not (d["converged_b"] and d["converged_r"] and d["converged_phi"]),
            tau_order=d["tau_order_violated"],
        )
    try:
        out["crb"] = crb(cfg, profiles)
    except (SingularFimError, GeometryError) as exc:
        log.info("no bound at r=%g: %s", r, exc)
        out["crb"] = None
    return out


def run_distance_sweep(campaign: Campaign, progress=None) -> list[ResultRow]:
    """Estimator RMSE and median CRB at every distance of the campaign."""
    exp = campaign.config
    est_cfg = exp.estimator()
    rows = []
    c = SPEED_OF_LIGHT
    for j, r in enumerate(campaign.points):
        results = [
            run_trial(exp, r, trial_rng(campaign.seed, j, i), campaign.noise_variance, est_cfg)
            for i in range(campaign.trials)
        ]
        ok = [t for t in results if not t["failed"]]
        bounds = [t["crb"] for t in results if t["crb"] is not None]
        n = len(results)

        def err(key, _ok=ok):
            return [t[key] for t in _ok]

        def rate(key, _ok=ok, _n=n):
            return sum(bool(t[key]) for t in _ok) / _n

        def med(attr, _b=bounds):
            return _median([getattr(b, attr) for b in _b])

        # a failed trial counts with the RIS origin as its position estimate
        pos = err("pos") + [float(np.linalg.norm(exp.ue_position(r) - exp.ris().origin))] * (n - len(ok))
        rows.append(ResultRow(
            r_m=float(r), trials=n, seed=campaign.seed,
            rmse_pos_m=_rms(pos),
            rmse_clock_m=_rms(err("clock")) * c, rmse_clock_s=_rms(err("clock")),
            rmse_tau_b_m=_rms(err("tau_b")) * c, rmse_tau_b_s=_rms(err("tau_b")),
            rmse_tau_r_m=_rms(err("tau_r")) * c, rmse_tau_r_s=_rms(err("tau_r")),
            rmse_phi_az_rad=_rms(err("az")), rmse_phi_el_rad=_rms(err("el")),
            peb_m=med("peb"), ceb_m=med("ceb") * c, ceb_s=med("ceb"),
            crb_tau_b_m=med("crb_tau_b") * c, crb_tau_b_s=med("crb_tau_b"),
            crb_tau_r_m=med("crb_tau_r") * c, crb_tau_r_s=med("crb_tau_r"),
            crb_phi_az_rad=med("crb_phi_az"), crb_phi_el_rad=med("crb_phi_el"),
            singular_fim_rate=(n - len(bounds)) / n,
            estimation_failure_rate=(n - len(ok)) / n,
            range_clamped_rate=rate("range_clamped"),
            branch_clamped_rate=rate("branch_clamped"),
            nonconverged_rate=rate("nonconverged"),
            tau_order_violation_rate=rate("tau_order"),
            min_los_dominance=float(min(t["los_dominance"] for t in results)),
        ))
        if progress:
            progress(rows[-1])
    return rows


def run_ris_size_sweep(campaign: Campaign, progress=None) -> list[PebRow]:
    """Median PEB over random profile/gain draws for every (RIS size, distance) pair."""
    exp = campaign.config
    distances = campaign.distances or exp.raw["sweep"]["ris_size_distances"]
    rows = []
    for j, size in enumerate(campaign.points):
        for k, r in enumerate(distances):
            pebs, cebs = [], []
            for i in range(campaign.trials):
                rng = trial_rng(campaign.seed, j * 1000 + k, i)
                base = exp.scenario(exp.ue_position(r), ris_size=int(size), noise_variance=campaign.noise_variance)
                profiles = random_profiles(base.n_symbols, base.ris, rng)
                cfg = base.with_(gain_phase_b=rng.uniform(0, 2 * np.pi), gain_phase_r=rng.uniform(0, 2 * np.pi))
                try:
                    rep = crb(cfg, profiles)
                except (SingularFimError, GeometryError) as exc:
                    log.info("no bound for size %d at r=%g: %s", size, r, exc)
                    continue
                pebs.append(rep.peb)
                cebs.append(rep.ceb_m)
            rows.append(PebRow(
                ris_size=int(size), n_elements=int(size) ** 2, r_m=float(r), draws=campaign.trials,
                seed=campaign.seed, peb_m=_median(pebs), ceb_m=_median(cebs),
                singular_fim_rate=(campaign.trials - len(pebs)) / campaign.trials,
            ))
            if progress:
                progress(rows[-1])
    return rows


def row_fields(row_type) -> list[str]:
    return [f.name for f in fields(row_type)]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FORMAT.format(float(v))


def write_csv(rows, path, row_type=None):
    """Write rows with one header line; floats carry 9 significant digits."""
    row_type = row_type or type(rows[0])
    names = row_fields(row_type)
    try:
        fh = open(path, "w", newline="") if path not in (None, "-") else None
    except OSError as exc:
        raise ConfigError(f"cannot write output file {path}: {exc}") from exc
    stream = fh or sys.stdout
    try:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([format_value(getattr(row, n)) for n in names])
    finally:
        if fh:
            fh.close()
    return Path(path) if fh else None
