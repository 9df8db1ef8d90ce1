"""Low-complexity joint localization and synchronization.

The pipeline runs four stages on the N x T observation:

1. LOS delay from the IFFT of the column sum, refined off-grid.
2. Reflected-path delay from the row norms of the IFFT after LOS removal.
3. RIS angle of departure from a 2D-IFFT dictionary of the known phase
   profiles, quadratic interpolation and a quasi-Newton polish.
4. Position on the departure ray that matches the measured range difference,
   then the clock bias from the LOS delay.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numopt
from .channel import (
    SPEED_OF_LIGHT, ChannelParams, PhaseProfileSet, ReceivedSignal, ScenarioConfig,
    delay_vector, ris_response_sequence,
)
from .geometry import (
    Angles, angles_from_wavenumber, direction, element_positions, row_col_vectors,
    steering_vector, wavenumber_derivatives, wrap_angle,
)

log = logging.getLogger(__name__)


class EstimationError(ValueError):
    """The observation or configuration does not allow an estimate."""


@dataclass(frozen=True)
class EstimatorConfig:
    n_fft_delay: int = 4096
    n_fft_rows: int = 256
    n_fft_cols: int = 256
    tol_delay: float = 1e-9  # in IFFT bins
    tol_angle: float = 1e-8  # rad
    tol_range: float = 1e-9  # m
    cancellation_passes: int = 3
    gate_excess_delay: bool = True  # search tau_r only where the geometry allows it

    def check(self, cfg: ScenarioConfig):
        if self.n_fft_delay < cfg.n_subcarriers:
            raise ValueError("delay IFFT shorter than the number of subcarriers")
        if self.n_fft_rows < cfg.ris.m_rows or self.n_fft_cols < cfg.ris.m_cols:
            raise ValueError("2D IFFT smaller than the RIS")


@dataclass
class EstimateReport:
    tau_b_hat: float
    tau_r_hat: float
    phi_hat: Angles
    g_b_hat: complex
    p_hat: np.ndarray
    clock_bias_hat: float
    diagnostics: dict = field(default_factory=dict)


def _wrap_period(x, period):
    return np.mod(x, period)


def _refine_delay(Y: np.ndarray, k: int, n_fft: int, tol: float) -> tuple[float, bool]:
    """Off-grid correction ``x`` (bins) maximizing the periodogram at bin ``k - x``.

    ``Y`` is N x K; the objective sums the squared magnitudes of all K
    columns. The search runs over ``x`` in [-1, 1] starting at 0.
    """
    n = np.arange(Y.shape[0])
    ramp = -2j * np.pi * n / n_fft
    scale = 1.0 / max(np.sum(np.abs(Y) ** 2), 1e-300)

    def spectrum(x):
        w = np.exp(2j * np.pi * n * (k - x) / n_fft)
        return w, w @ Y

    def f(x):
        return float(np.sum(np.abs(spectrum(x)[1]) ** 2)) * scale

    def grad(x):
        w, S = spectrum(x)
        dS = (w * ramp) @ Y
        return float(2 * np.sum((S.conj() * dS).real)) * scale

    res = numopt.maximize_scalar_bounded(f, -1.0, 1.0, 0.0, tol=tol, grad=grad, initial_step=0.25)
    return float(res.x[0]), res.converged


def estimate_tau_b(Y, cfg: ScenarioConfig, est_cfg: EstimatorConfig):
    """LOS delay, LOS amplitude (``g_b * sqrt(E_s)``) and the column sum.

    Returns ``(tau_b_hat, amplitude_hat, y_c, diagnostics)``.
    """
    Y = Y.samples if isinstance(Y, ReceivedSignal) else np.asarray(Y)
    N, T = Y.shape
    if N < 2:
        raise EstimationError("delay estimation needs at least two subcarriers")
    nf, df = est_cfg.n_fft_delay, cfg.subcarrier_spacing
    y_c = Y.sum(axis=1)
    k = int(np.argmax(np.abs(np.fft.ifft(y_c, nf))))
    x, ok = _refine_delay(y_c[:, None], k, nf, est_cfg.tol_delay)
    tau = _wrap_period((k - x) / (nf * df), 1 / df)
    amp = np.sum(y_c * delay_vector(-tau, N, df)) / (T * N)
    return float(tau), complex(amp), y_c, {"k_b": k, "delta_b_bins": x, "converged_b": ok}


def estimate_tau_r(Y, tau_b_hat: float, amp_b_hat: complex, cfg: ScenarioConfig, est_cfg: EstimatorConfig):
    """Reflected-path delay after removing the LOS estimate.

    Returns ``(tau_r_hat, Y_r, diagnostics)``.
    """
    Y = Y.samples if isinstance(Y, ReceivedSignal) else np.asarray(Y)
    N, T = Y.shape
    nf, df = est_cfg.n_fft_delay, cfg.subcarrier_spacing
    Y_r = Y - amp_b_hat * delay_vector(tau_b_hat, N, df)[:, None]
    power = np.sum(np.abs(np.fft.ifft(Y_r, nf, axis=0)) ** 2, axis=1)
    if est_cfg.gate_excess_delay:
        power = np.where(_excess_delay_gate(tau_b_hat, cfg, nf), power, -np.inf)
    k = int(np.argmax(power))
    x, ok = _refine_delay(Y_r, k, nf, est_cfg.tol_delay)
    tau = _wrap_period((k - x) / (nf * df), 1 / df)
    return float(tau), Y_r, {"k_r": k, "delta_r_bins": x, "converged_r": ok}


def _excess_delay_gate(tau_b_hat: float, cfg: ScenarioConfig, n_fft: int) -> np.ndarray:
    """IFFT bins whose delay exceeds ``tau_b_hat`` by a feasible amount.

    The reflected path is longer than the direct one by at most twice the
    BS-RIS distance; one resolution cell of slack on each side absorbs the
    error in ``tau_b_hat``.
    """
    df, period = cfg.subcarrier_spacing, 1 / cfg.subcarrier_spacing
    slack = 1 / (cfg.n_subcarriers * df)
    max_excess = 2 * np.linalg.norm(cfg.bs_position - cfg.ris.origin) / SPEED_OF_LIGHT
    excess = (np.arange(n_fft) / (n_fft * df) - tau_b_hat + slack) % period - slack
    return excess <= max_excess + slack


def refine_tau_r_coherent(Y_r: np.ndarray, tau_r_hat: float, u: np.ndarray, cfg: ScenarioConfig,
                          est_cfg: EstimatorConfig) -> float:
    """Re-fit the reflected delay with the RIS response ``u`` as a matched filter over symbols."""
    nf, df = est_cfg.n_fft_delay, cfg.subcarrier_spacing
    k = int(np.round(tau_r_hat * nf * df))
    x, _ = _refine_delay((Y_r @ u.conj())[:, None], k, nf, est_cfg.tol_delay)
    return float(_wrap_period((k - x) / (nf * df), 1 / df))


class AodDictionary:
    """Offline 2D-IFFT dictionary of the phase profiles weighted by the known AOA.

    Depends only on the profiles and the geometry, so it can be shared across
    trials that reuse the same profile set.
    """

    def __init__(self, profiles: PhaseProfileSet, cfg: ScenarioConfig, est_cfg: EstimatorConfig):
        ris = cfg.ris
        if ris.n_elements < 2:
            raise EstimationError("a single-element RIS has no aperture; AOD is unidentifiable")
        V = profiles.vectorized
        if len(profiles) < 2 or _all_parallel(V):
            raise EstimationError("phase profiles are all parallel; AOD is unidentifiable")
        theta = cfg.aoa
        a_r, a_c = row_col_vectors(theta, ris, cfg.wavelength)
        B = profiles.profiles * np.outer(a_r, a_c)[None]
        self.bins = (est_cfg.n_fft_rows, est_cfg.n_fft_cols)
        self.gamma_bar = np.fft.ifft2(B, s=self.bins, axes=(1, 2))
        self.energy = np.sum(np.abs(self.gamma_bar) ** 2, axis=0)
        self.Z = V * steering_vector(theta, ris, cfg.wavelength)
        self.q = element_positions(ris)
        self.ris = ris
        self.wavelength = cfg.wavelength

    def residual_map(self, y_phi: np.ndarray) -> np.ndarray:
        """``w[l, m] = ||y - h(eta) eta||^2`` for every dictionary column."""
        corr = np.tensordot(y_phi, self.gamma_bar.conj(), axes=(0, 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            fit = np.where(self.energy > 0, np.abs(corr) ** 2 / self.energy, 0.0)
        return np.sum(np.abs(y_phi) ** 2) - fit

    def response(self, angles: Angles) -> np.ndarray:
        return self.Z @ steering_vector(angles, self.ris, self.wavelength)


def _all_parallel(V: np.ndarray) -> bool:
    ref = V[0] / np.linalg.norm(V[0])
    cos = np.abs(V.conj() @ ref) / np.linalg.norm(V, axis=1)
    return bool(np.all(cos > 1 - 1e-12))


def _normalize_angles(az: float, el: float) -> Angles:
    el = float(np.mod(el, 2 * np.pi))
    if el > np.pi:
        el = 2 * np.pi - el
        az = az + np.pi
    return Angles(float(wrap_angle(az)), el)


def estimate_aod(Y_r, tau_r_hat: float, profiles: PhaseProfileSet, cfg: ScenarioConfig,
                 est_cfg: EstimatorConfig, dictionary: AodDictionary | None = None):
    """AOD from the RIS towards the UE. Returns ``(phi_hat, diagnostics)``."""
    Y_r = Y_r.samples if isinstance(Y_r, ReceivedSignal) else np.asarray(Y_r)
    N, T = Y_r.shape
    if len(profiles) != T:
        raise ValueError(f"expected {T} phase profiles, got {len(profiles)}")
    if dictionary is None:
        dictionary = AodDictionary(profiles, cfg, est_cfg)
    y_phi = delay_compensated_sum(Y_r, tau_r_hat, cfg.subcarrier_spacing)

    w = dictionary.residual_map(y_phi)
    nr, nc = dictionary.bins
    l, m = np.unravel_index(int(np.argmin(w)), w.shape)
    l_q = l + numopt.quadratic_peak(w[(l - 1) % nr, m], w[l, m], w[(l + 1) % nr, m])
    m_q = m + numopt.quadratic_peak(w[l, (m - 1) % nc], w[l, m], w[l, (m + 1) % nc])

    d, lam = cfg.ris.spacing, cfg.wavelength
    k1 = float(wrap_angle(-2 * np.pi * l_q / nr)) / d
    k3 = float(wrap_angle(-2 * np.pi * m_q / nc)) / d
    phi0, clamped = angles_from_wavenumber(k1, k3, lam)

    phi, ok = refine_aod(y_phi, phi0, dictionary, est_cfg)
    diag = {
        "l_peak": int(l), "m_peak": int(m), "l_interp": float(l_q), "m_interp": float(m_q),
        "phi_initial": phi0, "branch_clamped": clamped, "converged_phi": ok,
    }
    return phi, diag


def delay_compensated_sum(Y_r: np.ndarray, tau_r_hat: float, df: float) -> np.ndarray:
    """Sum over subcarriers after removing the reflected delay; one entry per symbol."""
    return (Y_r * delay_vector(-tau_r_hat, Y_r.shape[0], df)[:, None]).sum(axis=0)


def refine_aod(y_phi: np.ndarray, start: Angles, dictionary: AodDictionary,
               est_cfg: EstimatorConfig) -> tuple[Angles, bool]:
    """Quasi-Newton fit of ``u(psi)`` to ``y_phi`` with the best complex scale."""
    ris, lam = dictionary.ris, dictionary.wavelength
    y_energy = max(float(np.sum(np.abs(y_phi) ** 2)), 1e-300)
    Z, q = dictionary.Z, dictionary.q

    def f(x):
        u = Z @ steering_vector(Angles(x[0], x[1]), ris, lam)
        return 1.0 - abs(np.vdot(u, y_phi)) ** 2 / (np.vdot(u, u).real * y_energy)

    def grad(x):
        ang = Angles(x[0], x[1])
        a = steering_vector(ang, ris, lam)
        u = Z @ a
        c = np.vdot(u, y_phi)
        uu = np.vdot(u, u).real
        out = np.empty(2)
        for i, dk in enumerate(wavenumber_derivatives(ang, lam)):
            du = Z @ (a * (-1j * (q @ dk)))
            dc = np.vdot(du, y_phi)
            duu = 2 * np.vdot(u, du).real
            out[i] = -(2 * (c.conjugate() * dc).real * uu - abs(c) ** 2 * duu) / (uu**2 * y_energy)
        return out

    res = numopt.minimize_2d(f, start.as_array(), tol=est_cfg.tol_angle, grad=grad)
    return _normalize_angles(*res.x), res.converged


def closed_form_range(range_diff: float, e: np.ndarray, baseline: np.ndarray) -> float:
    """Distance along unit ray ``e`` whose path excess over the direct BS link is ``range_diff``.

    Solves ``kappa + |b| - |b - kappa e| = range_diff`` with ``b`` the BS offset.
    """
    D = np.linalg.norm(baseline)
    return float((D**2 - (D - range_diff) ** 2) / (2 * (D - range_diff + e @ baseline)))


def solve_position(tau_b_hat: float, tau_r_hat: float, phi_hat: Angles, cfg: ScenarioConfig,
                   est_cfg: EstimatorConfig | None = None, strict: bool = True):
    """UE position on the AOD ray and clock bias.

    Returns ``(p_hat, clock_bias_hat, diagnostics)``. A range difference with
    no intersection on the ray (non-positive, or past the asymptote of the
    path excess) or a range behind the RIS raises; with ``strict=False`` it is
    clamped to zero range and flagged in ``diagnostics["range_clamped"]``.
    """
    est_cfg = est_cfg or EstimatorConfig()
    c = SPEED_OF_LIGHT
    period = 1 / cfg.subcarrier_spacing
    p_b, p_r, R = cfg.bs_position, cfg.ris.origin, cfg.ris.rotation
    b = p_b - p_r
    D = np.linalg.norm(b)
    diff = (tau_r_hat - tau_b_hat + period / 2) % period - period / 2
    e = R.T @ direction(phi_hat)
    if diff <= 0:
        if strict:
            raise EstimationError("estimated reflected delay does not exceed the LOS delay")
        return _clamped_solution(p_r, p_b, tau_b_hat, period)
    delta = diff * c

    def resid(kappa):
        return kappa + D - np.linalg.norm(b - kappa * e) - delta

    def f(x):
        return resid(x) ** 2

    def grad(x):
        v = b - x * e
        return 2 * resid(x) * (1 + e @ v / np.linalg.norm(v))

    # the path excess along the ray tends to D + e.b; beyond that there is no intersection
    if delta >= D + e @ b:
        if strict:
            raise EstimationError("range difference exceeds its limit along the estimated ray")
        return _clamped_solution(p_r, p_b, tau_b_hat, period)
    # the closed-form intersection is the start; it avoids the flat branch beyond the BS
    start = closed_form_range(delta, e, b)
    res = numopt.minimize_scalar(f, start, tol=est_cfg.tol_range, grad=grad)
    kappa = float(res.x[0])
    if kappa < 0:
        if strict:
            raise EstimationError("range solution lies behind the RIS")
        return _clamped_solution(p_r, p_b, tau_b_hat, period)
    p_hat = p_r + kappa * e
    clock = float(np.mod(tau_b_hat - np.linalg.norm(p_hat - p_b) / c, period))
    return p_hat, clock, {
        "kappa": kappa, "converged_kappa": res.converged,
        "residual_m": float(resid(kappa)), "range_clamped": False,
    }


def _clamped_solution(p_r, p_b, tau_b_hat, period):
    clock = float(np.mod(tau_b_hat - np.linalg.norm(p_r - p_b) / SPEED_OF_LIGHT, period))
    return p_r.copy(), clock, {"kappa": 0.0, "converged_kappa": False, "residual_m": np.nan, "range_clamped": True}


def estimate(Y, cfg: ScenarioConfig, profiles: PhaseProfileSet, est_cfg: EstimatorConfig | None = None,
             dictionary: AodDictionary | None = None, strict: bool = True) -> EstimateReport:
    """Run all four stages on one observation.

    With ``est_cfg.cancellation_passes > 0`` the channel stages are repeated,
    each time re-estimating the LOS delay from the observation with the
    current reflected-path reconstruction subtracted, and re-fitting the AOD
    from the previous estimate. Zero passes is the plain single sweep.
    """
    est_cfg = est_cfg or EstimatorConfig()
    est_cfg.check(cfg)
    Y = Y.samples if isinstance(Y, ReceivedSignal) else np.asarray(Y)
    N = Y.shape[0]
    df = cfg.subcarrier_spacing
    if dictionary is None:
        dictionary = AodDictionary(profiles, cfg, est_cfg)

    tau_b, amp_b, _, d1 = estimate_tau_b(Y, cfg, est_cfg)
    tau_r, Y_r, d2 = estimate_tau_r(Y, tau_b, amp_b, cfg, est_cfg)
    phi, d3 = estimate_aod(Y_r, tau_r, profiles, cfg, est_cfg, dictionary)
    for _ in range(est_cfg.cancellation_passes):
        u = dictionary.response(phi)
        y_phi = delay_compensated_sum(Y_r, tau_r, df)
        amp_r = np.vdot(u, y_phi) / (N * np.vdot(u, u).real)
        reflected = amp_r * np.outer(delay_vector(tau_r, N, df), u)
        tau_b, amp_b, _, _ = estimate_tau_b(Y - reflected, cfg, est_cfg)
        tau_r, Y_r, _ = estimate_tau_r(Y, tau_b, amp_b, cfg, est_cfg)
        tau_r = refine_tau_r_coherent(Y_r, tau_r, u, cfg, est_cfg)
        phi, ok = refine_aod(delay_compensated_sum(Y_r, tau_r, df), phi, dictionary, est_cfg)
        d3["converged_phi"] = ok
    p_hat, clock, d4 = solve_position(tau_b, tau_r, phi, cfg, est_cfg, strict=strict)
    diagnostics = {**d1, **d2, **d3, **d4, "tau_order_violated": bool(tau_r < tau_b)}
    log.debug("estimate: %s", diagnostics)
    return EstimateReport(tau_b, tau_r, phi, amp_b / np.sqrt(cfg.pilot_energy), p_hat, clock, diagnostics)


def los_dominance_ratio(params: ChannelParams, cfg: ScenarioConfig, profiles: PhaseProfileSet) -> float:
    """How strongly the LOS path dominates the column sum used in stage 1.

    Ratio of the coherent LOS term to the reflected leakage; values well above
    one mean the stage-1 approximation holds.
    """
    N, T = cfg.n_subcarriers, cfg.n_symbols
    u = ris_response_sequence(params.phi, cfg.aoa, profiles, cfg.ris, cfg.wavelength)
    leak = abs(params.g_r) * abs(np.sum(u)) * np.sqrt(N)
    los = T * abs(params.g_b) * np.sqrt(N)
    return float(los / leak) if leak > 0 else np.inf
