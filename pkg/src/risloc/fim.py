"""Fisher information and Cramer-Rao bounds for RIS-aided localization.

Parameter orderings (fixed, gains imaginary part first):

* channel:    ``[tau_b, tau_r, phi_az, phi_el, Im g_b, Re g_b, Im g_r, Re g_r]``
* positional: ``[p_x, p_y, p_z, clock_bias, Im g_b, Re g_b, Im g_r, Re g_r]``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import (
    SPEED_OF_LIGHT, ChannelParams, PhaseProfileSet, ScenarioConfig,
    delay_vector, derive_channel_params,
)
from .geometry import EPS_POS, GeometryError, steering_vector, steering_vector_derivatives

CHANNEL_PARAM_NAMES = ("tau_b", "tau_r", "phi_az", "phi_el", "g_b_imag", "g_b_real", "g_r_imag", "g_r_real")
POSITIONAL_PARAM_NAMES = ("p_x", "p_y", "p_z", "clock_bias", "g_b_imag", "g_b_real", "g_r_imag", "g_r_real")

MAX_CONDITION = 1e12


class SingularFimError(np.linalg.LinAlgError):
    """The Fisher information is singular or too ill-conditioned to invert."""

    def __init__(self, message, condition=np.inf):
        super().__init__(f"{message} (condition number {condition:.3g})")
        self.condition = condition


@dataclass(frozen=True)
class CrbReport:
    peb: float
    ceb: float
    crb_tau_b: float
    crb_tau_r: float
    crb_phi_az: float
    crb_phi_el: float
    fim_po: np.ndarray
    condition: float

    @property
    def ceb_m(self) -> float:
        return self.ceb * SPEED_OF_LIGHT

    @property
    def crb_tau_b_m(self) -> float:
        return self.crb_tau_b * SPEED_OF_LIGHT

    @property
    def crb_tau_r_m(self) -> float:
        return self.crb_tau_r * SPEED_OF_LIGHT


def _rank_one_factors(params: ChannelParams, cfg: ScenarioConfig, profiles: PhaseProfileSet):
    """Each derivative of E is an outer product ``x_i y_i^T``; return X (N x 8) and Y (T x 8)."""
    N, T = cfg.n_subcarriers, cfg.n_symbols
    if len(profiles) != T:
        raise ValueError(f"expected {T} phase profiles, got {len(profiles)}")
    sqrt_es = np.sqrt(cfg.pilot_energy)
    n = np.arange(N)
    d_b = delay_vector(params.tau_b, N, cfg.subcarrier_spacing)
    d_r = delay_vector(params.tau_r, N, cfg.subcarrier_spacing)
    ramp = -2j * np.pi * n * cfg.subcarrier_spacing

    a_theta = steering_vector(cfg.aoa, cfg.ris, cfg.wavelength)
    a_phi, da_az, da_el = steering_vector_derivatives(params.phi, cfg.ris, cfg.wavelength)
    Z = profiles.vectorized * a_theta  # rows are z_t
    u = Z @ a_phi
    ones = np.ones(T, dtype=complex)

    X = np.column_stack([
        ramp * params.g_b * sqrt_es * d_b,
        ramp * params.g_r * sqrt_es * d_r,
        params.g_r * sqrt_es * d_r,
        params.g_r * sqrt_es * d_r,
        1j * sqrt_es * d_b,
        sqrt_es * d_b,
        1j * sqrt_es * d_r,
        sqrt_es * d_r,
    ])
    Y = np.column_stack([ones, u, Z @ da_az, Z @ da_el, ones, ones, u, u])
    return X, Y


def derivatives_E(params: ChannelParams, cfg: ScenarioConfig, profiles: PhaseProfileSet) -> np.ndarray:
    """Analytic derivatives of the noiseless signal, shape ``(8, N, T)``."""
    X, Y = _rank_one_factors(params, cfg, profiles)
    return np.einsum("ni,ti->int", X, Y)


def fim_channel(params: ChannelParams, cfg: ScenarioConfig, profiles: PhaseProfileSet) -> np.ndarray:
    """8x8 Fisher information of the channel parameters."""
    if cfg.noise_variance <= 0:
        raise SingularFimError("noise variance must be positive for a finite bound", np.nan)
    X, Y = _rank_one_factors(params, cfg, profiles)
    # sum_{n,t} dE_i conj(dE_j) factorizes into the subcarrier and symbol sums
    G = (X.T @ X.conj()) * (Y.T @ Y.conj())
    J = 2.0 / cfg.noise_variance * G.real
    return (J + J.T) / 2


def jacobian(cfg: ScenarioConfig) -> np.ndarray:
    """8x8 Jacobian of the channel parameters w.r.t. the positional parameters."""
    p, p_b, p_r = cfg.ue_position, cfg.bs_position, cfg.ris.origin
    R = cfg.ris.rotation
    c = SPEED_OF_LIGHT
    d_b = np.linalg.norm(p - p_b)
    d_r = np.linalg.norm(p - p_r)
    if d_b < EPS_POS or d_r < EPS_POS:
        raise GeometryError("UE coincides with the BS or the RIS")
    s = R @ (p - p_r)
    rho2 = s[0] ** 2 + s[1] ** 2
    if np.sqrt(rho2) < EPS_POS:
        raise GeometryError("UE on the RIS third axis: elevation gradient is singular")

    J = np.zeros((8, 8))
    J[0, :3] = (p - p_b) / (c * d_b)
    J[1, :3] = (p - p_r) / (c * d_r)
    J[0, 3] = J[1, 3] = 1.0
    J[2, :3] = (-s[1] * R[0] + s[0] * R[1]) / rho2
    J[3, :3] = (-d_r**2 * R[2] + (p - p_r) * s[2]) / (d_r**2 * np.sqrt(rho2))
    J[4:, 4:] = np.eye(4)
    return J


def _inverse_with_condition(F: np.ndarray, what: str) -> tuple[np.ndarray, float]:
    """Invert a symmetric PSD information matrix after diagonal equilibration."""
    diag = np.diag(F)
    if np.any(diag <= 0):
        names = ", ".join(str(i) for i in np.flatnonzero(diag <= 0))
        raise SingularFimError(f"{what}: no information on parameter(s) {names}")
    scale = 1 / np.sqrt(diag)
    Fs = F * np.outer(scale, scale)
    eig = np.linalg.eigvalsh(Fs)
    condition = np.inf if eig[0] <= 0 else eig[-1] / eig[0]
    if condition > MAX_CONDITION:
        raise SingularFimError(f"{what} is singular", condition)
    inv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Fs), np.eye(len(F)))
    return inv * np.outer(scale, scale), float(condition)


def fim_positional(cfg: ScenarioConfig, profiles: PhaseProfileSet, params: ChannelParams | None = None):
    if params is None:
        params = derive_channel_params(cfg)
    J_ch = fim_channel(params, cfg, profiles)
    J = jacobian(cfg)
    return J.T @ J_ch @ J, J_ch


def crb(cfg: ScenarioConfig, profiles: PhaseProfileSet) -> CrbReport:
    """Position, clock-bias and channel-parameter error bounds for one scenario.

    The positional parameters (UE position, clock bias, gains) are those
    carried by ``cfg``.
    """
    params = derive_channel_params(cfg)
    J_po, J_ch = fim_positional(cfg, profiles, params)
    inv_po, cond = _inverse_with_condition(J_po, "positional FIM")
    inv_ch, _ = _inverse_with_condition(J_ch, "channel FIM")
    return CrbReport(
        peb=float(np.sqrt(np.trace(inv_po[:3, :3]))),
        ceb=float(np.sqrt(inv_po[3, 3])),
        crb_tau_b=float(np.sqrt(inv_ch[0, 0])),
        crb_tau_r=float(np.sqrt(inv_ch[1, 1])),
        crb_phi_az=float(np.sqrt(inv_ch[2, 2])),
        crb_phi_el=float(np.sqrt(inv_ch[3, 3])),
        fim_po=J_po,
        condition=cond,
    )
