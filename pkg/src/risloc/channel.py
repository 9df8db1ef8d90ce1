"""SISO RIS-aided OFDM downlink channel: scenario description and signal synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Angles, GeometryError, RisGeometry, aod_from_position, steering_vector, EPS_POS

SPEED_OF_LIGHT = 3e8


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment: waveform, noise, geometry and gain model.

    ``gain_model`` is ``"friis"`` (amplitudes from free-space loss with unit
    directivity, phases taken from ``gain_phase_b``/``gain_phase_r``) or
    ``"explicit"`` (``g_b``/``g_r`` used as given).
    """

    n_subcarriers: int
    n_symbols: int
    subcarrier_spacing: float
    pilot_energy: float
    noise_variance: float
    wavelength: float
    bs_position: np.ndarray
    ue_position: np.ndarray
    clock_bias: float
    ris: RisGeometry
    gain_model: str = "friis"
    g_b: complex = 0j
    g_r: complex = 0j
    gain_phase_b: float = 0.0
    gain_phase_r: float = 0.0

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("need at least one subcarrier and one symbol")
        if not self.subcarrier_spacing > 0:
            raise ValueError("subcarrier spacing must be positive")
        if not self.pilot_energy > 0:
            raise ValueError("pilot energy must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")
        if not 0 <= self.clock_bias < 1 / self.subcarrier_spacing:
            raise ValueError("clock bias must lie in [0, 1/subcarrier_spacing)")
        if self.gain_model not in ("friis", "explicit"):
            raise ValueError(f"unknown gain model {self.gain_model!r}")
        object.__setattr__(self, "bs_position", np.asarray(self.bs_position, dtype=float).reshape(3))
        object.__setattr__(self, "ue_position", np.asarray(self.ue_position, dtype=float).reshape(3))

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    @property
    def aoa(self) -> Angles:
        """Known angle from the RIS towards the BS."""
        return aod_from_position(self.bs_position, self.ris)


@dataclass(frozen=True)
class PhaseProfileSet:
    """RIS phase profiles, ``profiles[t]`` is the ``m_rows x m_cols`` matrix for symbol t."""

    profiles: np.ndarray
    vectorized: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.asarray(self.profiles, dtype=complex)
        if P.ndim != 3:
            raise ValueError("profiles must have shape (T, m_rows, m_cols)")
        if not np.allclose(np.abs(P), 1.0, atol=1e-12):
            raise ValueError("phase profiles must be unit modulus")
        object.__setattr__(self, "profiles", P)
        object.__setattr__(self, "vectorized", P.transpose(0, 2, 1).reshape(P.shape[0], -1))

    @classmethod
    def from_phases(cls, phases) -> "PhaseProfileSet":
        return cls(np.exp(1j * np.asarray(phases, dtype=float)))

    def __len__(self) -> int:
        return self.profiles.shape[0]


@dataclass(frozen=True)
class ChannelParams:
    tau_b: float
    tau_r: float
    phi: Angles
    g_b: complex
    g_r: complex

    def as_vector(self) -> np.ndarray:
        """Real 8-vector ``[tau_b, tau_r, az, el, Im g_b, Re g_b, Im g_r, Re g_r]``."""
        return np.array([
            self.tau_b, self.tau_r, self.phi.az, self.phi.el,
            self.g_b.imag, self.g_b.real, self.g_r.imag, self.g_r.real,
        ])

    @classmethod
    def from_vector(cls, v) -> "ChannelParams":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1], Angles(v[2], v[3]), complex(v[5], v[4]), complex(v[7], v[6]))


@dataclass
class ReceivedSignal:
    samples: np.ndarray
    noiseless: np.ndarray | None = None


def delay_vector(tau: float, n: int, subcarrier_spacing: float) -> np.ndarray:
    """``[exp(-j 2 pi tau k df)]`` for k = 0..n-1."""
    return np.exp(-2j * np.pi * tau * subcarrier_spacing * np.arange(n))


def friis_gains(cfg: ScenarioConfig) -> tuple[float, float]:
    """Amplitudes of the LOS and RIS-reflected paths (unit directivity everywhere)."""
    lam = cfg.wavelength
    d_b = np.linalg.norm(cfg.ue_position - cfg.bs_position)
    d_br = np.linalg.norm(cfg.bs_position - cfg.ris.origin)
    d_ru = np.linalg.norm(cfg.ue_position - cfg.ris.origin)
    return lam / (4 * np.pi * d_b), lam**2 / ((4 * np.pi) ** 2 * d_br * d_ru)


def derive_channel_params(cfg: ScenarioConfig) -> ChannelParams:
    p, p_b, p_r = cfg.ue_position, cfg.bs_position, cfg.ris.origin
    d_b = np.linalg.norm(p - p_b)
    d_ru = np.linalg.norm(p - p_r)
    if d_b < EPS_POS or d_ru < EPS_POS:
        raise GeometryError("UE coincides with the BS or the RIS")
    c = SPEED_OF_LIGHT
    tau_b = d_b / c + cfg.clock_bias
    tau_r = d_ru / c + np.linalg.norm(p_b - p_r) / c + cfg.clock_bias
    phi = aod_from_position(p, cfg.ris)
    if cfg.gain_model == "friis":
        amp_b, amp_r = friis_gains(cfg)
        g_b = amp_b * np.exp(1j * cfg.gain_phase_b)
        g_r = amp_r * np.exp(1j * cfg.gain_phase_r)
    else:
        g_b, g_r = cfg.g_b, cfg.g_r
    return ChannelParams(float(tau_b), float(tau_r), phi, complex(g_b), complex(g_r))


def ris_response_sequence(phi: Angles, theta: Angles, profiles: PhaseProfileSet,
                          ris: RisGeometry, wavelength: float) -> np.ndarray:
    """``u[t] = a(theta)^T diag(gamma_t) a(phi)`` for every profile."""
    if profiles.vectorized.shape[1] != ris.n_elements:
        raise ValueError("profile size does not match the RIS")
    a_phi = steering_vector(phi, ris, wavelength)
    a_theta = steering_vector(theta, ris, wavelength)
    return profiles.vectorized @ (a_theta * a_phi)


def noiseless_signal(params: ChannelParams, cfg: ScenarioConfig, profiles: PhaseProfileSet) -> np.ndarray:
    """Noise-free N x T observation for explicit channel parameters."""
    N, T = cfg.n_subcarriers, cfg.n_symbols
    if len(profiles) != T:
        raise ValueError(f"expected {T} phase profiles, got {len(profiles)}")
    sqrt_es = np.sqrt(cfg.pilot_energy)
    u = ris_response_sequence(params.phi, cfg.aoa, profiles, cfg.ris, cfg.wavelength)
    d_b = delay_vector(params.tau_b, N, cfg.subcarrier_spacing)
    d_r = delay_vector(params.tau_r, N, cfg.subcarrier_spacing)
    return params.g_b * sqrt_es * np.outer(d_b, np.ones(T)) + params.g_r * sqrt_es * np.outer(d_r, u)


def complex_noise(rng: np.random.Generator, n: int, t: int, variance: float) -> np.ndarray:
    """Circularly-symmetric Gaussian noise, drawn column by column."""
    z = rng.standard_normal((t, n, 2)) * np.sqrt(variance / 2)
    return (z[..., 0] + 1j * z[..., 1]).T


def synthesize(cfg: ScenarioConfig, profiles: PhaseProfileSet, rng_seed=None,
               params: ChannelParams | None = None) -> ReceivedSignal:
    """Noisy observation ``Y = E + noise`` for the scenario.

    ``params`` overrides the geometry-derived channel parameters.
    """
    if params is None:
        params = derive_channel_params(cfg)
    E = noiseless_signal(params, cfg, profiles)
    rng = np.random.default_rng(rng_seed)
    Y = E + complex_noise(rng, cfg.n_subcarriers, cfg.n_symbols, cfg.noise_variance)
    return ReceivedSignal(Y, E)


def random_profiles(n_symbols: int, ris: RisGeometry, rng_seed=None) -> PhaseProfileSet:
    """Independent uniform phases on [0, 2 pi) for every element and symbol."""
    if n_symbols < 1:
        raise ValueError("need at least one profile")
    rng = np.random.default_rng(rng_seed)
    return PhaseProfileSet.from_phases(rng.uniform(0, 2 * np.pi, (n_symbols, ris.m_rows, ris.m_cols)))
