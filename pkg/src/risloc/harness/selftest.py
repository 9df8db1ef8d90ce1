"""Finite-difference checks of the analytic derivatives, Jacobian and FIM chaining."""

from __future__ import annotations

import numpy as np

from ..channel import ChannelParams, ScenarioConfig, derive_channel_params, noiseless_signal, random_profiles
from ..fim import derivatives_E, fim_channel, jacobian
from ..geometry import RisGeometry


def small_scenario(rng: np.random.Generator) -> ScenarioConfig:
    """Random non-degenerate 16-subcarrier, 8-symbol, 4x4-RIS instance."""
    ris = RisGeometry(4, 4, 0.005)
    p_b = np.array([5.0, 5.0, 0.0]) + rng.uniform(-1, 1, 3)
    ue = np.array([rng.uniform(-8, 8), rng.uniform(0.5, 8), rng.uniform(-12, -3)])
    return ScenarioConfig(
        n_subcarriers=16, n_symbols=8, subcarrier_spacing=120e3, pilot_energy=1.0,
        noise_variance=1e-12, wavelength=0.01, bs_position=p_b, ue_position=ue,
        clock_bias=rng.uniform(0, 1 / 120e3), ris=ris, gain_model="explicit",
        g_b=complex(*rng.normal(size=2)) * 1e-4, g_r=complex(*rng.normal(size=2)) * 1e-6,
    )


def _fd_channel(cfg, profiles, params, i, step):
    v = params.as_vector()
    e = np.zeros(8)
    e[i] = step
    plus = noiseless_signal(ChannelParams.from_vector(v + e), cfg, profiles)
    minus = noiseless_signal(ChannelParams.from_vector(v - e), cfg, profiles)
    return (plus - minus) / (2 * step)


def _fd_step(i, params):
    # delays ~1e-8 s, so a 1e-9 relative step; gains ~1e-4..1e-6
    if i < 2:
        return 1e-9 * abs(params.as_vector()[i])
    if i < 4:
        return 1e-7
    return 1e-6 * max(abs(params.g_b), abs(params.g_r)) if i < 6 else 1e-6 * abs(params.g_r)


def derivative_errors(cfg, profiles) -> np.ndarray:
    """Max relative error of each analytic dE/d(eta) against central differences."""
    params = derive_channel_params(cfg)
    D = derivatives_E(params, cfg, profiles)
    errs = np.empty(8)
    for i in range(8):
        fd = _fd_channel(cfg, profiles, params, i, _fd_step(i, params))
        errs[i] = np.abs(fd - D[i]).max() / np.abs(D[i]).max()
    return errs


def _channel_vector_of(cfg: ScenarioConfig, x) -> np.ndarray:
    c = cfg.with_(ue_position=x[:3], clock_bias=0.0, g_b=complex(x[5], x[4]), g_r=complex(x[7], x[6]))
    v = derive_channel_params(c).as_vector()
    v[:2] += x[3]
    return v


def positional_vector(cfg: ScenarioConfig) -> np.ndarray:
    return np.r_[cfg.ue_position, cfg.clock_bias, cfg.g_b.imag, cfg.g_b.real, cfg.g_r.imag, cfg.g_r.real]


def jacobian_errors(cfg) -> np.ndarray:
    """Relative error of every Jacobian column against central differences."""
    J = jacobian(cfg)
    x = positional_vector(cfg)
    steps = np.r_[1e-6, 1e-6, 1e-6, 1e-12, 1e-9, 1e-9, 1e-9, 1e-9]
    errs = np.empty(8)
    for s in range(8):
        e = np.zeros(8)
        e[s] = steps[s]
        fd = (_channel_vector_of(cfg, x + e) - _channel_vector_of(cfg, x - e)) / (2 * steps[s])
        errs[s] = np.abs(fd - J[:, s]).max() / max(np.abs(J[:, s]).max(), 1e-300)
    return errs


def fd_positional_fim(cfg, profiles) -> np.ndarray:
    """FIM in the positional parameters from finite differences of E."""
    x = positional_vector(cfg)
    steps = np.r_[1e-6, 1e-6, 1e-6, 1e-15, np.full(4, 1e-6) * np.abs(x[4:]).max()]

    def E(z):
        return noiseless_signal(ChannelParams.from_vector(_channel_vector_of(cfg, z)), cfg, profiles)

    D = []
    for s in range(8):
        e = np.zeros(8)
        e[s] = steps[s]
        D.append(((E(x + e) - E(x - e)) / (2 * steps[s])).ravel())
    D = np.array(D)
    return 2 / cfg.noise_variance * (D @ D.conj().T).real


def chain_rule_error(cfg, profiles) -> float:
    params = derive_channel_params(cfg)
    J = jacobian(cfg)
    J_po = J.T @ fim_channel(params, cfg, profiles) @ J
    ref = fd_positional_fim(cfg, profiles)
    # relative to the geometric-mean scale of each entry's row/column
    scale = np.sqrt(np.outer(np.diag(ref), np.diag(ref)))
    return float(np.max(np.abs(J_po - ref) / scale))


def run(n_scenarios: int = 50, seed: int = 0, tol_derivative=1e-5, tol_chain=1e-4, echo=print) -> bool:
    rng = np.random.default_rng(seed)
    worst_d = worst_j = worst_c = 0.0
    for k in range(n_scenarios):
        cfg = small_scenario(rng)
        profiles = random_profiles(cfg.n_symbols, cfg.ris, rng)
        worst_d = max(worst_d, derivative_errors(cfg, profiles).max())
        worst_j = max(worst_j, jacobian_errors(cfg).max())
        if k < 5:
            worst_c = max(worst_c, chain_rule_error(cfg, profiles))
    checks = [
        ("signal derivatives vs finite differences", worst_d, tol_derivative),
        ("Jacobian vs finite differences", worst_j, tol_derivative),
        ("chained FIM vs finite-difference FIM", worst_c, tol_chain),
    ]
    ok = True
    for name, err, tol in checks:
        passed = err < tol
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'}  {name}: max rel err {err:.2e} (tol {tol:g})")
    return ok
