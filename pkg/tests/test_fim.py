import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risloc.channel import SPEED_OF_LIGHT, ScenarioConfig, derive_channel_params, random_profiles
from risloc.fim import SingularFimError, crb, derivatives_E, fim_channel, jacobian
from risloc.geometry import GeometryError, RisGeometry
from risloc.harness import selftest
from risloc.harness.config import ExperimentConfig


def small(seed=0):
    rng = np.random.default_rng(seed)
    cfg = selftest.small_scenario(rng)
    return cfg, random_profiles(cfg.n_symbols, cfg.ris, rng)


def test_gain_derivatives_are_delay_vectors():
    cfg, prof = small(1)
    prm = derive_channel_params(cfg)
    D = derivatives_E(prm, cfg, prof)
    n = np.arange(cfg.n_subcarriers)
    col = np.sqrt(cfg.pilot_energy) * np.exp(-2j * np.pi * n * prm.tau_b * cfg.subcarrier_spacing)
    for t in range(cfg.n_symbols):
        np.testing.assert_allclose(D[5][:, t], col, rtol=1e-13)
        np.testing.assert_allclose(D[4][:, t], 1j * col, rtol=1e-13)


def test_delay_derivative_vanishes_at_dc():
    cfg, prof = small(2)
    D = derivatives_E(derive_channel_params(cfg), cfg, prof)
    assert np.all(D[0][0] == 0)
    assert np.all(D[1][0] == 0)


@pytest.mark.parametrize("seed", range(5))
def test_derivatives_finite_difference(seed):
    cfg, prof = small(seed)
    assert selftest.derivative_errors(cfg, prof).max() < 1e-6


def test_zero_reflection_kills_reflected_information():
    cfg, prof = small(3)
    cfg = cfg.with_(g_r=0j)
    F = fim_channel(derive_channel_params(cfg), cfg, prof)
    for i in (1, 2, 3):
        assert np.all(F[i] == 0) and np.all(F[:, i] == 0)
    # gain derivatives do not depend on g_r, so the gain block keeps its information
    assert np.all(np.diag(F)[[0, 4, 5, 6, 7]] > 0)


def test_noise_scaling_is_exact():
    cfg, prof = small(4)
    prm = derive_channel_params(cfg)
    F1 = fim_channel(prm, cfg, prof)
    F4 = fim_channel(prm, cfg.with_(noise_variance=4 * cfg.noise_variance), prof)
    np.testing.assert_allclose(F4, F1 / 4, rtol=1e-14)


def test_fim_matches_brute_force_finite_differences():
    cfg, prof = small(5)
    prm = derive_channel_params(cfg)
    D = []
    for i in range(8):
        fd = selftest._fd_channel(cfg, prof, prm, i, selftest._fd_step(i, prm))
        D.append(fd.ravel())
    D = np.array(D)
    ref = 2 / cfg.noise_variance * (D @ D.conj().T).real
    F = fim_channel(prm, cfg, prof)
    scale = np.sqrt(np.outer(np.diag(ref), np.diag(ref)))
    assert np.max(np.abs(F - ref) / scale) < 1e-5


def test_fim_requires_noise():
    cfg, prof = small(6)
    with pytest.raises(SingularFimError):
        fim_channel(derive_channel_params(cfg), cfg.with_(noise_variance=0.0), prof)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fim_is_psd(seed):
    cfg, prof = small(seed)
    F = fim_channel(derive_channel_params(cfg), cfg, prof)
    eig = np.linalg.eigvalsh(F)
    assert eig[0] >= -1e-9 * np.linalg.norm(F, 2)


def test_jacobian_unit_direction():
    cfg = ScenarioConfig(
        n_subcarriers=4, n_symbols=2, subcarrier_spacing=120e3, pilot_energy=1.0, noise_variance=1.0,
        wavelength=0.01, bs_position=[0, 0, 0], ue_position=[1, 0, 0], clock_bias=0.0,
        ris=RisGeometry(2, 2, 0.005, origin=[0, 5, 1]),
    )
    J = jacobian(cfg)
    np.testing.assert_allclose(J[0, :3], [1 / SPEED_OF_LIGHT, 0, 0], atol=1e-24)


def test_jacobian_clock_column():
    cfg, _ = small(7)
    J = jacobian(cfg)
    assert J[0, 3] == 1 and J[1, 3] == 1
    assert J[2, 3] == 0 and J[3, 3] == 0
    np.testing.assert_array_equal(J[4:, 4:], np.eye(4))


@pytest.mark.parametrize("seed", range(5))
def test_jacobian_finite_difference(seed):
    cfg, _ = small(seed)
    assert selftest.jacobian_errors(cfg).max() < 1e-6


def test_jacobian_on_axis_raises():
    cfg, _ = small(8)
    with pytest.raises(GeometryError):
        jacobian(cfg.with_(ue_position=np.array([0.0, 0.0, -7.0])))


@pytest.mark.parametrize("seed", range(3))
def test_chain_rule_against_direct_fim(seed):
    cfg, prof = small(seed)
    assert selftest.chain_rule_error(cfg, prof) < 1e-5


@given(st.floats(1.01, 1e3))
@settings(max_examples=20, deadline=None)
def test_peb_scales_with_root_noise(c):
    cfg, prof = small(9)
    a = crb(cfg, prof)
    b = crb(cfg.with_(noise_variance=c * cfg.noise_variance), prof)
    assert b.peb / a.peb == pytest.approx(np.sqrt(c), rel=1e-9)
    assert b.ceb / a.ceb == pytest.approx(np.sqrt(c), rel=1e-9)


def test_single_symbol_is_singular():
    cfg, _ = small(10)
    cfg = cfg.with_(n_symbols=1)
    with pytest.raises(SingularFimError) as exc:
        crb(cfg, random_profiles(1, cfg.ris, 0))
    assert exc.value.condition > 1e12


def test_single_subcarrier_is_singular():
    cfg, prof = small(11)
    with pytest.raises(SingularFimError):
        crb(cfg.with_(n_subcarriers=1), prof)


def test_single_element_ris_is_singular():
    cfg, _ = small(12)
    cfg = cfg.with_(ris=RisGeometry(1, 1, 0.005))
    with pytest.raises(SingularFimError):
        crb(cfg, random_profiles(cfg.n_symbols, cfg.ris, 0))


def _first_point_bounds(draws=5):
    exp = ExperimentConfig.default(full=True)
    reps = []
    for k in range(draws):
        rng = np.random.default_rng(k)
        base = exp.scenario(exp.ue_position(1.0))
        prof = random_profiles(base.n_symbols, base.ris, rng)
        reps.append(crb(base.with_(gain_phase_b=rng.uniform(0, 2 * np.pi), gain_phase_r=rng.uniform(0, 2 * np.pi)), prof))
    return reps


def test_full_scale_first_point_bounds():
    reps = _first_point_bounds()
    peb = np.median([r.peb for r in reps])
    tau_b = np.median([r.crb_tau_b_m for r in reps])
    # reference values at r = 1: PEB 0.0851 m, c * CRB(tau_b) 5.44e-5 m
    assert peb == pytest.approx(0.0851, rel=0.25)
    assert tau_b == pytest.approx(5.44e-5, rel=0.05)
