import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risloc.channel import (
    SPEED_OF_LIGHT, ChannelParams, PhaseProfileSet, ScenarioConfig, delay_vector, derive_channel_params,
    noiseless_signal, random_profiles, synthesize,
)
from risloc.estimator import (
    AodDictionary, EstimationError, EstimatorConfig, closed_form_range, estimate, estimate_aod, estimate_tau_b,
    estimate_tau_r, los_dominance_ratio, solve_position,
)
from risloc.geometry import Angles, RisGeometry, angles_from_wavenumber, direction, wrap_angle
from risloc.harness.config import ExperimentConfig

DF = 120e3
NF = 512
EST = EstimatorConfig(n_fft_delay=NF, n_fft_rows=64, n_fft_cols=64)
PERIOD = 1 / DF


def scenario(**kw):
    base = dict(
        n_subcarriers=64, n_symbols=16, subcarrier_spacing=DF, pilot_energy=1.0, noise_variance=0.0,
        wavelength=0.01, bs_position=[5.0, 5.0, 0.0], ue_position=[-3.0, 4.0, -10.0], clock_bias=1.3e-6,
        ris=RisGeometry(8, 8, 0.005), gain_model="explicit", g_b=1e-3 * np.exp(0.4j), g_r=2e-5 * np.exp(2.1j),
    )
    base.update(kw)
    return ScenarioConfig(**base)


def with_params(cfg, prm):
    return noiseless_signal(prm, cfg, random_profiles(cfg.n_symbols, cfg.ris, 0))


def test_tau_b_on_grid_exact():
    cfg = scenario()
    prm = derive_channel_params(cfg)
    prm = ChannelParams(7 / (NF * DF), prm.tau_r, prm.phi, prm.g_b, 0j)
    tau, amp, _, diag = estimate_tau_b(with_params(cfg, prm), cfg, EST)
    assert diag["k_b"] == 7
    assert abs(tau - 7 / (NF * DF)) < 1e-12 / (NF * DF)
    assert amp == pytest.approx(prm.g_b, rel=1e-9)


@given(st.floats(0.0, 0.999 * PERIOD))
@settings(max_examples=20, deadline=None)
def test_tau_b_off_grid(tau_b):
    cfg = scenario()
    prm = derive_channel_params(cfg)
    prm = ChannelParams(tau_b, prm.tau_r, prm.phi, prm.g_b, 0j)
    tau, _, _, _ = estimate_tau_b(with_params(cfg, prm), cfg, EST)
    err = (tau - tau_b + PERIOD / 2) % PERIOD - PERIOD / 2
    assert abs(err) < 1e-6 / (NF * DF)


def test_tau_b_needs_two_subcarriers():
    cfg = scenario(n_subcarriers=1)
    with pytest.raises(EstimationError):
        estimate_tau_b(np.ones((1, cfg.n_symbols)), cfg, EstimatorConfig(n_fft_delay=NF))


def test_tau_r_on_grid_with_exact_los():
    cfg = scenario()
    prm = derive_channel_params(cfg)
    prm = ChannelParams(prm.tau_b, 40 / (NF * DF), prm.phi, prm.g_b, prm.g_r)
    Y = with_params(cfg, prm)
    # delays chosen freely, so the geometric gate is off
    ungated = EstimatorConfig(n_fft_delay=NF, n_fft_rows=64, n_fft_cols=64, gate_excess_delay=False)
    tau, Y_r, diag = estimate_tau_r(Y, prm.tau_b, prm.g_b, cfg, ungated)
    assert diag["k_r"] == 40
    assert abs(tau - 40 / (NF * DF)) < 1e-12 / (NF * DF)


def test_tau_r_off_grid_with_exact_los():
    cfg = scenario()
    prm = derive_channel_params(cfg)
    tau, _, _ = estimate_tau_r(with_params(cfg, prm), prm.tau_b, prm.g_b, cfg, EST)
    assert abs(tau - prm.tau_r) < 1e-5 / (NF * DF)


def test_excess_delay_gate_rejects_infeasible_peak():
    cfg = scenario()
    prm = derive_channel_params(cfg)
    # a strong spurious path far outside the feasible excess delay
    spur = 50 * abs(prm.g_r) * np.outer(delay_vector(prm.tau_b + 0.4 * PERIOD, 64, DF), np.ones(16))
    Y = with_params(cfg, prm) + spur
    ungated = EstimatorConfig(n_fft_delay=NF, n_fft_rows=64, n_fft_cols=64, gate_excess_delay=False)
    assert abs(estimate_tau_r(Y, prm.tau_b, prm.g_b, cfg, ungated)[0] - prm.tau_r) > 0.1 * PERIOD
    tau, _, _ = estimate_tau_r(Y, prm.tau_b, prm.g_b, cfg, EST)
    assert abs(tau - prm.tau_r) < 0.5 / (64 * DF)


def test_aod_single_element_errors():
    cfg = scenario(ris=RisGeometry(1, 1, 0.005))
    prof = random_profiles(cfg.n_symbols, cfg.ris, 0)
    with pytest.raises(EstimationError):
        estimate_aod(np.zeros((64, 16), complex), 0.0, prof, cfg, EST)


def test_aod_parallel_profiles_error():
    cfg = scenario()
    prof = random_profiles(1, cfg.ris, 0)
    same = PhaseProfileSet(np.repeat(prof.profiles, cfg.n_symbols, axis=0))
    with pytest.raises(EstimationError):
        AodDictionary(same, cfg, EST)


def test_aod_on_grid_recovery():
    est = EstimatorConfig(n_fft_delay=NF, n_fft_rows=256, n_fft_cols=256)
    ris = RisGeometry(16, 16, 0.005)
    l, m = 40, 230
    k1 = float(wrap_angle(-2 * np.pi * l / 256)) / 0.005
    k3 = float(wrap_angle(-2 * np.pi * m / 256)) / 0.005
    phi, clamped = angles_from_wavenumber(k1, k3, 0.01)
    assert not clamped
    cfg = scenario(ris=ris, n_symbols=64, ue_position=8 * direction(phi), g_b=0j, clock_bias=0.0)
    prm = derive_channel_params(cfg)
    prof = random_profiles(64, ris, 1)
    phi_hat, diag = estimate_aod(noiseless_signal(prm, cfg, prof), prm.tau_r, prof, cfg, est)
    assert (diag["l_peak"], diag["m_peak"]) == (l, m)
    on_grid, _ = angles_from_wavenumber(
        float(wrap_angle(-2 * np.pi * diag["l_peak"] / 256)) / 0.005,
        float(wrap_angle(-2 * np.pi * diag["m_peak"] / 256)) / 0.005, 0.01)
    assert abs(on_grid.az - phi.az) < 1e-10 and abs(on_grid.el - phi.el) < 1e-10
    assert abs(wrap_angle(phi_hat.az - phi.az)) < 1e-8
    assert abs(phi_hat.el - phi.el) < 1e-8


def test_position_round_trip_from_exact_parameters():
    cfg = scenario()
    prm = derive_channel_params(cfg)
    p_hat, clock, diag = solve_position(prm.tau_b, prm.tau_r, prm.phi, cfg)
    np.testing.assert_allclose(p_hat, cfg.ue_position, atol=1e-6)
    assert abs(clock - cfg.clock_bias) < 1e-14
    assert diag["kappa"] == pytest.approx(np.linalg.norm(cfg.ue_position), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(-15, 15), st.floats(0.5, 15), st.floats(-15, 5), st.floats(0, 0.99 * PERIOD))
def test_position_round_trip_property(x, y, z, clock):
    p = np.array([x, y, z])
    if np.linalg.norm(p - [5, 5, 0]) < 0.5 or np.hypot(x, y) < 0.5:
        return
    cfg = scenario(ue_position=p, clock_bias=clock)
    prm = derive_channel_params(cfg)
    cos = p @ [5, 5, 0] / (np.linalg.norm(p) * np.sqrt(50))
    if cos > np.cos(0.05):  # ray through the BS: range unobservable beyond it
        return
    p_hat, _, _ = solve_position(prm.tau_b, prm.tau_r, prm.phi, cfg)
    np.testing.assert_allclose(p_hat, p, atol=1e-5)


def test_closed_form_range_matches_geometry():
    b = np.array([5.0, 5.0, 0.0])
    p = np.array([-3.0, 4.0, -10.0])
    e = p / np.linalg.norm(p)
    delta = np.linalg.norm(p) + np.linalg.norm(b) - np.linalg.norm(p - b)
    assert closed_form_range(delta, e, b) == pytest.approx(np.linalg.norm(p), rel=1e-12)


def test_position_rejects_reversed_delays():
    cfg = scenario()
    prm = derive_channel_params(cfg)
    with pytest.raises(EstimationError):
        solve_position(prm.tau_r, prm.tau_b, prm.phi, cfg)
    p_hat, _, diag = solve_position(prm.tau_r, prm.tau_b, prm.phi, cfg, strict=False)
    assert diag["range_clamped"]
    np.testing.assert_array_equal(p_hat, cfg.ris.origin)


def test_noiseless_end_to_end_small():
    cfg = scenario(n_subcarriers=128, n_symbols=32, ris=RisGeometry(8, 8, 0.005))
    prof = random_profiles(cfg.n_symbols, cfg.ris, 3)
    rep = estimate(synthesize(cfg, prof, 0), cfg, prof, EST)
    assert np.linalg.norm(rep.p_hat - cfg.ue_position) < 1e-3
    assert abs(rep.clock_bias_hat - cfg.clock_bias) < 1e-11
    assert not rep.diagnostics["tau_order_violated"]


def test_plain_single_sweep_is_available():
    cfg = scenario(n_subcarriers=128, n_symbols=32)
    prof = random_profiles(cfg.n_symbols, cfg.ris, 3)
    est = EstimatorConfig(n_fft_delay=NF, n_fft_rows=64, n_fft_cols=64, cancellation_passes=0)
    rep = estimate(synthesize(cfg, prof, 0), cfg, prof, est)
    assert np.linalg.norm(rep.p_hat - cfg.ue_position) < 1.0


def _desk_noiseless(r, est):
    exp = ExperimentConfig.default()
    cfg = exp.scenario(exp.ue_position(r), noise_variance=0.0).with_(clock_bias=3e-6, gain_phase_r=1.0)
    prof = random_profiles(cfg.n_symbols, cfg.ris, 4)
    rep = estimate(synthesize(cfg, prof, 0), cfg, prof, est)
    return np.linalg.norm(rep.p_hat - cfg.ue_position)


@pytest.mark.parametrize("r", [3.0, 12.0])
def test_finer_grids_do_not_hurt(r):
    coarse = _desk_noiseless(r, EstimatorConfig())
    fine = _desk_noiseless(r, EstimatorConfig(n_fft_delay=8192, n_fft_rows=512, n_fft_cols=512))
    assert fine <= max(coarse, 1e-6)


def test_los_dominates_on_table_geometry():
    exp = ExperimentConfig.default(full=True)
    for r in exp.distance_points()[::5]:
        cfg = exp.scenario(exp.ue_position(r))
        prof = random_profiles(cfg.n_symbols, cfg.ris, 0)
        assert los_dominance_ratio(derive_channel_params(cfg), cfg, prof) > 10


def test_estimator_config_checks_grid_sizes():
    cfg = scenario()
    with pytest.raises(ValueError):
        EstimatorConfig(n_fft_delay=16).check(cfg)
    with pytest.raises(ValueError):
        EstimatorConfig(n_fft_rows=4).check(cfg)


def test_gain_estimate_removes_pilot_energy():
    cfg = scenario(pilot_energy=4.0, n_subcarriers=128, n_symbols=32)
    prof = random_profiles(cfg.n_symbols, cfg.ris, 3)
    rep = estimate(synthesize(cfg, prof, 0), cfg, prof, EST)
    assert rep.g_b_hat == pytest.approx(cfg.g_b, rel=1e-3)
    assert rep.tau_b_hat == pytest.approx(derive_channel_params(cfg).tau_b, abs=1e-12)
    assert isinstance(rep.phi_hat, Angles)
    assert SPEED_OF_LIGHT * abs(rep.tau_r_hat - derive_channel_params(cfg).tau_r) < 1e-3
