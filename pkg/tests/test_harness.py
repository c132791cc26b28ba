import numpy as np
import pytest

from cpsattack import harness as hn
from cpsattack import synthesis as syn
from cpsattack.pipeline import make_detector


def small_objective(model, N, seed=0, alpha=1.0):
    rng = np.random.default_rng(seed)
    return syn.constant_objective(np.eye(model.n), np.eye(model.p),
                                  rng.normal(size=model.n), N, alpha=alpha)


def test_child_stream_reproducible_and_independent():
    a = hn.child_stream(123, 4).standard_normal(8)
    b = hn.child_stream(123, 4).standard_normal(8)
    c = hn.child_stream(123, 5).standard_normal(8)
    d = hn.child_stream(124, 4).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_simulation_config_validation():
    with pytest.raises(ValueError):
        hn.SimulationConfig(burn_in=-1)
    with pytest.raises(ValueError):
        hn.SimulationConfig(horizon=-2)
    with pytest.raises(ValueError):
        hn.SimulationConfig(runs=0)


def test_run_paired_reproducible(osc_loop):
    model, fg, cg, _ = osc_loop
    cfg = hn.SimulationConfig(burn_in=20, horizon=30, master_seed=9)
    t1 = hn.run_paired(model, fg, cg, None, cfg, run_index=2)
    t2 = hn.run_paired(model, fg, cg, None, cfg, run_index=2)
    t3 = hn.run_paired(model, fg, cg, None, cfg, run_index=3)
    assert np.array_equal(t1.x, t2.x)
    assert np.array_equal(t1.g_sys, t2.g_sys)
    assert not np.array_equal(t1.x, t3.x)


def test_no_attack_twins_coincide(osc_loop):
    model, fg, cg, _ = osc_loop
    cfg = hn.SimulationConfig(burn_in=10, horizon=40, master_seed=1)
    traj = hn.run_paired(model, fg, cg, None, cfg)
    assert not traj.e.any()
    assert np.array_equal(traj.x, traj.x_nom)
    assert np.array_equal(traj.nu_sys, traj.nu_nom)
    assert np.array_equal(traj.g_sys, traj.g_nom)
    assert np.max(traj.nu_err) == 0.0


def test_twins_share_path_before_attack_starts(carts_loop):
    model, fg, cg, aug = carts_loop
    N = 25
    obj = small_objective(model, N, seed=1)
    policy, _ = syn.synthesize(aug, obj)
    cfg = hn.SimulationConfig(burn_in=15, horizon=N, master_seed=2)
    traj = hn.run_paired(model, fg, cg, policy, cfg, obj=obj)
    pre = traj.t < 0
    assert np.array_equal(traj.x[pre], traj.x_nom[pre])
    assert not traj.e[pre].any()
    assert traj.e[~pre].any()  # the attack actually fires in the window
    assert np.max(traj.nu_err) <= 1e-9  # stealth identity, whole run


def test_time_axis_and_attack_slice(osc_loop):
    model, fg, cg, _ = osc_loop
    cfg = hn.SimulationConfig(burn_in=7, horizon=5, master_seed=0)
    traj = hn.run_paired(model, fg, cg, None, cfg)
    assert traj.t[0] == -7
    assert traj.t[-1] == 5
    assert len(traj.t) == 13
    sl = traj.attack_slice
    assert traj.t[sl][0] == 0
    assert len(traj.t[sl]) == 6


def test_alarm_flags_consistent(osc_loop):
    model, fg, cg, _ = osc_loop
    det = make_detector(model.p, false_alarm_prob=0.2)
    cfg = hn.SimulationConfig(burn_in=10, horizon=60, master_seed=3)
    traj = hn.run_paired(model, fg, cg, None, cfg, detector=det)
    assert traj.threshold == det.threshold
    assert np.array_equal(traj.alarm_sys, traj.g_sys > det.threshold)
    rep = hn.alarm_report(traj, det)
    sl = traj.attack_slice
    assert rep.window == 61
    assert rep.attacked_rate == pytest.approx(np.mean(traj.alarm_sys[sl]))
    assert rep.nominal_rate == pytest.approx(np.mean(traj.alarm_nom[sl]))


def test_policy_shorter_than_horizon_rejected(osc_loop):
    model, fg, cg, aug = osc_loop
    obj = small_objective(model, N=5)
    policy, _ = syn.synthesize(aug, obj)
    cfg = hn.SimulationConfig(burn_in=5, horizon=10)
    with pytest.raises(ValueError, match="horizon"):
        hn.run_paired(model, fg, cg, policy, cfg, obj=obj)


def test_policy_without_objective_rejected(osc_loop):
    model, fg, cg, aug = osc_loop
    obj = small_objective(model, N=10)
    policy, _ = syn.synthesize(aug, obj)
    cfg = hn.SimulationConfig(burn_in=5, horizon=10)
    with pytest.raises(ValueError, match="objective"):
        hn.run_paired(model, fg, cg, policy, cfg)


def test_monte_carlo_deterministic_and_chunk_insensitive(osc_loop):
    model, fg, cg, aug = osc_loop
    obj = small_objective(model, N=8, seed=4)
    policy, _ = syn.synthesize(aug, obj)
    cfg = hn.SimulationConfig(burn_in=30, horizon=8, master_seed=5, runs=25)
    a = hn.monte_carlo_costs(model, fg, cg, policy, obj, cfg, chunk=3)
    a2 = hn.monte_carlo_costs(model, fg, cg, policy, obj, cfg, chunk=3)
    # repeating the exact call is bit-identical
    assert np.array_equal(a.control_samples, a2.control_samples)
    assert a.mean_detection == a2.mean_detection
    # regrouping runs leaves the noise paths untouched; only the rounding of
    # the batched linear algebra may move, far below statistical resolution
    b = hn.monte_carlo_costs(model, fg, cg, policy, obj, cfg, chunk=25)
    c = hn.monte_carlo_costs(model, fg, cg, policy, obj, cfg, chunk=7)
    assert np.allclose(a.control_samples, b.control_samples, rtol=1e-10)
    assert np.allclose(a.detection_samples, b.detection_samples, rtol=1e-10)
    assert np.allclose(a.control_samples, c.control_samples, rtol=1e-10)
    assert a.mean_control == pytest.approx(b.mean_control, rel=1e-12)
    assert a.stderr_detection == pytest.approx(b.stderr_detection, rel=1e-9)


def test_cost_samples_match_recorded_trajectory(osc_loop):
    """The vectorised cost accumulation must equal a sum computed by hand
    from the recorded per-step states and residuals."""
    model, fg, cg, aug = osc_loop
    obj = small_objective(model, N=12, seed=6)
    policy, _ = syn.synthesize(aug, obj)
    cfg = hn.SimulationConfig(burn_in=25, horizon=12, master_seed=7, runs=1)
    emp = hn.monte_carlo_costs(model, fg, cg, policy, obj, cfg)
    traj = hn.run_paired(model, fg, cg, policy, cfg, obj=obj)
    sl = traj.attack_slice
    J_c = 0.0
    J_d = 0.0
    for k, t in enumerate(range(0, obj.N + 1)):
        dx = traj.x[sl][k] - obj.x_star
        J_c += dx @ obj.Q[t] @ dx
        nu = traj.nu_sys[sl][k]
        J_d += nu @ obj.R[t] @ nu
    assert emp.control_samples[0] == pytest.approx(J_c, rel=1e-10)
    assert emp.detection_samples[0] == pytest.approx(J_d, rel=1e-10)


def test_stderr_definition_and_scaling(osc_loop):
    model, fg, cg, aug = osc_loop
    obj = small_objective(model, N=5, seed=8)
    policy, _ = syn.synthesize(aug, obj)
    small = hn.SimulationConfig(burn_in=20, horizon=5, master_seed=9, runs=100)
    big = hn.SimulationConfig(burn_in=20, horizon=5, master_seed=9, runs=1600)
    emp_small = hn.monte_carlo_costs(model, fg, cg, policy, obj, small)
    emp_big = hn.monte_carlo_costs(model, fg, cg, policy, obj, big)
    samples = emp_small.detection_samples
    assert emp_small.stderr_detection == pytest.approx(
        np.std(samples, ddof=1) / np.sqrt(len(samples)))
    # 16x more runs should shrink the standard error by about 4x
    ratio = emp_big.stderr_detection / emp_small.stderr_detection
    assert 0.15 < ratio < 0.45
    # the first 100 runs of the big batch replay the small batch's noise
    assert np.allclose(emp_big.detection_samples[:100], samples, rtol=1e-10)


def test_single_run_stderr_is_nan(osc_loop):
    model, fg, cg, _ = osc_loop
    obj = small_objective(model, N=3, seed=10)
    cfg = hn.SimulationConfig(burn_in=10, horizon=3, master_seed=0, runs=1)
    emp = hn.monte_carlo_costs(model, fg, cg, None, obj, cfg)
    assert np.isnan(emp.stderr_control)
    assert emp.runs == 1


def test_zero_burn_in_and_zero_horizon(osc_loop):
    model, fg, cg, aug = osc_loop
    obj = small_objective(model, N=0, seed=11)
    policy, _ = syn.synthesize(aug, obj)
    cfg = hn.SimulationConfig(burn_in=0, horizon=0, master_seed=1)
    traj = hn.run_paired(model, fg, cg, policy, cfg, obj=obj)
    assert len(traj.t) == 1
    assert traj.t[0] == 0
    assert traj.e.shape == (1, model.s)
