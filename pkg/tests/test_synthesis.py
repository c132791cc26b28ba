import math

import numpy as np
import pytest

from cpsattack import plant
from cpsattack import synthesis as syn
from cpsattack.dynamics import build_augmented
from cpsattack.numerics import definiteness, pseudo_inverse
from cpsattack.pipeline import filter_step, kalman_design, lqg_design, predict
from cpsattack.plant import model_hash

from modelzoo import random_model, scalar_model


def stage_weight(aug, obj, t):
    F = np.zeros((aug.n + aug.p, aug.n + aug.p))
    F[:aug.n, :aug.n] = obj.alpha * obj.Q[t]
    F[aug.n:, aug.n:] = obj.R[t]
    return F


def innovation_trace(aug, Qc, Rc, Sc):
    K = aug.Kcal
    return float(np.trace(aug.Sigma_nu @ (K.T @ Qc @ K + 2.0 * (K.T @ Rc) + Sc)))


def small_objective(model, N=8, alpha=1.0, seed=0):
    rng = np.random.default_rng(seed)
    x_star = rng.normal(size=model.n)
    return syn.constant_objective(np.eye(model.n), np.eye(model.p), x_star, N,
                                  alpha=alpha)


def test_objective_validation():
    with pytest.raises(ValueError):
        syn.AttackObjective(Q=[np.eye(2)], R=[np.eye(2), np.eye(2)],
                            x_star=np.zeros(2), N=1, alpha=1.0)
    with pytest.raises(ValueError):
        syn.constant_objective(np.diag([1.0, 0.0]), np.eye(2), np.zeros(2), 3)
    with pytest.raises(ValueError):
        syn.constant_objective(np.eye(2), -np.eye(2), np.zeros(2), 3)
    with pytest.raises(ValueError):
        syn.constant_objective(np.eye(2), np.eye(2), np.zeros(2), -1)


def test_synthesize_rejects_degenerate_alpha(osc_loop):
    model, _, _, aug = osc_loop
    for alpha in (0.0, -1.0, math.inf, math.nan):
        obj = syn.AttackObjective(Q=[np.eye(model.n)], R=[np.eye(model.p)],
                                  x_star=np.zeros(model.n), N=0, alpha=1.0)
        obj.alpha = alpha
        with pytest.raises(ValueError):
            syn.synthesize(aug, obj)


def test_terminal_gain_is_min_norm_least_squares(carts_loop):
    """The last attack input solves a weighted least-squares problem; the
    recursion's pseudoinverse formula must agree with a direct lstsq solve."""
    model, _, _, aug = carts_loop
    obj = small_objective(model, N=5, alpha=0.7, seed=1)
    policy, _ = syn.synthesize(aug, obj)
    F_N = stage_weight(aug, obj, obj.N)
    lam, U = np.linalg.eigh(F_N)
    sqrtF = U @ np.diag(np.sqrt(np.clip(lam, 0.0, None))) @ U.T
    rng = np.random.default_rng(2)
    for _ in range(20):
        xi = rng.normal(size=aug.xi_dim)
        nu = rng.normal(size=aug.p)
        target = -sqrtF @ (aug.Ccal @ xi + aug.Mcal @ nu)
        e_ref, *_ = np.linalg.lstsq(sqrtF @ aug.Dcal, target, rcond=None)
        e_pol = policy.L[obj.N] @ xi + policy.O[obj.N] @ nu
        assert np.max(np.abs(e_pol - e_ref)) <= 1e-8 * max(1.0, np.max(np.abs(e_ref)))


def bellman_rhs(aug, obj, certs, t, xi, nu, e):
    """Stage cost plus exact expected cost-to-go after playing e at step t."""
    zeta = aug.Ccal @ xi + aug.Dcal @ e + aug.Mcal @ nu
    F_t = stage_weight(aug, obj, t)
    value = zeta @ F_t @ zeta
    if t < obj.N:
        mu = aug.Acal @ xi + aug.Bcal @ e
        Q_next = certs.Qcal[t + 1]
        value += mu @ Q_next @ mu
        value += certs.Pi[t]  # noise-driven part of the continuation
    return value


def quad_value(certs, t, xi, nu):
    return (xi @ certs.Qcal[t] @ xi + 2.0 * xi @ certs.Rcal[t] @ nu
            + nu @ certs.Scal[t] @ nu + certs.Pi[t])


def test_bellman_equation_holds(osc_loop):
    """The returned quadratic value must satisfy the dynamic-programming
    equation: playing the policy's input attains it, and no perturbed input
    does better.  This checks optimality against first principles rather
    than against the recursion's own algebra."""
    model, _, _, aug = osc_loop
    obj = small_objective(model, N=6, alpha=2.5, seed=3)
    policy, certs = syn.synthesize(aug, obj)
    rng = np.random.default_rng(4)
    for t in (0, 1, 3, obj.N - 1, obj.N):
        for _ in range(10):
            xi = rng.normal(size=aug.xi_dim)
            nu = rng.normal(size=aug.p)
            e_star = policy.L[t] @ xi + policy.O[t] @ nu
            best = bellman_rhs(aug, obj, certs, t, xi, nu, e_star)
            value = quad_value(certs, t, xi, nu)
            scale = max(1.0, abs(value))
            assert abs(best - value) <= 1e-8 * scale
            for _ in range(8):
                e_alt = e_star + rng.normal(size=aug.s) * rng.choice([1e-3, 0.1, 1.0])
                alt = bellman_rhs(aug, obj, certs, t, xi, nu, e_alt)
                assert alt >= best - 1e-9 * scale


def test_bellman_equation_random_model(rng_models):
    model = rng_models[0]
    fg = kalman_design(model)
    cg = lqg_design(model)
    aug = build_augmented(model, fg, cg)
    obj = small_objective(model, N=4, alpha=0.3, seed=5)
    policy, certs = syn.synthesize(aug, obj)
    rng = np.random.default_rng(6)
    for t in range(obj.N + 1):
        xi = rng.normal(size=aug.xi_dim)
        nu = rng.normal(size=aug.p)
        e_star = policy.L[t] @ xi + policy.O[t] @ nu
        best = bellman_rhs(aug, obj, certs, t, xi, nu, e_star)
        value = quad_value(certs, t, xi, nu)
        assert abs(best - value) <= 1e-8 * max(1.0, abs(value))
        for _ in range(5):
            e_alt = e_star + 0.5 * rng.normal(size=aug.s)
            assert bellman_rhs(aug, obj, certs, t, xi, nu, e_alt) >= best - 1e-9 * max(1.0, abs(best))


def test_cost_to_go_recomposition_and_psd(carts_loop):
    """Each cost-to-go matrix recomposes as a sum of two congruences with PSD
    cores, which both pins the recursion algebra and forces PSD-ness."""
    model, _, _, aug = carts_loop
    obj = small_objective(model, N=7, alpha=1.3, seed=7)
    policy, certs = syn.synthesize(aug, obj)
    for t in range(obj.N + 1):
        F_t = stage_weight(aug, obj, t)
        X = aug.Ccal + aug.Dcal @ policy.L[t]
        recomposed = X.T @ F_t @ X
        if t < obj.N:
            Y = aug.Acal + aug.Bcal @ policy.L[t]
            recomposed = recomposed + Y.T @ certs.Qcal[t + 1] @ Y
        scale = max(1.0, np.max(np.abs(certs.Qcal[t])))
        assert np.max(np.abs(recomposed - certs.Qcal[t])) <= 1e-8 * scale
        assert definiteness(certs.Qcal[t]).is_psd


def test_interior_normal_matrix_pd_and_terminal_range(osc_loop):
    model, _, _, aug = osc_loop
    obj = small_objective(model, N=6, alpha=1.0, seed=8)
    _, certs = syn.synthesize(aug, obj)
    D = aug.Dcal
    for t in range(obj.N):
        F_t = stage_weight(aug, obj, t)
        H = D.T @ F_t @ D + aug.Bcal.T @ certs.Qcal[t + 1] @ aug.Bcal
        assert definiteness(H).is_pd
    # terminal step: the normal equations must be solvable for every
    # right-hand side the problem can produce
    F_N = stage_weight(aug, obj, obj.N)
    H_N = D.T @ F_N @ D
    H_pinv = pseudo_inverse(H_N)
    rng = np.random.default_rng(9)
    for _ in range(100):
        xi = rng.normal(size=aug.xi_dim)
        nu = rng.normal(size=aug.p)
        b = D.T @ F_N @ (aug.Ccal @ xi + aug.Mcal @ nu)
        resid = np.linalg.norm(H_N @ H_pinv @ b - b)
        assert resid <= 1e-8 * max(1e-30, np.linalg.norm(b))


def test_constant_term_telescopes(osc_loop):
    model, _, _, aug = osc_loop
    obj = small_objective(model, N=9, alpha=1.0, seed=10)
    _, certs = syn.synthesize(aug, obj)
    assert certs.Pi[obj.N] == 0.0
    for t in range(obj.N):
        step = innovation_trace(aug, certs.Qcal[t + 1], certs.Rcal[t + 1],
                                certs.Scal[t + 1])
        assert certs.Pi[t] == pytest.approx(certs.Pi[t + 1] + step, rel=1e-12)
        assert step >= -1e-9  # each [Q R; R^T S] block is PSD


def test_gains_insensitive_to_pinv_cutoff(osc_loop):
    model, fg, cg, aug = osc_loop
    obj = small_objective(model, N=5, alpha=1.0, seed=11)
    tight, certs_tight = syn.synthesize(aug, obj, pinv_cutoff=1e-11)
    loose, certs_loose = syn.synthesize(aug, obj, pinv_cutoff=1e-9)
    for t in range(obj.N):
        assert np.max(np.abs(tight.L[t] - loose.L[t])) <= 1e-8
        assert np.max(np.abs(tight.O[t] - loose.O[t])) <= 1e-8
    prior = syn.steady_prior(model, fg, cg, aug, obj.x_star)
    a = syn.optimal_cost(aug, obj, certs_tight, prior)
    b = syn.optimal_cost(aug, obj, certs_loose, prior)
    assert abs(a - b) <= 1e-8 * max(1.0, abs(a))


def test_steady_prior_scalar_closed_form():
    # Stationary covariance of the operator's one-step prediction: the
    # posterior estimate obeys post' = f post + k nu with f = a + b l, so
    # var(post) = k^2 s_nu / (1 - f^2) and var(pred) = f^2 var(post).
    model = scalar_model()
    fg = kalman_design(model)
    cg = lqg_design(model)
    aug = build_augmented(model, fg, cg)
    prior = syn.steady_prior(model, fg, cg, aug, x_star=np.array([2.0]))
    f = model.A[0, 0] + model.B[0, 0] * cg.L[0, 0]
    k = fg.K[0, 0]
    s_nu = fg.Sigma_nu[0, 0]
    expect = f * f * k * k * s_nu / (1.0 - f * f)
    assert prior.Sigma0[0, 0] == pytest.approx(expect, rel=1e-10)
    n = model.n
    assert prior.Sigma_xi0[0, 0] == pytest.approx(expect, rel=1e-10)
    assert prior.Sigma_xi0[4 * n, 0] == pytest.approx(expect, rel=1e-10)
    assert prior.Sigma_star[5 * n, 5 * n] == pytest.approx(4.0, rel=1e-12)


def test_steady_prior_matches_long_run_statistics(osc_loop):
    """Empirical second moment of the stationary one-step prediction."""
    model, fg, cg, aug = osc_loop
    prior = syn.steady_prior(model, fg, cg, aug, x_star=np.zeros(model.n))
    rng = np.random.default_rng(12)
    x = plant.sample_initial_state(model, rng)
    pred = model.x_bar.copy()
    burn, keep = 300, 40000
    samples = np.empty((keep, model.n))
    for t in range(burn + keep):
        _, v = plant.sample_noise(model, rng)
        y = plant.output(model, x, v=v)
        post, _ = filter_step(model, fg, pred, y)
        u = cg.L @ post
        if t >= burn:
            samples[t - burn] = pred
        w, _ = plant.sample_noise(model, rng)  # fresh process noise draw
        x = plant.step(model, x, u, w=w)
        pred = predict(model, post, u)
    emp = samples.T @ samples / keep
    rel = np.linalg.norm(emp - prior.Sigma0) / np.linalg.norm(prior.Sigma0)
    assert rel < 0.10


def test_optimal_cost_nonnegative_random_models(rng_models):
    for i, model in enumerate(rng_models):
        fg = kalman_design(model)
        cg = lqg_design(model)
        aug = build_augmented(model, fg, cg)
        obj = small_objective(model, N=3, alpha=0.5 + i, seed=i)
        _, certs = syn.synthesize(aug, obj)
        prior = syn.steady_prior(model, fg, cg, aug, obj.x_star)
        assert syn.optimal_cost(aug, obj, certs, prior) >= 0.0


def test_policy_save_load_round_trip(tmp_path, osc_loop, osc):
    model, fg, cg, aug = osc_loop
    obj = small_objective(model, N=4, alpha=3.0, seed=13)
    policy, _ = syn.synthesize(aug, obj, model_hash=model_hash(osc))
    path = tmp_path / "policy.json"
    syn.save_policy(policy, path)
    back = syn.load_policy(path, expect_model_hash=model_hash(osc))
    assert back.N == policy.N
    assert back.alpha == policy.alpha
    assert back.mode == policy.mode
    for t in range(policy.N + 1):
        assert np.array_equal(back.L[t], policy.L[t])
        assert np.array_equal(back.O[t], policy.O[t])
    with pytest.raises(ValueError):
        syn.load_policy(path, expect_model_hash="somethingelse")


def test_zero_policy_shapes():
    pol = syn.AttackPolicy.zero(N=3, s=2, xi_dim=12, p=4)
    assert pol.mode == "zero"
    assert len(pol.L) == 4 and len(pol.O) == 4
    assert pol.L[0].shape == (2, 12)
    assert pol.O[0].shape == (2, 4)
    assert not pol.L[0].any() and not pol.O[0].any()


def test_certificate_error_on_degenerate_planning_system(osc_loop):
    """If the attack cannot influence anything (zeroed input channels), the
    interior normal matrix loses rank and synthesis must say so by name."""
    model, _, _, aug = osc_loop
    from dataclasses import replace

    broken = replace(aug, Bcal=np.zeros_like(aug.Bcal), Dcal=np.zeros_like(aug.Dcal))
    obj = small_objective(model, N=3, alpha=1.0, seed=14)
    with pytest.raises(syn.CertificateError, match="t="):
        syn.synthesize(broken, obj)
