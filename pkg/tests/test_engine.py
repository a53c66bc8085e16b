import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rpp.engine import (AlgoParams, DivergenceError, Lyapunov, NetworkState, NoiseSpec,
                        ParameterError, augmented_lagrangian, b_eigenvalues, centralized_step,
                        check_perturbation_bounds, dgd_baseline_step, first_order_residual,
                        generate_perturbation, noise_rng, potential, rpp_step, select_parameters,
                        theory_constants)
from rpp.graphs import build_weight_matrix, complete_graph, generate_geometric_graph, path_graph
from rpp.objectives import (generate_classification_data, global_smoothness,
                            logistic_nonconvex_problem, quadratic_problem)


@pytest.fixture(scope="module")
def net():
    P = build_weight_matrix(generate_geometric_graph(5, 0.6, 0))
    return P, quadratic_problem(5, 3, 0), logistic_nonconvex_problem(generate_classification_data(5, 20, 3, 0))


def params(**kw):
    base = dict(variant="rpp", rho=1.0, alpha=0.2, beta=0.1)
    base.update(kw)
    return AlgoParams(**base)


# -- parameters -------------------------------------------------------------

def test_select_parameters_unit_case():
    p = select_parameters(1.0, 1.0, 0.0, 0.0, 0.0, 2.0)
    t = p.derived
    assert t.conditions_hold
    assert p.beta == p.alpha / 2
    # independent re-evaluation of the chain and of B on the spectrum {0, 1}
    d2 = 1 / 12
    c = 1.001 * 20 * 4 / (3 * d2**2)
    assert t.d2 == pytest.approx(d2) and t.c == pytest.approx(c)
    lam_b = 1 / (p.alpha - p.beta * np.array([0.0, 1.0])) - p.rho * np.array([0.0, 1.0])
    assert lam_b.min() > 0
    kappa = lam_b.max() / p.rho
    assert 0.5 - 0 > 0
    assert kappa <= c * d2
    lb = lam_b.min()
    assert 0.5 * lb - (1 + 2 * c) / 2 - 5 * t.d1 * c / (12 * lb) >= 0
    assert 1 / p.alpha == pytest.approx(math.sqrt(2) * t.xi1)


def test_select_parameters_zero_noise_d1():
    p = select_parameters(1.7, 0.3, 0.0, 0.0, 0.0, 2.0)
    assert p.derived.d1 == 1.7**2


@pytest.mark.parametrize("kw", [dict(eta=0.6), dict(eta=-0.6), dict(sigma_e=0.25),
                                dict(eta=0.2, sigma_e=0.2), dict(sigma_r=-1.0), dict(delta=1.0)])
def test_select_parameters_preconditions(kw):
    args = dict(eta=0.0, sigma_e=0.0, sigma_r=0.0, delta=2.0)
    args.update(kw)
    with pytest.raises(ParameterError):
        select_parameters(1.0, 0.5, **args)


@settings(max_examples=40, deadline=None)
@given(m_bar=st.floats(0.1, 10), lam=st.floats(0.01, 1.0), eta=st.floats(-0.45, 0.45),
       frac=st.floats(0, 0.99), sr=st.floats(0, 1), delta=st.floats(2.0, 5))
def test_select_parameters_margins_hold(m_bar, lam, eta, frac, sr, delta):
    se = frac * (0.25 - abs(eta) / 2)
    p = select_parameters(m_bar, lam, eta, se, sr, delta)
    assert p.derived.conditions_hold
    spectrum = np.r_[0.0, np.linspace(lam, 1.0, 50)]
    assert np.all(b_eigenvalues(p.alpha, p.beta, p.rho, spectrum) >= p.derived.lambda_b_min * (1 - 1e-9))


def test_select_parameters_reports_failed_condition():
    # a margin close to 1 leaves the proximal condition unmet on an interior spectrum
    with pytest.raises(ParameterError, match="proximal margin -"):
        select_parameters(1.0, 0.5, 0.0, 0.0, 0.0, 1.5)


def test_theory_constants_flags_manual_parameters():
    t = theory_constants(1.0, 0.2, 0.1, 0.0, 0.0, 0.0, 1.0, 0.3)
    assert not t.conditions_hold


@pytest.mark.parametrize("kw", [dict(alpha=0.1, beta=0.1), dict(beta=0.0), dict(rho=0.0),
                                dict(variant="bogus"), dict(sigma_e=-0.1),
                                dict(variant="rpp_ca", tau=0)])
def test_algo_params_validation(kw):
    with pytest.raises(ParameterError):
        params(**kw)


def test_check_matrices_detects_indefinite_b():
    p = params(rho=10.0, alpha=1.0, beta=0.5)
    with pytest.raises(ParameterError):
        p.check_matrices([0.0, 0.5, 1.0])
    params().check_matrices([0.0, 0.5, 1.0])


# -- perturbations ----------------------------------------------------------

def test_perturbation_zero_sigma():
    rng = noise_rng(0, 0, 0, 0)
    np.testing.assert_array_equal(generate_perturbation(np.ones(3), np.zeros(3), 0.0, rng), 0.0)


def test_perturbation_zero_step():
    rng = noise_rng(0, 0, 0, 0)
    np.testing.assert_array_equal(generate_perturbation(np.zeros(4), np.zeros(4), 0.3, rng), 0.0)


def test_perturbation_cap_monte_carlo():
    dx = np.array([2.0, 0.0, 0.0])
    norms = [np.linalg.norm(generate_perturbation(dx, None, 0.3, noise_rng(1, 0, k, 0)))
             for k in range(10_000)]
    assert max(norms) <= 0.6
    assert 0.25 < np.mean(norms) < 0.35  # uniform radius fraction has mean 1/2


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 10**6),
       scale=st.floats(1e-8, 1e8), sigma=st.floats(0, 2))
def test_perturbation_cap_exact(seed, k, scale, sigma):
    dx = scale * noise_rng(seed, 3, k, 1).standard_normal(6)
    out = generate_perturbation(dx, None, sigma, noise_rng(seed, 0, k, 0))
    assert out @ out <= sigma * sigma * (dx @ dx)


def test_substream_definition_is_documented_philox():
    g = noise_rng(5, 3, 17, 1)
    ref = np.random.Generator(np.random.Philox(key=np.array([5, 7], dtype=np.uint64),
                                               counter=np.array([0, 0, 0, 17], dtype=np.uint64)))
    np.testing.assert_array_equal(g.standard_normal(4), ref.standard_normal(4))
    spec = NoiseSpec(0.1, 0.1, "spherical_capped", 5)
    a = spec._stream(3, 17, 1).standard_normal(4)
    np.testing.assert_array_equal(a, noise_rng(5, 3, 17, 1).standard_normal(4))


def test_noise_spec_mode_none_requires_zero():
    with pytest.raises(ValueError):
        NoiseSpec(0.1, 0.0, "none")
    with pytest.raises(ValueError):
        NoiseSpec(0.1, 0.0, "gaussian")


def test_check_perturbation_bounds_zero_noise():
    x = [np.zeros((3, 2)), np.ones((3, 2)), 2 * np.ones((3, 2))]
    trace = [(np.zeros((3, 2)), np.zeros((3, 2)), xi) for xi in x]
    rep = check_perturbation_bounds(trace, 0.0, 0.0)
    assert sum(rep["counts"].values()) == 0


def test_check_perturbation_bounds_flags_constructed_violation():
    sigma = 0.2
    x0, x1 = np.zeros((1, 3)), np.array([[1.0, 2.0, 2.0]])
    u = np.array([[0.0, 1.0, 0.0]])
    e1 = 2 * sigma * np.linalg.norm(x1 - x0) * u
    rep = check_perturbation_bounds([(np.zeros((1, 3)), np.zeros((1, 3)), x0), (e1, np.zeros((1, 3)), x1)],
                            sigma, sigma)
    assert rep["counts"]["e_norm"] == 1
    assert rep["max_ratio"]["e_norm"] == pytest.approx(4.0)


def test_check_perturbation_bounds_needs_two_entries():
    with pytest.raises(ValueError):
        check_perturbation_bounds([(0, 0, 0)], 0.1, 0.1)


def test_norm_bounds_never_violated_on_runs(net):
    P, quad, _ = net
    p = params(sigma_e=0.3, sigma_r=0.3)
    noise = NoiseSpec.for_params(p, seed=4)
    s = NetworkState.zeros(5, 3)
    # entry k pairs x^k with the perturbations drawn at iteration k
    trace = []
    for _ in range(200):
        nxt = rpp_step(s, p, P, quad, noise)
        trace.append((nxt.e, nxt.r, s.x))
        s = nxt
    rep = check_perturbation_bounds(trace, 0.3, 0.3)
    assert rep["counts"]["e_norm"] == 0 and rep["counts"]["r_norm"] == 0


# -- iteration --------------------------------------------------------------

def test_zero_state_invariants():
    s = NetworkState.zeros(4, 2)
    for name in ("x", "x_prev", "d", "d_hat", "e", "r"):
        np.testing.assert_array_equal(getattr(s, name), 0.0)
    assert s.k == 0 and s.comm_rounds == 0


def test_first_step_from_zero(net):
    P, _, logi = net
    p = params(alpha=0.3, beta=0.12)
    s1 = rpp_step(NetworkState.zeros(5, 3), p, P, logi, NoiseSpec())
    g0 = logi.gradients(np.zeros((5, 3)))
    expected = -(p.alpha * g0 - p.beta * P.matrix @ g0)
    np.testing.assert_allclose(s1.x, expected, rtol=1e-14, atol=1e-16)
    assert s1.comm_rounds == 2 and s1.k == 1


def test_zero_noise_no_momentum_matches_plain_updates(net):
    P, quad, _ = net
    p = params()
    s = NetworkState.zeros(5, 3)
    x, d = np.zeros((5, 3)), np.zeros((5, 3))
    W = P.matrix
    for _ in range(30):
        s = rpp_step(s, p, P, quad, NoiseSpec())
        z = quad.gradients(x) + p.rho * W @ (x + d)
        x = x - p.alpha * z + p.beta * W @ z
        d = d + x
        np.testing.assert_allclose(s.x, x, rtol=1e-12, atol=1e-14)
        np.testing.assert_array_equal(s.d, s.d_hat)


@pytest.mark.parametrize("sigma", [0.0, 0.3])
@pytest.mark.parametrize("which", ["quad", "logi"])
def test_distributed_matches_matrix_form(net, sigma, which):
    P, quad, logi = net
    problem = quad if which == "quad" else logi
    p = params(eta=0.15, sigma_e=sigma, sigma_r=sigma)
    noise = NoiseSpec.for_params(p, seed=2)
    s = NetworkState.zeros(5, 3)
    for _ in range(100):
        nxt = rpp_step(s, p, P, problem, noise)
        ref = centralized_step(s, p, P, problem, nxt.e, nxt.r)
        for name in ("x", "d_hat", "d"):
            a, b = getattr(nxt, name), getattr(ref, name)
            assert np.linalg.norm(a - b) <= 1e-10 * max(1.0, np.linalg.norm(b))
        s = nxt


def test_centralized_zero_state(net):
    P, quad, _ = net
    p = params()
    z = np.zeros((5, 3))
    s1 = centralized_step(NetworkState.zeros(5, 3), p, P, quad, z, z)
    G = np.kron(p.alpha * np.eye(5) - p.beta * P.matrix, np.eye(3))
    np.testing.assert_allclose(s1.x.ravel(), -G @ quad.gradients(z).ravel(), rtol=1e-14)


def test_centralized_fixed_point():
    P = build_weight_matrix(complete_graph(4))
    a = np.array([0.5, -1.0])
    quad = quadratic_problem(4, 2, 0, centers=np.tile(a, (4, 1)))
    x = np.tile(a, (4, 1))
    z = np.zeros((4, 2))
    s = NetworkState(3, x, x, z, z, z, z)
    np.testing.assert_allclose(centralized_step(s, params(), P, quad, z, z).x, x, atol=1e-15)


def test_projected_dual_gives_same_trajectory(net):
    P, _, logi = net
    p = params(eta=0.2)
    s = NetworkState.zeros(5, 3)
    x, dh, d = np.zeros((5, 3)), np.zeros((5, 3)), np.zeros((5, 3))
    J = np.full((5, 5), 1 / 5)
    W = P.matrix
    for _ in range(60):
        s = rpp_step(s, p, P, logi, NoiseSpec())
        z = logi.gradients(x) + p.rho * W @ (x + d)
        x = x - p.alpha * z + p.beta * W @ z
        dh_new = dh + (np.eye(5) - J) @ x
        d = dh_new + p.eta * (dh_new - dh)
        dh = dh_new
        np.testing.assert_allclose(s.x, x, rtol=1e-10, atol=1e-12)


def test_first_order_identity(net):
    P, _, logi = net
    p = params(eta=-0.2, sigma_e=0.2, sigma_r=0.2)
    noise = NoiseSpec.for_params(p, seed=9)
    s = NetworkState.zeros(5, 3)
    for _ in range(40):
        nxt = rpp_step(s, p, P, logi, noise)
        res = first_order_residual(s, nxt, p, P, logi)
        assert np.linalg.norm(res) <= 1e-8 * (1 + np.linalg.norm(logi.gradients(s.x)))
        s = nxt


def test_divergence_reported(net):
    P, quad, _ = net
    s = NetworkState.zeros(5, 3)
    bad = NetworkState(1, np.full((5, 3), np.inf), s.x, s.d, s.d, s.e, s.r)
    with pytest.raises(DivergenceError) as info, np.errstate(invalid="ignore"):
        rpp_step(bad, params(), P, quad, NoiseSpec())
    assert info.value.node == 0 and info.value.k == 2


def test_rpp_step_requires_variant(net):
    P, quad, _ = net
    with pytest.raises(ParameterError):
        rpp_step(NetworkState.zeros(5, 3), params(variant="rpp_ca", tau=2), P, quad, NoiseSpec())


def test_comm_rounds_two_per_step(net):
    P, quad, _ = net
    s = NetworkState.zeros(5, 3)
    for k in range(1, 6):
        s = rpp_step(s, params(), P, quad, NoiseSpec())
        assert s.comm_rounds == 2 * k


def test_state_csv_snapshot(tmp_path, net):
    P, quad, _ = net
    s = rpp_step(NetworkState.zeros(5, 3), params(), P, quad, NoiseSpec())
    s.to_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["k", "1", "comm_rounds", "2"]
    assert len(rows) == 1 + 6 * 5
    x_rows = [r for r in rows[1:] if r[1] == "x"]
    np.testing.assert_array_equal(np.array([[float(v) for v in r[2:]] for r in x_rows]), s.x)


# -- baseline ---------------------------------------------------------------

def test_dgd_fixed_point():
    P = build_weight_matrix(complete_graph(3))
    a = np.array([1.0, 2.0])
    quad = quadratic_problem(3, 2, 0, centers=np.tile(a, (3, 1)))
    x = np.tile(a, (3, 1))
    s = NetworkState(0, x, x, x * 0, x * 0, x * 0, x * 0)
    np.testing.assert_allclose(dgd_baseline_step(s, 0.1, P, quad).x, x, atol=1e-15)


def test_dgd_zero_stepsize_is_gossip():
    P = build_weight_matrix(path_graph(4))
    quad = quadratic_problem(4, 2, 1)
    x = np.random.default_rng(0).standard_normal((4, 2))
    s = NetworkState(0, x, x, x * 0, x * 0, x * 0, x * 0)
    out = dgd_baseline_step(s, 0.0, P, quad)
    np.testing.assert_allclose(out.x, (np.eye(4) - P.matrix) @ x, rtol=1e-14)
    assert out.comm_rounds == 1


def test_dgd_small_step_reaches_neighborhood():
    P = build_weight_matrix(generate_geometric_graph(8, 0.6, 2))
    quad = quadratic_problem(8, 2, 3)
    s = NetworkState.zeros(8, 2)
    step = 0.01
    for _ in range(3000):
        s = dgd_baseline_step(s, step, P, quad)
    err = np.linalg.norm(s.x - quad.minimizer, axis=1).max()
    spread = np.linalg.norm(np.stack([f.a for f in quad.locals]) - quad.minimizer, axis=1).max()
    # fixed point sits O(step / lambda_min) away from the minimizer
    assert err <= 2 * step / P.spectral[1] * spread


# -- merit functions --------------------------------------------------------

def test_augmented_lagrangian_cases(net):
    P, _, logi = net
    p = params()
    z = np.zeros((5, 3))
    rng = np.random.default_rng(1)
    d = rng.standard_normal((5, 3))
    s = NetworkState(1, z, z, d, d, z, z)
    assert augmented_lagrangian(s, p, P, logi) == pytest.approx(logi.value(z))
    c = np.tile(rng.standard_normal(3), (5, 1))
    s = NetworkState(1, c, c, d, d, z, z)
    assert augmented_lagrangian(s, p, P, logi) == pytest.approx(logi.value(c), rel=1e-12)
    x = rng.standard_normal((5, 3))
    s = NetworkState(1, x, x, d, d, z, z)
    Lk = np.kron(P.matrix, np.eye(3))
    ref = logi.value(x) + p.rho * x.ravel() @ Lk @ d.ravel() + p.rho / 2 * x.ravel() @ Lk @ x.ravel()
    assert augmented_lagrangian(s, p, P, logi) == pytest.approx(ref, rel=1e-12)


def test_potential_zero_state(net):
    P, _, logi = net
    p = select_parameters(global_smoothness(logi), P.spectral[1], eigenvalues=P.eigenvalues)
    z = np.zeros((5, 3))
    assert potential((z, z, z), p, P, logi) == pytest.approx(logi.value(z), rel=1e-14)


def test_potential_matches_dense_formula(net):
    P, quad, _ = net
    p = select_parameters(1.0, P.spectral[1], 0.1, 0.1, 0.2, eigenvalues=P.eigenvalues)
    t = p.derived
    rng = np.random.default_rng(3)
    x1, x0, d1 = rng.standard_normal((3, 5, 3))
    n = 5
    L = np.kron(P.matrix, np.eye(3))
    I = np.eye(n * 3)
    G = p.alpha * I - p.beta * L
    B = np.linalg.inv(G) - p.rho * L
    W1 = 2.5 * (2 + p.eta) * t.d1 * t.kappa * np.linalg.inv(B) + 0.5 * (p.sigma_r * I + p.sigma_e * p.rho * L)
    W2 = B + (t.m_bar + p.sigma_r) * I + (abs(p.eta) + p.sigma_e) * p.rho * L
    a, b, dd = x1.ravel(), x0.ravel(), d1.ravel()
    dx = a - b
    ref = (quad.value(x1) + p.rho * a @ L @ dd + p.rho / 2 * a @ L @ a + dx @ W1 @ dx
           + t.c / 2 * (p.rho * a @ L @ a + dx @ W2 @ dx) - p.eta * p.rho / 2 * a @ L @ a)
    assert potential((x1, x0, d1), p, P, quad) == pytest.approx(ref, rel=1e-9)


def test_potential_requires_constants(net):
    P, quad, _ = net
    with pytest.raises(ParameterError):
        Lyapunov(params(), P, quad)
