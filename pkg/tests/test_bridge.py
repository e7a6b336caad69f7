import io
import json
import math

import numpy as np
import pytest

from sloc import polchinski
from sloc.bridge import (
    DiscreteCoupling,
    DiscreteMeasure,
    FollmerDrift,
    follmer_sample,
    follmer_sample_ensemble,
    girsanov_energy,
    heat_kernel_reference,
    objective_pair,
    schrodinger_residual,
    sinkhorn,
    squared_distances,
    write_coupling_csv,
    write_sinkhorn_trace_json,
)
from sloc.diagnostics import ks_two_sample, moment_check
from sloc.sde import TimeGrid, wiener_increments
from sloc.targets import GaussianMeasure, GaussianMixture

from oracles import grid_1d, mixture_pdf, quad_raw_moments_1d


def uniform_two_points():
    pts = np.array([[0.0], [1.0]])
    w = np.array([0.5, 0.5])
    return DiscreteMeasure(pts, w), DiscreteMeasure(pts, w)


def random_instance(rng, n, m, d=2):
    def weights(k):
        w = rng.uniform(0.5, 1.5, k)
        w /= w.sum()
        w[-1] = 1.0 - w[:-1].sum()
        return w

    mu = DiscreteMeasure(rng.standard_normal((n, d)), weights(n))
    pi = DiscreteMeasure(rng.standard_normal((m, d)) + 0.3, weights(m))
    return mu, pi


class TestDiscreteMeasure:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            DiscreteMeasure(np.zeros((2, 1)), np.array([0.5, 0.6]))

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            DiscreteMeasure(np.zeros((2, 1)), np.array([1.0, 0.0]))

    def test_reference_first_marginal_is_mu(self):
        rng = np.random.default_rng(0)
        mu, pi = random_instance(rng, 4, 6)
        ref = heat_kernel_reference(mu, pi)
        assert np.abs(ref.sum(axis=1) - mu.weights).max() <= 1e-14


class TestSinkhorn:
    def test_single_atom_converges_immediately(self):
        mu = DiscreteMeasure(np.array([[0.0]]), np.array([1.0]))
        pi = DiscreteMeasure(np.array([[0.0], [1.0], [2.0]]), np.array([0.2, 0.5, 0.3]))
        ref = heat_kernel_reference(mu, pi)
        res = sinkhorn(mu, pi, ref, tol=1e-12)
        assert res.iterations <= 2
        assert np.abs(res.coupling.gamma - np.outer(mu.weights, pi.weights)).max() <= 1e-12

    def test_product_reference_gives_product_coupling(self):
        rng = np.random.default_rng(1)
        mu, pi = random_instance(rng, 3, 5)
        ref = np.outer(mu.weights, pi.weights)
        res = sinkhorn(mu, pi, ref, tol=1e-12)
        ssb, _ = objective_pair(res.coupling, mu, pi, ref)
        assert abs(ssb) <= 1e-12
        assert np.abs(res.coupling.gamma - ref).max() <= 1e-12

    def test_factorization_invariant(self):
        rng = np.random.default_rng(2)
        mu, pi = random_instance(rng, 5, 4)
        ref = heat_kernel_reference(mu, pi)
        res = sinkhorn(mu, pi, ref, tol=1e-11)
        rebuilt = ref * np.outer(res.f, res.g)
        rel = np.abs(rebuilt - res.coupling.gamma) / np.maximum(res.coupling.gamma, 1e-300)
        assert rel.max() <= 1e-12

    def test_residual_trace_monotone(self):
        rng = np.random.default_rng(3)
        mu, pi = random_instance(rng, 6, 7)
        ref = heat_kernel_reference(mu, pi) * np.exp(0.3 * rng.standard_normal((6, 7)))
        res = sinkhorn(mu, pi, ref, tol=1e-12)
        trace = res.residual_trace
        assert np.all(np.diff(trace) <= 1e-12)

    def test_zero_kernel_entry_rejected(self):
        mu, pi = uniform_two_points()
        ref = heat_kernel_reference(mu, pi)
        ref = ref.copy()
        ref[0, 1] = 0.0
        with pytest.raises(ValueError, match="positive"):
            sinkhorn(mu, pi, ref)

    def test_non_convergence_flagged(self):
        rng = np.random.default_rng(4)
        mu, pi = random_instance(rng, 5, 6)
        ref = heat_kernel_reference(mu, pi) * np.exp(rng.standard_normal((5, 6)))
        res = sinkhorn(mu, pi, ref, tol=1e-14, max_iter=1)
        assert not res.converged
        assert res.residual > 1e-14


class TestObjectives:
    def test_difference_is_coupling_free(self):
        rng = np.random.default_rng(5)
        mu, pi = random_instance(rng, 4, 5)
        ref = heat_kernel_reference(mu, pi)
        diffs = []
        for _ in range(20):
            perturbed = ref * np.exp(0.5 * rng.standard_normal(ref.shape))
            res = sinkhorn(mu, pi, perturbed, tol=1e-13)
            ssb, eot = objective_pair(res.coupling, mu, pi, ref)
            diffs.append(eot - ssb)
        assert np.ptp(diffs) <= 1e-10

    def test_product_coupling_has_zero_entropy_term(self):
        mu, pi = uniform_two_points()
        ref = heat_kernel_reference(mu, pi)
        gamma = np.outer(mu.weights, pi.weights)
        _, eot = objective_pair(gamma, mu, pi, ref)
        cost = float(np.sum(0.5 * squared_distances(mu, pi) * gamma))
        assert eot == pytest.approx(cost, abs=1e-15)

    def test_unsupported_coupling_flagged_infinite(self):
        mu, pi = uniform_two_points()
        ref = heat_kernel_reference(mu, pi).copy()
        ref[0, 1] = 0.0
        gamma = np.full((2, 2), 0.25)
        ssb, _ = objective_pair(gamma, mu, pi, ref)
        assert math.isinf(ssb)

    def test_brute_force_grid_agreement(self):
        mu, pi = uniform_two_points()
        ref = heat_kernel_reference(mu, pi)
        res = sinkhorn(mu, pi, ref, tol=1e-12)
        p = np.linspace(0.0, 0.5, 1_000_001)
        entries = np.stack([p, 0.5 - p, 0.5 - p, p], axis=1)
        refs = ref.ravel()
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(entries > 0.0, entries * (np.log(entries) - np.log(refs)), 0.0)
        ssb_grid = terms.sum(axis=1)
        ssb_sink, _ = objective_pair(res.coupling, mu, pi, ref)
        assert abs(ssb_sink - ssb_grid.min()) <= 1e-6
        assert abs(res.coupling.gamma[0, 0] - p[ssb_grid.argmin()]) <= 1e-5


class TestSchrodingerSystem:
    def test_converged_residual_small(self):
        rng = np.random.default_rng(6)
        mu, pi = random_instance(rng, 4, 6, d=1)
        ref = heat_kernel_reference(mu, pi)
        res = sinkhorn(mu, pi, ref, tol=1e-10)
        assert schrodinger_residual(res, mu, pi, ref) <= 1e-8

    def test_single_atom_residual_zero(self):
        mu = DiscreteMeasure(np.array([[0.0]]), np.array([1.0]))
        pi = DiscreteMeasure(np.array([[0.5], [1.5]]), np.array([0.4, 0.6]))
        ref = heat_kernel_reference(mu, pi)
        res = sinkhorn(mu, pi, ref, tol=1e-12)
        assert schrodinger_residual(res, mu, pi, ref) <= 1e-12

    def test_one_iteration_leaves_defect(self):
        rng = np.random.default_rng(7)
        mu, pi = random_instance(rng, 5, 3)
        ref = heat_kernel_reference(mu, pi) * np.exp(rng.standard_normal((5, 3)))
        res = sinkhorn(mu, pi, ref, tol=1e-14, max_iter=1)
        assert not res.converged
        assert schrodinger_residual(res, mu, pi, ref) > 1e-14

    def test_markov_factorization_three_time_chain(self):
        # Reference built from two positive transition kernels: the optimal
        # path law's late-time conditional is the g-reweighted reference
        # transition, with the intermediate g obtained by transition-weighting.
        rng = np.random.default_rng(8)
        n0, n1, n2 = 3, 4, 5
        r0 = rng.uniform(0.5, 1.5, n0)
        r0 /= r0.sum()
        a = rng.uniform(0.2, 1.0, (n0, n1))
        a /= a.sum(axis=1, keepdims=True)
        b = rng.uniform(0.2, 1.0, (n1, n2))
        b /= b.sum(axis=1, keepdims=True)
        endpoint = (r0[:, None] * a) @ b  # joint law of (start, end)

        mu = DiscreteMeasure(np.arange(n0)[:, None].astype(float), r0)
        target_w = rng.uniform(0.5, 1.5, n2)
        target_w /= target_w.sum()
        target_w[-1] = 1.0 - target_w[:-1].sum()
        pi = DiscreteMeasure(np.arange(n2)[:, None].astype(float), target_w)
        res = sinkhorn(mu, pi, endpoint, tol=1e-13)

        g_mid = b @ res.g  # transition-weighted late scaling at the middle time
        # Joint (mid, end) law of the optimizer: sum_i f_i r0_i a[i,k] b[k,j] g_j.
        f_flow = (res.f * r0) @ a  # unnormalized mid-time mass carried by f
        joint = f_flow[:, None] * b * res.g[None, :]
        cond_opt = joint / joint.sum(axis=1, keepdims=True)
        cond_expected = b * res.g[None, :] / g_mid[:, None]
        assert np.abs(cond_opt - cond_expected).max() <= 1e-8


class TestFollmerSampler:
    def test_standard_normal_has_zero_drift(self):
        base = GaussianMeasure(np.zeros(2), np.eye(2))
        grid = TimeGrid.uniform(0.0, 1.0 - 1e-3, 200)
        noise = wiener_increments(grid, 2, seed=9, stream_id=0)
        terminal = follmer_sample(base, grid, noise)
        assert np.allclose(terminal, noise.terminal(), atol=1e-12)

    def test_standard_normal_terminal_ks(self):
        base = GaussianMeasure([0.0], [[1.0]])
        grid = TimeGrid.uniform(0.0, 1.0 - 1e-3, 250)
        terminal = follmer_sample_ensemble(base, grid, seed=10, n_paths=3000)[:, 0]
        exact = math.sqrt(1.0 - 1e-3) * np.random.default_rng(11).standard_normal(3000)
        assert ks_two_sample(terminal, exact).p_value > 0.01

    def test_shifted_base_terminal_mean(self):
        theta, eps = 1.5, 1e-3
        base = GaussianMeasure([theta], [[1.0]])
        grid = TimeGrid.uniform(0.0, 1.0 - eps, 250)
        terminal = follmer_sample_ensemble(base, grid, seed=12, n_paths=3000)[:, 0]
        se = terminal.std() / math.sqrt(terminal.size)
        assert abs(terminal.mean() - theta * (1.0 - eps)) <= 4.0 * se

    def test_mixture_terminal_moments_match_quadrature(self):
        base = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[[1.0]], [[1.0]]])
        pdf = mixture_pdf([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
        xs = grid_1d()
        reference = quad_raw_moments_1d(pdf(xs), xs)
        grid = TimeGrid.uniform(0.0, 1.0 - 1e-3, 500)
        terminal = follmer_sample_ensemble(base, grid, seed=13, n_paths=4000)[:, 0]
        z = moment_check(terminal, reference)
        assert np.all(np.abs(z) <= 4.0)

    def test_drift_matches_renorm_gradient(self):
        base = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[[1.0]], [[1.0]]])
        drift = FollmerDrift(base)
        for tau, v in ((0.2, 0.5), (0.6, -1.0)):
            _, grad = polchinski.renorm_potential(base, tau, [v])
            assert np.abs(drift([v], tau) + grad).max() <= 1e-10


class TestGirsanovEnergy:
    def test_zero_for_standard_normal(self):
        base = GaussianMeasure(np.zeros(2), np.eye(2))
        grid = TimeGrid.uniform(0.0, 1.0 - 1e-3, 100)
        energy, _ = girsanov_energy(FollmerDrift(base), grid, 200, seed=14)
        assert energy == pytest.approx(0.0, abs=1e-20)

    def test_mean_shift_energy(self):
        base = GaussianMeasure([2.0], [[1.0]])
        grid = TimeGrid.uniform(0.0, 1.0 - 1e-3, 300)
        energy, se = girsanov_energy(FollmerDrift(base), grid, 500, seed=15)
        assert abs(energy - 2.0) <= 4.0 * se + 0.01

    def test_generic_base_energy(self):
        # Quadratic potential with mean 1.5 has optimal energy 1.5^2 / 2.
        from sloc.targets import POTENTIALS

        pot = POTENTIALS["gaussian"](dim=1, mean=1.5, precision=1.0)
        grid = TimeGrid.uniform(0.0, 1.0 - 0.04, 24)
        energy, _ = girsanov_energy(FollmerDrift(pot, budget=600), grid, 8, seed=17)
        assert abs(energy - 1.125) < 0.3

    def test_variance_case_matches_gaussian_kl(self):
        # Frozen oracle: KL(N(0,2) || N(0,1)) = (1 - log 2)/2 = 0.15342640972.
        base = GaussianMeasure([0.0], [[2.0]])
        grid = TimeGrid.uniform(0.0, 1.0 - 1e-3, 999)
        energy, _ = girsanov_energy(FollmerDrift(base), grid, 4000, seed=16)
        assert abs(energy - 0.15342640972002736) / 0.15342640972002736 <= 0.05


def test_coupling_csv_and_trace_json():
    mu, pi = uniform_two_points()
    ref = heat_kernel_reference(mu, pi)
    res = sinkhorn(mu, pi, ref, tol=1e-12)
    buf = io.StringIO()
    write_coupling_csv(res.coupling, buf)
    rows = buf.getvalue().strip().split("\n")
    assert len(rows) == 2 and len(rows[0].split(",")) == 2
    buf = io.StringIO()
    write_sinkhorn_trace_json(res, buf)
    payload = json.loads(buf.getvalue())
    assert payload["converged"] is True
    assert payload["trace"][0]["iteration"] == 1
