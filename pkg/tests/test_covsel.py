"""Graph-constrained Gaussian fitting: covariance selection, the graphical
lasso, the regularizer path, and the two-part graph code."""
import math

import numpy as np
import pytest

from mecoder.covsel import (
    CondIndepGraph,
    ConvergenceError,
    GaussianModel,
    SampleCov,
    covariance_select,
    default_lambda_grid,
    glasso,
    glasso_path,
    graph_codelength,
)
from mecoder.specfun import log_binomial

from helpers import constrained_gaussian_mle, random_pd



def _sc(S, count: int = 50) -> SampleCov:
    S = np.asarray(S, dtype=float)
    return SampleCov(S.shape[0], S, count)

def _all_graphs(n: int):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for bits in range(1 << len(pairs)):
        edges = frozenset(p for k, p in enumerate(pairs) if bits >> k & 1)
        yield CondIndepGraph(n, edges)


class TestCondIndepGraph:
    def test_edge_normalization(self):
        g = CondIndepGraph(3, frozenset({(2, 0), (1, 2)}))
        assert g.edges == frozenset({(0, 2), (1, 2)})

    def test_full_and_empty(self):
        g = CondIndepGraph.full(4)
        assert g.is_full and g.n_edges == 6 == g.max_edges
        e = CondIndepGraph.empty(4)
        assert e.is_empty and e.n_edges == 0

    def test_from_precision_support(self):
        P = np.array([[2.0, 0.3, 0.0], [0.3, 2.0, 1e-12], [0.0, 1e-12, 2.0]])
        g = CondIndepGraph.from_precision(P)
        assert g.edges == frozenset({(0, 1)})

    def test_neighbors(self):
        g = CondIndepGraph(4, frozenset({(0, 2), (2, 3)}))
        nb = g.neighbors()
        assert list(nb[2]) == [0, 3]
        assert list(nb[1]) == []

    def test_rejects_bad_edges(self):
        with pytest.raises(ValueError):
            CondIndepGraph(3, frozenset({(1, 1)}))
        with pytest.raises(ValueError):
            CondIndepGraph(3, frozenset({(0, 3)}))

    def test_hashable_and_equal_by_edges(self):
        a = CondIndepGraph(3, frozenset({(0, 1)}))
        b = CondIndepGraph(3, frozenset({(1, 0)}))
        assert a == b and hash(a) == hash(b)


class TestSampleCov:
    def test_from_batch_is_second_moment(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 3))
        S = SampleCov.from_batch(X)
        np.testing.assert_allclose(S.S, X.T @ X / 40, atol=1e-12)
        np.testing.assert_allclose(S.S, S.S.T, atol=0)

    def test_regularized_adds_scaled_trace_ridge(self):
        S = _sc(np.diag([1.0, 3.0]))
        R = S.regularized(1e-3)
        eps = 1e-3 * 4.0 / 2.0
        np.testing.assert_allclose(R.S, np.diag([1.0 + eps, 3.0 + eps]), rtol=1e-12)


class TestGaussianModel:
    def test_from_cov_round_trip(self):
        rng = np.random.default_rng(1)
        C = random_pd(rng, 4)
        m = GaussianModel.from_cov(C)
        np.testing.assert_allclose(m.cov @ m.prec, np.eye(4), atol=1e-9)
        assert m.graph.is_full

    def test_from_precision_respects_graph_zeros(self):
        P = np.array([[2.0, 0.5, 0.0], [0.5, 2.0, 0.5], [0.0, 0.5, 2.0]])
        m = GaussianModel.from_precision_matrix(P)
        assert m.graph.edges == frozenset({(0, 1), (1, 2)})
        assert m.prec[0, 2] == 0.0

    def test_rejects_inconsistent_pair(self):
        with pytest.raises(ValueError):
            GaussianModel(2, np.eye(2), 2.0 * np.eye(2), CondIndepGraph.empty(2))

    def test_rejects_offgraph_support(self):
        C = np.array([[1.0, 0.5], [0.5, 1.0]])
        with pytest.raises(ValueError):
            GaussianModel(2, C, np.linalg.inv(C), CondIndepGraph.empty(2))


class TestGraphCodelength:
    def test_two_nodes_empty(self):
        assert graph_codelength(CondIndepGraph.empty(2)) == pytest.approx(1.0)

    def test_six_nodes_empty(self):
        assert graph_codelength(CondIndepGraph.empty(6)) == pytest.approx(4.0)

    def test_six_nodes_five_edges(self):
        g = CondIndepGraph(6, frozenset({(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)}))
        expected = 4.0 + log_binomial(15, 5)
        np.testing.assert_allclose(graph_codelength(g), expected, rtol=1e-12)
        np.testing.assert_allclose(expected, 4.0 + math.log2(3003), rtol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_kraft_inequality_exhaustive(self, n):
        total = sum(2.0 ** -graph_codelength(g) for g in _all_graphs(n))
        assert total <= 1.0 + 1e-12


class TestCovarianceSelect:
    def test_full_graph_returns_s(self):
        rng = np.random.default_rng(2)
        S = random_pd(rng, 4)
        m = covariance_select(_sc(S), CondIndepGraph.full(4))
        np.testing.assert_allclose(m.cov, S, atol=1e-12)

    def test_empty_graph_returns_diagonal(self):
        rng = np.random.default_rng(3)
        S = random_pd(rng, 4)
        m = covariance_select(_sc(S), CondIndepGraph.empty(4))
        np.testing.assert_allclose(m.cov, np.diag(np.diag(S)), atol=1e-12)

    def test_chain_matches_generic_optimizer(self):
        rng = np.random.default_rng(4)
        chain = CondIndepGraph(3, frozenset({(0, 1), (1, 2)}))
        for _ in range(5):
            S = random_pd(rng, 3)
            m = covariance_select(_sc(S), chain)
            oracle = constrained_gaussian_mle(S, chain)
            np.testing.assert_allclose(m.cov, oracle, atol=1e-6)

    def test_moment_matching_and_zeros(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = int(rng.integers(3, 7))
            S = random_pd(rng, n)
            g = CondIndepGraph(
                n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)
                             if rng.random() < 0.4))
            m = covariance_select(_sc(S), g)
            for i in range(n):
                assert abs(m.cov[i, i] - S[i, i]) <= 1e-6
            for i, j in g.edges:
                assert abs(m.cov[i, j] - S[i, j]) <= 1e-6
            for i in range(n):
                for j in range(i + 1, n):
                    if (i, j) not in g.edges:
                        assert abs(m.prec[i, j]) <= 1e-8

    def test_output_is_constrained_likelihood_optimum(self):
        # Random pattern-respecting perturbations never improve the objective.
        rng = np.random.default_rng(6)
        S = random_pd(rng, 4)
        g = CondIndepGraph(4, frozenset({(0, 1), (1, 2), (2, 3)}))
        m = covariance_select(_sc(S), g)

        def loglik(prec):
            sign, logdet = np.linalg.slogdet(prec)
            if sign <= 0:
                return -np.inf
            return logdet - np.sum(S * prec)

        base = loglik(m.prec)
        free = [(i, i) for i in range(4)] + sorted(g.edges)
        for _ in range(60):
            delta = np.zeros((4, 4))
            for i, j in free:
                step = rng.standard_normal() * 1e-3
                delta[i, j] += step
                delta[j, i] = delta[i, j] if i != j else delta[i, j]
            assert loglik(m.prec + delta) <= base + 1e-10

    def test_rejects_non_pd(self):
        S = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValueError):
            covariance_select(_sc(S), CondIndepGraph.full(2))

    def test_nonconvergence_raises_with_iterate(self):
        rng = np.random.default_rng(7)
        S = random_pd(rng, 5)
        g = CondIndepGraph(5, frozenset({(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)}))
        with pytest.raises(ConvergenceError) as err:
            covariance_select(_sc(S), g, tol=1e-10, max_iter=1)
        assert err.value.last_iterate.shape[-2:] == (5, 5)


class TestGlasso:
    def test_identity_gives_diagonal_and_empty_graph(self):
        m = glasso(_sc(np.eye(4)), lam=0.1)
        assert m.graph.is_empty
        np.testing.assert_allclose(m.prec, np.eye(4), atol=1e-8)

    def test_zero_lambda_is_direct_inverse(self):
        rng = np.random.default_rng(8)
        for n in (2, 5, 10):
            S = random_pd(rng, n)
            m = glasso(_sc(S), lam=0.0)
            np.testing.assert_allclose(m.prec, np.linalg.inv(S), atol=1e-6)
            assert m.graph.is_full

    def test_lambda_above_kkt_threshold_empties_graph(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            S = random_pd(rng, n)
            off = np.abs(S - np.diag(np.diag(S)))
            lam = float(off.max()) * (1.0 + rng.random())
            m = glasso(_sc(S), lam)
            assert m.graph.is_empty
            np.testing.assert_allclose(np.diag(m.cov), np.diag(S), rtol=1e-8)

    def test_kkt_residual_bound_at_convergence(self):
        rng = np.random.default_rng(10)
        tol = 1e-7
        for _ in range(10):
            S = random_pd(rng, 5)
            lam = 0.05 * float(np.abs(S - np.diag(np.diag(S))).max())
            m = glasso(_sc(S), lam, tol=tol)
            W = m.cov
            # Subgradient optimality of the penalized objective, coordinatewise.
            grad = S - W
            scale = max(1.0, float(np.abs(S).max()))
            # The stopping rule bounds the per-sweep change of W, which maps to
            # the stationarity residual only up to a problem-dependent constant;
            # two orders of magnitude of headroom keeps this a real check while
            # staying insensitive to conditioning.
            slack = 100 * tol * scale
            for i in range(5):
                for j in range(5):
                    if i == j:
                        assert abs(grad[i, j]) <= slack
                    elif abs(m.prec[i, j]) > 1e-8:
                        assert abs(grad[i, j] + lam * np.sign(m.prec[i, j])) <= slack
                    else:
                        assert abs(grad[i, j]) <= lam + slack

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValueError):
            glasso(_sc(np.eye(2)), -0.1)


class TestGlassoPath:
    def test_single_empty_graph(self):
        graphs = glasso_path(_sc(np.eye(3)), [0.5])
        assert graphs == [CondIndepGraph.empty(3)]

    def test_dedup_identical_support(self):
        rng = np.random.default_rng(11)
        S = random_pd(rng, 3)
        top = float(np.abs(S - np.diag(np.diag(S))).max())
        graphs = glasso_path(_sc(S), [top * 2.0, top * 1.5])
        assert len(graphs) == 1
        assert graphs[0].is_empty

    def test_chain_path_recovers_true_support(self):
        # A chain-structured covariance: strong nearest-neighbor links only.
        # S is the exact inverse of a chain precision, so its inverse has
        # exact zeros off the chain and the unpenalized end of the path must
        # recover precisely the chain, not a denser graph.
        prec = np.eye(4) * 2.0
        for i in range(3):
            prec[i, i + 1] = prec[i + 1, i] = -0.8
        S = np.linalg.inv(prec)
        lams = default_lambda_grid(S)
        graphs = glasso_path(_sc(S), lams)
        chain = CondIndepGraph(4, frozenset({(0, 1), (1, 2), (2, 3)}))
        assert graphs[0].is_empty
        assert graphs[-1] == chain
        sizes = [g.n_edges for g in graphs]
        assert sizes == sorted(sizes)
        for small, big in zip(graphs, graphs[1:]):
            assert small.edges <= big.edges

    def test_order_of_first_appearance(self):
        rng = np.random.default_rng(12)
        S = random_pd(rng, 4)
        top = float(np.abs(S - np.diag(np.diag(S))).max())
        graphs = glasso_path(_sc(S), [top * 1.1, 0.0])
        assert graphs[0].is_empty
        assert graphs[-1].is_full

    def test_empty_lambda_list_rejected(self):
        with pytest.raises(ValueError):
            glasso_path(_sc(np.eye(2)), [])


class TestDefaultLambdaGrid:
    def test_descends_from_max_offdiag_to_zero(self):
        S = np.array([[1.0, 0.6, 0.1], [0.6, 1.0, 0.2], [0.1, 0.2, 1.0]])
        grid = default_lambda_grid(S)
        assert grid[0] == pytest.approx(0.6)
        assert grid[-1] == 0.0
        assert grid[-2] == pytest.approx(0.006)
        assert len(grid) == 17
        assert np.all(np.diff(grid) < 0)

    def test_diagonal_s_collapses_to_zero_only(self):
        grid = default_lambda_grid(np.eye(3))
        np.testing.assert_array_equal(grid, [0.0])
