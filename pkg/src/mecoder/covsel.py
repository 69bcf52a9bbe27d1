"""Graph-structured zero-mean Gaussian models.

Covers structure search (graphical lasso over a regularizer path), constrained
maximum-likelihood fitting for a fixed conditional-independence graph
(covariance selection), and the two-part codelength of a graph itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .specfun import Bits, log_binomial

__all__ = [
    "ConvergenceError",
    "CondIndepGraph",
    "SampleCov",
    "GaussianModel",
    "glasso",
    "glasso_path",
    "covariance_select",
    "graph_codelength",
    "default_lambda_grid",
]


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its sweep budget.

    The last iterate (a working covariance matrix, or a stack of them) is
    attached so callers can inspect how far the solve got.
    """

    def __init__(self, message: str, last_iterate: np.ndarray):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class CondIndepGraph:
    """Undirected graph over n variables; absent edges mean zero partial
    correlation (a zero in the precision matrix)."""

    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs n >= 1, got {self.n}")
        norm = set()
        for pair in self.edges:
            i, j = pair
            if i == j:
                raise ValueError(f"self-loop ({i},{j}) not allowed")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def empty(cls, n: int) -> "CondIndepGraph":
        return cls(n, frozenset())

    @classmethod
    def full(cls, n: int) -> "CondIndepGraph":
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def from_precision(cls, prec: np.ndarray, threshold: float = 1e-8) -> "CondIndepGraph":
        """Support of the off-diagonal of a precision matrix."""
        P = np.asarray(prec, dtype=float)
        n = P.shape[0]
        edges = set()
        for i in range(n):
            for j in range(i + 1, n):
                if abs(P[i, j]) > threshold or abs(P[j, i]) > threshold:
                    edges.add((i, j))
        return cls(n, frozenset(edges))

    @property
    def max_edges(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def is_full(self) -> bool:
        return self.n_edges == self.max_edges

    @property
    def is_empty(self) -> bool:
        return self.n_edges == 0

    def neighbors(self) -> list:
        """Adjacency lists, one sorted integer array per node."""
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return [np.array(sorted(a), dtype=np.intp) for a in adj]


@dataclass
class SampleCov:
    """Empirical second-moment matrix of a zero-mean batch."""

    n: int
    S: np.ndarray
    count: int

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float)
        if self.S.shape != (self.n, self.n):
            raise ValueError(f"S must be {self.n}x{self.n}, got {self.S.shape}")
        if not np.all(np.isfinite(self.S)):
            raise ValueError("S must be finite")
        if np.max(np.abs(self.S - self.S.T)) > 1e-10:
            raise ValueError("S must be symmetric (tolerance 1e-10)")
        if np.any(np.diag(self.S) < 0):
            raise ValueError("S must have a nonnegative diagonal")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    @classmethod
    def from_batch(cls, data: np.ndarray) -> "SampleCov":
        X = np.asarray(data, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("expected an M x n array with M >= 1")
        M, n = X.shape
        S = X.T @ X / M
        return cls(n, (S + S.T) / 2.0, M)

    def regularized(self, scale: float = 1e-3) -> "SampleCov":
        """Ridge lift S + eps*I with eps = scale * trace(S)/n, so moments from
        fewer than n samples become usable by the solvers."""
        eps = scale * float(np.trace(self.S)) / self.n
        return SampleCov(self.n, self.S + eps * np.eye(self.n), self.count)


@dataclass
class GaussianModel:
    """Zero-mean Gaussian with covariance, precision, and the graph carried
    by the precision's support."""

    n: int
    cov: np.ndarray
    prec: np.ndarray
    graph: CondIndepGraph

    def __post_init__(self):
        self.cov = np.asarray(self.cov, dtype=float)
        self.prec = np.asarray(self.prec, dtype=float)
        if self.cov.shape != (self.n, self.n) or self.prec.shape != (self.n, self.n):
            raise ValueError("cov/prec shape mismatch")
        if self.graph.n != self.n:
            raise ValueError("graph dimension mismatch")
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-10:
            raise ValueError("cov must be symmetric (tolerance 1e-10)")
        mask = _offgraph_mask(self.graph)
        if mask.any() and np.max(np.abs(self.prec[mask])) > 1e-8:
            raise ValueError("precision has support outside the graph")
        resid = np.linalg.norm(self.cov @ self.prec - np.eye(self.n))
        if not resid <= 1e-8:
            raise ValueError(f"cov and prec are not inverses (residual {resid:.2e})")

    @classmethod
    def from_cov(cls, cov: np.ndarray, graph: CondIndepGraph | None = None) -> "GaussianModel":
        C = np.asarray(cov, dtype=float)
        C = (C + C.T) / 2.0
        prec = _sym_inv(C)
        if graph is None:
            graph = CondIndepGraph.from_precision(prec)
        prec = _zero_offgraph(prec, graph)
        return cls(C.shape[0], _sym_inv(prec), prec, graph)

    @classmethod
    def from_precision_matrix(cls, prec: np.ndarray, graph: CondIndepGraph | None = None) -> "GaussianModel":
        P = np.asarray(prec, dtype=float)
        P = (P + P.T) / 2.0
        if graph is None:
            graph = CondIndepGraph.from_precision(P)
        P = _zero_offgraph(P, graph)
        return cls(P.shape[0], _sym_inv(P), P, graph)


def _offgraph_mask(graph: CondIndepGraph) -> np.ndarray:
    mask = ~np.eye(graph.n, dtype=bool)
    for i, j in graph.edges:
        mask[i, j] = mask[j, i] = False
    return mask


def _zero_offgraph(P: np.ndarray, graph: CondIndepGraph) -> np.ndarray:
    out = P.copy()
    out[_offgraph_mask(graph)] = 0.0
    return out


def _sym_inv(A: np.ndarray) -> np.ndarray:
    inv = np.linalg.inv(A)
    return (inv + inv.T) / 2.0


def _require_pd(S: np.ndarray, what: str) -> None:
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ValueError(f"{what} is not positive definite") from None


def graph_codelength(graph: CondIndepGraph) -> Bits:
    """Two-part code for a graph: edge count uniform over 0..max, then the
    particular subset of that size."""
    E = graph.max_edges
    return math.log2(E + 1) + log_binomial(E, graph.n_edges)


def default_lambda_grid(S, count: int = 16, min_ratio: float = 0.01,
                        include_zero: bool = True) -> np.ndarray:
    """Descending log-spaced regularizer grid from max offdiag |S| down to
    min_ratio times it, optionally ending at exactly 0."""
    A = S.S if isinstance(S, SampleCov) else np.asarray(S, dtype=float)
    if count < 1 or not (0 < min_ratio <= 1):
        raise ValueError("need count >= 1 and 0 < min_ratio <= 1")
    off = A[~np.eye(A.shape[0], dtype=bool)]
    top = float(np.max(np.abs(off))) if off.size else 0.0
    if top <= 0:
        grid = np.array([])
    else:
        grid = np.geomspace(top, top * min_ratio, count)
    if include_zero:
        grid = np.append(grid, 0.0)
    if grid.size == 0:
        raise ValueError("empty lambda grid (no off-diagonal mass and include_zero=False)")
    return grid


# ---------------------------------------------------------------------------
# Covariance selection: constrained MLE for a fixed graph.
#
# Classic iterative proportional fitting on the working covariance W: for each
# column j, the sub-problem only involves the neighbors of j. At the fixed
# point, W matches S on the diagonal and on every edge, and W^{-1} is zero on
# every non-edge. The engine below solves a whole stack of S matrices at once
# because the predictive coder needs the fit at every prefix of a batch.
# ---------------------------------------------------------------------------

def _covsel_stack(Ss: np.ndarray, graph: CondIndepGraph, tol: float,
                  max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    """Fit one graph to a (P, n, n) stack of PD moment matrices.

    Returns (W, Theta): working covariances and precisions, both (P, n, n),
    with Theta exactly zero off the graph.
    """
    P, n, _ = Ss.shape
    nbrs = graph.neighbors()
    others = [np.delete(np.arange(n), j) for j in range(n)]
    W = Ss.copy()
    scale = np.maximum(1.0, np.abs(Ss).reshape(P, -1).max(axis=1))

    for sweep in range(max_iter):
        delta = np.zeros(P)
        for j in range(n):
            nb = nbrs[j]
            o = others[j]
            if nb.size == 0:
                new = np.zeros((P, n - 1))
            else:
                A = W[:, nb[:, None], nb[None, :]]
                b = Ss[:, nb, j]
                beta = np.linalg.solve(A, b[:, :, None])[:, :, 0]
                new = np.einsum("pik,pk->pi", W[:, o[:, None], nb[None, :]], beta)
            delta = np.maximum(delta, np.abs(new - W[:, o, j]).max(axis=1))
            W[:, o, j] = new
            W[:, j, o] = new
        if np.all(delta <= tol * scale):
            break
    else:
        raise ConvergenceError(
            f"covariance selection did not converge in {max_iter} sweeps", W)

    # Recover the precision column by column: the same reduced solve gives the
    # regression coefficients of j on its neighbors, from which the j-th
    # column of Theta follows.
    Theta = np.zeros_like(W)
    for j in range(n):
        nb = nbrs[j]
        if nb.size == 0:
            Theta[:, j, j] = 1.0 / W[:, j, j]
            continue
        A = W[:, nb[:, None], nb[None, :]]
        b = Ss[:, nb, j]
        beta = np.linalg.solve(A, b[:, :, None])[:, :, 0]
        t_jj = 1.0 / (W[:, j, j] - np.einsum("pk,pk->p", W[:, nb, j], beta))
        Theta[:, j, j] = t_jj
        Theta[:, nb, j] = -beta * t_jj[:, None]
    Theta = (Theta + Theta.transpose(0, 2, 1)) / 2.0
    return W, Theta


def covariance_select(S: SampleCov, graph: CondIndepGraph, tol: float = 1e-10,
                      max_iter: int = 500) -> GaussianModel:
    """Maximum-likelihood Gaussian whose moments match S on the graph's edges
    and diagonal, with precision zero everywhere else."""
    if graph.n != S.n:
        raise ValueError(f"graph has n={graph.n}, sample covariance n={S.n}")
    _require_pd(S.S, "sample covariance")
    n = S.n
    if graph.is_full:
        prec = _sym_inv(S.S)
        return GaussianModel(n, S.S.copy(), prec, graph)
    if graph.is_empty:
        d = np.diag(S.S).copy()
        return GaussianModel(n, np.diag(d), np.diag(1.0 / d), graph)
    W, Theta = _covsel_stack(S.S[None, :, :], graph, tol, max_iter)
    prec = _zero_offgraph(Theta[0], graph)
    cov = _sym_inv(prec)
    return GaussianModel(n, cov, prec, graph)


# ---------------------------------------------------------------------------
# Graphical lasso: block coordinate descent with an off-diagonal-only l1
# penalty, so the unpenalized diagonal satisfies W_ii = S_ii throughout.
# ---------------------------------------------------------------------------

def _soft(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def _lasso_cd(W11: np.ndarray, s12: np.ndarray, lam: float, beta: np.ndarray,
              tol: float, max_sweeps: int = 200) -> np.ndarray:
    """Coordinate descent for min_b 0.5 b'W11 b - s12'b + lam*|b|_1."""
    k = s12.size
    for _ in range(max_sweeps):
        worst = 0.0
        for idx in range(k):
            old = beta[idx]
            r = s12[idx] - W11[idx] @ beta + W11[idx, idx] * old
            new = _soft(r, lam) / W11[idx, idx]
            if new != old:
                beta[idx] = new
                worst = max(worst, abs(new - old))
        if worst <= tol:
            break
    return beta


def _recover_theta(W: np.ndarray, B: np.ndarray, others: list) -> np.ndarray:
    n = W.shape[0]
    Theta = np.zeros_like(W)
    for j in range(n):
        o = others[j]
        beta = B[j]
        t_jj = 1.0 / (W[j, j] - W[o, j] @ beta)
        Theta[j, j] = t_jj
        Theta[o, j] = -beta * t_jj
    return (Theta + Theta.T) / 2.0


def _glasso_objective(Theta: np.ndarray, S: np.ndarray, lam: float) -> float:
    sign, logdet = np.linalg.slogdet(Theta)
    if sign <= 0:
        return -np.inf
    pen = np.abs(Theta).sum() - np.abs(np.diag(Theta)).sum()
    return float(logdet - np.sum(S * Theta) - lam * pen)


def _kkt_residual(W: np.ndarray, Theta: np.ndarray, S: np.ndarray, lam: float) -> float:
    """Worst violation of the stationarity conditions, in covariance units."""
    n = W.shape[0]
    resid = np.max(np.abs(np.diag(W) - np.diag(S))) if n else 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d = W[i, j] - S[i, j]
            if Theta[i, j] != 0.0:
                resid = max(resid, abs(d - lam * np.sign(Theta[i, j])))
            else:
                resid = max(resid, max(0.0, abs(d) - lam))
    return resid


def _glasso_core(S: np.ndarray, lam: float, tol: float, max_iter: int,
                 W0: np.ndarray | None = None, B0: np.ndarray | None = None):
    """Returns (W, Theta, B, sweeps). Raises ConvergenceError on a stall."""
    n = S.shape[0]
    others = [np.delete(np.arange(n), j) for j in range(n)]
    W = S.copy() if W0 is None else W0.copy()
    np.fill_diagonal(W, np.diag(S))
    B = np.zeros((n, n - 1)) if B0 is None else B0.copy()
    scale = max(1.0, float(np.abs(S).max()))
    obj_tol = tol * scale
    inner_tol = max(tol * 1e-2, 1e-14) * scale

    if n == 1:
        Theta = np.array([[1.0 / S[0, 0]]])
        return S.copy(), Theta, B, 0

    prev_obj = None
    for sweep in range(1, max_iter + 1):
        for j in range(n):
            o = others[j]
            W11 = W[o[:, None], o[None, :]]
            s12 = S[o, j]
            beta = _lasso_cd(W11, s12, lam, B[j], inner_tol)
            w12 = W11 @ beta
            W[o, j] = w12
            W[j, o] = w12
        Theta = _recover_theta(W, B, others)
        obj = _glasso_objective(Theta, S, lam)
        if prev_obj is not None and abs(obj - prev_obj) <= obj_tol:
            if _kkt_residual(W, Theta, S, lam) <= 5.0 * tol * scale:
                return W, Theta, B, sweep
        prev_obj = obj
    raise ConvergenceError(f"glasso(lambda={lam}) did not converge in {max_iter} sweeps", W)


def glasso(S: SampleCov, lam: float, tol: float = 1e-7, max_iter: int = 200,
           support_threshold: float = 1e-8) -> GaussianModel:
    """L1-penalized precision estimate; the penalty applies off-diagonal only."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    A = S.S
    if lam == 0.0:
        _require_pd(A, "sample covariance (lambda = 0 needs PD)")
    else:
        w = np.linalg.eigvalsh(A)
        if w[0] < -1e-10 * max(1.0, float(w[-1])):
            raise ValueError("sample covariance is not positive semidefinite")
    n = S.n
    if lam == 0.0:
        Theta = _sym_inv(A)
    else:
        _, Theta, _, _ = _glasso_core(A, lam, tol, max_iter)
    graph = CondIndepGraph.from_precision(Theta, support_threshold)
    prec = _zero_offgraph(Theta, graph)
    return GaussianModel(n, _sym_inv(prec), prec, graph)


def glasso_path(S: SampleCov, lambdas) -> list:
    """Unique graphs along a regularizer path, in order of first appearance."""
    lams = [float(v) for v in np.asarray(lambdas, dtype=float).ravel()]
    if not lams:
        raise ValueError("lambda list must be non-empty")
    if any(v < 0 for v in lams):
        raise ValueError("lambdas must be >= 0")
    A = S.S
    n = S.n
    seen: dict[CondIndepGraph, None] = {}
    W = None
    B = None
    for lam in lams:
        if lam == 0.0:
            _require_pd(A, "sample covariance (lambda = 0 needs PD)")
            Theta = _sym_inv(A)
        else:
            W, Theta, B, _ = _glasso_core(A, lam, tol=1e-7, max_iter=200, W0=W, B0=B)
        g = CondIndepGraph.from_precision(Theta)
        seen.setdefault(g, None)
    return list(seen.keys())
