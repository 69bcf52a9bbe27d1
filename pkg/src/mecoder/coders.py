"""Codelength assignment for batches.

Four coder families: the known default Gaussian, a path of sparse-Gaussian
predictive coders (one per conditional-independence graph), a Gamma radial
predictive coder, and 1-D histogram coders. All codelengths are differential
(against Lebesgue measure), in bits; the common quantization constant cancels
in every comparison we make, so none is added.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .covsel import (
    CondIndepGraph,
    GaussianModel,
    SampleCov,
    _covsel_stack,
    default_lambda_grid,
    glasso_path,
    graph_codelength,
)
from .specfun import Bits, entropy, log_binomial, log_star

__all__ = [
    "Batch",
    "CoderReport",
    "default_gaussian_codelength",
    "universal_gaussian_reports",
    "gamma_report",
    "gamma_mle",
    "histogram_codelength",
    "kt_bits",
    "histogram_weighted_score",
    "cdf_transform",
]

_LN2 = math.log(2.0)
_LOG2_2PI = math.log2(2.0 * math.pi)


@dataclass
class Batch:
    """M samples of dimension n, the unit of detection."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError("batch data must be an M x n array with M >= 1")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("batch data must be finite")

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]


@dataclass
class CoderReport:
    """One model's cost split: bits to describe the model, bits for the data
    under it, and the integer index charged to the model-index code."""

    label: str
    model_bits: Bits
    data_bits: Bits
    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("index must be >= 1")
        if not (np.isfinite(self.model_bits) and self.model_bits >= 0):
            raise ValueError("model_bits must be finite and >= 0")
        if math.isnan(self.data_bits) or self.data_bits == -math.inf:
            raise ValueError("data_bits must be finite or +inf")

    @property
    def penalized_bits(self) -> Bits:
        return self.data_bits + self.model_bits + log_star(self.index)


def default_gaussian_codelength(batch: Batch, model: GaussianModel) -> Bits:
    """-log2 of the batch density under a known zero-mean Gaussian."""
    if batch.n != model.n:
        raise ValueError(f"batch has n={batch.n}, model has n={model.n}")
    sign, logdet = np.linalg.slogdet(model.cov)
    if sign <= 0:
        raise ValueError("model covariance is not positive definite")
    X = batch.data
    quad = float(np.einsum("mi,ij,mj->", X, model.prec, X))
    return batch.M * (batch.n * _LOG2_2PI + logdet / _LN2) / 2.0 + quad / (2.0 * _LN2)


def _gaussian_bits_one(x: np.ndarray, model: GaussianModel) -> Bits:
    sign, logdet = np.linalg.slogdet(model.cov)
    quad = float(x @ model.prec @ x)
    return (x.size * _LOG2_2PI + logdet / _LN2) / 2.0 + quad / (2.0 * _LN2)


def _prefix_moments(X: np.ndarray) -> np.ndarray:
    """Running second-moment sums: out[i] = sum_{t<=i+1} x_t x_t', shape (M, n, n)."""
    return np.cumsum(np.einsum("mi,mj->mij", X, X), axis=0)


def _predictive_gaussian_bits(X: np.ndarray, Seff: np.ndarray, graph: CondIndepGraph,
                              tol: float, max_iter: int) -> float:
    """Sum over i of -log2 N(x_{i+1}; 0, fit of `graph` to Seff[i]).

    Seff[i] is the (regularized) moment matrix built from x_1..x_{i+1-1};
    X here holds the predicted samples x_2..x_M aligned with Seff.
    """
    n = X.shape[1]
    if graph.is_empty:
        v = np.diagonal(Seff, axis1=1, axis2=2)
        bits = 0.5 * (_LOG2_2PI + np.log2(v)) + X * X / (2.0 * v * _LN2)
        return float(bits.sum())
    if graph.is_full:
        Theta = np.linalg.inv(Seff)
    else:
        _, Theta = _covsel_stack(Seff, graph, tol, max_iter)
    sign, logdet = np.linalg.slogdet(Theta)
    if np.any(sign <= 0):
        raise ValueError("prefix covariance fit lost positive definiteness")
    quad = np.einsum("pi,pij,pj->p", X, Theta, X)
    bits = (n * _LOG2_2PI - logdet / _LN2) / 2.0 + quad / (2.0 * _LN2)
    return float(bits.sum())


def universal_gaussian_reports(batch: Batch, default: GaussianModel,
                               lambdas=None, *, prior_weight: float = 1.0,
                               ridge_scale: float = 1e-3,
                               grid_count: int = 16, grid_min_ratio: float = 0.01,
                               covsel_tol: float = 1e-8, covsel_max_iter: int = 400) -> list:
    """One predictive-MDL report per unique graph along the lasso path.

    Each report codes x_1 under the detection-time default model, then every
    later sample under the graph's constrained MLE fitted to the samples seen
    so far. With prior_weight k > 0 the prefix moments are shrunk toward the
    default covariance as if k pseudo-samples of it had been observed, which
    keeps the early fits usable; prior_weight = 0 falls back to a plain ridge
    on the prefix moments.
    """
    if batch.n != default.n:
        raise ValueError(f"batch has n={batch.n}, default model has n={default.n}")
    if batch.M < 2:
        raise ValueError("predictive coding needs M >= 2")
    if prior_weight < 0:
        raise ValueError("prior_weight must be >= 0")
    X = batch.data
    M, n = X.shape

    S_full = SampleCov.from_batch(X).regularized(ridge_scale)
    if lambdas is None:
        lambdas = default_lambda_grid(S_full, count=grid_count, min_ratio=grid_min_ratio)
    graphs = glasso_path(S_full, lambdas)

    sums = _prefix_moments(X)[:-1]                      # prefix i = 1..M-1
    counts = np.arange(1, M, dtype=float)[:, None, None]
    if prior_weight > 0:
        Seff = (sums + prior_weight * default.cov) / (counts + prior_weight)
    else:
        tr = np.trace(sums, axis1=1, axis2=2) / counts[:, 0, 0]
        eps = 1e-3 * tr / n
        Seff = sums / counts + eps[:, None, None] * np.eye(n)
    Seff = (Seff + Seff.transpose(0, 2, 1)) / 2.0

    first = _gaussian_bits_one(X[0], default)
    predicted = X[1:]
    reports = []
    for k, g in enumerate(graphs, start=1):
        data_bits = first + _predictive_gaussian_bits(
            predicted, Seff, g, covsel_tol, covsel_max_iter)
        reports.append(CoderReport(label=f"gaussian-{k}",
                                   model_bits=graph_codelength(g),
                                   data_bits=data_bits, index=k))
    return reports


# ---------------------------------------------------------------------------
# Gamma radial coder: the maximum-entropy family matching E[r^2] and E[ln r^2]
# of the squared norms. Density over x in R^n:
#   f(x) = Gamma(n/2)/pi^(n/2) * beta^alpha/Gamma(alpha) * (r^2)^(alpha-n/2) * exp(-beta r^2)
# which is the standard normal when (alpha, beta) = (n/2, 1/2).
# ---------------------------------------------------------------------------

def _gamma_shape_newton(s: np.ndarray, max_iter: int = 100):
    """Solve ln(a) - psi(a) = s for each s > 0. Returns (alpha, failed mask)."""
    s = np.asarray(s, dtype=float)
    failed = ~(s > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (3.0 - s + np.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    failed |= ~np.isfinite(a) | (a <= 0)
    a = np.where(failed, np.nan, a)
    converged = np.zeros_like(failed)
    for _ in range(max_iter):
        active = ~failed & ~converged
        if not active.any():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.log(a) - special.psi(a) - s
            fp = 1.0 / a - special.polygamma(1, a)
            anew = a - f / fp
        blew_up = active & (~np.isfinite(anew) | (anew <= 0))
        failed |= blew_up
        step_ok = active & ~blew_up
        converged |= step_ok & (np.abs(anew - a) <= 1e-12 * np.maximum(np.abs(a), 1.0))
        a = np.where(step_ok, anew, a)
    failed |= ~converged
    return a, failed


def gamma_mle(r2) -> tuple:
    """(alpha, beta) maximum-likelihood fit of a Gamma law to positive values.

    Returns None if the fit degenerates (fewer than 2 values, zero spread in
    the logs, or a diverging Newton iteration).
    """
    r2 = np.asarray(r2, dtype=float)
    if np.any(r2 <= 0):
        raise ValueError("gamma_mle needs strictly positive inputs")
    if r2.size < 2:
        return None
    mean = float(r2.mean())
    s = math.log(mean) - float(np.log(r2).mean())
    a, failed = _gamma_shape_newton(np.array([s]))
    if failed[0]:
        return None
    return float(a[0]), float(a[0]) / mean


def gamma_report(batch: Batch, default: GaussianModel, index: int = 1) -> CoderReport:
    """Predictive-MDL report for the Gamma radial family.

    x_1 is coded under the default model; each later sample under the Gamma
    fit to the squared norms seen so far, falling back to the chi-square_n
    parameters (alpha, beta) = (n/2, 1/2) whenever the fit degenerates.
    """
    if batch.n != default.n:
        raise ValueError(f"batch has n={batch.n}, default model has n={default.n}")
    if batch.M < 2:
        raise ValueError("predictive coding needs M >= 2")
    X = batch.data
    M, n = X.shape
    r2 = np.einsum("mi,mi->m", X, X)
    if np.any(r2 <= 0):
        raise ValueError("zero-norm sample: Gamma radial density is singular at r=0")

    counts = np.arange(1, M, dtype=float)
    means = np.cumsum(r2)[:-1] / counts
    s = np.log(means) - np.cumsum(np.log(r2))[:-1] / counts
    alpha, failed = _gamma_shape_newton(s)
    failed |= counts < 2
    alpha = np.where(failed, n / 2.0, alpha)
    beta = np.where(failed, 0.5, alpha / means)

    r2next = r2[1:]
    ln_f = (special.gammaln(n / 2.0) - (n / 2.0) * math.log(math.pi)
            + alpha * np.log(beta) - special.gammaln(alpha)
            + (alpha - n / 2.0) * np.log(r2next) - beta * r2next)
    data_bits = _gaussian_bits_one(X[0], default) - float(ln_f.sum()) / _LN2
    return CoderReport(label="gamma", model_bits=0.0, data_bits=data_bits, index=index)


# ---------------------------------------------------------------------------
# 1-D histogram coders on [0, 1).
# ---------------------------------------------------------------------------

def _as_unit_samples(u) -> np.ndarray:
    arr = u.data[:, 0] if isinstance(u, Batch) else np.asarray(u, dtype=float)
    if isinstance(u, Batch) and u.n != 1:
        raise ValueError("histogram coders take 1-D batches")
    arr = np.ravel(arr)
    if arr.size < 1:
        raise ValueError("empty batch")
    if np.any(arr < 0) or np.any(arr >= 1) or np.any(np.isnan(arr)):
        raise ValueError("histogram samples must lie in [0, 1)")
    return arr


def kt_bits(symbols, b: int) -> Bits:
    """Krichevsky-Trofimov sequential codelength of a symbol sequence over an
    alphabet of size b: -sum_t log2 (count_t(sym)+1/2)/(t+b/2)."""
    if b < 1:
        raise ValueError("alphabet size must be >= 1")
    sym = np.asarray(symbols)
    if sym.size == 0:
        return 0.0
    if not np.issubdtype(sym.dtype, np.integer):
        raise ValueError("symbols must be integers")
    if sym.min() < 0 or sym.max() >= b:
        raise ValueError("symbol outside [0, b)")
    M = sym.size
    counts = np.bincount(sym, minlength=b).astype(float)
    # Closed form of the sequential product, via log-gamma.
    num = np.sum(special.gammaln(counts + 0.5) - special.gammaln(0.5))
    den = special.gammaln(M + b / 2.0) - special.gammaln(b / 2.0)
    return float((den - num) / _LN2)


def histogram_codelength(u, m: int) -> Bits:
    """Codelength of 1-D samples under an m-bin equal-width histogram coder,
    relative to the uniform default (which costs 0)."""
    arr = _as_unit_samples(u)
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    M = arr.size
    if m == 1:
        return 0.0
    q = np.floor(arr * m).astype(np.int64)
    if m <= M:
        p_hat = np.bincount(q, minlength=m) / M
        lq = M * entropy(p_hat) + (m - 1) / 2.0 * math.log2(M)
    else:
        occupied, inverse = np.unique(q, return_inverse=True)
        b = occupied.size
        lq = math.log2(M) + log_binomial(m, b) + kt_bits(inverse, b)
    return lq - M * math.log2(m)


def histogram_weighted_score(u, m_grid=None, tau: Bits = 0.0, *,
                             max_exponent: int = 40) -> tuple:
    """Weighted histogram detector against the U[0,1) default.

    Returns (score, ood) with score = -combined codelength (the uniform
    default codes at 0 bits). Any exact duplicate value forces (+inf, True):
    ever-finer histograms then code the batch arbitrarily well, so the
    weighted sum diverges.
    """
    arr = _as_unit_samples(u)
    if np.unique(arr).size < arr.size:
        return math.inf, True
    if m_grid is None:
        m_grid = [2 ** j for j in range(max_exponent + 1)]
    else:
        m_grid = [int(m) for m in m_grid]
    if len(m_grid) == 0:
        raise ValueError("m_grid must be non-empty")
    penalized = np.array([histogram_codelength(arr, m) + log_star(idx)
                          for idx, m in enumerate(m_grid, start=1)])
    top = penalized.min()
    combined = top - math.log2(np.sum(np.exp2(top - penalized)))
    score = -combined
    return float(score), bool(combined + tau < 0)


def cdf_transform(x, cdf) -> np.ndarray:
    """Push 1-D samples through a CDF onto [0, 1), clamping to 1 - 2**-52.

    The function is checked for monotonicity on the observed inputs.
    """
    arr = np.ravel(np.asarray(x, dtype=float))
    u = np.asarray(cdf(arr), dtype=float)
    if u.shape != arr.shape:
        raise ValueError("cdf must map samples elementwise")
    if np.any(np.isnan(u)) or np.any(u < -1e-12) or np.any(u > 1 + 1e-12):
        raise ValueError("cdf values must lie in [0, 1]")
    order = np.argsort(arr, kind="stable")
    if np.any(np.diff(u[order]) < -1e-12):
        raise ValueError("cdf is not nondecreasing on the inputs")
    return np.clip(u, 0.0, 1.0 - 2.0 ** -52)
