"""Special functions and information-theoretic primitives.

Everything downstream counts in bits (base-2 logarithms). Differential
codelengths may legitimately be negative; +inf is reserved for divergence
short-circuits.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

Bits = float

# Normalizer of the universal integer code: log2(2.865064). With this
# constant, sum_{m>=1} 2^{-log_star(m)} is a Kraft-valid (<= 1) codelength
# assignment over the positive integers.
LOG_STAR_CONSTANT: Bits = math.log2(2.865064)


def log_star(m: float) -> Bits:
    """Iterated-logarithm codelength of an integer index.

    log*(m) = log2 m + log2 log2 m + ... keeping only the strictly positive
    iterates, plus the Kraft normalizing constant. Defined for real m >= 1.
    """
    if not m >= 1:
        raise ValueError(f"log_star requires m >= 1, got {m!r}")
    total = 0.0
    term = math.log2(m)
    while term > 0.0:
        total += term
        term = math.log2(term)
    return total + LOG_STAR_CONSTANT


def _positive_real(x, name: str):
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0):
        raise ValueError(f"{name} requires strictly positive arguments")
    return arr


def ln_gamma(x):
    """ln Gamma(x) for x > 0. Accepts scalars or arrays."""
    arr = _positive_real(x, "ln_gamma")
    out = special.gammaln(arr)
    return float(out) if arr.ndim == 0 else out


def digamma(x):
    """psi(x) = d/dx ln Gamma(x) for x > 0. Accepts scalars or arrays."""
    arr = _positive_real(x, "digamma")
    out = special.psi(arr)
    return float(out) if arr.ndim == 0 else out


def chi2_cdf(k: int, x):
    """CDF of the chi-square distribution with k degrees of freedom.

    Evaluates the regularized lower incomplete gamma function P(k/2, x/2).
    """
    if not float(k).is_integer() or k < 1:
        raise ValueError(f"chi2_cdf requires an integer dof k >= 1, got {k!r}")
    arr = np.asarray(x, dtype=float)
    if not np.all(arr >= 0):
        raise ValueError("chi2_cdf requires x >= 0")
    out = special.gammainc(k / 2.0, arr / 2.0)
    return float(out) if arr.ndim == 0 else out


def log_binomial(m: int, b: int) -> Bits:
    """log2 of the binomial coefficient C(m, b).

    Exact to double precision when one side of the coefficient is short
    (the common case here: a few occupied bins out of astronomically many),
    log-gamma differences otherwise. Stable for m up to 2**60.
    """
    m = int(m)
    b = int(b)
    if m < 0 or b < 0 or b > m:
        raise ValueError(f"log_binomial requires 0 <= b <= m, got m={m}, b={b}")
    k = min(b, m - b)
    if k == 0:
        return 0.0
    if k <= 512:
        # C(m,k) = prod_{i<k} (m-i) / k!
        i = np.arange(k, dtype=float)
        return float(np.sum(np.log2(m - i)) - special.gammaln(k + 1.0) / math.log(2.0))
    lg = special.gammaln(m + 1.0) - special.gammaln(b + 1.0) - special.gammaln(m - b + 1.0)
    return float(lg / math.log(2.0))


def entropy(p) -> Bits:
    """Shannon entropy in bits of a probability vector, with 0 log 0 := 0."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("entropy expects a nonempty 1-D probability vector")
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("entropy requires nonnegative probabilities")
    total = float(arr.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, expected 1 within 1e-9")
    nz = arr[arr > 0]
    return float(-np.sum(nz * np.log2(nz)))
