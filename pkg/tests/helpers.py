"""Shared test utilities: profile switch, a vectorized integer-code mirror,
and an independent constrained-MLE oracle used to cross-check covariance
selection."""
import os

import numpy as np
from scipy import optimize

from mecoder.specfun import LOG_STAR_CONSTANT


def full_profile() -> bool:
    """Opt into the long-running statistical checks with
    MECODER_TEST_PROFILE=full (default is the fast smoke profile)."""
    return os.environ.get("MECODER_TEST_PROFILE", "smoke") == "full"


def log_star_vec(ms) -> np.ndarray:
    """Vectorized mirror of specfun.log_star, for million-term Kraft sums."""
    cur = np.log2(np.asarray(ms, dtype=float))
    total = np.full(cur.shape, LOG_STAR_CONSTANT)
    while True:
        pos = cur > 0
        if not pos.any():
            return total
        total[pos] += cur[pos]
        nxt = np.zeros_like(cur)
        nxt[pos] = np.log2(cur[pos])
        cur = nxt


def constrained_gaussian_mle(S, graph) -> np.ndarray:
    """Independent route to the graph-constrained Gaussian MLE.

    Generic quasi-Newton minimization of tr(S @ Theta) - logdet(Theta) over
    the free precision entries (diagonal plus graph edges), returning the
    implied covariance. Deliberately shares no code with the iterative
    fitter it is used to check.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    idx = [(i, i) for i in range(n)] + sorted(graph.edges)

    def unpack(v):
        T = np.zeros((n, n))
        for val, (i, j) in zip(v, idx):
            T[i, j] = T[j, i] = val
        return T

    def fg(v):
        T = unpack(v)
        sign, logdet = np.linalg.slogdet(T)
        if sign <= 0 or not np.isfinite(logdet):
            # Outside the PD cone: a large value makes the line search back off.
            return 1e12, np.zeros(len(v))
        G = S - np.linalg.inv(T)
        grad = np.array([(1.0 if i == j else 2.0) * G[i, j] for i, j in idx])
        return float(np.sum(S * T) - logdet), grad

    x0 = np.array([1.0 / S[i, i] if i == j else 0.0 for i, j in idx])
    res = optimize.minimize(fg, x0, jac=True, method="L-BFGS-B",
                            options={"maxiter": 5000, "ftol": 1e-16, "gtol": 1e-12})
    return np.linalg.inv(unpack(res.x))


def random_pd(rng, n: int, jitter: float = 0.5) -> np.ndarray:
    """A random well-conditioned PD matrix."""
    A = rng.standard_normal((n, n))
    return A @ A.T / n + jitter * np.eye(n)
