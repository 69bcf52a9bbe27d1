"""Combine per-model codelengths into one universal codelength and a decision.

Two combiners: pick the single best penalized model (two-part MDL), or mix
all models with the universal integer code as the prior weight (never worse
than the best single model).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coders import Batch, CoderReport, default_gaussian_codelength, gamma_report, universal_gaussian_reports
from .covsel import GaussianModel
from .specfun import Bits

__all__ = ["DetectorConfig", "DetectionResult", "select_combine", "weighted_combine", "detect"]


@dataclass
class DetectorConfig:
    """Knobs for a single detection: combiner choice, threshold, and the
    universal-coder settings passed through to the report builders."""

    combiner: str = "weighted"
    tau: Bits = 0.0
    lambdas: list | None = None
    prior_weight: float = 1.0
    ridge_scale: float = 1e-3
    grid_count: int = 16
    grid_min_ratio: float = 0.01

    def __post_init__(self):
        if self.combiner not in ("weighted", "select"):
            raise ValueError(f"unknown combiner {self.combiner!r}")


@dataclass
class DetectionResult:
    default_bits: Bits
    combined_bits: Bits
    tau: Bits
    per_model: list = field(default_factory=list)
    selected: str | None = None

    @property
    def score(self) -> Bits:
        return self.default_bits - self.combined_bits

    @property
    def ood(self) -> bool:
        return self.combined_bits + self.tau < self.default_bits


def _penalized(reports) -> np.ndarray:
    if not reports:
        raise ValueError("need at least one coder report")
    return np.array([r.penalized_bits for r in reports])


def select_combine(reports) -> tuple:
    """Best single model: min over reports of penalized bits, ties to the
    smallest index. Returns (bits, label)."""
    pen = _penalized(reports)
    order = sorted(range(len(reports)), key=lambda i: (pen[i], reports[i].index))
    best = order[0]
    return float(pen[best]), reports[best].label


def weighted_combine(reports) -> Bits:
    """Codelength of the uniform mixture over all penalized models:
    -log2 sum_i 2^(-penalized_i), evaluated max-shifted for stability."""
    pen = _penalized(reports)
    top = pen.min()
    if not np.isfinite(top):
        return math.inf
    return float(top - math.log2(np.sum(np.exp2(top - pen))))


def detect(batch: Batch, default: GaussianModel,
           config: DetectorConfig | None = None) -> DetectionResult:
    """Score one batch against the default model.

    The score is default_bits - combined_bits: positive when some universal
    coder (plus its model and index costs) beats the default description,
    i.e. the larger the score, the stronger the evidence the batch is
    out-of-distribution. The decision compares the score against tau.
    """
    cfg = config or DetectorConfig()
    if batch.M < 2:
        raise ValueError("detection needs M >= 2")
    default_bits = default_gaussian_codelength(batch, default)
    reports = universal_gaussian_reports(
        batch, default, cfg.lambdas,
        prior_weight=cfg.prior_weight, ridge_scale=cfg.ridge_scale,
        grid_count=cfg.grid_count, grid_min_ratio=cfg.grid_min_ratio)
    reports.append(gamma_report(batch, default, index=len(reports) + 1))

    selected = None
    if cfg.combiner == "select":
        combined, selected = select_combine(reports)
    else:
        combined = weighted_combine(reports)
    per_model = [(r.label, float(r.penalized_bits)) for r in reports]
    return DetectionResult(default_bits=default_bits, combined_bits=combined,
                           tau=cfg.tau, per_model=per_model, selected=selected)
