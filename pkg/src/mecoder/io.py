"""File formats and run configuration for the CLI.

Batches travel as CSV (one sample per row, optional single header line) or as
MECB, a little-endian binary format: 4 magic bytes "MECB", u32 n, u32 M, then
M*n float64 values row-major. CSV writing uses shortest round-trip reprs so a
CSV -> MECB -> CSV cycle is bit-exact.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .coders import Batch

__all__ = [
    "MECB_MAGIC",
    "read_batch",
    "read_batch_csv",
    "write_batch_csv",
    "read_batch_mecb",
    "write_batch_mecb",
    "read_covariance_csv",
    "write_matrix_csv",
    "RunConfig",
    "load_run_config",
    "report_schema",
    "validate_report",
    "dump_json",
]

MECB_MAGIC = b"MECB"


def _parse_csv_rows(text: str, what: str) -> np.ndarray:
    rows = []
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{what}: empty file")
    start = 0
    try:
        [float(tok) for tok in lines[0].split(",")]
    except ValueError:
        start = 1  # header row
    if start == len(lines):
        raise ValueError(f"{what}: no data rows")
    width = None
    for ln in lines[start:]:
        toks = [t.strip() for t in ln.split(",")]
        try:
            row = [float(t) for t in toks]
        except ValueError as exc:
            raise ValueError(f"{what}: non-numeric value in row {ln!r}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValueError(f"{what}: ragged rows ({len(row)} vs {width} columns)")
        rows.append(row)
    return np.array(rows, dtype=float)


def read_batch_csv(path) -> Batch:
    with open(path, "r", encoding="utf-8") as fh:
        return Batch(_parse_csv_rows(fh.read(), str(path)))


def write_batch_csv(path, data) -> None:
    arr = data.data if isinstance(data, Batch) else np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    with open(path, "w", encoding="utf-8") as fh:
        for row in arr:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_batch_mecb(path) -> Batch:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MECB_MAGIC:
        raise ValueError(f"{path}: not a MECB file (bad magic)")
    n, M = struct.unpack_from("<II", blob, 4)
    if n < 1 or M < 1:
        raise ValueError(f"{path}: invalid MECB header (n={n}, M={M})")
    expected = 12 + 8 * n * M
    if len(blob) != expected:
        raise ValueError(f"{path}: MECB payload is {len(blob) - 12} bytes, expected {8 * n * M}")
    data = np.frombuffer(blob, dtype="<f8", offset=12).reshape(M, n)
    return Batch(data.copy())


def write_batch_mecb(path, data) -> None:
    arr = data.data if isinstance(data, Batch) else np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    M, n = arr.shape
    with open(path, "wb") as fh:
        fh.write(MECB_MAGIC)
        fh.write(struct.pack("<II", n, M))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_batch(path) -> Batch:
    """Load a batch, sniffing the format from the first four bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MECB_MAGIC:
        return read_batch_mecb(path)
    return read_batch_csv(path)


def read_covariance_csv(path) -> np.ndarray:
    """Square covariance matrix from CSV; symmetrized by averaging with its
    transpose and required to be positive definite."""
    with open(path, "r", encoding="utf-8") as fh:
        A = _parse_csv_rows(fh.read(), str(path))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{path}: covariance must be square, got {A.shape}")
    A = (A + A.T) / 2.0
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ValueError(f"{path}: covariance is not positive definite") from None
    return A


def write_matrix_csv(path, A) -> None:
    write_batch_csv(path, np.asarray(A, dtype=float))


_SCENARIO_KEYS = {"case_id", "n", "kind", "default_matrix", "anomalous_matrix",
                  "family", "center_bases"}


@dataclass
class RunConfig:
    """CLI configuration document (JSON). Unknown keys are rejected.

    lambda_grid: explicit list of values, or {"count": int, "min_ratio": float}
    for the generated grid; null uses the built-in default grid.
    """

    lambda_grid: list | dict | None = None
    combiner: str = "weighted"
    tau: float = 0.0
    m_grid_max_exponent: int = 40
    seed: int | None = None
    scenario: dict | None = None

    def __post_init__(self):
        if self.combiner not in ("weighted", "select"):
            raise ValueError(f"combiner must be 'weighted' or 'select', got {self.combiner!r}")
        self.tau = float(self.tau)
        if not isinstance(self.m_grid_max_exponent, int) or not (0 <= self.m_grid_max_exponent <= 62):
            raise ValueError("m_grid_max_exponent must be an integer in [0, 62]")
        if self.seed is not None:
            if not isinstance(self.seed, int) or self.seed < 0:
                raise ValueError("seed must be a nonnegative integer")
        if isinstance(self.lambda_grid, dict):
            unknown = set(self.lambda_grid) - {"count", "min_ratio"}
            if unknown:
                raise ValueError(f"lambda_grid mapping has unknown keys {sorted(unknown)}")
            count = self.lambda_grid.get("count", 16)
            ratio = self.lambda_grid.get("min_ratio", 0.01)
            if not isinstance(count, int) or count < 1:
                raise ValueError("lambda_grid.count must be a positive integer")
            if not (0 < float(ratio) <= 1):
                raise ValueError("lambda_grid.min_ratio must be in (0, 1]")
        elif self.lambda_grid is not None:
            vals = [float(v) for v in self.lambda_grid]
            if not vals or any(v < 0 for v in vals):
                raise ValueError("lambda_grid list must be non-empty with values >= 0")
            self.lambda_grid = vals
        if self.scenario is not None:
            if not isinstance(self.scenario, dict):
                raise ValueError("scenario override must be an object")
            unknown = set(self.scenario) - _SCENARIO_KEYS
            if unknown:
                raise ValueError(f"scenario override has unknown keys {sorted(unknown)}")

    @property
    def explicit_lambdas(self) -> list | None:
        return self.lambda_grid if isinstance(self.lambda_grid, list) else None

    @property
    def grid_count(self) -> int:
        if isinstance(self.lambda_grid, dict):
            return self.lambda_grid.get("count", 16)
        return 16

    @property
    def grid_min_ratio(self) -> float:
        if isinstance(self.lambda_grid, dict):
            return float(self.lambda_grid.get("min_ratio", 0.01))
        return 0.01


def load_run_config(source) -> RunConfig:
    """RunConfig from a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError(f"{source}: config must be a JSON object")
    known = {"lambda_grid", "combiner", "tau", "m_grid_max_exponent", "seed", "scenario"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    return RunConfig(**doc)


def report_schema() -> dict:
    text = resources.files("mecoder").joinpath("schemas/report.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_report(obj: dict) -> None:
    """Raise jsonschema.ValidationError if obj is not a valid CLI report.

    Validates the serialized form: numpy scalars are coerced and infinities
    take their string spelling, exactly as dump_json would emit them.
    """
    jsonschema.validate(_jsonable(obj), report_schema())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if v == float("inf"):
            return "Infinity"
        if v == float("-inf"):
            return "-Infinity"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj: dict) -> str:
    """Strict JSON text (infinities become strings, never bare tokens)."""
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False)
