"""Shared domain types, solver configuration and matrix I/O.

Data matrices follow the convention ``X`` is ``d x n`` with data points as
columns. Every container is validated on construction and treated as an
immutable value afterwards (arrays are flagged read-only).
"""
from __future__ import annotations

import enum
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, ParseError, WeightError

WEIGHT_TOL = 1e-12
CAPACITY_TOL = 1e-12


class Variant(str, enum.Enum):
    OPTIMALLY_WEIGHTED = "optimal"
    CAPACITY_CONSTRAINED = "capacity"


class Orientation(str, enum.Enum):
    H_ORTHOGONAL = "h"
    W_ORTHOGONAL = "w"


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """Nonnegative ``d x n`` data with per-column weights.

    ``column_norms`` holds the Euclidean norms of the columns as they were
    before any normalization, so ``values * column_norms`` recovers the
    original data after :func:`normalize_columns`.
    """

    values: np.ndarray
    weights: np.ndarray
    column_norms: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        weights = _frozen(self.weights)
        norms = _frozen(self.column_norms)
        if values.ndim != 2 or values.size == 0:
            raise DomainError(f"expected a non-empty 2-D matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("matrix contains NaN or Inf")
        if np.any(values < 0):
            raise DomainError("matrix contains negative entries")
        n = values.shape[1]
        if weights.shape != (n,) or norms.shape != (n,):
            raise WeightError(f"weights and norms must have length n={n}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0) or np.any(weights > 1):
            raise WeightError("weights must lie in [0, 1]")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise WeightError(f"weights sum to {weights.sum():.17g}, not 1")
        if np.any(norms <= 0):
            raise DomainError(f"zero columns at {np.flatnonzero(norms <= 0).tolist()}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "column_norms", norms)

    @classmethod
    def from_array(cls, values, weights=None) -> "DataMatrix":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise DomainError(f"expected a 2-D matrix, got {values.ndim}-D")
        n = values.shape[1]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        with np.errstate(invalid="ignore"):
            norms = np.linalg.norm(values, axis=0)
        return cls(values, np.asarray(weights, dtype=np.float64), norms)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def transposed(self) -> "DataMatrix":
        """Rows become data points; weights reset to uniform over the rows."""
        return DataMatrix.from_array(self.values.T)

    def original(self) -> np.ndarray:
        """Undo column normalization (identity on unnormalized matrices)."""
        current = np.linalg.norm(self.values, axis=0)
        return self.values * (self.column_norms / current)


def normalize_columns(X: DataMatrix) -> DataMatrix:
    """Scale every column to unit Euclidean norm, keeping the original norms."""
    norms = np.linalg.norm(X.values, axis=0)
    if np.any(norms <= 0):
        raise DomainError(f"cannot normalize zero columns {np.flatnonzero(norms <= 0).tolist()}")
    return DataMatrix(X.values / norms, X.weights, X.column_norms)


def _read_csv(path) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text") from exc
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ParseError(f"{path}: empty file")
    try:
        data = np.loadtxt(io.StringIO("\n".join(rows)), delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return data


def load_matrix(path, weights=None) -> DataMatrix:
    """Read a headerless numeric CSV (``d`` lines of ``n`` fields).

    ``weights`` is an optional path to a single-line CSV of ``n`` column
    weights; the default is uniform ``1/n``.
    """
    values = _read_csv(path)
    w = None
    if weights is not None:
        w = _read_csv(weights)
        if w.shape[0] != 1:
            raise ParseError(f"{weights}: weights file must hold a single line")
        w = w[0]
        if w.shape[0] != values.shape[1]:
            raise WeightError(f"{w.shape[0]} weights for {values.shape[1]} columns")
    return DataMatrix.from_array(values, w)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_matrix_csv(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    lines = (",".join(format_float(v) for v in row) for row in A)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SolverConfig:
    """Annealing schedule, tolerances and variant selection.

    ``beta_init`` and ``beta_max`` may be left as ``None``; the engine then
    derives them from the data (one decade below the first critical
    temperature, and six decades above that).
    """

    k_max: int
    beta_init: float | None = None
    beta_max: float | None = None
    gamma: float = 1.05
    inner_tol: float = 1e-8
    inner_max_iters: int = 500
    perturb_delta: float = 1e-4
    variant: Variant = Variant.OPTIMALLY_WEIGHTED
    capacities: tuple | None = None
    orientation: Orientation = Orientation.H_ORTHOGONAL
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        if isinstance(self.k_max, bool) or int(self.k_max) != self.k_max or self.k_max < 1:
            raise ConfigError(f"k_max must be a positive integer, got {self.k_max!r}")
        object.__setattr__(self, "k_max", int(self.k_max))
        if not self.gamma > 1:
            raise ConfigError(f"gamma must exceed 1, got {self.gamma}")
        if self.beta_init is not None and not self.beta_init > 0:
            raise ConfigError("beta_init must be positive")
        if self.beta_max is not None:
            if not self.beta_max > 0:
                raise ConfigError("beta_max must be positive")
            if self.beta_init is not None and not self.beta_max > self.beta_init:
                raise ConfigError("beta_max must exceed beta_init")
        if not self.inner_tol > 0 or self.inner_max_iters < 1:
            raise ConfigError("inner_tol must be positive and inner_max_iters >= 1")
        if not self.perturb_delta > 0:
            raise ConfigError("perturb_delta must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.variant is Variant.CAPACITY_CONSTRAINED:
            if self.capacities is None:
                raise ConfigError("capacity-constrained variant requires capacities")
        if self.capacities is not None:
            c = tuple(float(v) for v in self.capacities)
            if len(c) != self.k_max:
                raise ConfigError(f"{len(c)} capacities given for k_max={self.k_max}")
            if any(not 0 <= v <= 1 for v in c):
                raise ConfigError("capacities must lie in [0, 1]")
            if abs(sum(c) - 1.0) > CAPACITY_TOL:
                raise ConfigError(f"capacities sum to {sum(c):.17g}, not 1")
            object.__setattr__(self, "capacities", c)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variant"] = self.variant.value
        out["orientation"] = self.orientation.value
        out["capacities"] = list(self.capacities) if self.capacities is not None else None
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        data = dict(data)
        if data.get("capacities") is not None:
            data["capacities"] = tuple(data["capacities"])
        return cls(**data)


@dataclass(frozen=True)
class FactorPair:
    W: np.ndarray
    H: np.ndarray
    orientation: Orientation = Orientation.H_ORTHOGONAL

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(self.W))
        object.__setattr__(self, "H", _frozen(self.H))
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        if self.W.shape[1] != self.H.shape[0]:
            raise DomainError(f"inner dimensions differ: {self.W.shape} x {self.H.shape}")

    @property
    def k(self) -> int:
        return self.W.shape[1]

    def constrained(self) -> np.ndarray:
        """The orthogonality-constrained factor, arranged feature-major (k rows)."""
        return self.H if self.orientation is Orientation.H_ORTHOGONAL else self.W.T

    def is_structurally_orthogonal(self) -> bool:
        G = self.constrained()
        return bool(np.min(self.W) >= 0 and np.min(self.H) >= 0
                    and np.all(np.count_nonzero(G, axis=0) <= 1))


@dataclass
class TransitionLog:
    """Ordered ``(m, beta_cr)`` records: ``beta_cr`` is where ``m`` distinct features first appeared."""

    entries: list = field(default_factory=list)

    def record(self, m: int, beta: float) -> None:
        if self.entries:
            last_m, last_beta = self.entries[-1]
            if m != last_m + 1 or beta < last_beta:
                raise ValueError(f"transition ({m}, {beta}) breaks ordering after ({last_m}, {last_beta})")
        elif m != 2:
            raise ValueError("first transition must produce m=2")
        self.entries.append((int(m), float(beta)))

    def __len__(self):
        return len(self.entries)

    def betas(self) -> dict:
        return dict(self.entries)
