"""Model containers shared by the decomposition routines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, as_tensor


@dataclass
class CPModel:
    """Weighted sum of rank-one terms ``sum_r w_r a_r o b_r o c_r``.

    ``factors`` holds A (I x R), B (J x R) and C (K x R) in that order.
    """

    weights: np.ndarray
    factors: tuple

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        self.factors = tuple(np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in self.factors)
        if len(self.factors) != 3:
            raise ShapeError(f"CPModel needs three factor matrices, got {len(self.factors)}")
        R = self.weights.size
        for name, f in zip("ABC", self.factors):
            if f.shape[1] != R:
                raise ShapeError(f"factor {name} has {f.shape[1]} columns, expected {R}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("CPModel weights must be finite")

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def dims(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)

    def copy(self) -> "CPModel":
        return CPModel(self.weights.copy(), tuple(f.copy() for f in self.factors))

    def normalized(self) -> "CPModel":
        """Return an equivalent model with unit-norm factor columns.

        Zero columns are left untouched and give a zero weight.
        """
        w = self.weights.copy()
        out = []
        for f in self.factors:
            f = f.copy()
            norms = np.linalg.norm(f, axis=0)
            nz = norms > 0
            f[:, nz] /= norms[nz]
            w = np.where(nz, w * norms, 0.0)
            out.append(f)
        return CPModel(w, tuple(out))


@dataclass
class TuckerModel:
    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        self.core = as_tensor(self.core, "core")
        self.factors = tuple(np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in self.factors)
        if len(self.factors) != 3:
            raise ShapeError(f"TuckerModel needs three factor matrices, got {len(self.factors)}")
        for n, f in enumerate(self.factors):
            if f.shape[1] != self.core.shape[n]:
                raise ShapeError(
                    f"factor {n + 1} has {f.shape[1]} columns but core mode {n + 1} is {self.core.shape[n]}"
                )

    @property
    def ranks(self) -> tuple:
        return self.core.shape

    @property
    def dims(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)


@dataclass
class FitTrace:
    """Per-iteration record of an iterative fit.

    ``objective`` holds the method's own objective when it differs from the
    relative error (core norm for HOOI, penalized loss for LRAT).
    """

    relative_errors: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    converged: bool = False
    phase_starts: list = field(default_factory=lambda: [0])

    @property
    def iterations(self) -> int:
        return len(self.relative_errors)

    def record(self, rel_err: float, seconds: float, objective: float | None = None) -> None:
        self.relative_errors.append(float(rel_err))
        self.wall_times.append(float(seconds))
        if objective is not None:
            self.objective.append(float(objective))

    @property
    def mean_iteration_time(self) -> float:
        return float(np.mean(self.wall_times)) if self.wall_times else 0.0
