"""Dataset container shared across all strategies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Observed units: binary treatment ``x``, binary outcome ``y``, and a
    confounder matrix ``c`` with one column per covariate (no intercept)."""

    x: np.ndarray
    y: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2:
            raise ValueError(f"c must be 2-d, got shape {c.shape}")
        if not (x.size == y.size == c.shape[0]):
            raise ValueError(
                f"inconsistent unit counts: x {x.size}, y {y.size}, c {c.shape[0]}"
            )
        for name, v in (("x", x), ("y", y)):
            if not np.all((v == 0.0) | (v == 1.0)):
                raise ValueError(f"{name} entries must be exactly 0 or 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("c contains non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def p(self) -> int:
        return self.c.shape[1]

    def subset(self, idx) -> "Dataset":
        """Row subset (used for bootstrap resampling)."""
        return Dataset(x=self.x[idx], y=self.y[idx], c=self.c[idx])
