from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np


@dataclass(frozen=True, eq=False)
class CorrelationCurve:
    """A sampled spectrum or correlation trace.

    ``abscissa`` is either a frequency axis (cm^-1) or a delay axis (ps), as
    recorded in ``metadata["abscissa"]``.  ``components`` optionally holds
    per-point breakdowns (e.g. the three perturbative terms of g2(tau)).
    """

    abscissa: np.ndarray
    values: np.ndarray
    components: Mapping[str, np.ndarray] | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.abscissa, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError(f"abscissa and values must be 1-D of equal length, got {x.shape} and {y.shape}")
        if x.size > 1 and not np.all(np.diff(x) > 0):
            raise ValueError("abscissa must be strictly increasing")
        if not np.all(np.isfinite(y)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "abscissa", x)
        object.__setattr__(self, "values", y)
        if self.components is not None:
            comps = {k: np.asarray(v, dtype=float) for k, v in self.components.items()}
            for k, v in comps.items():
                if v.shape != x.shape:
                    raise ValueError(f"component {k!r} has shape {v.shape}, expected {x.shape}")
            object.__setattr__(self, "components", comps)

    def __len__(self) -> int:
        return self.abscissa.size

    def local_maxima(self) -> np.ndarray:
        """Indices of interior strict local maxima, largest value first."""
        y = self.values
        if y.size < 3:
            return np.array([], dtype=int)
        idx = np.nonzero((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:]))[0] + 1
        return idx[np.argsort(-y[idx], kind="stable")]
