"""Epsilon-free auxiliary-matrix hierarchy for frequency-filtered correlations.

Each sensor ``m`` is a Lorentzian filter (centre ``omega``, linewidth
``gamma``) coupled to the emission operator ``a_m``.  The joint
emitter/sensor steady state is expanded in sensor-basis blocks; after
rescaling by the coupling, the block with ket indices ``j`` and bra indices
``j'`` obeys

    [L0 - sum_m ((j_m + j'_m) gamma_m / 2 + (j_m - j'_m) i omega_m)] rho(j; j')
        = i sum_m [ [j_m = 1] a_m rho(j - e_m; j') - [j'_m = 1] rho(j; j' - e_m) a_m^+ ]

which only couples a block to blocks of total weight one lower, so the
whole set follows from one steady state plus a chain of shifted solves.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .curves import CorrelationCurve
from .emitter import CM1_TO_RADPS, EmitterModel
from .liouville import ShiftedSolver, steady_state

#: Diagonal-block traces must satisfy |Im| <= IMAG_TOL * |Re|.
IMAG_TOL = 1e-10
#: Count rates below this fraction of the reference scale are treated as zero.
VANISHING_TOL = 1e-14


class HierarchyError(RuntimeError):
    pass


class VanishingSignalError(HierarchyError):
    """A normalizing count rate is (numerically) zero."""


@dataclass(frozen=True)
class SensorSpec:
    """A Lorentzian frequency filter.

    Attributes:
        omega: filter centre, rad/ps.
        gamma: filter linewidth, ps^-1 (> 0).
        op: name of the emission operator the sensor couples to.
    """

    omega: float
    gamma: float
    op: str = "a"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"sensor linewidth must be positive, got {self.gamma}")

    @classmethod
    def from_cm1(cls, omega_cm1: float, gamma: float, op: str = "a") -> "SensorSpec":
        return cls(omega_cm1 * CM1_TO_RADPS, gamma, op)

    @property
    def omega_cm1(self) -> float:
        return self.omega / CM1_TO_RADPS

    def at(self, omega: float) -> "SensorSpec":
        return SensorSpec(omega, self.gamma, self.op)


class MultiIndex(NamedTuple):
    """Sensor occupation labels of an auxiliary matrix.

    ``lower`` holds the ket indices ``(j_1 .. j_M)`` and ``upper`` the bra
    indices ``(j'_1 .. j'_M)``, each 0 or 1.
    """

    lower: tuple[int, ...]
    upper: tuple[int, ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "MultiIndex":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @classmethod
    def zeros(cls, M: int) -> "MultiIndex":
        return cls((0,) * M, (0,) * M)

    @classmethod
    def ones(cls, M: int) -> "MultiIndex":
        return cls((1,) * M, (1,) * M)

    @classmethod
    def single(cls, M: int, m: int) -> "MultiIndex":
        """Index with ``j_m = j'_m = 1`` and zeros elsewhere."""
        e = tuple(int(k == m) for k in range(M))
        return cls(e, e)

    @property
    def M(self) -> int:
        return len(self.lower)

    @property
    def weight(self) -> int:
        return sum(self.lower) + sum(self.upper)

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.lower, self.upper))

    def adjoint(self) -> "MultiIndex":
        return MultiIndex(self.upper, self.lower)

    def is_diagonal(self) -> bool:
        return self.lower == self.upper


def all_indices(M: int) -> list[MultiIndex]:
    """Every multi-index for ``M`` sensors, ordered by ascending weight."""
    out = [MultiIndex(bits[:M], bits[M:]) for bits in itertools.product((0, 1), repeat=2 * M)]
    return sorted(out, key=lambda k: (k.weight, k.lower, k.upper))


def _as_index(key) -> MultiIndex:
    if isinstance(key, MultiIndex):
        return key
    lower, upper = key
    return MultiIndex(tuple(lower), tuple(upper))


@dataclass(frozen=True, eq=False)
class AuxMatrixSet:
    """Rescaled auxiliary matrices keyed by :class:`MultiIndex`.

    Indexing accepts a ``MultiIndex`` or a ``(lower, upper)`` pair of tuples,
    e.g. ``aux[(1, 0), (1, 1)]``.
    """

    M: int
    entries: Mapping[MultiIndex, np.ndarray]
    sensors: tuple[SensorSpec, ...] = ()

    def __getitem__(self, key) -> np.ndarray:
        return self.entries[_as_index(key)]

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def steady_state(self) -> np.ndarray:
        return self.entries[MultiIndex.zeros(self.M)]

    def trace(self, key) -> float:
        """Real trace of a diagonal-index entry, with the imaginary-residue check."""
        k = _as_index(key)
        if not k.is_diagonal():
            raise ValueError(f"{k} is not a diagonal index")
        return real_trace(self.entries[k], str(k))

    def population(self, m: int) -> float:
        """Rescaled sensor population ``<n_m>`` (trace of the m-th single-excitation block)."""
        return self.trace(MultiIndex.single(self.M, m))


def real_trace(X: np.ndarray, label: str = "") -> float:
    tr = np.trace(X)
    if abs(tr.imag) > IMAG_TOL * abs(tr.real):
        raise HierarchyError(f"trace of {label or 'block'} has imaginary part {tr.imag:.3e} "
                             f"against real part {tr.real:.3e}")
    return float(tr.real)


def index_shift(k: MultiIndex, sensors: Sequence[SensorSpec]) -> complex:
    """The scalar ``z`` such that the block at ``k`` solves ``(L0 - z) rho = rhs``."""
    return sum((jl + ju) * s.gamma / 2 + (jl - ju) * 1j * s.omega
               for jl, ju, s in zip(k.lower, k.upper, sensors))


def index_source(k: MultiIndex, entries: Mapping[MultiIndex, np.ndarray],
                 ops: Sequence[np.ndarray]) -> np.ndarray:
    """Right-hand side built from the blocks one weight below ``k``."""
    d = ops[0].shape[0]
    rhs = np.zeros((d, d), dtype=complex)
    for m, a in enumerate(ops):
        if k.lower[m]:
            low = list(k.lower)
            low[m] = 0
            rhs += 1j * (a @ entries[MultiIndex(tuple(low), k.upper)])
        if k.upper[m]:
            up = list(k.upper)
            up[m] = 0
            rhs -= 1j * (entries[MultiIndex(k.lower, tuple(up))] @ a.conj().T)
    return rhs


class HierarchySolver:
    """Reusable solver bound to one emitter model.

    The steady state and the Schur reduction of ``L0`` are computed once, so
    sweeps over filter frequencies cost one triangular solve per block.
    """

    def __init__(self, model: EmitterModel):
        self.model = model
        self.L0 = model.liouvillian
        self._solver = ShiftedSolver(self.L0)
        self.rho_ss = steady_state(self.L0)

    def ops(self, sensors: Sequence[SensorSpec]) -> list[np.ndarray]:
        return [self.model.emission_op(s.op) for s in sensors]

    def solve(self, sensors: Sequence[SensorSpec], targets: Iterable[MultiIndex] | None = None) -> AuxMatrixSet:
        """Solve the hierarchy for ``sensors``.

        With ``targets`` given, only the blocks those entries depend on are
        computed (every block below a target in the partial order).
        """
        sensors = tuple(sensors)
        M = len(sensors)
        if M < 1:
            raise ValueError("at least one sensor is required")
        ops = self.ops(sensors)
        needed = None if targets is None else _dependencies([_as_index(t) for t in targets])
        entries: dict[MultiIndex, np.ndarray] = {MultiIndex.zeros(M): self.rho_ss}
        for k in all_indices(M)[1:]:
            if needed is not None and k not in needed:
                continue
            if k in entries:
                continue
            adj = k.adjoint()
            if adj in entries:
                entries[k] = entries[adj].conj().T
                continue
            rhs = index_source(k, entries, ops)
            entries[k] = self._solver.solve(index_shift(k, sensors), rhs)
        return AuxMatrixSet(M, entries, sensors)

    def residuals(self, aux: AuxMatrixSet) -> dict[MultiIndex, float]:
        """Relative residual of every stored block against its defining equation."""
        ops = self.ops(aux.sensors)
        out = {}
        for k, X in aux.entries.items():
            if k.weight == 0:
                r = self.L0.apply(X)
                out[k] = float(np.linalg.norm(r) / max(self.L0.norm(), 1.0))
                continue
            rhs = index_source(k, aux.entries, ops)
            r = self.L0.apply(X) - index_shift(k, aux.sensors) * X - rhs
            out[k] = float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))
        return out

    def population(self, sensor: SensorSpec) -> float:
        """Rescaled ``<n>`` for a single sensor."""
        aux = self.solve([sensor], targets=[MultiIndex.ones(1)])
        return aux.population(0)

    def power_spectrum(self, sensor: SensorSpec, omegas: Sequence[float], threads: int = 1) -> np.ndarray:
        """``S(omega) = (gamma / 2 pi) Tr[rho(1; 1)]`` for every centre frequency in ``omegas`` (rad/ps)."""
        omegas = np.asarray(omegas, dtype=float)

        def one(w):
            return sensor.gamma / (2 * math.pi) * self.population(sensor.at(w))

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                vals = list(pool.map(one, omegas))
        else:
            vals = [one(w) for w in omegas]
        return np.array(vals)

    def _reference_rate(self, sensor: SensorSpec) -> float:
        a = self.model.emission_op(sensor.op)
        return float(np.real(np.trace(a @ self.rho_ss @ a.conj().T))) / (sensor.gamma / 2) ** 2

    def _check_population(self, n: float, sensor: SensorSpec, m: int) -> float:
        if not n > VANISHING_TOL * self._reference_rate(sensor):
            raise VanishingSignalError(f"sensor {m} at {sensor.omega_cm1:.2f} cm^-1 registers no emission "
                                       f"(population {n:.3e})")
        return n

    def gM_zero(self, sensors: Sequence[SensorSpec]) -> float:
        """Normalized zero-delay M-photon coincidence."""
        M = len(sensors)
        targets = [MultiIndex.ones(M)] + [MultiIndex.single(M, m) for m in range(M)]
        aux = self.solve(sensors, targets=targets)
        return self.gM_from_aux(aux)

    def gM_from_aux(self, aux: AuxMatrixSet) -> float:
        M = aux.M
        denom = 1.0
        for m in range(M):
            denom *= self._check_population(aux.population(m), aux.sensors[m], m)
        num = aux.trace(MultiIndex.ones(M))
        return num / denom

    def g2_zero(self, s1: SensorSpec, s2: SensorSpec) -> float:
        return self.gM_zero([s1, s2])


def _dependencies(targets: Sequence[MultiIndex]) -> set[MultiIndex]:
    """All indices reachable downward (componentwise <=) from ``targets``."""
    out: set[MultiIndex] = set()
    stack = list(targets)
    while stack:
        k = stack.pop()
        if k in out:
            continue
        out.add(k)
        for m in range(k.M):
            if k.lower[m]:
                low = list(k.lower)
                low[m] = 0
                stack.append(MultiIndex(tuple(low), k.upper))
            if k.upper[m]:
                up = list(k.upper)
                up[m] = 0
                stack.append(MultiIndex(k.lower, tuple(up)))
    return out


# ---------------------------------------------------------------------------
# functional front end


def solve_hierarchy(model: EmitterModel, sensors: Sequence[SensorSpec],
                    solver: HierarchySolver | None = None) -> AuxMatrixSet:
    solver = solver or HierarchySolver(model)
    return solver.solve(sensors)


def power_spectrum(model: EmitterModel, sensor: SensorSpec, grid_cm1: Sequence[float],
                   solver: HierarchySolver | None = None, threads: int = 1) -> CorrelationCurve:
    """Filtered power spectrum on a grid of filter centres given in cm^-1."""
    if len(grid_cm1) == 0:
        raise ValueError("frequency grid is empty")
    solver = solver or HierarchySolver(model)
    grid = np.asarray(grid_cm1, dtype=float)
    S = solver.power_spectrum(sensor, grid * CM1_TO_RADPS, threads=threads)
    return CorrelationCurve(grid, S, metadata={
        "abscissa": "omega_cm1", "quantity": "S", "gamma": sensor.gamma, "op": sensor.op,
        "model_hash": model.content_hash(),
    })


def g2_zero(model: EmitterModel, s1: SensorSpec, s2: SensorSpec,
            solver: HierarchySolver | None = None) -> float:
    solver = solver or HierarchySolver(model)
    return solver.g2_zero(s1, s2)


def gM_zero(model: EmitterModel, sensors: Sequence[SensorSpec],
            solver: HierarchySolver | None = None) -> float:
    solver = solver or HierarchySolver(model)
    return solver.gM_zero(sensors)
