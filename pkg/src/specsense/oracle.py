"""Explicit sensor method: emitter and two-level sensors on the joint space.

This is the finite-coupling formulation that the hierarchy replaces.  Every
sensor is a two-level system ``s_m`` with Hamiltonian ``omega_m s_m^+ s_m``,
decay rate ``Gamma_m`` and coupling ``eps (a_m s_m^+ + a_m^+ s_m)``; the
photon statistics follow from sensor populations in the joint steady state.

Numerics.  Sensor-excited blocks of the joint state are of order ``eps`` per
excitation, so a direct solve loses most significant digits of the
coincidence blocks.  The joint Liouvillian is therefore conjugated by the
diagonal scaling ``rho(j; j') -> rho(j; j') / eps^(|j| + |j'|)`` before any
solve or propagation.  The transformation is exact (no term is dropped) and
leaves every block of order one.  When the emitter has a conserved
excitation number compatible with its emission operators, only the
excitation-diagonal sector of Liouville space is kept; it is invariant
under the dynamics and contains every state the oracle needs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .curves import CorrelationCurve
from .emitter import CM1_TO_RADPS, EmitterModel
from .hierarchy import SensorSpec
from .liouville import LindbladChannel, Superoperator, devectorize, lindbladian

#: Default sensor coupling in cm^-1.
DEFAULT_EPS_CM1 = 1e-3
#: Largest joint Hilbert dimension ``d * 2**M`` accepted by :func:`build_joint`.
MAX_JOINT_DIM = 256
#: Sector sizes up to this are propagated with dense matrix exponentials.
DENSE_PROPAGATION_MAX = 4000
#: Sector sizes up to this use a dense LU for the steady state (sparse fill-in is worse).
DENSE_SOLVE_MAX = 6000
#: ``eps`` is considered weak when below this fraction of ``sqrt(Gamma gamma_Q / 2)``.
WEAK_COUPLING_FRACTION = 0.1
#: Sensor populations above this trigger a warning.
POPULATION_WARN = 1e-2

SIGMA = np.array([[0.0, 1.0], [0.0, 0.0]])


class OracleError(RuntimeError):
    pass


class OracleWarning(UserWarning):
    """The joint system is outside the weak-coupling regime."""


def eps_bound(model: EmitterModel, sensors: Sequence[SensorSpec]) -> float:
    """``sqrt(Gamma gamma_Q / 2)`` in rad/ps, with ``gamma_Q`` the smallest positive channel rate."""
    rates = [ch.rate for ch in model.channels if ch.rate > 0]
    if not rates:
        return math.inf
    gamma_q = min(rates)
    return math.sqrt(min(s.gamma for s in sensors) * gamma_q / 2)


def excitation_labels(model: EmitterModel) -> np.ndarray | None:
    """Integer excitation number per basis state, or None if none is conserved.

    Labels are inferred from the emission operators (each lowers the label
    by one) and accepted only if every matrix element of ``L0`` respects the
    resulting U(1) symmetry.
    """
    d = model.dim
    adj = [[] for _ in range(d)]
    for op in model.emission_ops.values():
        rows, cols = np.nonzero(np.abs(op) > 0)
        for i, j in zip(rows, cols):
            adj[j].append((i, -1))
            adj[i].append((j, 1))
    labels = np.full(d, np.iinfo(np.int64).min, dtype=np.int64)
    for start in range(d):
        if labels[start] != np.iinfo(np.int64).min:
            continue
        labels[start] = 0
        comp = [start]
        stack = [start]
        while stack:
            u = stack.pop()
            for v, step in adj[u]:
                if labels[v] == np.iinfo(np.int64).min:
                    labels[v] = labels[u] + step
                    comp.append(v)
                    stack.append(v)
                elif labels[v] != labels[u] + step:
                    return None
        labels[comp] -= labels[comp].min()
    # every L0 element must map (i, k) to (i', k') with equal label difference
    L = model.liouvillian.dense()
    diff = (labels[:, None] - labels[None, :]).reshape(-1, order="F")
    rows, cols = np.nonzero(np.abs(L) > 0)
    if np.any(diff[rows] != diff[cols]):
        return None
    return labels


@dataclass(frozen=True, eq=False)
class JointSystem:
    """Emitter plus ``M`` sensors, tensor order emitter x sensor_1 x ... x sensor_M.

    Attributes:
        model: the emitter.
        sensors: one spec per sensor.
        eps: coupling strength in rad/ps (the same for every sensor).
        liouvillian: full joint Liouvillian (sparse).
    """

    model: EmitterModel
    sensors: tuple[SensorSpec, ...]
    eps: float
    liouvillian: Superoperator
    warnings: tuple[str, ...] = field(default=())

    @property
    def M(self) -> int:
        return len(self.sensors)

    @property
    def dim(self) -> int:
        return self.liouvillian.dim

    @property
    def eps_cm1(self) -> float:
        return self.eps / CM1_TO_RADPS

    @cached_property
    def occupations(self) -> np.ndarray:
        """``(dim, M)`` array of sensor occupations of each joint basis state."""
        M = self.M
        idx = np.arange(self.dim) % (2**M)
        return np.stack([(idx >> (M - 1 - m)) & 1 for m in range(M)], axis=1)

    @cached_property
    def _space(self) -> "_BalancedSpace":
        return _BalancedSpace(self)

    @cached_property
    def _steady(self) -> "_SteadyData":
        return _solve_steady(self)

    def steady_state(self) -> np.ndarray:
        """Trace-one joint steady state in the original (unscaled) basis."""
        sp, st = self._space, self._steady
        vec = np.zeros(self.dim**2, dtype=complex)
        vec[sp.sector] = st.x / sp.scale
        return devectorize(vec / st.Z, self.dim)

    def population(self, m: int) -> float:
        """Sensor population ``<n_m>`` divided by ``eps**2``."""
        return self._steady.nu[m]


def _embed(op: np.ndarray, slot: int, d: int, M: int) -> np.ndarray:
    """``op`` acting on ``slot`` (0 = emitter, m + 1 = sensor m) of the joint space."""
    factors = [np.eye(d)] + [np.eye(2)] * M
    factors[slot] = op
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def build_joint(model: EmitterModel, sensors: Sequence[SensorSpec], eps: float,
                max_dim: int = MAX_JOINT_DIM) -> JointSystem:
    """Assemble the joint Liouvillian for coupling ``eps`` (rad/ps).

    Warns with :class:`OracleWarning` when ``eps`` is not small against
    ``sqrt(Gamma gamma_Q / 2)``.  ``eps = 0`` is accepted and gives the
    decoupled product dynamics.
    """
    sensors = tuple(sensors)
    M = len(sensors)
    if M < 1:
        raise ValueError("at least one sensor is required")
    if not eps >= 0:
        raise ValueError(f"coupling must be non-negative, got {eps}")
    d = model.dim
    D = d * 2**M
    if D > max_dim:
        raise OracleError(f"joint Hilbert dimension {D} = {d} x 2^{M} exceeds the cap {max_dim}")
    notes = []
    bound = eps_bound(model, sensors)
    if eps > WEAK_COUPLING_FRACTION * bound:
        msg = (f"eps = {eps / CM1_TO_RADPS:.3g} cm^-1 is not small against "
               f"sqrt(Gamma gamma_Q / 2) = {bound / CM1_TO_RADPS:.3g} cm^-1")
        notes.append(msg)
        warnings.warn(msg, OracleWarning, stacklevel=2)

    H = _embed(model.hamiltonian, 0, d, M)
    channels = [LindbladChannel(_embed(ch.jump, 0, d, M), ch.rate) for ch in model.channels]
    for m, s in enumerate(sensors):
        sm = _embed(SIGMA, m + 1, d, M)
        a = _embed(model.emission_op(s.op), 0, d, M)
        H = H + s.omega * (sm.T @ sm) + eps * (a @ sm.T + a.conj().T @ sm)
        channels.append(LindbladChannel(sm, s.gamma))
    L = lindbladian(H, channels, sparse=True)
    return JointSystem(model, sensors, float(eps), L, tuple(notes))


# ---------------------------------------------------------------------------
# balanced, sector-restricted representation


class _BalancedSpace:
    def __init__(self, joint: JointSystem):
        D = joint.dim
        occ = joint.occupations
        exc = occ.sum(axis=1)
        labels = excitation_labels(joint.model)
        p = np.arange(D * D)
        ket, bra = p % D, p // D
        if labels is None:
            sector = p
        else:
            N = np.repeat(labels, 2**joint.M) + exc
            sector = p[N[ket] == N[bra]]
        self.D = D
        self.sector = sector
        self.ket = ket[sector]
        self.bra = bra[sector]
        self.exc_ket = exc[self.ket]
        self.exc_bra = exc[self.bra]
        # eps = 0 leaves nothing to rebalance
        e = joint.eps if joint.eps > 0 else 1.0
        self.eps = e
        self.scale = e ** (-(self.exc_ket + self.exc_bra).astype(float))
        Lfull = joint.liouvillian.sparse()
        Ls = Lfull[sector][:, sector]
        S = sps.diags(self.scale)
        Si = sps.diags(1.0 / self.scale)
        self.A = (S @ Ls @ Si).tocsc()
        self.position = {int(q): i for i, q in enumerate(sector)}
        self.diag = np.nonzero(self.ket == self.bra)[0]
        self.diag_state = self.ket[self.diag]
        self.diag_exc = self.exc_ket[self.diag]
        self.occ = occ
        self._dense = None
        self._expm: dict[float, np.ndarray] = {}

    def weighted_trace(self, x: np.ndarray, mask: np.ndarray | None = None, shift: int = 0) -> complex:
        """Sum of ``x`` over diagonal entries times ``eps^(2 exc - shift)``."""
        w = self.eps ** (2.0 * self.diag_exc - shift)
        vals = x[self.diag] * w
        if mask is not None:
            vals = vals[mask]
        return complex(np.sum(vals))

    def sensor_mask(self, m: int) -> np.ndarray:
        return self.occ[self.diag_state, m] == 1

    def propagate(self, x: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return x.copy()
        if self.A.shape[0] <= DENSE_PROPAGATION_MAX:
            key = round(t, 12)
            P = self._expm.get(key)
            if P is None:
                if self._dense is None:
                    self._dense = self.A.toarray()
                P = self._expm[key] = sla.expm(self._dense * t)
            return P @ x
        return spla.expm_multiply(self.A * t, x)

    def collapse(self, x: np.ndarray, m: int) -> np.ndarray:
        """Scaled form of ``s_m rho s_m^+`` divided by ``eps**2``."""
        M = self.occ.shape[1]
        bit = 1 << (M - 1 - m)
        sel = np.nonzero((self.occ[self.ket, m] == 1) & (self.occ[self.bra, m] == 1))[0]
        out = np.zeros_like(x)
        for i in sel:
            q = (self.ket[i] - bit) + self.D * (self.bra[i] - bit)
            out[self.position[int(q)]] = x[i]
        return out

    def right_number(self, x: np.ndarray, m: int) -> np.ndarray:
        """Scaled form of ``rho n_m``."""
        return np.where(self.occ[self.bra, m] == 1, x, 0)


@dataclass
class _SteadyData:
    x: np.ndarray  # scaled sector vector, sensor-vacuum block of unit trace
    Z: float  # trace of the unscaled state
    nu: np.ndarray  # <n_m> / eps^2


def _solve_steady(joint: JointSystem) -> _SteadyData:
    sp = joint._space
    A = sp.A.tolil()
    n = A.shape[0]
    vac = sp.diag[sp.diag_exc == 0]
    row = int(vac[0])
    w = np.zeros(n, dtype=complex)
    w[vac] = 1.0
    A[row, :] = w
    A = A.tocsc()
    b = np.zeros(n, dtype=complex)
    b[row] = 1.0
    if n <= DENSE_SOLVE_MAX:
        fac = sla.lu_factor(A.toarray(), check_finite=False)
        solve = lambda r: sla.lu_solve(fac, r, check_finite=False)  # noqa: E731
    else:
        solve = spla.splu(A).solve
    x = solve(b)
    x = x + solve(b - A @ x)
    res = np.delete(sp.A @ x, row)
    if np.linalg.norm(res) > 1e-10 * max(spla.norm(sp.A, 1), 1.0) * np.linalg.norm(x):
        raise OracleError(f"joint steady-state residual {np.linalg.norm(res):.3e} too large")
    Z = sp.weighted_trace(x).real
    nu = np.array([sp.weighted_trace(x, sp.sensor_mask(m), shift=2).real / Z for m in range(joint.M)])
    if joint.eps > 0:
        pops = nu * joint.eps**2
        big = [m for m in range(joint.M) if pops[m] > POPULATION_WARN]
        if big:
            warnings.warn(f"sensor populations {pops[big]} are not small", OracleWarning, stacklevel=3)
    return _SteadyData(x, Z, nu)


def _require_coupled(joint: JointSystem) -> None:
    if joint.eps == 0:
        raise OracleError("eps = 0: sensors are decoupled and every normalized quantity is 0/0")


# ---------------------------------------------------------------------------
# observables


def oracle_spectrum(joint: JointSystem) -> float:
    """``(Gamma / 2 pi eps^2) <n_1>`` for a single-sensor joint system."""
    if joint.M != 1:
        raise OracleError(f"spectrum needs exactly one sensor, got {joint.M}")
    _require_coupled(joint)
    return joint.sensors[0].gamma / (2 * math.pi) * joint.population(0)


def oracle_gM_zero(joint: JointSystem) -> float:
    """``<n_1 ... n_M> / prod <n_m>`` in the joint steady state."""
    if joint.M < 2:
        raise OracleError(f"zero-delay coincidences need at least two sensors, got {joint.M}")
    _require_coupled(joint)
    sp, st = joint._space, joint._steady
    mask = np.all(sp.occ[sp.diag_state] == 1, axis=1)
    num = sp.weighted_trace(st.x, mask, shift=2 * joint.M).real / st.Z
    return num / float(np.prod(st.nu))


def _delayed(joint: JointSystem, first: int, second: int, taus: np.ndarray,
             number_op: bool = False) -> np.ndarray:
    """``Tr[n_second e^{L tau} X] / eps^4`` for ``X = s_f rho s_f^+`` or ``rho n_f``."""
    sp, st = joint._space, joint._steady
    x0 = sp.right_number(st.x, first) if number_op else sp.collapse(st.x, first)
    # collapse already carries 1/eps^2; rho n_f does not
    shift = 4 if number_op else 2
    mask = sp.sensor_mask(second)
    order = np.argsort(taus, kind="stable")
    out = np.empty(len(taus))
    x, t_prev = x0, 0.0
    for i in order:
        x = sp.propagate(x, float(taus[i]) - t_prev)
        t_prev = float(taus[i])
        out[i] = sp.weighted_trace(x, mask, shift=shift).real / st.Z
    return out


def oracle_g2_tau(joint: JointSystem, taus: Sequence[float]) -> CorrelationCurve:
    """Delayed coincidence ``g2(tau)``: sensor 1 first for ``tau >= 0``, sensor 2 first otherwise."""
    if joint.M != 2:
        raise OracleError(f"time-resolved coincidences need exactly two sensors, got {joint.M}")
    _require_coupled(joint)
    taus = np.asarray(taus, dtype=float)
    nu = joint._steady.nu
    vals = np.empty(len(taus))
    pos = taus >= 0
    if np.any(pos):
        vals[pos] = _delayed(joint, 0, 1, taus[pos])
    if np.any(~pos):
        vals[~pos] = _delayed(joint, 1, 0, -taus[~pos])
    vals /= nu[0] * nu[1]
    return CorrelationCurve(taus, vals, metadata={
        "abscissa": "tau_ps", "quantity": "g2", "method": "oracle", "eps_cm1": joint.eps_cm1,
        "model_hash": joint.model.content_hash(),
        "sensors": [(s.omega_cm1, s.gamma, s.op) for s in joint.sensors],
    })


def normal_order_check(joint: JointSystem, tau: float) -> dict:
    """Compare the collapsed-state correlator with the number-operator one.

    Returns ``trace_collapsed = Tr[n2 e^{L tau}(s1 rho s1^+)]`` and
    ``trace_numberop = Tr[n2 e^{L tau}(rho n1)]`` (raw, unscaled), their
    difference ``delta``, and the same three numbers divided by ``eps**4``.
    """
    if joint.M != 2:
        raise OracleError(f"normal-order check needs exactly two sensors, got {joint.M}")
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    _require_coupled(joint)
    t = np.array([float(tau)])
    c = float(_delayed(joint, 0, 1, t)[0])
    n = float(_delayed(joint, 0, 1, t, number_op=True)[0])
    e4 = joint.eps**4
    return {
        "tau": float(tau),
        "trace_collapsed": c * e4,
        "trace_numberop": n * e4,
        "delta": (c - n) * e4,
        "scaled_collapsed": c,
        "scaled_numberop": n,
        "scaled_delta": c - n,
    }


__all__ = [
    "DEFAULT_EPS_CM1", "JointSystem", "OracleError", "OracleWarning", "build_joint", "eps_bound",
    "excitation_labels", "normal_order_check", "oracle_g2_tau", "oracle_gM_zero", "oracle_spectrum",
]
