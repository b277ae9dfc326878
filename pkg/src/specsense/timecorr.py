"""Time-resolved two-photon coincidences from perturbation theory in the sensor coupling.

After a click on sensor 1 the emitter and sensor 2 are left in the
conditional blocks ``B(j; j') = rho(1, j; 1, j')``.  To lowest order the
delayed coincidence splits into three terms

    I0(tau) = exp(-G tau) Tr B(1; 1)
    I1(tau) = 2 Im int_0^tau dt exp(-G (tau - t/2) + i w t) Tr[a B(0; 1)(t)]
    I2(tau) = 2 Re int_{0 <= t1 <= t2 <= tau} exp(-G [tau - (t1 + t2)/2] + i w (t2 - t1))
                  Tr[a(t2 - t1) B(0; 0)(t1) a^+]

with ``G, w, a`` the linewidth, centre and emission operator of sensor 2
and every block propagated under the emitter Liouvillian ``L0``.

Both integrals are the output of a linear system driven by ``L0``.  With
``Y = B(1; 0)`` (so that ``Y^+`` is the block in I1) and ``P = B(0; 0)``,

    P'  = L0 P
    Y'  = (L0 - G/2 - i w) Y - i a P
    u'  = -G u + Tr[a^+ Y],      u(0) = 0

gives ``I1 + I2 = -2 Im u(tau)``; the initial value of ``Y`` produces I1
and that of ``P`` produces I2.  The default method exponentiates this
block-triangular generator, which is exact up to rounding.  A composite
Simpson quadrature over precomputed trajectories is kept as an
independent reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson

from .curves import CorrelationCurve
from .emitter import EmitterModel
from .hierarchy import AuxMatrixSet, HierarchySolver, SensorSpec, real_trace
from .liouville import ShiftedSolver, heisenberg, vectorize

#: Step used by the quadrature reference method (ps).
QUAD_STEP = 1e-3
#: Advertised absolute accuracy of I1 and I2 relative to the result scale.
QUAD_TOL = 1e-9


class TimeCorrError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ConditionalBlocks:
    """Emitter blocks left after a click on sensor ``detector``.

    ``blocks[(j, jp)]`` is the rescaled block with the clicked sensor in
    ``|1><1|`` and the other sensor in ``|j><jp|``.  ``n_first`` and
    ``n_second`` are the rescaled populations of the clicked and the
    waiting sensor.
    """

    blocks: Mapping[tuple[int, int], np.ndarray]
    detector: int
    first: SensorSpec
    second: SensorSpec
    n_first: float
    n_second: float

    def __getitem__(self, key: tuple[int, int]) -> np.ndarray:
        return self.blocks[key]

    @property
    def norm(self) -> float:
        """``1 / (<n1> <n2>)``."""
        return 1.0 / (self.n_first * self.n_second)


def conditional_state(aux: AuxMatrixSet, which: int = 1) -> ConditionalBlocks:
    """Blocks of the post-detection state for a click on sensor ``which`` (1 or 2)."""
    if aux.M != 2:
        raise TimeCorrError(f"conditional state needs a two-sensor hierarchy, got M = {aux.M}")
    if which not in (1, 2):
        raise ValueError(f"detector must be 1 or 2, got {which}")
    blocks = {}
    for j in (0, 1):
        for jp in (0, 1):
            key = ((1, j), (1, jp)) if which == 1 else ((j, 1), (jp, 1))
            blocks[(j, jp)] = aux[key]
    s1, s2 = aux.sensors
    n1, n2 = aux.population(0), aux.population(1)
    if which == 1:
        return ConditionalBlocks(blocks, 1, s1, s2, n1, n2)
    return ConditionalBlocks(blocks, 2, s2, s1, n2, n1)


# ---------------------------------------------------------------------------
# exact evaluation through the augmented generator


class _AugmentedPropagator:
    """Exponentials of the ``(2 d^2 + 1)``-dimensional I1/I2 generator."""

    def __init__(self, model: EmitterModel, sensor: SensorSpec):
        L0 = model.liouvillian.dense()
        a = model.emission_op(sensor.op)
        d = model.dim
        n = d * d
        G, w = sensor.gamma, sensor.omega
        A = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
        A[:n, :n] = L0
        A[n:2 * n, :n] = -1j * np.kron(np.eye(d), a)
        A[n:2 * n, n:2 * n] = L0 - (G / 2 + 1j * w) * np.eye(n)
        A[2 * n, n:2 * n] = vectorize(a.conj())
        A[2 * n, 2 * n] = -G
        self.A = A
        self.n = n
        self._cache: dict[float, np.ndarray] = {}

    def step(self, t: float) -> np.ndarray:
        key = round(t, 12)
        P = self._cache.get(key)
        if P is None:
            P = self._cache[key] = sla.expm(self.A * t)
        return P

    def run(self, z0: np.ndarray, taus: np.ndarray) -> np.ndarray:
        """``u(tau)`` for each initial column of ``z0``; taus >= 0, any order."""
        order = np.argsort(taus, kind="stable")
        out = np.empty((len(taus), z0.shape[1]), dtype=complex)
        z, t_prev = z0.copy(), 0.0
        for i in order:
            gap = float(taus[i]) - t_prev
            if gap > 0:
                z = self.step(gap) @ z
                t_prev = float(taus[i])
            out[i] = z[-1]
        return out


def _initial_columns(blocks: ConditionalBlocks) -> np.ndarray:
    n = blocks[(0, 0)].size
    z0 = np.zeros((2 * n + 1, 2), dtype=complex)
    z0[n:2 * n, 0] = vectorize(blocks[(1, 0)])  # drives I1
    z0[:n, 1] = vectorize(blocks[(0, 0)])  # drives I2
    return z0


def _check_taus(tau) -> tuple[np.ndarray, bool]:
    scalar = np.ndim(tau) == 0
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(taus < 0) or not np.all(np.isfinite(taus)):
        raise ValueError("delays must be finite and non-negative")
    return taus, scalar


def _exact_terms(blocks: ConditionalBlocks, model: EmitterModel, taus: np.ndarray,
                 prop: _AugmentedPropagator | None = None) -> tuple[np.ndarray, np.ndarray]:
    prop = prop or _AugmentedPropagator(model, blocks.second)
    u = prop.run(_initial_columns(blocks), taus)
    return -2 * u[:, 0].imag, -2 * u[:, 1].imag


# ---------------------------------------------------------------------------
# quadrature reference


def _trajectory(L: np.ndarray, x0: np.ndarray, h: float, n: int) -> np.ndarray:
    """``exp(L k h) x0`` for ``k = 0..n`` as rows."""
    P = sla.expm(L * h)
    out = np.empty((n + 1, x0.size), dtype=complex)
    out[0] = x0
    for k in range(n):
        out[k + 1] = P @ out[k]
    return out


def _quad_i1(blocks: ConditionalBlocks, model: EmitterModel, tau: float, step: float) -> float:
    if tau == 0:
        return 0.0
    s = blocks.second
    a = model.emission_op(s.op)
    n = 2 * max(1, math.ceil(tau / step / 2))
    h = tau / n
    t = h * np.arange(n + 1)
    traj = _trajectory(model.liouvillian.dense(), vectorize(blocks[(0, 1)]), h, n)
    f = traj @ vectorize(a.T)
    g = np.exp(-s.gamma * (tau - t / 2) + 1j * s.omega * t) * f
    return 2 * float(simpson(g, x=t).imag)


def _quad_i2(blocks: ConditionalBlocks, model: EmitterModel, tau: float, step: float) -> float:
    if tau == 0:
        return 0.0
    s = blocks.second
    a = model.emission_op(s.op)
    d = model.dim
    n = 2 * max(1, math.ceil(tau / step / 2))
    h = tau / n
    t = h * np.arange(n + 1)
    L0 = model.liouvillian
    # a(s) in the Heisenberg picture and P(t1) a^+ on the same grid
    heis = _trajectory(heisenberg(L0).dense(), vectorize(a), h, n)
    rows = heis.reshape(n + 1, d, d, order="F").transpose(0, 2, 1).reshape(n + 1, -1, order="F")
    states = _trajectory(L0.dense(), vectorize(blocks[(0, 0)]), h, n)
    right = np.kron(a.conj(), np.eye(d))  # vec(X a^+) = (conj(a) x 1) vec(X)
    K = rows @ (right @ states.T)  # K[s, t1] = Tr[a(s) P(t1) a^+]
    inner = np.zeros(n + 1, dtype=complex)
    for i in range(n + 1):
        m = n - i  # s runs over [0, tau - t1]
        if m == 0:
            continue
        sv = t[: m + 1]
        g = np.exp(-s.gamma * (tau - t[i] - sv / 2) + 1j * s.omega * sv) * K[: m + 1, i]
        inner[i] = simpson(g, x=sv) if m > 1 else 0.5 * h * (g[0] + g[1])
    return 2 * float(simpson(inner, x=t).real)


# ---------------------------------------------------------------------------
# public terms


def i0(blocks: ConditionalBlocks, s2: SensorSpec | None = None, tau=0.0):
    """Zeroth-order term ``exp(-Gamma tau) Tr B(1; 1)``."""
    s = s2 or blocks.second
    taus, scalar = _check_taus(tau)
    val = np.exp(-s.gamma * taus) * real_trace(blocks[(1, 1)], "B(1;1)")
    return float(val[0]) if scalar else val


def i1(blocks: ConditionalBlocks, model: EmitterModel, s2: SensorSpec | None = None, tau=0.0,
       method: str = "expm", step: float = QUAD_STEP):
    """First-order term (one interaction with the waiting sensor)."""
    blocks = _with_second(blocks, s2)
    taus, scalar = _check_taus(tau)
    if method == "expm":
        val = _exact_terms(blocks, model, taus)[0]
    elif method == "quadrature":
        val = np.array([_quad_i1(blocks, model, float(t), step) for t in taus])
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(val[0]) if scalar else val


def i2(blocks: ConditionalBlocks, model: EmitterModel, s2: SensorSpec | None = None, tau=0.0,
       method: str = "expm", step: float = QUAD_STEP):
    """Second-order term (two interactions with the waiting sensor)."""
    blocks = _with_second(blocks, s2)
    taus, scalar = _check_taus(tau)
    if method == "expm":
        val = _exact_terms(blocks, model, taus)[1]
    elif method == "quadrature":
        val = np.array([_quad_i2(blocks, model, float(t), step) for t in taus])
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(val[0]) if scalar else val


def _with_second(blocks: ConditionalBlocks, s2: SensorSpec | None) -> ConditionalBlocks:
    if s2 is None or s2 == blocks.second:
        return blocks
    return ConditionalBlocks(blocks.blocks, blocks.detector, blocks.first, s2,
                             blocks.n_first, blocks.n_second)


def components(blocks: ConditionalBlocks, model: EmitterModel, taus: Sequence[float],
               method: str = "expm", step: float = QUAD_STEP) -> dict[str, np.ndarray]:
    """``I0``, ``I1``, ``I2`` on a grid of non-negative delays."""
    taus, _ = _check_taus(taus)
    I0 = i0(blocks, None, taus)
    if method == "expm":
        I1, I2 = _exact_terms(blocks, model, taus)
    else:
        I1 = i1(blocks, model, None, taus, method, step)
        I2 = i2(blocks, model, None, taus, method, step)
    return {"I0": I0, "I1": I1, "I2": I2}


def g2_tau(model: EmitterModel, s1: SensorSpec, s2: SensorSpec, taus: Sequence[float],
           solver: HierarchySolver | None = None, method: str = "expm",
           step: float = QUAD_STEP) -> CorrelationCurve:
    """``g2(w1, w2, tau)``; sensor 1 clicks first for ``tau >= 0``, sensor 2 for ``tau < 0``.

    The curve's ``components`` hold ``I0, I1, I2`` already multiplied by
    ``1 / (<n1> <n2>)``, so they sum to the values.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("delay grid must be a non-empty 1-D sequence")
    solver = solver or HierarchySolver(model)
    aux = solver.solve([s1, s2])
    for m in range(2):
        solver._check_population(aux.population(m), aux.sensors[m], m)
    comps = {k: np.zeros(taus.size) for k in ("I0", "I1", "I2")}
    for which, sel in ((1, taus >= 0), (2, taus < 0)):
        if not np.any(sel):
            continue
        blocks = conditional_state(aux, which)
        part = components(blocks, model, np.abs(taus[sel]), method, step)
        for k in comps:
            comps[k][sel] = part[k] * blocks.norm
    values = comps["I0"] + comps["I1"] + comps["I2"]
    return CorrelationCurve(taus, values, comps, metadata={
        "abscissa": "tau_ps", "quantity": "g2", "method": method,
        "model_hash": model.content_hash(),
        "sensors": [(s.omega_cm1, s.gamma, s.op) for s in (s1, s2)],
        "tolerance": QUAD_TOL,
    })


# ---------------------------------------------------------------------------
# asymptotic approximants (diagnostics only)


def _eig(model: EmitterModel):
    w, V = np.linalg.eig(model.liouvillian.dense())
    return w, V, np.linalg.inv(V)


def laplace_i1(blocks: ConditionalBlocks, model: EmitterModel, z: complex) -> complex:
    """``F(z) = int_0^inf exp(z t) Tr[a B(0; 1)(t)] dt`` (analytically continued)."""
    a = model.emission_op(blocks.second.op)
    x = ShiftedSolver(model.liouvillian).solve(-z, blocks[(0, 1)])
    return complex(-np.trace(a @ x))


def dominant_transition(blocks: ConditionalBlocks, model: EmitterModel) -> tuple[float, float]:
    """``(gamma_sys, omega_sys)`` of the mode carrying most weight in ``Tr[a B(0; 1)(t)]``.

    The signal is expanded over eigenmodes ``exp(lambda t)`` of ``L0``; the
    mode with the largest ``|weight| / |Re lambda|`` is returned with
    ``gamma_sys = -2 Re lambda`` and ``omega_sys = -Im lambda``.
    """
    a = model.emission_op(blocks.second.op)
    w, V, Vi = _eig(model)
    weights = (vectorize(a.T) @ V) * (Vi @ vectorize(blocks[(0, 1)]))
    score = np.abs(weights) / np.maximum(np.abs(w.real), 1e-300)
    score[np.abs(w) < 1e-9 * np.abs(w).max()] = 0
    k = int(np.argmax(score))
    return float(-2 * w[k].real), float(-w[k].imag)


def i1_asymptotic(blocks: ConditionalBlocks, model: EmitterModel, s2: SensorSpec | None = None,
                  tau=0.0, regime: str = "fast", gamma_sys: float | None = None,
                  omega_sys: float | None = None):
    """Closed-form approximants of I1.

    ``regime="fast"`` (emitter much faster than the sensor) returns
    ``2 exp(-Gamma tau) Im F(Gamma/2 + i w)``.  ``regime="slow"`` assumes
    ``Tr[a B(0; 1)(t)] = q0 exp(-gamma_sys t / 2 - i omega_sys t)`` and
    integrates it exactly; ``gamma_sys`` and ``omega_sys`` (rad/ps) must be
    supplied.
    """
    blocks = _with_second(blocks, s2)
    s = blocks.second
    taus, scalar = _check_taus(tau)
    if regime == "fast":
        F = laplace_i1(blocks, model, s.gamma / 2 + 1j * s.omega)
        val = 2 * np.exp(-s.gamma * taus) * F.imag
    elif regime == "slow":
        if gamma_sys is None or omega_sys is None:
            raise ValueError("slow-emitter regime needs gamma_sys and omega_sys")
        a = model.emission_op(s.op)
        q0 = np.trace(a @ blocks[(0, 1)])
        k = (s.gamma - gamma_sys) / 2 + 1j * (s.omega - omega_sys)
        num = np.exp(-(s.gamma + gamma_sys) * taus / 2 + 1j * (s.omega - omega_sys) * taus) \
            - np.exp(-s.gamma * taus)
        val = 2 * np.imag(q0 * num / k)
    else:
        raise ValueError(f"unknown regime {regime!r}; expected 'fast' or 'slow'")
    return float(val[0]) if scalar else val


def _damped_expint(alpha: np.ndarray, c: np.ndarray, tau: float) -> np.ndarray:
    """``exp(alpha tau) int_0^tau exp(c s) ds`` elementwise, without overflow.

    Requires ``Re(alpha) <= 0`` and ``Re(alpha + c) <= 0``.
    """
    x = c * tau
    small = np.abs(x) < 1e-6
    out = np.empty(np.broadcast(alpha, c).shape, dtype=complex)
    alpha = np.broadcast_to(alpha, out.shape)
    c = np.broadcast_to(c, out.shape)
    xs = x[small]
    out[small] = np.exp(alpha[small] * tau) * tau * (1 + xs / 2 + xs**2 / 6)
    big = ~small
    out[big] = (np.exp((alpha[big] + c[big]) * tau) - np.exp(alpha[big] * tau)) / c[big]
    return out


def i2_asymptotic(blocks: ConditionalBlocks, model: EmitterModel, s2: SensorSpec | None = None, tau=0.0):
    """Large-delay approximant of I2.

    The inner integral over the centre of mass of the two interaction times
    is done with the slowly varying state frozen at ``tau - s/2``:

        I2 ~ (2 / Gamma) Re int_0^tau ds (exp(-Gamma s/2) - exp(-Gamma (tau - s/2)))
                 exp(i w s) Tr[a(s) B(0; 0)(tau - s/2) a^+]

    which tends to ``<n1> <n2>`` as ``tau`` grows.  The remaining integral
    is evaluated in closed form over the eigenmodes of ``L0``.
    """
    blocks = _with_second(blocks, s2)
    s = blocks.second
    a = model.emission_op(s.op)
    d = model.dim
    taus, scalar = _check_taus(tau)
    w, V, Vi = _eig(model)
    p = vectorize(a.T) @ V
    Gm = Vi @ np.kron(a.conj(), np.eye(d)) @ V
    q = Vi @ vectorize(blocks[(0, 0)])
    coef = p[:, None] * Gm * q[None, :]
    out = np.empty(taus.size)
    for i, t in enumerate(taus):
        c1 = 1j * s.omega + w[:, None] - w[None, :] / 2 - s.gamma / 2
        kern = _damped_expint(w[None, :], c1, t) - _damped_expint(w[None, :] - s.gamma, c1 + s.gamma, t)
        out[i] = 2 / s.gamma * float(np.real(np.sum(coef * kern)))
    return float(out[0]) if scalar else out


__all__ = [
    "ConditionalBlocks", "TimeCorrError", "components", "conditional_state", "dominant_transition",
    "g2_tau", "i0", "i1", "i1_asymptotic", "i2", "i2_asymptotic", "laplace_i1",
]
