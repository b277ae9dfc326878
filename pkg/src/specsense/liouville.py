"""Liouville-space representation of operators and superoperators.

Operators are plain ``numpy`` arrays of shape ``(d, d)``.  A density matrix is
vectorized by column stacking, so that the map ``rho -> A @ rho @ B`` is the
matrix ``kron(B.T, A)`` acting on ``vectorize(rho)``.

Superoperators may hold either a dense array or a ``scipy.sparse`` matrix; the
dense form is the default and is used for every emitter-sized problem.  Joint
emitter/sensor problems switch to sparse storage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

Matrix = Union[np.ndarray, sps.spmatrix]

#: Kernel detection threshold, relative to the Liouvillian norm.
KERNEL_TOL = 1e-8
#: Shifted solves above this residual (relative to ``|b|``) are rejected.
RESIDUAL_TOL = 1e-10
#: Dense eigen-decomposition is used for steady states up to this Liouville size.
DENSE_STEADY_MAX = 1600


class LiouvilleError(RuntimeError):
    """Base class for numerical failures in Liouville-space routines."""


class DegenerateSteadyStateError(LiouvilleError):
    def __init__(self, kernel_dim: int):
        self.kernel_dim = kernel_dim
        super().__init__(f"Liouvillian kernel has dimension {kernel_dim}, expected 1")


class SingularShiftError(LiouvilleError):
    def __init__(self, shift: complex, detail: str = ""):
        self.shift = shift
        msg = f"shifted system L - z*Id is singular or ill-conditioned for z={shift!r}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


# ---------------------------------------------------------------------------
# vectorization


def vectorize(op: np.ndarray) -> np.ndarray:
    """Column-stack ``op`` into a vector of length ``d**2``."""
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {op.shape}")
    return op.reshape(-1, order="F")


def devectorize(vec: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(vec)
    if dim is None:
        dim = math.isqrt(vec.size)
    if dim * dim != vec.size:
        raise ValueError(f"vector of length {vec.size} is not a vectorized {dim}x{dim} operator")
    return vec.reshape(dim, dim, order="F")


def is_hermitian(op: np.ndarray, atol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return op.shape[0] == op.shape[1] and bool(np.allclose(op, op.conj().T, rtol=0, atol=atol))


def _check_square(op: np.ndarray, name: str = "operator") -> np.ndarray:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"{name} must be square, got shape {op.shape}")
    return op


# ---------------------------------------------------------------------------
# superoperators


@dataclass(frozen=True, eq=False)
class Superoperator:
    """A linear map on ``d x d`` operators, stored as a ``d**2 x d**2`` matrix."""

    matrix: Matrix
    dim: int

    def __post_init__(self):
        n = self.dim * self.dim
        if self.matrix.shape != (n, n):
            raise ValueError(f"superoperator for dim={self.dim} must be {n}x{n}, got {self.matrix.shape}")

    @property
    def is_sparse(self) -> bool:
        return sps.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def sparse(self) -> sps.csc_matrix:
        return sps.csc_matrix(self.matrix)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return devectorize(self.matrix @ vectorize(rho), self.dim)

    def norm(self) -> float:
        """1-norm of the matrix (cheap for both storage kinds)."""
        if self.is_sparse:
            return float(spla.norm(self.matrix, 1))
        return float(np.linalg.norm(self.matrix, 1))

    def __add__(self, other: "Superoperator") -> "Superoperator":
        if not isinstance(other, Superoperator):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if self.is_sparse and other.is_sparse:
            return Superoperator((self.matrix + other.matrix).tocsc(), self.dim)
        return Superoperator(self.dense() + other.dense(), self.dim)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "Superoperator":
        if not np.isscalar(scalar):
            return NotImplemented
        return Superoperator(self.matrix * scalar, self.dim)

    __rmul__ = __mul__

    def __neg__(self) -> "Superoperator":
        return (-1.0) * self

    def is_trace_preserving(self, atol: float = 1e-12) -> bool:
        """True when ``Tr[L(rho)] = 0`` for every ``rho``, i.e. vec(1)^T L = 0."""
        row = vectorize(np.eye(self.dim)) @ self.matrix
        row = np.asarray(row).ravel()
        scale = max(1.0, self.norm())
        return bool(np.max(np.abs(row), initial=0.0) <= atol * scale)


def zero_superop(dim: int, sparse: bool = False) -> Superoperator:
    n = dim * dim
    if sparse:
        return Superoperator(sps.csc_matrix((n, n), dtype=complex), dim)
    return Superoperator(np.zeros((n, n), dtype=complex), dim)


def sprepost(A: np.ndarray, B: np.ndarray, sparse: bool = False) -> Superoperator:
    """Superoperator of ``rho -> A @ rho @ B``."""
    A = _check_square(A, "A")
    B = _check_square(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    if sparse:
        mat = sps.kron(sps.csc_matrix(B.T), sps.csc_matrix(A), format="csc")
    else:
        mat = np.kron(B.T, A)
    return Superoperator(mat.astype(complex), A.shape[0])


def spre(A: np.ndarray, sparse: bool = False) -> Superoperator:
    A = _check_square(A)
    return sprepost(A, np.eye(A.shape[0]), sparse)


def spost(B: np.ndarray, sparse: bool = False) -> Superoperator:
    B = _check_square(B)
    return sprepost(np.eye(B.shape[0]), B, sparse)


def commutator_superop(H: np.ndarray, sparse: bool = False) -> Superoperator:
    """Superoperator of ``rho -> -i [H, rho]``."""
    H = _check_square(H, "H")
    return -1j * (spre(H, sparse) - spost(H, sparse))


def dissipator(c: np.ndarray, sparse: bool = False) -> Superoperator:
    """Unscaled Lindblad dissipator ``rho -> 2 c rho c^+ - c^+c rho - rho c^+c``.

    Callers multiply by ``rate / 2``.
    """
    c = _check_square(c, "jump operator")
    cd = c.conj().T
    n = cd @ c
    return 2.0 * sprepost(c, cd, sparse) - spre(n, sparse) - spost(n, sparse)


@dataclass(frozen=True)
class LindbladChannel:
    """A dissipation channel contributing ``(rate / 2) * dissipator(jump)``."""

    jump: np.ndarray
    rate: float

    def __post_init__(self):
        _check_square(self.jump, "jump operator")
        if not self.rate >= 0:
            raise ValueError(f"channel rate must be non-negative, got {self.rate}")


def lindbladian(H: np.ndarray, channels: Iterable[LindbladChannel], sparse: bool = False) -> Superoperator:
    """Full Liouvillian ``-i[H, .] + sum_c (rate/2) D[c]``."""
    L = commutator_superop(H, sparse)
    for ch in channels:
        if ch.jump.shape != H.shape:
            raise ValueError(f"jump operator shape {ch.jump.shape} does not match H {H.shape}")
        if ch.rate == 0:
            continue
        L = L + (0.5 * ch.rate) * dissipator(ch.jump, sparse)
    return L


def heisenberg(L: Superoperator) -> Superoperator:
    """Adjoint map ``L*`` with ``Tr[A L(X)] = Tr[L*(A) X]`` for all ``A, X``."""
    d = L.dim
    perm = np.arange(d * d).reshape(d, d).ravel(order="F")  # vec(A.T) = vec(A)[perm]
    if L.is_sparse:
        P = sps.csc_matrix((np.ones(d * d), (np.arange(d * d), perm)), shape=(d * d, d * d))
        return Superoperator((P @ L.matrix.T @ P).tocsc(), d)
    M = np.asarray(L.matrix).T
    return Superoperator(M[np.ix_(perm, perm)], d)


# ---------------------------------------------------------------------------
# steady state


def _kernel_dimension(eigvals: np.ndarray, scale: float) -> int:
    return int(np.sum(np.abs(eigvals) <= KERNEL_TOL * scale))


def _normalize_state(rho: np.ndarray) -> np.ndarray:
    tr = np.trace(rho)
    if abs(tr) == 0:
        raise LiouvilleError("steady-state null vector has zero trace")
    rho = rho / tr
    return 0.5 * (rho + rho.conj().T)


def steady_state(L: Superoperator) -> np.ndarray:
    """Unique trace-one fixed point of ``L``.

    Small dense problems use a full eigen-decomposition, which also gives the
    kernel dimension directly.  Larger or sparse problems solve the
    trace-augmented linear system and probe the kernel with shift-invert
    Arnoldi.

    Raises:
        DegenerateSteadyStateError: if the kernel is not one-dimensional.
    """
    d = L.dim
    n = d * d
    scale = max(L.norm(), 1.0)
    if not L.is_sparse and n <= DENSE_STEADY_MAX:
        w, v = sla.eig(L.dense())
        k = _kernel_dimension(w, scale)
        if k != 1:
            raise DegenerateSteadyStateError(k)
        rho = devectorize(v[:, np.argmin(np.abs(w))], d)
        rho = _normalize_state(rho)
    else:
        rho = _steady_state_augmented(L)
        _check_sparse_kernel(L, scale)
    return rho


def _steady_state_augmented(L: Superoperator) -> np.ndarray:
    d = L.dim
    n = d * d
    A = L.sparse().tolil()
    # replace the first row with the trace functional; a trace-preserving L has
    # linearly dependent rows so one equation is redundant
    trace_row = vectorize(np.eye(d))
    row = int(np.argmax(np.abs(trace_row)))
    A[row, :] = trace_row
    A = A.tocsc()
    b = np.zeros(n, dtype=complex)
    b[row] = 1.0
    lu = spla.splu(A)
    x = lu.solve(b)
    # one step of iterative refinement
    x = x + lu.solve(b - A @ x)
    return _normalize_state(devectorize(x, d))


def _check_sparse_kernel(L: Superoperator, scale: float) -> None:
    n = L.dim**2
    if n <= 2:
        return
    k = min(3, n - 2)
    # a tiny complex shift keeps the shift-invert factorization non-singular
    sigma = KERNEL_TOL * scale * 1e-3 * (1 + 1j)
    try:
        w = spla.eigs(L.sparse(), k=k, sigma=sigma, return_eigenvectors=False, tol=1e-12)
    except spla.ArpackNoConvergence as exc:  # pragma: no cover - depends on ARPACK
        raise LiouvilleError("eigensolver did not converge while probing the kernel") from exc
    kd = _kernel_dimension(w, scale)
    if kd != 1:
        raise DegenerateSteadyStateError(kd)


# ---------------------------------------------------------------------------
# shifted solves


class ShiftedSolver:
    """Solves ``(L - z Id) x = b`` for many shifts ``z`` on a fixed ``L``.

    Dense Liouvillians are reduced once to complex Schur form ``L = Q T Q^H``,
    after which every shift costs a single triangular solve.  Sparse
    Liouvillians are factorized per shift with SuperLU.
    """

    def __init__(self, L: Superoperator, residual_tol: float = RESIDUAL_TOL):
        self.L = L
        self.residual_tol = residual_tol
        self._lu_cache: dict[complex, spla.SuperLU] = {}
        if L.is_sparse:
            self._T = self._Q = None
            self._Ls = L.sparse()
        else:
            self._T, self._Q = sla.schur(L.dense().astype(complex), output="complex")
            self._diag = np.diag(self._T).copy()
            self._tnorm = max(np.linalg.norm(self._T, 1), 1.0)

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._T is None:
            raise LiouvilleError("eigenvalues are only cached for dense Liouvillians")
        return self._diag

    def solve_vec(self, z: complex, b: np.ndarray, check: bool = True) -> np.ndarray:
        b = np.asarray(b, dtype=complex)
        if self._T is not None:
            gap = np.min(np.abs(self._diag - z))
            if gap <= 1e-13 * self._tnorm:
                raise SingularShiftError(z, f"nearest eigenvalue at distance {gap:.3e}")
            T = self._T.copy()
            T[np.diag_indices_from(T)] -= z
            x = self._Q @ sla.solve_triangular(T, self._Q.conj().T @ b, check_finite=False)
            # one refinement step pulls the residual down to the rounding floor
            r = b - (self.L.matrix @ x - z * x)
            x = x + self._Q @ sla.solve_triangular(T, self._Q.conj().T @ r, check_finite=False)
        else:
            lu = self._lu_cache.get(z)
            if lu is None:
                n = self._Ls.shape[0]
                try:
                    lu = spla.splu((self._Ls - z * sps.identity(n, format="csc")).tocsc())
                except RuntimeError as exc:
                    raise SingularShiftError(z, str(exc)) from exc
                self._lu_cache[z] = lu
            x = lu.solve(b)
            x = x + lu.solve(b - (self._Ls @ x - z * x))
        if check:
            r = self.L.matrix @ x - z * x - b
            bn = np.linalg.norm(b)
            if bn > 0 and np.linalg.norm(r) > self.residual_tol * bn:
                raise SingularShiftError(z, f"residual {np.linalg.norm(r) / bn:.3e} exceeds tolerance")
        return x

    def solve(self, z: complex, b: np.ndarray, check: bool = True) -> np.ndarray:
        """Operator-valued solve: ``b`` and the result are ``d x d`` matrices."""
        return devectorize(self.solve_vec(z, vectorize(b), check), self.L.dim)


def shifted_solve(L: Superoperator, z: complex, b: np.ndarray) -> np.ndarray:
    """Solve ``(L - z Id) x = b`` for a vector ``b`` of length ``d**2``."""
    b = np.asarray(b, dtype=complex)
    if b.shape != (L.dim**2,):
        raise ValueError(f"right-hand side must have length {L.dim**2}, got shape {b.shape}")
    if L.is_sparse:
        return ShiftedSolver(L).solve_vec(z, b)
    A = L.dense() - z * np.eye(L.dim**2)
    try:
        lu, piv = sla.lu_factor(A, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover
        raise SingularShiftError(z, str(exc)) from exc
    udiag = np.abs(np.diag(lu))
    if udiag.min() <= 1e-14 * max(udiag.max(), 1.0):
        raise SingularShiftError(z, "zero pivot in LU factorization")
    x = sla.lu_solve((lu, piv), b, check_finite=False)
    x = x + sla.lu_solve((lu, piv), b - A @ x, check_finite=False)
    bn = np.linalg.norm(b)
    if bn > 0 and np.linalg.norm(A @ x - b) > RESIDUAL_TOL * bn:
        raise SingularShiftError(z, "residual exceeds tolerance")
    return x


# ---------------------------------------------------------------------------
# time propagation


def propagator(L: Superoperator, t: float) -> np.ndarray:
    """Dense matrix ``exp(L t)`` (scaling and squaring)."""
    if t < 0:
        raise ValueError(f"propagation time must be non-negative, got {t}")
    return sla.expm(L.dense() * t)


def propagate(L: Superoperator, rho0: np.ndarray, t: float) -> np.ndarray:
    """Action of ``exp(L t)`` on ``rho0``."""
    if t < 0:
        raise ValueError(f"propagation time must be non-negative, got {t}")
    rho0 = _check_square(rho0, "rho0")
    if rho0.shape[0] != L.dim:
        raise ValueError(f"state of dim {rho0.shape[0]} does not match superoperator dim {L.dim}")
    if t == 0:
        return rho0.copy()
    if L.is_sparse:
        v = spla.expm_multiply(L.sparse() * t, vectorize(rho0).astype(complex))
        return devectorize(v, L.dim)
    return devectorize(propagator(L, t) @ vectorize(rho0), L.dim)


def propagate_many(L: Superoperator, rho0: np.ndarray, times: Sequence[float]) -> list[np.ndarray]:
    """States ``exp(L t) rho0`` at every requested time (any order, t >= 0).

    Times are visited in ascending order, chaining propagators over the gaps;
    repeated gap lengths reuse one exponential.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("propagation times must be non-negative")
    order = np.argsort(times, kind="stable")
    out: list[np.ndarray | None] = [None] * len(times)
    cache: dict[float, np.ndarray] = {}
    v = vectorize(np.asarray(rho0, dtype=complex))
    t_prev = 0.0
    for idx in order:
        gap = float(times[idx] - t_prev)
        if gap > 0:
            key = round(gap, 12)
            if L.is_sparse:
                v = spla.expm_multiply(L.sparse() * gap, v)
            else:
                P = cache.get(key)
                if P is None:
                    P = cache[key] = sla.expm(L.dense() * gap)
                v = P @ v
            t_prev = float(times[idx])
        out[idx] = devectorize(v.copy(), L.dim)
    return out  # type: ignore[return-value]
