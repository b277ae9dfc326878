"""Emitter models: the generic container, the vibronic dimer and config-file I/O.

All energies are stored as angular frequencies in rad/ps.  Wavenumbers are
converted once with :data:`CM1_TO_RADPS`; rates quoted in inverse time units
are already in ps^-1 and pass through unchanged.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .liouville import LindbladChannel, Superoperator, is_hermitian, lindbladian

#: Speed of light in cm/ps.
SPEED_OF_LIGHT_CM_PS = 0.0299792458
#: Multiply a wavenumber in cm^-1 by this to get rad/ps.
CM1_TO_RADPS = 2 * math.pi * SPEED_OF_LIGHT_CM_PS

#: Reference emission lines of the default dimer (cm^-1).
R3_CM1 = 17455.0
R4_CM1 = 18515.0


def cm1_to_radps(x):
    return np.asarray(x) * CM1_TO_RADPS if not np.isscalar(x) else x * CM1_TO_RADPS


def radps_to_cm1(x):
    return np.asarray(x) / CM1_TO_RADPS if not np.isscalar(x) else x / CM1_TO_RADPS


class ModelError(ValueError):
    """Invalid model definition or malformed model file."""


@dataclass(frozen=True, eq=False)
class EmitterModel:
    """A Markovian emitter: Hamiltonian, Lindblad channels and emission operators.

    Attributes:
        hamiltonian: ``d x d`` Hermitian matrix in rad/ps.
        channels: dissipation channels of the emitter Liouvillian.
        emission_ops: named operators ``a_m`` that sensors couple to.
        basis_labels: one label per basis state.
        metadata: free-form provenance (builder parameters, derived values).
    """

    hamiltonian: np.ndarray
    channels: tuple[LindbladChannel, ...]
    emission_ops: Mapping[str, np.ndarray]
    basis_labels: tuple[str, ...] = ()
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        H = np.asarray(self.hamiltonian)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ModelError(f"hamiltonian must be square, got shape {H.shape}")
        d = H.shape[0]
        if not is_hermitian(H, atol=1e-12 * max(1.0, np.abs(H).max(initial=0.0))):
            raise ModelError("hamiltonian is not Hermitian")
        for i, ch in enumerate(self.channels):
            if ch.jump.shape != (d, d):
                raise ModelError(f"channel {i}: jump operator shape {ch.jump.shape} does not match dim {d}")
        if not self.emission_ops:
            raise ModelError("model defines no emission operators")
        for name, op in self.emission_ops.items():
            if np.shape(op) != (d, d):
                raise ModelError(f"emission op {name!r}: shape {np.shape(op)} does not match dim {d}")
        if self.basis_labels and len(self.basis_labels) != d:
            raise ModelError(f"{len(self.basis_labels)} basis labels for dim {d}")
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "basis_labels", tuple(self.basis_labels))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @cached_property
    def liouvillian(self) -> Superoperator:
        """The emitter-only Liouvillian ``L0``."""
        return lindbladian(self.hamiltonian, self.channels)

    def emission_op(self, name: str) -> np.ndarray:
        try:
            return self.emission_ops[name]
        except KeyError:
            raise ModelError(f"model has no emission operator {name!r}; "
                             f"available: {sorted(self.emission_ops)}") from None

    def content_hash(self) -> str:
        """Stable hash of every matrix in the model (for output metadata)."""
        def raw(m):
            # adding 0.0 folds -0.0 into +0.0 so equal matrices hash equally
            return (np.ascontiguousarray(m, dtype=complex) + 0.0).tobytes()

        h = hashlib.sha256()
        h.update(raw(self.hamiltonian))
        for ch in self.channels:
            h.update(np.float64(ch.rate).tobytes())
            h.update(raw(ch.jump))
        for name in sorted(self.emission_ops):
            h.update(name.encode())
            h.update(raw(self.emission_ops[name]))
        return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# vibronic dimer


def thermal_occupation(omega: float, kT: float) -> float:
    """Bose-Einstein occupation ``1 / (exp(omega / kT) - 1)``; same units for both."""
    if kT <= 0:
        return 0.0
    x = omega / kT
    if x > 1.0:
        # exp(-x) / (1 - exp(-x)) does not overflow for cold modes
        return math.exp(-x) / -math.expm1(-x)
    return 1.0 / math.expm1(x)


@dataclass(frozen=True)
class DimerParams:
    """Vibronic dimer parameters.

    Energies are in cm^-1, rates in ps^-1.  Defaults are the bio-inspired set
    (site energy difference 1042, coupling 92, 5 vibrational quanta).
    """

    delta_alpha: float = 1042.0
    V: float = 92.0
    E: float = 18000.0
    omega_vib: float = 1111.0
    g: float = 267.1
    kT: float = 200.0
    gamma_pd: float = 1.0
    gamma_rad: float = 1.0 / 500.0
    pump_X1: float = 1.0 / 600.0
    Gamma_th: float = 1.0 / 4.8
    L: int = 5

    def __post_init__(self):
        if self.delta_alpha <= 0:
            raise ModelError(f"site energy difference must be positive, got {self.delta_alpha}")
        for name in ("gamma_pd", "gamma_rad", "pump_X1", "Gamma_th", "kT", "omega_vib"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be non-negative, got {getattr(self, name)}")
        if int(self.L) != self.L or self.L < 0:
            raise ModelError(f"L must be a non-negative integer, got {self.L}")

    @classmethod
    def from_site_energies(cls, alpha1: float, alpha2: float, **kw) -> "DimerParams":
        kw.setdefault("E", 0.5 * (alpha1 + alpha2))
        return cls(delta_alpha=alpha1 - alpha2, **kw)

    @property
    def alpha1(self) -> float:
        return self.E + 0.5 * self.delta_alpha

    @property
    def alpha2(self) -> float:
        return self.E - 0.5 * self.delta_alpha

    @property
    def delta_E(self) -> float:
        """Exciton splitting in cm^-1."""
        return math.hypot(self.delta_alpha, 2 * self.V)

    @property
    def theta(self) -> float:
        """Mixing angle, in (0, pi/4) for V != 0."""
        return 0.5 * math.atan(2 * abs(self.V) / self.delta_alpha)

    @property
    def eta(self) -> float:
        return thermal_occupation(self.omega_vib, self.kT)


def _site_states(p: DimerParams) -> tuple[np.ndarray, np.ndarray]:
    """Site states |1>, |2> in the electronic basis (G, X1, X2)."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    sgn = 1.0 if p.V >= 0 else -1.0
    # |X1> = c|1> + sgn s|2>,  |X2> = -sgn s|1> + c|2>
    site1 = np.array([0.0, c, -sgn * s])
    site2 = np.array([0.0, sgn * s, c])
    return site1, site2


def build_vibronic_dimer(p: DimerParams | None = None) -> EmitterModel:
    """Vibronic dimer in the basis {G, X1, X2} x {0..L} (electronic index major).

    The Hamiltonian is the generalised quantum Rabi form in the exciton basis;
    the emitter couples to sensors through ``a = (|G><X1| + |G><X2|) x 1``.
    """
    p = p or DimerParams()
    nv = p.L + 1
    d = 3 * nv
    Iv = np.eye(nv)
    Dm = np.diag(np.sqrt(np.arange(1, nv, dtype=float)), 1)
    num = Dm.T @ Dm

    M = np.diag([0.0, 1.0, 1.0])
    sz = np.diag([0.0, 1.0, -1.0])
    sx = np.zeros((3, 3))
    sx[1, 2] = sx[2, 1] = 1.0
    site1, site2 = _site_states(p)
    # |1><1| - |2><2| expressed in the exciton basis: cos(2t) sz - sgn(V) sin(2t) sx
    relative = np.outer(site1, site1) - np.outer(site2, site2)

    H_cm = (p.E * np.kron(M, Iv)
            + 0.5 * p.delta_E * np.kron(sz, Iv)
            + p.omega_vib * np.kron(np.eye(3), num)
            + p.g / math.sqrt(2) * np.kron(relative, Dm + Dm.T))
    H = CM1_TO_RADPS * H_cm
    H = 0.5 * (H + H.T)

    channels: list[LindbladChannel] = []
    for site in (site1, site2):
        channels.append(LindbladChannel(np.kron(np.outer(site, site), Iv), p.gamma_pd))
    eta = p.eta
    channels.append(LindbladChannel(np.kron(np.eye(3), Dm), p.Gamma_th * (eta + 1)))
    channels.append(LindbladChannel(np.kron(np.eye(3), Dm.T), p.Gamma_th * eta))

    energies, states = _excited_block_eigh(H, nv)
    for v in range(states.shape[1]):
        F = states[:, v]
        for l in range(nv):
            jump = np.zeros((d, d), dtype=complex)
            jump[l, :] = F.conj()
            channels.append(LindbladChannel(jump, p.gamma_rad))

    raise_X1 = np.zeros((3, 3))
    raise_X1[1, 0] = 1.0
    channels.append(LindbladChannel(np.kron(raise_X1, Iv), p.pump_X1))

    lower = np.zeros((3, 3))
    lower[0, 1] = lower[0, 2] = 1.0
    a = np.kron(lower, Iv)

    labels = [f"{e},{l}" for e in ("G", "X1", "X2") for l in range(nv)]
    meta = {
        "builder": "vibronic_dimer",
        "params": {k: getattr(p, k) for k in p.__dataclass_fields__},
        "delta_E_cm1": p.delta_E,
        "theta": p.theta,
        "eta": eta,
    }
    return EmitterModel(H, tuple(channels), {"a": a}, tuple(labels), meta)


def _excited_block_eigh(H: np.ndarray, nv: int) -> tuple[np.ndarray, np.ndarray]:
    d = H.shape[0]
    ex = np.arange(nv, d)
    w, U = np.linalg.eigh(H[np.ix_(ex, ex)])
    states = np.zeros((d, len(ex)), dtype=complex)
    states[ex, :] = U
    return w, states


def excited_eigensystem(model: EmitterModel) -> list[tuple[float, np.ndarray]]:
    """Eigenpairs of ``H0`` on the excited electronic manifold, ascending in energy.

    Only valid for models with the dimer block structure (ground states first,
    ``dim / 3`` of them, decoupled from the excited manifold).
    """
    d = model.dim
    if d % 3:
        raise ModelError(f"dimension {d} is not compatible with the dimer block structure")
    nv = d // 3
    H = model.hamiltonian
    if np.abs(H[:nv, nv:]).max(initial=0.0) > 1e-12 * np.abs(H).max():
        raise ModelError("ground manifold is coupled to the excited manifold")
    w, states = _excited_block_eigh(H, nv)
    return [(float(w[i]), states[:, i]) for i in range(len(w))]


# ---------------------------------------------------------------------------
# config files

UNIT_SCALE = {"rad/ps": 1.0, "cm-1": CM1_TO_RADPS}


def _encode_matrix(m: np.ndarray) -> list:
    # adding 0.0 drops signed zeros so export text is canonical
    m = np.asarray(m, dtype=complex)
    return [[[float(x.real) + 0.0, float(x.imag) + 0.0] for x in row] for row in m]


def _decode_matrix(raw: Any, where: str, dim: int | None = None) -> np.ndarray:
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{where}: matrix entries must be [re, im] number pairs ({exc})") from None
    if arr.ndim != 3 or arr.shape[-1] != 2 or arr.shape[0] != arr.shape[1]:
        raise ModelError(f"{where}: expected a square matrix of [re, im] pairs, got array shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ModelError(f"{where}: dimension {arr.shape[0]} inconsistent with dim={dim}")
    return arr[..., 0] + 1j * arr[..., 1]


def model_to_dict(model: EmitterModel) -> dict:
    """Serializable form; energies are written in rad/ps."""
    out = {
        "format": "specsense-model/1",
        "units": "rad/ps",
        "dim": model.dim,
        "basis_labels": list(model.basis_labels),
        "hamiltonian": _encode_matrix(model.hamiltonian),
        "channels": [{"rate": float(ch.rate), "matrix": _encode_matrix(ch.jump)} for ch in model.channels],
        "emission_ops": {k: _encode_matrix(v) for k, v in model.emission_ops.items()},
    }
    if model.metadata:
        out["metadata"] = json.loads(json.dumps(model.metadata, default=float))
    return out


def model_from_dict(cfg: Mapping[str, Any]) -> EmitterModel:
    if not isinstance(cfg, Mapping):
        raise ModelError("model config must be a mapping at top level")
    for key in ("dim", "hamiltonian", "channels", "emission_ops"):
        if key not in cfg:
            raise ModelError(f"missing required field {key!r}")
    units = cfg.get("units", "rad/ps")
    if units not in UNIT_SCALE:
        raise ModelError(f"field 'units': unknown unit {units!r}; expected one of {sorted(UNIT_SCALE)}")
    dim = cfg["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise ModelError(f"field 'dim': expected a positive integer, got {dim!r}")
    H = _decode_matrix(cfg["hamiltonian"], "field 'hamiltonian'", dim) * UNIT_SCALE[units]
    if not is_hermitian(H, atol=1e-12 * max(1.0, np.abs(H).max(initial=0.0))):
        raise ModelError("field 'hamiltonian': matrix is not Hermitian")
    channels = []
    for i, ch in enumerate(cfg["channels"]):
        where = f"field 'channels[{i}]'"
        if not isinstance(ch, Mapping) or "rate" not in ch or "matrix" not in ch:
            raise ModelError(f"{where}: expected an object with 'rate' and 'matrix'")
        rate = ch["rate"]
        if not isinstance(rate, (int, float)) or rate < 0:
            raise ModelError(f"{where}.rate: expected a non-negative number, got {rate!r}")
        channels.append(LindbladChannel(_decode_matrix(ch["matrix"], f"{where}.matrix", dim), float(rate)))
    ops_raw = cfg["emission_ops"]
    if not isinstance(ops_raw, Mapping) or not ops_raw:
        raise ModelError("field 'emission_ops': expected a non-empty object of named matrices")
    ops = {str(k): _decode_matrix(v, f"field 'emission_ops.{k}'", dim) for k, v in ops_raw.items()}
    labels = tuple(cfg.get("basis_labels") or ())
    if labels and len(labels) != dim:
        raise ModelError(f"field 'basis_labels': {len(labels)} labels for dim={dim}")
    return EmitterModel(H, tuple(channels), ops, labels, dict(cfg.get("metadata") or {}))


def dumps_model(model: EmitterModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def loads_model(text: str) -> EmitterModel:
    """Parse a model config; JSON syntax errors report line and column."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return model_from_dict(cfg)


def save_model(model: EmitterModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path: str | Path) -> EmitterModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc.strerror}") from None
    try:
        return loads_model(text)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from None


def two_level_model(E0: float, decay: float, pump: float = 0.0) -> EmitterModel:
    """Two-level emitter with basis (g, e); ``E0`` in rad/ps, rates in ps^-1."""
    H = np.diag([0.0, E0]).astype(complex)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    chans = [LindbladChannel(sm, decay)]
    if pump:
        chans.append(LindbladChannel(sm.T.copy(), pump))
    return EmitterModel(H, tuple(chans), {"a": sm}, ("g", "e"))


def with_emission_ops(model: EmitterModel, ops: Mapping[str, np.ndarray]) -> EmitterModel:
    merged = dict(model.emission_ops)
    merged.update(ops)
    return EmitterModel(model.hamiltonian, model.channels, merged, model.basis_labels, model.metadata)


__all__: Sequence[str] = [
    "CM1_TO_RADPS", "R3_CM1", "R4_CM1", "DimerParams", "EmitterModel", "ModelError",
    "build_vibronic_dimer", "cm1_to_radps", "dumps_model", "excited_eigensystem",
    "load_model", "loads_model", "model_from_dict", "model_to_dict", "radps_to_cm1",
    "save_model", "thermal_occupation", "two_level_model", "with_emission_ops",
]
