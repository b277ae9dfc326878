"""``specsense`` command-line front end.

Every computation command writes a CSV table (header row, one line per grid
point) and a JSON sidecar next to it (``<out>.json``) with the model hash,
tolerances, code version and any warnings.  Errors print a single line

    specsense: error: <ErrorType>: <message>

to stderr and exit with status 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .emitter import (CM1_TO_RADPS, R3_CM1, R4_CM1, DimerParams, EmitterModel, ModelError,
                      build_vibronic_dimer, dumps_model, excited_eigensystem, load_model)
from .hierarchy import HierarchySolver, SensorSpec
from .liouville import RESIDUAL_TOL
from .oracle import DEFAULT_EPS_CM1, OracleWarning, build_joint, oracle_g2_tau, oracle_gM_zero, oracle_spectrum
from .timecorr import QUAD_TOL, g2_tau

BUILTIN = "builtin-dimer"
DEFAULT_GAMMA = 1 / 4.8
DEFAULT_EPS_SWEEP = "1e-4,3e-4,1e-3,3e-3,1e-2"


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument parsing helpers


def parse_grid(text: str) -> np.ndarray:
    """``LO:HI:N`` -> N evenly spaced points (N = 1 gives ``[LO]``)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid {text!r} must have the form LO:HI:N")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"grid {text!r} must have the form LO:HI:N") from None
    if n < 1:
        raise UsageError(f"grid {text!r}: N must be at least 1")
    if n > 1 and not hi > lo:
        raise UsageError(f"grid {text!r}: HI must exceed LO")
    return np.array([lo]) if n == 1 else np.linspace(lo, hi, n)


def parse_eps(text: str | None) -> list[float]:
    """``eps=V[,V...]`` (the ``eps=`` prefix is optional); values in cm^-1."""
    if text is None:
        return []
    body = text.split("=", 1)[1] if text.startswith("eps=") else text
    try:
        vals = [float(v) for v in body.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse eps list {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise UsageError(f"eps values must be positive, got {text!r}")
    return vals


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None


def load(source: str) -> EmitterModel:
    if source == BUILTIN:
        return build_vibronic_dimer(DimerParams())
    return load_model(source)


# ---------------------------------------------------------------------------
# output


def write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def write_sidecar(path: Path, command: str, model: EmitterModel, args, extra: dict) -> None:
    meta = {
        "command": command,
        "version": __version__,
        "model": args.model,
        "model_hash": model.content_hash(),
        "tolerances": {"solver_residual": RESIDUAL_TOL, "quadrature": QUAD_TOL},
        "threads": args.threads,
    }
    meta.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _out(args, default: str) -> Path:
    return Path(args.out or default)


class _Warnings:
    """Collects oracle warnings for the sidecar instead of printing them."""

    def __enter__(self):
        self._ctx = warnings.catch_warnings(record=True)
        self.caught = self._ctx.__enter__()
        warnings.simplefilter("always", OracleWarning)
        return self

    def __exit__(self, *exc):
        self._ctx.__exit__(*exc)
        return False

    @property
    def messages(self) -> list[str]:
        seen = []
        for w in self.caught:
            msg = str(w.message)
            if issubclass(w.category, OracleWarning) and msg not in seen:
                seen.append(msg)
        return seen


def _sensor(omega_cm1: float, args) -> SensorSpec:
    return SensorSpec.from_cm1(omega_cm1, args.gamma_sensor)


def _map(fn, items, threads: int) -> list:
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# commands


def cmd_model(args) -> int:
    if args.action == "export":
        p = DimerParams(L=args.L) if args.L is not None else DimerParams()
        text = dumps_model(build_vibronic_dimer(p))
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    model = load(args.model)
    energies = np.linalg.eigvalsh(model.hamiltonian) / CM1_TO_RADPS
    lines = [f"dim: {model.dim}", f"liouville_dim: {model.dim ** 2}",
             f"channels: {len(model.channels)}",
             f"emission_ops: {','.join(sorted(model.emission_ops))}",
             f"model_hash: {model.content_hash()}",
             "H0_eigenvalues_cm1: " + " ".join(f"{e:.4f}" for e in energies)]
    try:
        exc = excited_eigensystem(model)
        lines.append(f"excited_eigenstates: {len(exc)}")
    except ModelError:
        pass
    dE = model.metadata.get("delta_E_cm1") if model.metadata else None
    if dE is not None:
        lines.append(f"delta_E_cm1: {float(dE):.4f}")
    for i, ch in enumerate(model.channels):
        lines.append(f"channel[{i}]: rate={ch.rate:.6g} nnz={int(np.count_nonzero(ch.jump))}")
    print("\n".join(lines))
    return 0


def cmd_spectrum(args) -> int:
    model = load(args.model)
    grid = parse_grid(args.grid)
    eps_list = parse_eps(args.oracle)
    solver = HierarchySolver(model)
    sensor = _sensor(grid[0], args)
    S = solver.power_spectrum(sensor, grid * CM1_TO_RADPS, threads=args.threads)
    header = ["omega_cm1", "S"]
    cols = [grid, S]
    extra: dict = {"grid_cm1": [grid[0], grid[-1], len(grid)], "gamma_sensor": args.gamma_sensor}
    with _Warnings() as wrec:
        for eps in eps_list:
            def one(w, eps=eps):
                return oracle_spectrum(build_joint(model, [_sensor(w, args)], eps * CM1_TO_RADPS))
            cols.append(np.array(_map(one, grid, args.threads)))
            header.append(f"S_oracle_eps={eps:g}")
    extra["warnings"] = wrec.messages
    out = _out(args, "spectrum.csv")
    write_table(out, header, list(zip(*cols)))
    write_sidecar(out, "spectrum", model, args, extra)
    return 0


def cmd_g2map(args) -> int:
    model = load(args.model)
    g1 = parse_grid(args.grid)
    g2 = parse_grid(args.grid2) if args.grid2 else np.array([args.omega2])
    eps_list = parse_eps(args.oracle)
    solver = HierarchySolver(model)
    pairs = [(w1, w2) for w1 in g1 for w2 in g2]

    def one(p):
        return solver.g2_zero(_sensor(p[0], args), _sensor(p[1], args))

    vals = np.array(_map(one, pairs, args.threads))
    header = ["omega1_cm1", "omega2_cm1", "g2"]
    cols = [np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]), vals]
    with _Warnings() as wrec:
        for eps in eps_list:
            def orc(p, eps=eps):
                j = build_joint(model, [_sensor(p[0], args), _sensor(p[1], args)], eps * CM1_TO_RADPS)
                return oracle_gM_zero(j)
            o = np.array(_map(orc, pairs, args.threads))
            cols += [o, np.abs(o - vals)]
            header += [f"g2_oracle_eps={eps:g}", f"abs_delta_eps={eps:g}"]
    extra = {"grid1_cm1": [g1[0], g1[-1], len(g1)], "omega2_cm1": list(map(float, g2)),
             "gamma_sensor": args.gamma_sensor, "max_g2": float(vals.max()), "warnings": wrec.messages}
    out = _out(args, "g2map.csv")
    write_table(out, header, list(zip(*cols)))
    write_sidecar(out, "g2map", model, args, extra)
    return 0


def cmd_g2tau(args) -> int:
    model = load(args.model)
    taus = parse_grid(args.tau)
    eps_list = parse_eps(args.oracle)
    s1, s2 = _sensor(args.omega1, args), _sensor(args.omega2, args)
    curve = g2_tau(model, s1, s2, taus)
    header = ["tau_ps", "g2"]
    cols = [taus, curve.values]
    if args.components:
        header += ["I0", "I1", "I2"]
        cols += [curve.components["I0"], curve.components["I1"], curve.components["I2"]]
    extra: dict = {"omega1_cm1": args.omega1, "omega2_cm1": args.omega2, "gamma_sensor": args.gamma_sensor,
                   "tau_grid_ps": [taus[0], taus[-1], len(taus)],
                   "components_scaled_by": "1/(<n1><n2>)"}
    with _Warnings() as wrec:
        devs = {}
        for eps in eps_list:
            o = oracle_g2_tau(build_joint(model, [s1, s2], eps * CM1_TO_RADPS), taus).values
            cols.append(o)
            header.append(f"g2_oracle_eps={eps:g}")
            devs[f"{eps:g}"] = float(np.max(np.abs(o - curve.values) / np.abs(o)))
    if devs:
        extra["max_relative_deviation"] = devs
    extra["warnings"] = wrec.messages
    out = _out(args, "g2tau.csv")
    write_table(out, header, list(zip(*cols)))
    write_sidecar(out, "g2tau", model, args, extra)
    return 0


def cmd_gM(args) -> int:
    model = load(args.model)
    omegas = parse_floats(args.omegas)
    if len(omegas) < 1:
        raise UsageError("--omegas needs at least one frequency")
    sensors = [_sensor(w, args) for w in omegas]
    val = HierarchySolver(model).gM_zero(sensors)
    header = ["M", "gM"]
    row = [len(sensors), val]
    with _Warnings() as wrec:
        for eps in parse_eps(args.oracle):
            row.append(oracle_gM_zero(build_joint(model, sensors, eps * CM1_TO_RADPS)))
            header.append(f"gM_oracle_eps={eps:g}")
    out = _out(args, "gM.csv")
    write_table(out, header, [row])
    write_sidecar(out, "gM", model, args, {"omegas_cm1": omegas, "gamma_sensor": args.gamma_sensor,
                                           "warnings": wrec.messages})
    return 0


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def cmd_convergence(args) -> int:
    model = load(args.model)
    eps_list = parse_eps(args.oracle or DEFAULT_EPS_SWEEP)
    s1, s2 = _sensor(args.omega1, args), _sensor(args.omega2, args)
    solver = HierarchySolver(model)
    S_h = s2.gamma / (2 * math.pi) * solver.population(s2)
    g_h = solver.g2_zero(s1, s2)
    rows = []
    with _Warnings() as wrec:
        def one(eps):
            e = eps * CM1_TO_RADPS
            S_o = oracle_spectrum(build_joint(model, [s2], e))
            g_o = oracle_gM_zero(build_joint(model, [s1, s2], e))
            return [eps, S_o, g_o, S_h, g_h, S_o - S_h, g_o - g_h]
        rows = _map(one, eps_list, args.threads)
    extra: dict = {"omega1_cm1": args.omega1, "omega2_cm1": args.omega2,
                   "spectrum_at_cm1": args.omega2, "gamma_sensor": args.gamma_sensor,
                   "warnings": wrec.messages}
    if len(rows) >= 2:
        e = [r[0] for r in rows]
        extra["slope_spectrum"] = loglog_slope(e, [abs(r[5]) for r in rows])
        extra["slope_g2"] = loglog_slope(e, [abs(r[6]) for r in rows])
    out = _out(args, "convergence.csv")
    write_table(out, ["eps_cm1", "S_oracle", "g2_oracle", "S_hierarchy", "g2_hierarchy",
                      "delta_S", "delta_g2"], rows)
    write_sidecar(out, "convergence", model, args, extra)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--model", default=BUILTIN, help=f"model file or {BUILTIN!r} (default)")
    common.add_argument("--gamma-sensor", type=float, default=DEFAULT_GAMMA,
                        help="sensor linewidth in ps^-1 (default 1/4.8)")
    common.add_argument("--threads", type=int, default=1, help="worker threads over grid points")
    common.add_argument("--out", help="output CSV path (sidecar goes to <out>.json)")

    p = _Parser(prog="specsense", description="Frequency-filtered photon correlations of open quantum emitters.")
    p.add_argument("--version", action="version", version=f"specsense {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("model", parents=[common], help="export or inspect a model file")
    m.add_argument("action", choices=["export", "inspect"])
    m.add_argument("--L", type=int, help="vibrational cutoff for export")
    m.set_defaults(func=cmd_model)

    s = sub.add_parser("spectrum", parents=[common], help="filtered power spectrum")
    s.add_argument("--grid", default="17000:19000:801", help="filter centres LO:HI:N in cm^-1")
    s.add_argument("--oracle", help="add explicit-sensor columns, eps=V[,V...] in cm^-1")
    s.set_defaults(func=cmd_spectrum)

    g = sub.add_parser("g2map", parents=[common], help="zero-delay g2 over a frequency grid")
    g.add_argument("--grid", default="17000:19000:201", help="omega1 grid LO:HI:N in cm^-1")
    g.add_argument("--grid2", help="optional omega2 grid for a full 2-D map")
    g.add_argument("--omega2", type=float, default=R3_CM1, help="fixed omega2 in cm^-1")
    g.add_argument("--oracle", help="eps=V[,V...] in cm^-1")
    g.set_defaults(func=cmd_g2map)

    t = sub.add_parser("g2tau", parents=[common], help="time-resolved g2")
    t.add_argument("--omega1", type=float, default=R4_CM1)
    t.add_argument("--omega2", type=float, default=R3_CM1)
    t.add_argument("--tau", default="-20:20:201", help="delay grid LO:HI:N in ps")
    t.add_argument("--components", action="store_true", help="add I0, I1, I2 columns")
    t.add_argument("--oracle", help=f"eps=V[,V...] in cm^-1 (e.g. eps={DEFAULT_EPS_CM1:g})")
    t.set_defaults(func=cmd_g2tau)

    n = sub.add_parser("gM", parents=[common], help="zero-delay M-photon coincidence")
    n.add_argument("--omegas", default=f"{R4_CM1:g},{R3_CM1:g}", help="comma-separated centres in cm^-1")
    n.add_argument("--oracle", help="eps=V[,V...] in cm^-1")
    n.set_defaults(func=cmd_gM)

    c = sub.add_parser("convergence", parents=[common], help="oracle-vs-hierarchy eps sweep")
    c.add_argument("--omega1", type=float, default=R4_CM1)
    c.add_argument("--omega2", type=float, default=R3_CM1, help="also the spectrum frequency")
    c.add_argument("--oracle", help=f"eps=V[,V...] in cm^-1 (default {DEFAULT_EPS_SWEEP})")
    c.set_defaults(func=cmd_convergence)
    return p


_GRID_FLAGS = ("--grid", "--grid2", "--tau", "--omegas")


def _attach_grid_values(argv: Sequence[str]) -> list[str]:
    """Turn ``--tau -20:20:201`` into ``--tau=-20:20:201``.

    argparse would otherwise read a value starting with ``-`` as an option.
    """
    out: list[str] = []
    it = iter(argv)
    for a in it:
        if a in _GRID_FLAGS:
            nxt = next(it, None)
            if nxt is None:
                out.append(a)
            else:
                out.append(f"{a}={nxt}")
            continue
        out.append(a)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parser.parse_args(_attach_grid_values(argv))
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        if getattr(args, "gamma_sensor", 1.0) <= 0:
            raise UsageError("--gamma-sensor must be positive")
        return args.func(args)
    except UsageError as exc:
        print(f"specsense: error: UsageError: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure becomes one parsable line
        msg = " ".join(str(exc).split())
        print(f"specsense: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
