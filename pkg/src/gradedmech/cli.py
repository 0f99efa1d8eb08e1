"""Command line front end.

    gradedmech check    --config tangent3
    gradedmech simulate --config so3_free --out results/
    gradedmech residual --config so3_free --curve results/so3_free_trajectory.csv
    gradedmech momenta  --config so3_free --curve results/so3_free_trajectory.csv
    gradedmech legendre --config javelin --seed 7

``--config`` takes a JSON path or the name of a bundled config.  Exit codes:
0 success, 1 configuration error (the message names the field), 2 numerical
failure (partial output is still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from math import factorial
from pathlib import Path

import numpy as np

from . import expr as ex
from . import algebroid as al
from . import graded as gr
from . import hamilton as hm
from . import lagrange as lg
from . import reduce as rd

CONFIG_PACKAGE = "gradedmech.configs"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Config loading


def bundled_configs() -> list[str]:
    files = resources.files(CONFIG_PACKAGE)
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_config(ref: str) -> dict:
    path = Path(ref)
    if path.is_file():
        text = path.read_text()
    elif ref in bundled_configs():
        text = resources.files(CONFIG_PACKAGE).joinpath(f"{ref}.json").read_text()
    else:
        raise ConfigError("config", f"no such file or bundled config {ref!r} (bundled: {', '.join(bundled_configs())})")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be an object")
    return cfg


def _get(block: dict, key: str, path: str, kind=None, default=...):
    if key not in block:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing")
        return default
    value = block[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return value


def _constants(spec, path: str, m: int | None = None) -> np.ndarray:
    """"so3", "abelian:<m>", a nested m x m x m list, or {"m": m, "entries": [[a, b, c, value], ...]} (1-based)."""
    try:
        if spec == "so3":
            C = al.so3_constants()
        elif isinstance(spec, str) and spec.startswith("abelian:"):
            C = np.zeros((int(spec.split(":")[1]),) * 3)
        elif isinstance(spec, dict):
            entries = {(int(a) - 1, int(b) - 1, int(c) - 1): float(v) for a, b, c, v in spec.get("entries", [])}
            C = al.constants_from_entries(int(spec["m"]), entries)
        else:
            C = al._validated_constants(np.array(spec, dtype=float))
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise ConfigError(path, f"invalid structure constants ({exc})") from None
    if m is not None and C.shape[0] != m:
        raise ConfigError(path, f"constants have rank {C.shape[0]}, expected {m}")
    return C


def _connection(block: dict, path: str) -> al.ConnectionSpec:
    C = _constants(_get(block, "structure", path), f"{path}.structure")
    comps = _get(block, "components", path, list)
    try:
        return al.ConnectionSpec([[str(v) if isinstance(v, str) else float(v) for v in row] for row in comps], C)
    except (ValueError, ex.ParseError) as exc:
        raise ConfigError(f"{path}.components", str(exc)) from None


def build_algebroid(block: dict):
    """Returns (AlgebroidSpec, ConnectionSpec or None, constants or None)."""
    if not isinstance(block, dict):
        raise ConfigError("algebroid", "expected an object")
    kind = block.get("builtin")
    if kind is not None:
        if kind == "tangent":
            return al.tangent(int(_get(block, "n", "algebroid", int))), None, None
        if kind in ("lie_algebra", "so3"):
            C = al.so3_constants() if kind == "so3" else _constants(_get(block, "structure", "algebroid"), "algebroid.structure")
            return al.lie_algebra(C), None, C
        if kind == "atiyah_trivial":
            C = _constants(_get(block, "structure", "algebroid"), "algebroid.structure")
            return al.atiyah_trivial(int(_get(block, "n", "algebroid", int)), C), None, C
        if kind == "deformed_atiyah":
            conn = _connection(_get(block, "connection", "algebroid", dict), "algebroid.connection")
            return al.deformed_atiyah(conn), conn, conn.constants
        raise ConfigError("algebroid.builtin", f"unknown builtin {kind!r}")
    n = int(_get(block, "n_base", "algebroid", int))
    m = int(_get(block, "m_fiber", "algebroid", int))
    anchor = _get(block, "anchor", "algebroid", list)
    if len(anchor) != n or any(not isinstance(r, list) or len(r) != m for r in anchor):
        raise ConfigError("algebroid.anchor", f"expected a {n} x {m} table")
    structure = {}
    for i, entry in enumerate(_get(block, "structure", "algebroid", list, [])):
        try:
            a, b, c, value = entry
            key = (int(a) - 1, int(b) - 1, int(c) - 1)
        except (TypeError, ValueError):
            raise ConfigError(f"algebroid.structure[{i}]", "expected [a, b, c, expression]") from None
        if not all(0 <= v < m for v in key):
            raise ConfigError("algebroid.structure", f"entry {i} has index out of range for fiber rank {m}")
        structure[key] = value
    try:
        spec = al.AlgebroidSpec(n, m, anchor, structure, name=block.get("name", "custom"))
    except ex.ParseError as exc:
        raise ConfigError("algebroid", str(exc)) from None
    except ValueError as exc:
        raise ConfigError("algebroid.structure", str(exc)) from None
    return spec, None, None


def _rescale(expression, scales: dict) -> ex.Expr:
    e = ex.as_expr(expression)
    return ex.substitute(e, {name: ex.mul(ex.Num(f), ex.Var(name)) for name, f in scales.items() if f != 1.0})


def _convention_scales(n, m, k, source, target, with_theta=False) -> dict:
    """Factors s with (source coordinate) = s * (target coordinate)."""
    if source == target:
        return {}
    up = source == "plain"
    out = {}
    top = k if not with_theta else k - 1
    for w in range(1, top + 1):
        f = float(factorial(w)) if up else 1.0 / factorial(w)
        for a in range(m):
            out[f"y{w}_{a + 1}"] = f
    if with_theta:
        f = 1.0 / factorial(k) if up else float(factorial(k))
        for a in range(m):
            out[f"theta_{a + 1}"] = f
    return out


@dataclass
class SystemConfig:
    name: str
    algebroid: al.AlgebroidSpec
    k: int
    convention: str
    source_convention: str
    lagrangian: lg.LagrangianSpec | None = None
    hamiltonian: hm.HamiltonianSpec | None = None
    reduced: rd.ReducedSystem | None = None
    connection: al.ConnectionSpec | None = None
    simulation: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def build_system(cfg: dict, convention: str | None = None) -> SystemConfig:
    name = str(cfg.get("name", "system"))
    spec, conn, C = build_algebroid(_get(cfg, "algebroid", ""))
    k = cfg.get("k", 1)
    if not isinstance(k, int) or k < 1:
        raise ConfigError("k", "order must be a positive integer")
    source = cfg.get("convention", "plain")
    if source not in gr.CONVENTIONS:
        raise ConfigError("convention", f"must be one of {gr.CONVENTIONS}")
    target = convention or source
    if target not in gr.CONVENTIONS:
        raise ConfigError("--convention", f"must be one of {gr.CONVENTIONS}")
    params = cfg.get("parameters", {})
    if not isinstance(params, dict) or not all(isinstance(v, (int, float)) for v in params.values()):
        raise ConfigError("parameters", "expected a mapping of names to numbers")
    has_l, has_h = "lagrangian" in cfg, "hamiltonian" in cfg
    if has_l and has_h:
        raise ConfigError("lagrangian", "give exactly one of lagrangian / hamiltonian")
    system = SystemConfig(name, spec, k, target, source, connection=conn, simulation=cfg.get("simulation", {}), raw=cfg)
    n, m = spec.n_base, spec.m_fiber
    if has_l:
        try:
            L = lg.LagrangianSpec(spec, k, cfg["lagrangian"], source, params)
            if target != source:
                L = lg.LagrangianSpec(spec, k, _rescale(L.expression, _convention_scales(n, m, k, source, target)), target)
        except ex.ParseError as exc:
            raise ConfigError("lagrangian", str(exc)) from None
        system.lagrangian = L
        reduced = cfg.get("reduced")
        if reduced is not None:
            system.reduced = _reduced(reduced, L, spec, conn, C)
    if has_h:
        try:
            H = hm.HamiltonianSpec(spec, k, cfg["hamiltonian"], source, params)
            if target != source:
                H = hm.HamiltonianSpec(spec, k, _rescale(H.expression, _convention_scales(n, m, k, source, target, True)),
                                       target)
        except ex.ParseError as exc:
            raise ConfigError("hamiltonian", str(exc)) from None
        system.hamiltonian = H
    return system


def _reduced(block, L, spec, conn, C) -> rd.ReducedSystem:
    kind = block.get("kind") if isinstance(block, dict) else None
    if kind not in rd.KINDS:
        raise ConfigError("reduced.kind", f"must be one of {rd.KINDS}")
    if C is None:
        raise ConfigError("reduced.kind", "needs a Lie algebra, atiyah_trivial or deformed_atiyah algebroid")
    n = 0 if kind == "euler_poincare" else spec.n_base
    try:
        return rd.ReducedSystem(kind, L, C, n, conn)
    except ValueError as exc:
        raise ConfigError("reduced.kind", str(exc)) from None


# ---------------------------------------------------------------------------
# Initial data


def _block(value, size: int, path: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a list of numbers") from None
    if arr.size != size:
        raise ConfigError(path, f"expected {size} entries, got {arr.size}")
    return arr


def _blocks(value, count: int, size: int, path: str) -> list[np.ndarray]:
    if count == 0:
        return []
    if not isinstance(value, list) or len(value) != count:
        raise ConfigError(path, f"expected {count} blocks")
    return [_block(v, size, f"{path}[{i}]") for i, v in enumerate(value)]


def _simulation_settings(system: SystemConfig):
    sim = system.simulation
    if not isinstance(sim, dict) or not sim:
        raise ConfigError("simulation", "missing")
    t_end = float(_get(sim, "t_end", "simulation", (int, float)))
    h = float(_get(sim, "h", "simulation", (int, float)))
    if h <= 0 or t_end < 0:
        raise ConfigError("simulation.h", "step must be positive and t_end non-negative")
    if abs(round(t_end / h) * h - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError("simulation.t_end", "must be an integer multiple of h")
    every = int(sim.get("output_every", 10))
    if every < 1:
        raise ConfigError("simulation.output_every", "must be at least 1")
    return t_end, h, every, _get(sim, "initial", "simulation", dict)


def initial_lagrangian_state(system: SystemConfig, init: dict):
    L = system.lagrangian
    n, m, k = L.n, L.m, L.k
    x = _block(init.get("x", []), n, "simulation.initial.x")
    ys = _blocks(init.get("y"), k, m, "simulation.initial.y")
    pis = _blocks(init.get("pi", []), k - 1, m, "simulation.initial.pi")
    p = gr.HigherPoint(x, ys, system.source_convention)
    if system.convention != system.source_convention:
        pp = gr.convert_convention(gr.PhasePoint(x, ys[:-1], [np.zeros(m)] + pis, system.source_convention),
                                   system.convention)
        p = gr.convert_convention(p, system.convention)
        pis = list(pp.pi[1:])
    return p, pis


def initial_hamiltonian_state(system: SystemConfig, init: dict):
    H = system.hamiltonian
    n, m, k = H.n, H.m, H.k
    x = _block(init.get("x", []), n, "simulation.initial.x")
    ys = _blocks(init.get("y", []), k - 1, m, "simulation.initial.y")
    theta = _block(init.get("theta"), m, "simulation.initial.theta")
    pis = _blocks(init.get("pi", []), k - 1, m, "simulation.initial.pi")
    mp = gr.MironianPoint(x, ys, theta, system.source_convention)
    if system.convention != system.source_convention:
        pp = gr.convert_convention(gr.PhasePoint(x, ys, [np.zeros(m)] + pis, system.source_convention),
                                   system.convention)
        mp = gr.convert_convention(mp, system.convention)
        pis = list(pp.pi[1:])
    return mp, pis


# ---------------------------------------------------------------------------
# CSV


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def state_columns(n: int, m: int, k: int, lower_only: bool = False) -> list[str]:
    cols = [f"x_{A + 1}" for A in range(n)]
    top = k - 1 if lower_only else k
    cols += [f"y_{w}_{a + 1}" for w in range(1, top + 1) for a in range(m)]
    return cols


def ladder_columns(m: int, k: int) -> list[str]:
    return [f"pi_{U}_{a + 1}" for U in range(1, k + 1) for a in range(m)]


def read_curve_csv(path: str, n: int, m: int, k: int):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError("--curve", str(exc)) from None
    if len(rows) < 2:
        raise ConfigError("--curve", "needs a header and at least one row")
    header = rows[0]
    need = ["t"] + state_columns(n, m, k)
    missing = [c for c in need if c not in header]
    if missing:
        raise ConfigError("--curve", f"missing columns {missing}")
    idx = [header.index(c) for c in need]
    try:
        data = np.array([[float(r[i]) for i in idx] for r in rows[1:]])
    except (ValueError, IndexError):
        raise ConfigError("--curve", "non-numeric entry") from None
    t = data[:, 0]
    if t.size > 2 and np.max(np.abs(np.diff(t, 2))) > 1e-9 * max(1.0, abs(t[-1])):
        raise ConfigError("--curve", "samples must be uniformly spaced in t")
    x = data[:, 1:1 + n]
    y = data[:, 1 + n:].reshape(-1, k, m)
    return t, x, y


# ---------------------------------------------------------------------------
# Commands


def _write_report(out: Path, name: str, payload: dict) -> Path:
    path = out / f"{name}_report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_check(system: SystemConfig, out: Path | None, seed: int, tol: float | None) -> int:
    tol = 1e-12 if tol is None else tol
    spec = system.algebroid
    samples = al.sample_points(spec.n_base, 50, seed)
    reports = [al.check_almost_lie(spec, samples, tol), al.check_jacobi(spec, samples, tol)]
    rng = np.random.default_rng(seed)
    eq_err = 0.0
    for kk in range(1, max(system.k, 3) + 1):
        ws = gr.lie_algebroid_structure(spec, kk)
        for _ in range(10):
            X, Y, P, Pi = _random_weighted_inputs(ws, rng)
            eq_err = max(eq_err, gr.equivariance_error(ws, X, Y, P, Pi, float(rng.uniform(0.3, 2.0))))
    eq_tol = max(tol, 1e-12)
    eq_line = f"weight equivariance: {'PASS' if eq_err <= eq_tol else 'FAIL'} (max relative error {eq_err:.3e}, tol {eq_tol:.1e})"
    for r in reports:
        print(r.line())
    print(eq_line)
    if out is not None:
        _write_report(out, f"{system.name}_check", {
            "algebroid": spec.name,
            "almost_lie": {"passed": reports[0].passed, "max_residual": reports[0].max_residual},
            "jacobi": {"passed": reports[1].passed, "max_residual": reports[1].max_residual},
            "equivariance": {"passed": eq_err <= eq_tol, "max_relative_error": eq_err},
            "tol": tol,
        })
    if not all(r.passed for r in reports) or eq_err > eq_tol:
        raise ConfigError("algebroid.structure", "structure checks failed")
    return 0


def _random_weighted_inputs(ws: gr.WeightedStructure, rng):
    k = ws.k
    X = [rng.uniform(-1, 1, ws.dim_X(u)) for u in range(k)]
    Y = [rng.uniform(-1, 1, ws.m) for _ in range(k)]
    P = {V: rng.uniform(-1, 1, ws.dim_X(k + 1 - V)) for V in range(2, k + 2)}
    Pi = [rng.uniform(-1, 1, ws.m) for _ in range(k)]
    return X, Y, P, Pi


def cmd_simulate(system: SystemConfig, out: Path) -> int:
    t_end, h, every, init = _simulation_settings(system)
    if system.lagrangian is None and system.hamiltonian is None:
        raise ConfigError("lagrangian", "simulate needs a lagrangian or a hamiltonian")
    if system.hamiltonian is not None:
        return _simulate_hamiltonian(system, out, t_end, h, every, init)
    L = system.lagrangian
    p0, pis = initial_lagrangian_state(system, init)
    traj = lg.integrate(L, p0, pis, t_end, h, residual_every=every)
    n, m, k = L.n, L.m, L.k
    monitor = None
    if system.reduced is not None:
        try:
            monitor = rd.conserved_momentum_monitor(system.reduced, traj)
        except ValueError:
            monitor = None
    header = ["t"] + state_columns(n, m, k) + ladder_columns(m, k) + ["energy"]
    header += ["momentum_drift"] if monitor is not None else []
    header += ["el_residual"]
    N = len(traj)
    nodes = list(range(0, N, every))
    if nodes[-1] != N - 1:
        nodes.append(N - 1)
    rows = []
    for i in nodes:
        row = [traj.t[i], *traj.x[i], *traj.y[i].ravel(), *traj.pi[i].ravel(), traj.monitors["energy"][i]]
        if monitor is not None:
            row.append(monitor.per_node[i])
        row.append(traj.residual[i])
        rows.append(row)
    path = out / f"{system.name}_trajectory.csv"
    write_csv(path, header, rows)
    energy = traj.monitors["energy"]
    report = {
        "system": system.name, "convention": system.convention, "status": traj.status, "message": traj.message,
        "steps": N - 1, "h": h, "t_end": float(traj.t[-1]), "output_every": every,
        "max_el_residual": float(np.nanmax(traj.residual)) if np.any(np.isfinite(traj.residual)) else None,
        "energy_drift": float(np.max(np.abs(energy - energy[0]))),
    }
    if monitor is not None:
        report["momentum"] = {"quantity": monitor.quantity, "drift": monitor.drift}
    _write_report(out, system.name, report)
    print(f"wrote {path} ({len(rows)} rows); status {traj.status}")
    if traj.status != "ok":
        raise NumericalFailure(traj.message)
    return 0


def _simulate_hamiltonian(system, out, t_end, h, every, init) -> int:
    H = system.hamiltonian
    mp, pis = initial_hamiltonian_state(system, init)
    traj = hm.integrate_hamiltonian(H, mp, pis, t_end, h)
    n, m, k = H.n, H.m, H.k
    header = ["t"] + state_columns(n, m, k, lower_only=True) + ladder_columns(m, k) + ["hamiltonian", "energy"]
    N = traj.t.size
    nodes = list(range(0, N, every))
    if nodes[-1] != N - 1:
        nodes.append(N - 1)
    rows = [[traj.t[i], *traj.x[i], *traj.y[i].ravel(), *traj.pi[i].ravel(), traj.hamiltonian[i], traj.energy[i]]
            for i in nodes]
    path = out / f"{system.name}_trajectory.csv"
    write_csv(path, header, rows)
    _write_report(out, system.name, {
        "system": system.name, "convention": system.convention, "status": traj.status, "message": traj.message,
        "steps": N - 1, "h": h, "energy_drift": float(np.max(np.abs(traj.energy - traj.energy[0]))),
    })
    print(f"wrote {path} ({len(rows)} rows); status {traj.status}")
    if traj.status != "ok":
        raise NumericalFailure(traj.message)
    return 0


def _need_lagrangian(system: SystemConfig) -> lg.LagrangianSpec:
    if system.lagrangian is None:
        raise ConfigError("lagrangian", "this command needs a lagrangian")
    return system.lagrangian


def cmd_residual(system: SystemConfig, out: Path, curve: str | None) -> int:
    L = _need_lagrangian(system)
    if curve is None:
        raise ConfigError("--curve", "required for residual")
    t, x, y = read_curve_csv(curve, L.n, L.m, L.k)
    header = ["t"] + [f"r_fiber_{a + 1}" for a in range(L.m)] + [f"r_base_{A + 1}" for A in range(L.n)] + ["max_abs"]
    rows = []
    for i in range(t.size):
        r = lg.residual_from_samples(L, t, x, y, i)
        if r is not None:
            rows.append([t[i], *r, float(np.max(np.abs(r)))])
    path = out / f"{system.name}_residual.csv"
    write_csv(path, header, rows)
    worst = max((r[-1] for r in rows), default=float("nan"))
    print(f"wrote {path} ({len(rows)} interior nodes); max |residual| {worst:.3e}")
    return 0


def cmd_momenta(system: SystemConfig, out: Path, curve: str | None) -> int:
    L = _need_lagrangian(system)
    if curve is None:
        raise ConfigError("--curve", "required for momenta")
    t, x, y = read_curve_csv(curve, L.n, L.m, L.k)
    rows = []
    for i in range(t.size):
        jet = lg.curve_jet_from_samples(L, t, x, y, i, order=max(2 * L.k - 2, 1))
        if jet is not None:
            rows.append([t[i], *np.concatenate(lg.jacobi_ostrogradski(L, jet))])
    path = out / f"{system.name}_momenta.csv"
    write_csv(path, ["t"] + ladder_columns(L.m, L.k), rows)
    print(f"wrote {path} ({len(rows)} nodes)")
    return 0


def cmd_legendre(system: SystemConfig, out: Path, seed: int, tol: float | None, count: int = 20) -> int:
    L = _need_lagrangian(system)
    tol = 1e-8 if tol is None else tol
    n, m, k = L.n, L.m, L.k
    rng = np.random.default_rng(seed)
    H = hm.hamiltonian_from_lagrangian(L)
    header = state_columns(n, m, k) + [f"theta_{a + 1}" for a in range(m)] + ["H", "roundtrip_error"]
    rows, failure = [], None
    points = []
    for _ in range(count):
        p = gr.HigherPoint(rng.uniform(-1, 1, n), [rng.uniform(-1, 1, m) for _ in range(k)], L.convention)
        points.append((p, [rng.uniform(-1, 1, m) for _ in range(k - 1)]))
    try:
        for p, _ in points:
            mp = hm.legendre(L, p)
            back = hm.inverse_legendre(L, mp)
            rows.append([*p.as_vector(), *mp.theta, H.value(mp), float(np.max(np.abs(back.z - p.z)))])
    except (lg.SingularHessianError, hm.LegendreError, ex.DomainError) as exc:
        failure = str(exc)
    path = out / f"{system.name}_legendre.csv"
    write_csv(path, header, rows)
    report = hm.consistency_check(L, points, tol)
    print(report.line())
    _write_report(out, f"{system.name}_legendre", {
        "samples": len(rows), "consistency": {"passed": report.passed, "max_difference": report.max_difference,
                                              "tol": tol, "message": report.message},
        "failure": failure,
    })
    if failure is not None:
        raise NumericalFailure(failure)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradedmech", description="Higher order mechanics on Lie algebroids.")
    parser.add_argument("command", choices=["check", "simulate", "residual", "momenta", "legendre"])
    parser.add_argument("--config", required=True, help="JSON config path or bundled name")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    parser.add_argument("--convention", choices=list(gr.CONVENTIONS), help="override the config convention")
    parser.add_argument("--tol", type=float, help="tolerance for check / legendre")
    parser.add_argument("--curve", help="sampled curve CSV for residual / momenta")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    out = Path(args.out)
    try:
        system = build_system(load_config(args.config), args.convention)
        if args.command == "check":
            return cmd_check(system, out, args.seed, args.tol)
        if args.command == "simulate":
            return cmd_simulate(system, out)
        if args.command == "residual":
            return cmd_residual(system, out, args.curve)
        if args.command == "momenta":
            return cmd_momenta(system, out, args.curve)
        return cmd_legendre(system, out, args.seed, args.tol)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, lg.SingularHessianError, hm.LegendreError, ex.DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
