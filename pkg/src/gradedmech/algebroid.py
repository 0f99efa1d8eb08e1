"""Almost Lie algebroid data in a single chart: anchor, structure functions,
axiom checks, built-in examples and connection curvature."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, Num


def base_names(n: int) -> list[str]:
    return [f"x{A + 1}" for A in range(n)]


@dataclass
class CheckReport:
    name: str
    max_residual: float
    tol: float
    passed: bool
    worst_sample: np.ndarray | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {status} (max residual {self.max_residual:.3e}, tol {self.tol:.1e})"


class AlgebroidSpec:
    """Anchor rho[A][b](x) and structure functions C^c_ab(x).

    ``structure`` maps ``(a, b, c)`` with ``a < b`` to the expression of
    C^c_ab; the table is antisymmetrized on evaluation.
    """

    def __init__(self, n_base: int, m_fiber: int, anchor, structure=None, name: str = "custom"):
        self.n_base = int(n_base)
        self.m_fiber = int(m_fiber)
        self.name = name
        anchor = [[ex.as_expr(v) for v in row] for row in (anchor if anchor is not None else [])]
        if len(anchor) != self.n_base or any(len(row) != self.m_fiber for row in anchor):
            raise ValueError(f"anchor must be a {self.n_base}x{self.m_fiber} table")
        self.anchor = anchor
        self.structure: dict[tuple[int, int, int], Expr] = {}
        for (a, b, c), value in (structure or {}).items():
            if not (0 <= a < m_fiber and 0 <= b < m_fiber and 0 <= c < m_fiber):
                raise ValueError(f"structure index {(a, b, c)} out of range")
            value = ex.as_expr(value)
            if a == b:
                if not (isinstance(value, Num) and value.value == 0.0):
                    raise ValueError("structure functions must be antisymmetric (C^c_aa = 0)")
                continue
            if a > b:
                a, b, value = b, a, ex.neg(value)
            key = (a, b, c)
            self.structure[key] = ex.add(self.structure[key], value) if key in self.structure else value
        self.names = base_names(self.n_base)
        for e in self._all_exprs():
            extra = e.variables() - set(self.names)
            if extra:
                raise ValueError(f"structure expressions may depend on base variables only, found {sorted(extra)}")
        self._keys = sorted(self.structure)
        self._compiled = ex.compile_functions(
            [e for row in self.anchor for e in row] + [self.structure[k] for k in self._keys], self.names
        )
        self.is_lie: bool | None = None

    def _all_exprs(self):
        yield from (e for row in self.anchor for e in row)
        yield from self.structure.values()

    @property
    def is_constant(self) -> bool:
        return all(not e.variables() for e in self._all_exprs())

    def _split(self, values):
        n, m = self.n_base, self.m_fiber
        flat = list(values)
        rho = flat[: n * m]
        entries = flat[n * m :]
        return rho, entries

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Anchor (n, m) and structure tensor C[a, b, c] = C^c_ab at x."""
        x = np.asarray(x, dtype=float).reshape(self.n_base)
        rho_flat, entries = self._split(self._compiled(*x))
        rho = np.array(rho_flat, dtype=float).reshape(self.n_base, self.m_fiber)
        C = np.zeros((self.m_fiber,) * 3)
        for (a, b, c), v in zip(self._keys, entries):
            C[a, b, c] += v
            C[b, a, c] -= v
        return rho, C

    def anchor_at(self, x) -> np.ndarray:
        return self.evaluate(x)[0]

    def structure_at(self, x) -> np.ndarray:
        return self.evaluate(x)[1]

    def evaluate_jets(self, x_jets: Sequence[ex.TaylorScalar]):
        """Anchor and structure as nested lists of jets along a base jet."""
        values = self._compiled(*x_jets) if self.n_base else self._compiled()
        rho_flat, entries = self._split(values)
        n, m = self.n_base, self.m_fiber
        rho = [[rho_flat[A * m + b] for b in range(m)] for A in range(n)]
        C: dict[tuple[int, int, int], object] = {}
        for (a, b, c), v in zip(self._keys, entries):
            C[(a, b, c)] = C.get((a, b, c), 0.0) + v
            C[(b, a, c)] = C.get((b, a, c), 0.0) - v
        return rho, C

    def partials(self, x) -> tuple[np.ndarray, np.ndarray]:
        """d rho[B, b] / dx^A as (A, B, b) and d C[a, b, c] / dx^A as (A, a, b, c)."""
        n, m = self.n_base, self.m_fiber
        x = np.asarray(x, dtype=float).reshape(n)
        values = dict(zip(self.names, x))
        drho = np.zeros((n, n, m))
        dC = np.zeros((n, m, m, m))
        for B in range(n):
            for b in range(m):
                drho[:, B, b] = ex.gradient(self.anchor[B][b], values, self.names)
        for (a, b, c), e in self.structure.items():
            g = ex.gradient(e, values, self.names)
            dC[:, a, b, c] += g
            dC[:, b, a, c] -= g
        return drho, dC

    def __repr__(self) -> str:
        return f"AlgebroidSpec({self.name!r}, n_base={self.n_base}, m_fiber={self.m_fiber})"


def sample_points(n: int, count: int = 50, seed: int = 0) -> np.ndarray:
    """Default sample cloud: uniform in [-1, 1]^n."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(count, n))


def _samples(spec: AlgebroidSpec, samples):
    if samples is None:
        samples = sample_points(spec.n_base)
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0 or spec.n_base == 0:
        return np.zeros((1, spec.n_base))
    return samples.reshape(-1, spec.n_base)


def _evaluate_at(spec, x, what):
    try:
        return what(x)
    except ex.DomainError as exc:
        raise ex.DomainError(f"{exc} at sample {np.asarray(x).tolist()}") from exc


def almost_lie_residual(spec: AlgebroidSpec, x) -> np.ndarray:
    """R[B, a, b] = rho^A_a d_A rho^B_b - rho^A_b d_A rho^B_a - C^c_ab rho^B_c."""
    rho, C = _evaluate_at(spec, x, spec.evaluate)
    drho, _ = _evaluate_at(spec, x, spec.partials)
    # t[B, a, b] = rho^A_a d_A rho^B_b
    t = np.einsum("Aa,ABb->Bab", rho, drho)
    return t - t.transpose(0, 2, 1) - np.einsum("abc,Bc->Bab", C, rho)


def jacobi_residual(spec: AlgebroidSpec, x) -> np.ndarray:
    """Cyclic sum over (a, b, c) of C^e_ab C^d_ec - rho^A_a d_A C^d_bc, as [a, b, c, d]."""
    rho, C = _evaluate_at(spec, x, spec.evaluate)
    _, dC = _evaluate_at(spec, x, spec.partials)
    term = np.einsum("abe,ecd->abcd", C, C) - np.einsum("Aa,Abcd->abcd", rho, dC)
    return term + term.transpose(1, 2, 0, 3) + term.transpose(2, 0, 1, 3)


def _check(name, spec, samples, tol, residual):
    worst, worst_x = 0.0, None
    for x in _samples(spec, samples):
        r = residual(spec, x)
        value = float(np.max(np.abs(r))) if r.size else 0.0
        if value > worst or worst_x is None:
            worst, worst_x = max(value, worst), x
    return CheckReport(name, worst, tol, worst <= tol, worst_x)


def check_almost_lie(spec: AlgebroidSpec, samples=None, tol: float = 1e-12) -> CheckReport:
    return _check("almost-Lie", spec, samples, tol, almost_lie_residual)


def check_jacobi(spec: AlgebroidSpec, samples=None, tol: float = 1e-12) -> CheckReport:
    report = _check("Jacobi", spec, samples, tol, jacobi_residual)
    spec.is_lie = report.passed
    return report


# ---------------------------------------------------------------------------
# Built-ins


def so3_constants() -> np.ndarray:
    """C[a, b, c] = epsilon_abc."""
    eps = np.zeros((3, 3, 3))
    for p in permutations(range(3)):
        sign = np.linalg.det(np.eye(3)[list(p)])
        eps[p] = sign
    return eps


def constants_from_entries(m: int, entries) -> np.ndarray:
    """Dense C[a, b, c] from sparse (a, b, c, value) rows, antisymmetrized."""
    C = np.zeros((m, m, m))
    for a, b, c, v in entries:
        C[a, b, c] += v
        C[b, a, c] -= v
    return C


def _validated_constants(constants, m=None) -> np.ndarray:
    C = np.asarray(constants, dtype=float)
    if C.ndim != 3 or C.shape[0] != C.shape[1] or C.shape[1] != C.shape[2]:
        raise ValueError(f"structure constants must be an m x m x m array, got shape {C.shape}")
    if m is not None and C.shape[0] != m:
        raise ValueError(f"structure constants have rank {C.shape[0]}, expected {m}")
    if not np.allclose(C, -C.transpose(1, 0, 2), atol=0.0, rtol=0.0):
        raise ValueError("structure constants are not antisymmetric in the first two indices")
    return C


def _structure_from_constants(C: np.ndarray, offset: int = 0) -> dict:
    out = {}
    m = C.shape[0]
    for a in range(m):
        for b in range(a + 1, m):
            for c in range(m):
                if C[a, b, c] != 0.0:
                    out[(a + offset, b + offset, c + offset)] = Num(float(C[a, b, c]))
    return out


def tangent(n: int) -> AlgebroidSpec:
    anchor = [[1.0 if A == b else 0.0 for b in range(n)] for A in range(n)]
    return AlgebroidSpec(n, n, anchor, {}, name=f"tangent({n})")


def lie_algebra(constants) -> AlgebroidSpec:
    C = _validated_constants(constants)
    return AlgebroidSpec(0, C.shape[0], [], _structure_from_constants(C), name="lie_algebra")


def atiyah_trivial(n: int, constants) -> AlgebroidSpec:
    """TM x g: fiber indices 0..n-1 are the TM part, n.. the algebra part."""
    C = _validated_constants(constants)
    m = n + C.shape[0]
    anchor = [[1.0 if A == b else 0.0 for b in range(m)] for A in range(n)]
    return AlgebroidSpec(n, m, anchor, _structure_from_constants(C, offset=n), name=f"atiyah_trivial({n})")


def make_builtin(kind: str, n: int | None = None, constants=None) -> AlgebroidSpec:
    if kind == "tangent":
        return tangent(int(n))
    if kind == "lie_algebra":
        return lie_algebra(constants)
    if kind == "atiyah_trivial":
        return atiyah_trivial(int(n), constants)
    if kind == "so3":
        return lie_algebra(so3_constants())
    raise ValueError(f"unknown built-in algebroid {kind!r}")


# ---------------------------------------------------------------------------
# Connections


@dataclass
class ConnectionSpec:
    """Components A^a_B(x) stored as ``components[B][a]`` plus algebra constants."""

    components: list
    constants: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.constants = _validated_constants(self.constants)
        self.components = [[ex.as_expr(v) for v in row] for row in self.components]
        n = len(self.components)
        if not self.names:
            self.names = base_names(n)
        m = self.constants.shape[0]
        if any(len(row) != m for row in self.components):
            raise ValueError(f"connection rows must have {m} entries")
        for row in self.components:
            for e in row:
                extra = e.variables() - set(self.names)
                if extra:
                    raise ValueError(f"connection may depend on base variables only, found {sorted(extra)}")
        self._compiled = ex.compile_functions([e for row in self.components for e in row], self.names)

    @property
    def n_base(self) -> int:
        return len(self.components)

    @property
    def m_group(self) -> int:
        return self.constants.shape[0]

    def at(self, x) -> np.ndarray:
        return np.array(self._compiled(*np.asarray(x, float)), dtype=float).reshape(self.n_base, self.m_group)

    def jets(self, x_jets):
        flat = self._compiled(*x_jets)
        m = self.m_group
        return [[flat[B * m + a] for a in range(m)] for B in range(self.n_base)]


def curvature(conn: ConnectionSpec, x) -> np.ndarray:
    """F[a, A, B] = d_A A^a_B - d_B A^a_A + A^b_A A^c_B C^a_cb."""
    n, m = conn.n_base, conn.m_group
    x = np.asarray(x, dtype=float).reshape(n)
    values = dict(zip(conn.names, x))
    dA = np.zeros((m, n, n))  # dA[a, A, B] = d_A A^a_B
    for B in range(n):
        for a in range(m):
            dA[a, :, B] = ex.gradient(conn.components[B][a], values, conn.names)
    A = conn.at(x)
    F = np.zeros((m, n, n))
    for a in range(m):
        for P in range(n):
            for Q in range(P + 1, n):
                quad = A[P] @ conn.constants[:, :, a].T @ A[Q]
                value = dA[a, P, Q] - dA[a, Q, P] + quad
                F[a, P, Q] = value
                F[a, Q, P] = -value
    return F


def deformed_atiyah(conn: ConnectionSpec) -> AlgebroidSpec:
    """Atiyah algebroid TM x g written in the frame of horizontal lifts.

    Frame: horizontal lifts h_B = (d_B, -A_B) and e_a = (0, E_a) in the
    trivialized Atiyah algebroid with bracket ([X, Y], X(eta) - Y(xi) + [xi, eta]).
    Then [h_P, h_Q] = -F_PQ (the curvature), [h_P, e_b] = -A^c_P C^a_cb e_a and
    [e_a, e_b] = C^c_ab e_c.
    """
    n, m = conn.n_base, conn.m_group
    C = conn.constants
    names = conn.names
    comps = conn.components
    structure: dict[tuple[int, int, int], Expr] = {}
    for P in range(n):
        for Q in range(P + 1, n):
            for a in range(m):
                e = ex.sub(ex.derivative(comps[P][a], names[Q]), ex.derivative(comps[Q][a], names[P]))
                for b in range(m):
                    for c in range(m):
                        if C[b, c, a] != 0.0:
                            e = ex.add(e, ex.mul(Num(float(C[b, c, a])), ex.mul(comps[P][b], comps[Q][c])))
                if e != ex.ZERO:
                    structure[(P, Q, n + a)] = e
    for P in range(n):
        for b in range(m):
            for a in range(m):
                e = ex.ZERO
                for c in range(m):
                    if C[c, b, a] != 0.0:
                        e = ex.sub(e, ex.mul(Num(float(C[c, b, a])), comps[P][c]))
                if e != ex.ZERO:
                    structure[(P, n + b, n + a)] = e
    structure.update(_structure_from_constants(C, offset=n))
    anchor = [[1.0 if A == b else 0.0 for b in range(n + m)] for A in range(n)]
    return AlgebroidSpec(n, n + m, anchor, structure, name="deformed_atiyah")
