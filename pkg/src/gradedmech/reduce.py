"""Reduced equations: higher Euler-Poincare on a Lie algebra, second order Hamel
on a trivialized Atiyah algebroid, second order Lagrange-Poincare with a
principal connection, and momentum conservation monitors.

Residual signs follow ``lagrange.el_residual``: the fiber block is
``-(d/dt - ad) pi`` so every residual here can be compared entrywise with the
general pipeline.

Example::

    sys = euler_poincare_system(so3_constants(), 2, "0.5*(y2_1^2 + 2*y2_2^2 + 3*y2_3^2)")
    euler_poincare_residual(sys, jet)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .algebroid import (ConnectionSpec, _validated_constants, atiyah_trivial, curvature, deformed_atiyah,
                        lie_algebra)
from .graded import differentiate_coeffs, jet_scalars
from .lagrange import CurveJet, LagrangianSpec, Trajectory, partials_along

KINDS = ("euler_poincare", "hamel", "lagrange_poincare")


@dataclass
class ReducedSystem:
    kind: str
    lagrangian: LagrangianSpec
    constants: np.ndarray
    n_base: int = 0
    connection: ConnectionSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        L = self.lagrangian
        m = self.constants.shape[0]
        if L.n != self.n_base or L.m != self.n_base + m:
            raise ValueError("Lagrangian dimensions do not match the reduced block structure")
        if self.kind in ("hamel", "lagrange_poincare") and L.k != 2:
            raise ValueError(f"{self.kind} equations are second order (k = 2)")
        if self.kind == "lagrange_poincare" and self.connection is None:
            raise ValueError("lagrange_poincare needs a connection")

    @property
    def k(self) -> int:
        return self.lagrangian.k

    @property
    def m_group(self) -> int:
        return self.constants.shape[0]

    @property
    def convention(self) -> str:
        return self.lagrangian.convention

    def group_block(self) -> slice:
        return slice(self.n_base, self.n_base + self.m_group)


def euler_poincare_system(constants, k: int, lagrangian, convention: str = "plain", parameters=None) -> ReducedSystem:
    C = _validated_constants(constants)
    L = LagrangianSpec(lie_algebra(C), k, lagrangian, convention, parameters)
    return ReducedSystem("euler_poincare", L, C)


def hamel_system(n: int, constants, lagrangian, convention: str = "homogeneous", parameters=None) -> ReducedSystem:
    """Fiber coordinates y{w}_1..y{w}_n are the base velocities, the rest the Lie algebra part."""
    C = _validated_constants(constants)
    L = LagrangianSpec(atiyah_trivial(n, C), 2, lagrangian, convention, parameters)
    return ReducedSystem("hamel", L, C, n)


def lagrange_poincare_system(connection: ConnectionSpec, lagrangian, convention: str = "homogeneous",
                             parameters=None) -> ReducedSystem:
    """Lagrangian over the Atiyah algebroid written in the horizontal frame of the connection."""
    L = LagrangianSpec(deformed_atiyah(connection), 2, lagrangian, convention, parameters)
    return ReducedSystem("lagrange_poincare", L, connection.constants, connection.n_base, connection)


# ---------------------------------------------------------------------------
# Series helpers on coefficient arrays (last axis = Taylor order)


def _truncate(*arrays):
    d = min(a.shape[-1] for a in arrays)
    return [a[..., :d] for a in arrays]


def _product(a, b, pattern: str):
    """Cauchy product of coefficient tensors contracted by an einsum pattern (without the order axis)."""
    a, b = _truncate(a, b)
    d = a.shape[-1]
    lhs, out = pattern.split("->")
    pa, pb = lhs.split(",")
    res = None
    for j in range(d):
        term = sum(np.einsum(f"{pa},{pb}->{out}", a[..., i], b[..., j - i]) for i in range(j + 1))
        res = term[..., None] if res is None else np.concatenate([res, term[..., None]], axis=-1)
    return res


def _weight_factor(w: int, convention: str) -> float:
    """Coefficient of d^{w-1}/dt^{w-1} dL/dy_w in the top momentum (before the sign)."""
    return 1.0 / factorial(w) if convention == "homogeneous" else 1.0


# ---------------------------------------------------------------------------
# Euler-Poincare


def euler_poincare_momentum(sys: ReducedSystem, jet: CurveJet) -> np.ndarray:
    """Top momentum as a coefficient array: sum_w (-1)^{w-1} c_w d^{w-1}/dt^{w-1} dL/dy_w."""
    L = sys.lagrangian
    _, dy = partials_along(L, jet, 2 * L.k - 1)
    total = None
    for w in range(1, L.k + 1):
        term = dy[w - 1]
        for _ in range(w - 1):
            term = differentiate_coeffs(term)
        term = (-1) ** (w - 1) * _weight_factor(w, L.convention) * term
        total = term if total is None else sum(_truncate(total, term))
    return total


def euler_poincare_residual(sys: ReducedSystem, jet: CurveJet) -> np.ndarray:
    """ad*_y pi - d/dt pi at the jet's instant, pi the top momentum."""
    if sys.kind != "euler_poincare":
        raise ValueError("euler_poincare_residual needs an euler_poincare system")
    pi = euler_poincare_momentum(sys, jet)
    y = jet.y[:, 0]
    C = sys.constants
    return np.einsum("b,bac,c->a", y, C, pi[:, 0]) - pi[:, 1]


# ---------------------------------------------------------------------------
# Hamel and Lagrange-Poincare (k = 2)


def _lp_blocks(sys: ReducedSystem, jet: CurveJet, A_jets: np.ndarray, F: np.ndarray):
    L = sys.lagrangian
    n, m = sys.n_base, sys.m_group
    C = sys.constants
    c = 0.5 if L.convention == "homogeneous" else 1.0
    dx, dy = partials_along(L, jet, 3)
    d = dy[0].shape[1] - 1
    Lx = dx
    Lv, Ly = dy[0][:n], dy[0][n:]
    Lw, Lz = dy[1][:n], dy[1][n:]
    v_jet, y_jet = jet.y[:n, : d + 1], jet.y[n:, : d + 1]

    # covariant derivative D psi_a = d/dt psi_a - v^A C^c_ab A^b_A psi_c
    vA = _product(v_jet, A_jets[:, :, : d + 1], "A,Ab->b") if n else np.zeros((m, d + 1))
    Mconn = np.einsum("bj,abc->acj", vA, C)
    Nad = np.einsum("bj,bac->acj", y_jet, C)  # ad psi_a = y^b C^c_ba psi_c

    def cov(psi):
        return sum(_truncate(differentiate_coeffs(psi), -_product(Mconn, psi, "ac,c->a")))

    def ad(psi):
        return _product(Nad, psi, "ac,c->a")

    phi = sum(_truncate(Ly, -c * cov(Lz)))
    fiber = -(cov(phi)[:, 0] - ad(phi)[:, 0])
    if n == 0:
        return np.zeros(0), fiber
    v0, y0 = v_jet[:, 0], y_jet[:, 0]
    A0 = A_jets[:, :, 0]
    source = np.einsum("B,aBA->Aa", v0, F) + np.einsum("b,bca,Ac->Aa", y0, C, A0)
    inner = c * (cov(Lz)[:, 0] + ad(Lz)[:, 0])
    base = (Lx[:, 0] - differentiate_coeffs(Lv)[:, 0] + c * differentiate_coeffs(differentiate_coeffs(Lw))[:, 0]
            - source @ Ly[:, 0] + source @ inner)
    return base, fiber


def lagrange_poincare_residual(sys: ReducedSystem, jet: CurveJet) -> tuple[np.ndarray, np.ndarray]:
    """(base, fiber) residuals of the second order Lagrange-Poincare equations.

    Base: dL/dx - d/dt dL/dv + c d2/dt2 dL/dw - S (dL/dy - (D/Dt + ad) c dL/dz) with
    S_A^a = v^B F^a_BA + y^b C^a_bc A^c_A.  Fiber: -(D/Dt - ad)(dL/dy - c D/Dt dL/dz).
    c = 1/2 in homogeneous coordinates, 1 in plain ones.
    """
    if sys.kind == "euler_poincare":
        raise ValueError("lagrange_poincare_residual needs an Atiyah-type system")
    n, m = sys.n_base, sys.m_group
    d = jet.order
    if sys.connection is None:
        A_jets = np.zeros((n, m, d + 1))
        F = np.zeros((m, n, n))
    else:
        conn = sys.connection
        xs = jet_scalars(jet.x.reshape(n, -1)[:, : d + 1])
        raw = conn.jets(xs)
        A_jets = np.zeros((n, m, d + 1))
        for B in range(n):
            for a in range(m):
                val = raw[B][a]
                if hasattr(val, "c"):
                    A_jets[B, a, : val.c.size] = val.c
                else:
                    A_jets[B, a, 0] = float(val)
        F = curvature(conn, jet.x.reshape(n, -1)[:, 0])
    return _lp_blocks(sys, jet, A_jets, F)


def hamel_residual(sys: ReducedSystem, jet: CurveJet) -> tuple[np.ndarray, np.ndarray]:
    """(base, fiber) residuals of the second order Hamel equations (trivial connection)."""
    if sys.kind != "hamel":
        raise ValueError("hamel_residual needs a hamel system")
    n, m = sys.n_base, sys.m_group
    return _lp_blocks(sys, jet, np.zeros((n, m, jet.order + 1)), np.zeros((m, n, n)))


# ---------------------------------------------------------------------------
# Conservation monitors


@dataclass
class MomentumReport:
    quantity: str
    drift: float
    values: np.ndarray
    per_node: np.ndarray = field(repr=False, default=None)

    def line(self) -> str:
        return f"{self.quantity}: drift {self.drift:.3e}"


def _totally_antisymmetric(C: np.ndarray) -> bool:
    return bool(np.allclose(C, -C.transpose(0, 2, 1)) and np.allclose(C, -C.transpose(2, 1, 0)))


def conserved_momentum_monitor(sys: ReducedSystem, traj: Trajectory) -> MomentumReport:
    """Drift of the conserved part of the top momentum along a trajectory.

    Abelian Lie algebra: the group block of pi^k itself.  Totally
    antisymmetric constants (such as so(3)): its squared norm.
    """
    if traj.pi is None or traj.pi.shape[1] != sys.k:
        raise ValueError("trajectory lacks the momentum ladder")
    C = sys.constants
    block = traj.pi[:, -1, sys.group_block()]
    if not np.any(C):
        values = block
        per_node = np.max(np.abs(values - values[0]), axis=1)
        return MomentumReport("pi^k", float(per_node.max(initial=0.0)), values, per_node)
    if sys.kind == "lagrange_poincare":
        raise ValueError("no conserved momentum for a non-abelian Lagrange-Poincare system")
    if not _totally_antisymmetric(C):
        raise ValueError("the squared norm is a Casimir only for totally antisymmetric structure constants")
    values = np.sum(block ** 2, axis=1)
    per_node = np.abs(values - values[0])
    return MomentumReport("|pi^k|^2", float(per_node.max(initial=0.0)), values, per_node)
