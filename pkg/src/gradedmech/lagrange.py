"""Lagrangian side: phase dynamics relation, Jacobi-Ostrogradski momenta,
k-th order Euler-Lagrange residuals, explicit reduction and integration."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .algebroid import AlgebroidSpec, base_names
from .expr import Expr, TaylorScalar
from .graded import (HigherPoint, chain_factor, check_convention, check_dimensions,
                     differentiate_coeffs, epsilon_apply, holonomic_embed, jet_scalars,
                     ladder_factor, lie_algebroid_structure, base_jet_from_anchor, lift_fiber_jets)

SINGULAR_CONDITION = 1e12


class SingularHessianError(ArithmeticError):
    def __init__(self, message: str, point=None, condition: float = np.inf):
        super().__init__(message)
        self.point = point
        self.condition = condition


class NonFiniteStateError(ArithmeticError):
    pass


def fiber_names(m: int, k: int) -> list[list[str]]:
    return [[f"y{w}_{a + 1}" for a in range(m)] for w in range(1, k + 1)]


def variable_names(n: int, m: int, k: int) -> list[str]:
    return base_names(n) + [v for block in fiber_names(m, k) for v in block]


class LagrangianSpec:
    """Lagrangian L(x, y_1, ..., y_k) on A^k over a given algebroid.

    Variables are named ``x1..xn`` and ``y{w}_{a}``; ``parameters`` are named
    constants substituted at construction.
    """

    def __init__(self, algebroid: AlgebroidSpec, k: int, lagrangian, convention: str = "plain",
                 parameters: Mapping[str, float] | None = None):
        if k < 1:
            raise ValueError("order k must be at least 1")
        self.algebroid = algebroid
        self.k = int(k)
        self.convention = check_convention(convention)
        self.parameters = dict(parameters or {})
        n, m = algebroid.n_base, algebroid.m_fiber
        self.n, self.m = n, m
        self.x_names = base_names(n)
        self.y_names = fiber_names(m, k)
        self.names = variable_names(n, m, k)
        allowed = set(self.names) | set(self.parameters)
        e = ex.parse(lagrangian, allowed) if isinstance(lagrangian, str) else ex.as_expr(lagrangian)
        extra = e.variables() - allowed
        if extra:
            raise ex.UnknownVariableError(f"unknown variable {sorted(extra)[0]!r}", 0)
        self.expression: Expr = ex.substitute(e, {k_: ex.Num(float(v)) for k_, v in self.parameters.items()})
        self._build()

    def _build(self):
        n, m, k = self.n, self.m, self.k
        L = self.expression
        dx = [ex.derivative(L, v) for v in self.x_names]
        dy = [[ex.derivative(L, v) for v in block] for block in self.y_names]
        self.d_x, self.d_y = dx, dy
        dz = dy[-1]
        hzz = [ex.derivative(d, v) for d in dz for v in self.y_names[-1]]
        hzx = [ex.derivative(d, v) for d in dz for v in self.x_names]
        hzy = [ex.derivative(d, v) for w in range(k - 1) for d in dz for v in self.y_names[w]]
        self.constant_hessian = all(isinstance(e, ex.Num) for e in hzz)
        self._value = ex.compile_functions([L], self.names)
        self._fused = ex.compile_functions(dx + [d for block in dy for d in block] + hzz + hzx + hzy, self.names)
        self._grad = ex.compile_functions(dx + [d for block in dy for d in block], self.names)
        self._second = ex.compile_functions(hzz + hzx + hzy, self.names)

    # -- evaluation helpers -------------------------------------------------
    def _args(self, x, ys):
        return list(x) + [v for b in ys for v in b]

    def value(self, p: HigherPoint) -> float:
        return self._value(*self._args(p.x, p.y))[0]

    def grad_blocks(self, x, ys):
        """(dL/dx, [dL/dy_1, ..., dL/dy_k]) for floats or jets."""
        vals = self._grad(*self._args(x, ys))
        n, m = self.n, self.m
        return list(vals[:n]), [list(vals[n + w * m: n + (w + 1) * m]) for w in range(self.k)]

    def hessian_blocks(self, x, ys):
        """(d2L/dz dz, d2L/dz dx, [d2L/dz dy_w for w < k]) as nested lists."""
        vals = self._second(*self._args(x, ys))
        n, m, k = self.n, self.m, self.k
        hzz = [list(vals[a * m:(a + 1) * m]) for a in range(m)]
        off = m * m
        hzx = [list(vals[off + a * n: off + (a + 1) * n]) for a in range(m)]
        off += m * n
        hzy = []
        for w in range(k - 1):
            base = off + w * m * m
            hzy.append([list(vals[base + a * m: base + (a + 1) * m]) for a in range(m)])
        return hzz, hzx, hzy

    def gradient(self, p: HigherPoint) -> tuple[np.ndarray, list[np.ndarray]]:
        gx, gy = self.grad_blocks(p.x, p.y)
        return np.array(gx, float), [np.array(b, float) for b in gy]

    def hessian_zz(self, p: HigherPoint) -> np.ndarray:
        hzz, _, _ = self.hessian_blocks(p.x, p.y)
        return np.array(hzz, dtype=float).reshape(self.m, self.m)

    def check_point(self, p: HigherPoint):
        check_dimensions(p, self.algebroid, self.k)
        if p.convention != self.convention:
            raise ValueError(f"point convention {p.convention!r} differs from {self.convention!r}")

    def __repr__(self) -> str:
        return f"LagrangianSpec(k={self.k}, {self.algebroid!r}, L={ex.to_source(self.expression)!r})"


# ---------------------------------------------------------------------------
# Curve jets


@dataclass
class CurveJet:
    """Normalized Taylor coefficients at one instant of a curve (x, y) in A."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))

    @property
    def order(self) -> int:
        return min(self.x.shape[1], self.y.shape[1]) - 1


def _jet_blocks(L: LagrangianSpec, jet: CurveJet, needed: int):
    jet.x = jet.x.reshape(L.n, -1) if L.n else np.zeros((0, jet.y.shape[1]))
    jet.y = jet.y.reshape(L.m, -1)
    if jet.y.shape[1] - 1 < needed or (L.n and jet.x.shape[1] - 1 < needed):
        raise ValueError(f"curve jets of order >= {needed} are required for k = {L.k}")
    ys = lift_fiber_jets(jet.y, L.k, L.convention)
    d = ys[-1].shape[1] - 1
    x = jet.x[:, : d + 1] if L.n else np.zeros((0, d + 1))
    return x, ys, d


def _coeffs(v, order: int) -> np.ndarray:
    if isinstance(v, TaylorScalar):
        return v.c
    out = np.zeros(order + 1)
    out[0] = float(v)
    return out


def partials_along(L: LagrangianSpec, jet: CurveJet, needed: int):
    """Jets of dL/dx (n, d+1) and dL/dy_w (k arrays (m, d+1)) along the prolonged curve."""
    x, ys, d = _jet_blocks(L, jet, needed)
    xs = jet_scalars(x) if L.n else []
    gx, gy = L.grad_blocks(xs, [jet_scalars(b) for b in ys])
    dx = np.array([_coeffs(v, d) for v in gx]).reshape(L.n, d + 1)
    dy = [np.array([_coeffs(v, d) for v in block]).reshape(L.m, d + 1) for block in gy]
    return dx, dy


def momentum_ladder_jets(L: LagrangianSpec, jet: CurveJet) -> list[np.ndarray]:
    """Ladder pi^1..pi^k as coefficient arrays (m, order) along the curve."""
    _, dy = partials_along(L, jet, 2 * L.k - 2)
    k = L.k
    ladder = [dy[k - 1] / ladder_factor(1, k, L.convention)]
    for U in range(1, k):
        prev = ladder[-1]
        lower = dy[k - U - 1][:, : prev.shape[1] - 1]
        ladder.append((lower - differentiate_coeffs(prev)) / ladder_factor(U + 1, k, L.convention))
    return ladder


def jacobi_ostrogradski(L: LagrangianSpec, jet: CurveJet) -> list[np.ndarray]:
    """Values of pi^1..pi^k at the jet's instant."""
    return [b[:, 0].copy() for b in momentum_ladder_jets(L, jet)]


def _ad(C: np.ndarray, y1, p):
    """(ad_y p)_a = y^b C^c_ba p_c."""
    return np.einsum("bac,b,c->a", C, y1, p)


def el_residual(L: LagrangianSpec, jet: CurveJet) -> np.ndarray:
    """[rho^T dL/dx + ad_{y_1} pi^k - d/dt pi^k, dx/dt - rho y_1]."""
    _jet_blocks(L, jet, 2 * L.k - 1)
    ladder = momentum_ladder_jets(L, jet)
    top = ladder[-1]
    x0 = jet.x[:, 0] if L.n else np.zeros(0)
    y0 = jet.y[:, 0]
    rho, C = L.algebroid.evaluate(x0)
    gx, _ = L.grad_blocks(x0, lift_values(jet, L))
    fiber = rho.T @ np.array(gx, float) + _ad(C, y0, top[:, 0]) - top[:, 1]
    base = (jet.x[:, 1] - rho @ y0) if L.n else np.zeros(0)
    return np.concatenate([fiber, base])


def lift_values(jet: CurveJet, L: LagrangianSpec) -> list[np.ndarray]:
    return [b[:, 0] for b in lift_fiber_jets(jet.y[:, : L.k], L.k, L.convention)]


def point_from_jet(L: LagrangianSpec, jet: CurveJet) -> HigherPoint:
    x0 = jet.x[:, 0] if L.n else np.zeros(0)
    return HigherPoint(x0, lift_values(jet, L), L.convention)


# ---------------------------------------------------------------------------
# Tulczyjew differential


@dataclass
class PhaseTangent:
    """Element of T D*(F_k): lower blocks, ladder, and their velocities."""

    X: list
    Pi: list
    dX: list
    dPi: list

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(b) for b in (*self.dX, *self.dPi)])


def lagrangian_momenta(L: LagrangianSpec, p: HigherPoint, Pi_free: Sequence) -> tuple[list, dict]:
    """Ladder Pi^1..Pi^k (Pi^1 forced) and the P momenta of the relation P L."""
    k = L.k
    gx, gy = L.gradient(p)
    Pi_free = [np.asarray(b, float) for b in Pi_free]
    if len(Pi_free) != k - 1:
        raise ValueError(f"expected {k - 1} free momenta Pi^2..Pi^k")
    Pi = [gy[k - 1] / ladder_factor(1, k, L.convention)] + Pi_free
    P = {k + 1: gx}
    for W in range(1, k):
        P[W + 1] = gy[k - W - 1] - ladder_factor(W + 1, k, L.convention) * Pi[W]
    return Pi, P


def tulczyjew_differential(L: LagrangianSpec, p: HigherPoint, Pi_free: Sequence | None = None,
                           ws=None) -> PhaseTangent:
    """One representative of the weighted Tulczyjew differential at p.

    ``Pi_free`` holds the free parameters Pi^2..Pi^k (zeros if omitted).
    """
    L.check_point(p)
    k = L.k
    if Pi_free is None:
        Pi_free = [np.zeros(L.m)] * (k - 1)
    ws = ws or lie_algebroid_structure(L.algebroid, k)
    Pi, P = lagrangian_momenta(L, p, Pi_free)
    emb = holonomic_embed(p)
    X = [p.x] + list(p.y[:-1])
    dX, dPi = epsilon_apply(ws, X, emb.Y, P, Pi)
    return PhaseTangent(X, Pi, dX, dPi)


def energy(L: LagrangianSpec, p: HigherPoint, pis: Sequence) -> float:
    """Ostrogradski energy sum_U <pi^U, Y_{k+1-U}> - L with Y the holonomic embedding."""
    Y = holonomic_embed(p).Y
    k = L.k
    return float(sum(np.dot(pis[U - 1], Y[k - U]) for U in range(1, k + 1)) - L.value(p))


# ---------------------------------------------------------------------------
# Explicit reduction


def checked_inverse(H: np.ndarray, where=None) -> np.ndarray:
    """Inverse of the top-block Hessian; 1-norm condition above 1e12 counts as singular."""
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise SingularHessianError("singular Hessian d2L/dz dz", where, np.inf) from None
    cond = np.abs(H).sum(axis=0).max() * np.abs(Hinv).sum(axis=0).max()
    if not np.isfinite(cond) or cond > SINGULAR_CONDITION:
        raise SingularHessianError(f"ill-conditioned Hessian d2L/dz dz (condition {cond:.3e})", where, cond)
    return Hinv


def _solve_float(H: np.ndarray, b: np.ndarray, where):
    return checked_inverse(H, where) @ b


def _solve_jet(H, b, order: int):
    """Solve H(s) z(s) = b(s) for truncated series."""
    m = len(b)
    Hc = np.array([[_coeffs(H[i][j], order) for j in range(m)] for i in range(m)]).reshape(m, m, order + 1)
    bc = np.array([_coeffs(v, order) for v in b]).reshape(m, order + 1)
    H0 = Hc[:, :, 0]
    z = np.zeros((m, order + 1))
    for j in range(order + 1):
        acc = bc[:, j].copy()
        for i in range(1, j + 1):
            acc -= Hc[:, :, i] @ z[:, j - i]
        z[:, j] = np.linalg.solve(H0, acc)
    return [TaylorScalar(row) for row in z]


class ExplicitSystem:
    """Right-hand side on the state (x, y_1..y_k, pi^2..pi^k)."""

    def __init__(self, L: LagrangianSpec):
        self.L = L
        n, m, k = L.n, L.m, L.k
        self.n, self.m, self.k = n, m, k
        self.size = n + k * m + (k - 1) * m
        self._constant = L.algebroid.is_constant
        if self._constant:
            self._rho, self._C = L.algebroid.evaluate(np.zeros(n))
            self._Cflat = self._C.reshape(m, m * m)
        self._Hinv = None
        self._hessian_sign = None  # sign of det d2L/dz dz at the first evaluation
        if L.constant_hessian:
            hzz, _, _ = L.hessian_blocks(np.zeros(n), [np.zeros(m)] * k)
            try:
                self._Hinv = checked_inverse(np.array(hzz, dtype=float).reshape(m, m))
            except SingularHessianError:
                self._Hinv = None  # reported on the first evaluation
        conv = L.convention
        self.g = [chain_factor(w, conv) for w in range(k + 1)]
        self.f = [ladder_factor(U, k, conv) if U >= 1 else 0.0 for U in range(k + 2)]

    # state packing
    def pack(self, p: HigherPoint, pis: Sequence | None = None) -> np.ndarray:
        pis = [np.zeros(self.m)] * (self.k - 1) if pis is None else list(pis)
        if len(pis) != self.k - 1:
            raise ValueError(f"expected {self.k - 1} momenta pi^2..pi^k")
        return np.concatenate([p.x, *p.y, *[np.asarray(b, float).reshape(self.m) for b in pis]])

    def unpack(self, s):
        n, m, k = self.n, self.m, self.k
        x = s[:n]
        ys = [s[n + w * m: n + (w + 1) * m] for w in range(k)]
        off = n + k * m
        pis = [s[off + i * m: off + (i + 1) * m] for i in range(k - 1)]
        return x, ys, pis

    def point(self, s) -> HigherPoint:
        x, ys, _ = self.unpack(np.asarray(s, float))
        return HigherPoint(x, ys, self.L.convention)

    def ladder(self, s) -> list[np.ndarray]:
        """Full ladder pi^1..pi^k at a state (pi^1 algebraic)."""
        x, ys, pis = self.unpack(np.asarray(s, float))
        _, gy = self.L.grad_blocks(x, ys)
        pi1 = np.array(gy[-1], float) / self.f[1]
        return [pi1] + [np.array(b, float) for b in pis]

    def __call__(self, t, s):
        return self._rhs_float(np.asarray(s, dtype=float))

    def _rhs_float(self, s):
        # Same equations as _rhs, specialised to float arrays for speed.
        L = self.L
        n, m, k = self.n, self.m, self.k
        vals = np.array(L._fused(*s[: n + k * m]), dtype=float)
        gx = vals[:n]
        off = n + k * m
        gy = vals[n:off].reshape(k, m)
        hzz = vals[off: off + m * m].reshape(m, m)
        off += m * m
        hzx = vals[off: off + m * n].reshape(m, n)
        off += m * n
        hzy = vals[off:].reshape(k - 1, m, m)
        if self._constant:
            rho, Cflat = self._rho, self._Cflat
        else:
            rho, C = L.algebroid.evaluate(s[:n])
            Cflat = C.reshape(m, m * m)
        ys = s[n: n + k * m].reshape(k, m)
        pis = s[n + k * m:].reshape(k - 1, m)
        y1 = ys[0]
        adm = (y1 @ Cflat).reshape(m, m)
        xdot = rho @ y1
        f, g = self.f, self.g
        if k == 1:
            top = gy[0] / f[1]
        else:
            top = pis[k - 2]
        top_dot = rho.T @ gx + adm @ top
        out = np.empty(self.size)
        out[:n] = xdot
        for w in range(1, k):
            out[n + (w - 1) * m: n + w * m] = g[w + 1] * ys[w]
        if k == 1:
            r = top_dot
        else:
            r = gy[k - 2] - f[2] * pis[0]
            base = n + k * m
            for U in range(2, k):
                out[base + (U - 2) * m: base + (U - 1) * m] = gy[k - U - 1] - f[U + 1] * pis[U - 1]
            out[base + (k - 2) * m:] = top_dot
        rhs = f[1] * r - hzx @ xdot
        for w in range(k - 1):
            rhs = rhs - hzy[w] @ (g[w + 2] * ys[w + 1])
        if self._Hinv is not None:
            Hinv = self._Hinv
        else:
            Hinv = checked_inverse(hzz, s)
            self._check_sign(hzz, s)
        out[n + (k - 1) * m: n + k * m] = Hinv @ rhs
        return out

    def _check_sign(self, hzz, where):
        # a sign change of det means the state stepped across a singular Hessian
        sign = np.linalg.slogdet(hzz)[0]
        if self._hessian_sign is None:
            self._hessian_sign = sign
        elif sign != self._hessian_sign:
            raise SingularHessianError("Hessian d2L/dz dz changed sign: the solution crossed a singular point",
                                       where, np.inf)

    def _rhs(self, s, jets: bool, order: int):
        L = self.L
        n, m, k = self.n, self.m, self.k
        x, ys, pis = self.unpack(s)
        gx, gy = L.grad_blocks(x, ys)
        hzz, hzx, hzy = L.hessian_blocks(x, ys)
        dtype = object if jets else float
        if jets:
            rho_l, C_d = L.algebroid.evaluate_jets(list(x))
            rho = np.empty((n, m), dtype=object)
            for A in range(n):
                for b in range(m):
                    rho[A, b] = rho_l[A][b]
            C = np.zeros((m, m, m), dtype=object)
            for key, v in C_d.items():
                C[key] = v
        elif self._constant:
            rho, C = self._rho, self._C
        else:
            rho, C = L.algebroid.evaluate(x)
        gx = np.array(gx, dtype=dtype).reshape(n)
        gy = [np.array(b, dtype=dtype).reshape(m) for b in gy]
        y1 = ys[0]
        xdot = rho @ y1 if n else np.zeros(0, dtype=dtype)
        ydot = [self.g[w + 1] * ys[w] for w in range(1, k)]  # ydot[w-1] = d/dt y_w

        def ad(p):
            return np.tensordot(y1, C, axes=(0, 0)) @ p

        top = (gy[k - 1] / self.f[1]) if k == 1 else pis[k - 2]
        top_dot = rho.T @ gx + ad(top) if n else ad(top)
        if k == 1:
            r = top_dot
            pidots = []
        else:
            r = gy[k - 2] - self.f[2] * pis[0]
            pidots = [gy[k - U - 1] - self.f[U + 1] * pis[U - 1] for U in range(2, k)] + [top_dot]
        rhs = self.f[1] * r
        hzx_a = np.array(hzx, dtype=dtype).reshape(m, n)
        if n:
            rhs = rhs - hzx_a @ xdot
        for w in range(k - 1):
            rhs = rhs - np.array(hzy[w], dtype=dtype).reshape(m, m) @ ydot[w]
        if jets:
            zdot = np.array(_solve_jet(hzz, list(rhs), order), dtype=object)
        else:
            zdot = _solve_float(np.array(hzz, dtype=float).reshape(m, m), rhs, s)
        parts = [xdot, *ydot, zdot, *pidots]
        return np.concatenate([np.asarray(p_, dtype=dtype).reshape(-1) for p_ in parts])

    def solution_jet(self, s, order: int) -> np.ndarray:
        """Taylor coefficients (size, order+1) of the exact solution through s."""
        s = np.asarray(s, dtype=float)
        S = np.zeros((self.size, order + 1))
        S[:, 0] = s
        for j in range(order):
            jets = np.array([TaylorScalar(S[i, : j + 1]) for i in range(self.size)], dtype=object)
            f = self._rhs(jets, jets=True, order=j)
            for i, v in enumerate(f):
                S[i, j + 1] = _coeffs(v, j)[j] / (j + 1)
        return S

    def curve_jet(self, s, order: int | None = None) -> CurveJet:
        """Jet of the curve in A traced by the solution through s."""
        order = 2 * self.k if order is None else order
        S = self.solution_jet(s, order)
        n, m = self.n, self.m
        return CurveJet(S[:n] if n else np.zeros((0, order + 1)), S[n:n + m])


def reduce_to_explicit(L: LagrangianSpec) -> ExplicitSystem:
    return ExplicitSystem(L)


# ---------------------------------------------------------------------------
# Integration


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray  # (N, k, m)
    pi: np.ndarray  # (N, k, m), ladder pi^1..pi^k
    convention: str
    residual: np.ndarray  # max |el_residual| per node, nan where not evaluated
    monitors: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""
    integrator: str = "rk4"

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def __len__(self) -> int:
        return self.t.size

    def point(self, i: int) -> HigherPoint:
        return HigherPoint(self.x[i], list(self.y[i]), self.convention)


def rk4_step(f, t, s, h):
    k1 = f(t, s)
    k2 = f(t + 0.5 * h, s + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, s + 0.5 * h * k2)
    k4 = f(t + h, s + h * k3)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(L: LagrangianSpec, p0: HigherPoint, pi0: Sequence | None, t_end: float, h: float,
              residual_every: int | None = None) -> Trajectory:
    """Classical RK4 on the reduced state.  pi0 holds pi^2..pi^k (zeros if None).

    EL residuals are evaluated with exact solution jets every
    ``residual_every`` steps (about 100 nodes by default, 0 disables).
    """
    L.check_point(p0)
    if h <= 0 or t_end < 0:
        raise ValueError("step must be positive and t_end non-negative")
    system = reduce_to_explicit(L)
    steps = int(round(t_end / h))
    if abs(steps * h - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer multiple of h")
    if residual_every is None:
        residual_every = max(1, steps // 100)
    states = np.zeros((steps + 1, system.size))
    states[0] = system.pack(p0, pi0)
    with np.errstate(over="ignore", invalid="ignore"):
        states, status, message = _run_rk4(system, states, steps, h)
    return _trajectory_from_states(system, states, h, status, message, residual_every)


def _run_rk4(system, states, steps, h):
    status, message = "ok", ""
    i = 0
    try:
        system(0.0, states[0])
        for i in range(steps):
            nxt = rk4_step(system, i * h, states[i], h)
            if not np.all(np.isfinite(nxt)):
                raise NonFiniteStateError(f"non-finite state at t = {(i + 1) * h:.6g}")
            states[i + 1] = nxt
    except (SingularHessianError, NonFiniteStateError, ex.DomainError) as exc:
        status, message = "failed", str(exc)
        states = states[: i + 1]
    return states, status, message


def _trajectory_from_states(system: ExplicitSystem, states, h, status, message, residual_every):
    L = system.L
    N = states.shape[0]
    k, m, n = L.k, L.m, L.n
    t = np.arange(N) * h
    x = states[:, :n].copy()
    y = states[:, n:n + k * m].reshape(N, k, m).copy()
    pi = np.zeros((N, k, m))
    E = np.zeros(N)
    residual = np.full(N, np.nan)
    for i in range(N):
        try:
            ladder = system.ladder(states[i])
        except ex.DomainError:
            continue
        pi[i] = np.array(ladder)
        E[i] = energy(L, system.point(states[i]), ladder)
        if residual_every and (i % residual_every == 0 or i == N - 1):
            try:
                residual[i] = float(np.max(np.abs(el_residual(L, system.curve_jet(states[i])))))
            except (SingularHessianError, np.linalg.LinAlgError, ex.DomainError):
                pass
    monitors = {"energy": E}
    return Trajectory(t, x, y, pi, L.convention, residual, monitors, status, message)


# ---------------------------------------------------------------------------
# Sampled curves (finite differences)


def fd_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Weights w with sum_i w_i f(t + o_i h) ~ h^order f^(order)(t)."""
    offsets = np.asarray(offsets, dtype=float)
    V = np.vander(offsets, increasing=True).T
    rhs = np.zeros(offsets.size)
    rhs[order] = factorial(order)
    return np.linalg.solve(V, rhs)


def fd_derivative(values: np.ndarray, i: int, order: int, h: float) -> np.ndarray | None:
    """Central difference of at least 4th order accuracy at node i (None near edges)."""
    if order == 0:
        return values[i].copy()
    half = (order + 1) // 2 + 1
    if i - half < 0 or i + half >= values.shape[0]:
        return None
    offsets = np.arange(-half, half + 1)
    w = fd_weights(offsets, order)
    return np.tensordot(w, values[i - half: i + half + 1], axes=(0, 0)) / h ** order


def curve_jet_from_samples(L: LagrangianSpec, t: np.ndarray, x: np.ndarray, y: np.ndarray, i: int,
                           order: int | None = None) -> CurveJet | None:
    """Jet at node i of a sampled curve in F_k (uniform grid).

    Lower Taylor coefficients of y_1 come from the sampled blocks y_1..y_k;
    higher ones from finite differences of the top block; the base jet is
    the admissible lift through x[i].
    """
    k, conv = L.k, L.convention
    order = 2 * k - 1 if order is None else order
    h = float(t[1] - t[0])
    coeffs = np.zeros((L.m, order + 1))
    for j in range(min(k, order + 1)):
        # y_1^(j) = (j+1)! y_{j+1} (homogeneous) or y_{j+1} (plain)
        scale = float(np.prod([chain_factor(w, conv) for w in range(2, j + 2)]))
        coeffs[:, j] = scale * y[i, j] / factorial(j)
    top_scale = float(np.prod([chain_factor(w, conv) for w in range(2, k + 1)]))
    for j in range(k, order + 1):
        d = fd_derivative(y[:, k - 1], i, j - k + 1, h)
        if d is None:
            return None
        coeffs[:, j] = top_scale * d / factorial(j)
    xj = base_jet_from_anchor(L.algebroid, x[i], coeffs[:, :order]) if L.n else np.zeros((0, order + 1))
    return CurveJet(xj, coeffs)


def residual_from_samples(L: LagrangianSpec, t, x, y, i: int) -> np.ndarray | None:
    """EL residual at node i with finite-difference jets; the base tail uses a
    finite-difference velocity of the sampled base curve."""
    jet = curve_jet_from_samples(L, t, x, y, i)
    if jet is None:
        return None
    r = el_residual(L, jet)
    if L.n:
        xdot = fd_derivative(x, i, 1, float(t[1] - t[0]))
        rho = L.algebroid.anchor_at(x[i])
        r[L.m:] = xdot - rho @ y[i, 0]
    return r
