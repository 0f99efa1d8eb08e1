"""Hamiltonian side: Legendre map onto the Mironian, Hamiltonians of
hyperregular Lagrangians, Hamiltonian phase dynamics and consistency checks.

Hamiltonians are plain functions of Mironian coordinates ``x{A}``, ``y{w}_{a}``
(w < k) and ``theta_{a}``.  An affine-bundle section carries the opposite sign
to the function it represents; that sign lives in ``SECTION_SIGN`` alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .algebroid import AlgebroidSpec, base_names
from .expr import TaylorScalar
from .graded import (HigherPoint, MironianPoint, WeightedStructure, chain_factor, check_convention,
                     check_dimensions, epsilon_apply, ladder_factor, lie_algebroid_structure)
from .lagrange import (LagrangianSpec, SingularHessianError, checked_inverse, fiber_names, rk4_step,
                       tulczyjew_differential)

# A function F on the Mironian is read as the section (x, p) -> -F(x, p).
SECTION_SIGN = -1.0


class LegendreError(ArithmeticError):
    pass


def theta_names(m: int) -> list[str]:
    return [f"theta_{a + 1}" for a in range(m)]


# ---------------------------------------------------------------------------
# Legendre map


def legendre(L: LagrangianSpec, p: HigherPoint) -> MironianPoint:
    """(x, y_1..y_{k-1}, dL/dz)."""
    L.check_point(p)
    _, gy = L.gradient(p)
    return MironianPoint(p.x.copy(), tuple(b.copy() for b in p.y[:-1]), gy[-1], p.convention)


def inverse_legendre(L: LagrangianSpec, mp: MironianPoint, z_guess=None, tol: float = 1e-12,
                     max_iter: int = 50) -> HigherPoint:
    """Solve theta = dL/dz(x, y, z) for z by damped Newton iteration."""
    check_dimensions(mp, L.algebroid, L.k)
    theta = mp.theta
    z = np.zeros(L.m) if z_guess is None else np.array(z_guess, dtype=float).reshape(L.m)
    lower = list(mp.y)

    def residual(z_):
        _, gy = L.grad_blocks(mp.x, lower + [z_])
        return np.array(gy[-1], dtype=float) - theta

    scale = max(1.0, float(np.max(np.abs(theta), initial=0.0)))
    r = residual(z)
    for _ in range(max_iter):
        err = float(np.max(np.abs(r), initial=0.0))
        hzz, _, _ = L.hessian_blocks(mp.x, lower + [z])
        # checked even at convergence: a root of a singular fiber derivative is not unique
        Hinv = checked_inverse(np.array(hzz, dtype=float).reshape(L.m, L.m), z)
        if err < tol * scale:
            return HigherPoint(mp.x.copy(), lower + [z], mp.convention)
        step = -Hinv @ r
        t = 1.0
        for _ in range(9):
            trial = z + t * step
            r_trial = residual(trial)
            if np.all(np.isfinite(r_trial)) and np.max(np.abs(r_trial), initial=0.0) < err:
                break
            t *= 0.5
        z, r = trial, r_trial
    raise LegendreError(f"inverse Legendre map did not converge in {max_iter} iterations "
                        f"(residual {np.max(np.abs(r)):.3e})")


def generating_family_eval(L: LagrangianSpec, phi: MironianPoint, f: HigherPoint, atol: float = 1e-12) -> float:
    """phi(f) - L(f) = <theta, z> - L(f); phi and f must share the base in F_{k-1}."""
    L.check_point(f)
    same = np.allclose(phi.x, f.x, rtol=0, atol=atol) and len(phi.y) == f.k - 1 and all(
        np.allclose(a, b, rtol=0, atol=atol) for a, b in zip(phi.y, f.y[:-1]))
    if not same:
        raise ValueError("covector and fiber point lie over different points of F_{k-1}")
    return float(np.dot(phi.theta, f.z) - L.value(f))


# ---------------------------------------------------------------------------
# Hamiltonians


def _mironian_args(mp: MironianPoint) -> list:
    return list(mp.x) + [v for b in mp.y for v in b] + list(mp.theta)


class HamiltonianSpec:
    """Hamiltonian H(x, y_1..y_{k-1}, theta) given as an expression.

    ``representation="section"`` means the expression is the section value,
    i.e. SECTION_SIGN times the function.
    """

    def __init__(self, algebroid: AlgebroidSpec, k: int, hamiltonian, convention: str = "plain",
                 parameters: Mapping[str, float] | None = None, representation: str = "function"):
        if representation not in ("function", "section"):
            raise ValueError("representation must be 'function' or 'section'")
        self.algebroid = algebroid
        self.k = int(k)
        self.convention = check_convention(convention)
        self.representation = representation
        self.sign = 1.0 if representation == "function" else SECTION_SIGN
        n, m = algebroid.n_base, algebroid.m_fiber
        self.n, self.m = n, m
        self.names = base_names(n) + [v for b in fiber_names(m, k - 1) for v in b] + theta_names(m)
        params = dict(parameters or {})
        allowed = set(self.names) | set(params)
        e = ex.parse(hamiltonian, allowed) if isinstance(hamiltonian, str) else ex.as_expr(hamiltonian)
        extra = e.variables() - allowed
        if extra:
            raise ex.UnknownVariableError(f"unknown variable {sorted(extra)[0]!r}", 0)
        self.expression = ex.substitute(e, {k_: ex.Num(float(v)) for k_, v in params.items()})
        self._value = ex.compile_functions([self.expression], self.names)
        self._grad = ex.compile_functions([ex.derivative(self.expression, v) for v in self.names], self.names)

    def value(self, mp: MironianPoint) -> float:
        """Value of the stored expression (section value if representation is 'section')."""
        return float(self._value(*_mironian_args(mp))[0])

    def function_value(self, mp: MironianPoint) -> float:
        return self.sign * self.value(mp)

    def gradient(self, mp: MironianPoint) -> tuple[list[np.ndarray], np.ndarray]:
        """Derivatives of the function form: ([dH/dX_0, ..., dH/dX_{k-1}], dH/dtheta)."""
        g = self.sign * np.array(self._grad(*_mironian_args(mp)), dtype=float)
        return _split_gradient(g, self.n, self.m, self.k)


def _split_gradient(g, n, m, k):
    blocks = [g[:n]] + [g[n + w * m: n + (w + 1) * m] for w in range(k - 1)]
    return blocks, g[n + (k - 1) * m:]


class LegendreHamiltonian:
    """H = <theta, z> - L(x, y, z) with z from the inverse Legendre map.

    Gradients are forward-mode jets pushed through the Newton solve, so they
    do not rely on the envelope identities.
    """

    representation = "function"
    sign = 1.0

    def __init__(self, L: LagrangianSpec):
        self.L = L
        self.algebroid = L.algebroid
        self.k, self.n, self.m = L.k, L.n, L.m
        self.convention = L.convention

    def fiber_point(self, mp: MironianPoint, z_guess=None) -> HigherPoint:
        return inverse_legendre(self.L, mp, z_guess)

    def value(self, mp: MironianPoint) -> float:
        p = self.fiber_point(mp)
        return float(np.dot(mp.theta, p.z) - self.L.value(p))

    function_value = value

    def gradient(self, mp: MironianPoint) -> tuple[list[np.ndarray], np.ndarray]:
        L = self.L
        p = self.fiber_point(mp)
        z0 = p.z
        hzz, _, _ = L.hessian_blocks(p.x, list(p.y))
        Hinv = checked_inverse(np.array(hzz, dtype=float).reshape(L.m, L.m), z0)
        flat = np.concatenate([mp.x, *mp.y, mp.theta])
        out = np.zeros(flat.size)
        for i in range(flat.size):
            seeds = [TaylorScalar([v, 1.0 if j == i else 0.0]) for j, v in enumerate(flat)]
            x = seeds[: self.n]
            off = self.n
            ys = []
            for _ in range(self.k - 1):
                ys.append(seeds[off: off + self.m])
                off += self.m
            theta = seeds[off:]
            z = [TaylorScalar([v, 0.0]) for v in z0]
            for _ in range(2):
                _, gy = L.grad_blocks(x, ys + [z])
                r = [gy[-1][a] - theta[a] for a in range(self.m)]
                z = [z[a] - sum(Hinv[a, b] * r[b] for b in range(self.m)) for a in range(self.m)]
            Lval = L._value(*(x + [v for b in ys for v in b] + z))[0]
            H = sum(theta[a] * z[a] for a in range(self.m)) - Lval
            out[i] = H.c[1] if isinstance(H, TaylorScalar) else 0.0
        return _split_gradient(out, self.n, self.m, self.k)


def hamiltonian_from_lagrangian(L: LagrangianSpec) -> LegendreHamiltonian:
    return LegendreHamiltonian(L)


# ---------------------------------------------------------------------------
# Phase dynamics


def hamiltonian_phase_dynamics(H, ws: WeightedStructure | None, mp: MironianPoint, Pi_free: Sequence):
    """Velocities (dX ladder, dPi ladder) of the Hamiltonian phase dynamics.

    Pi^1 = theta / f_1 and z = dH/dtheta; the lower momenta P come from
    -dH/dX and the drift of the ladder.  ``Pi_free`` holds Pi^2..Pi^k.
    """
    k, m, conv = H.k, H.m, H.convention
    check_dimensions(mp, H.algebroid, k)
    if mp.convention != conv:
        raise ValueError("Mironian point and Hamiltonian use different conventions")
    Pi_free = [np.asarray(b, dtype=float).reshape(m) for b in Pi_free]
    if len(Pi_free) != k - 1:
        raise ValueError(f"expected {k - 1} free momenta Pi^2..Pi^k")
    ws = ws or lie_algebroid_structure(H.algebroid, k)
    gX, gtheta = H.gradient(mp)
    Pi = [mp.theta / ladder_factor(1, k, conv)] + Pi_free
    P = {k + 1: -gX[0]}
    for W in range(1, k):
        P[W + 1] = -gX[k - W] - ladder_factor(W + 1, k, conv) * Pi[W]
    Y = [chain_factor(w, conv) * mp.y[w - 1] for w in range(1, k)] + [chain_factor(k, conv) * gtheta]
    X = [mp.x] + list(mp.y)
    return epsilon_apply(ws, X, Y, P, Pi)


@dataclass
class ConsistencyReport:
    passed: bool
    max_difference: float
    tol: float
    samples: int
    message: str = ""
    differences: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.message})" if self.message else ""
        return f"D_H = D_L: {status} (max difference {self.max_difference:.3e} over {self.samples} samples, tol {self.tol:.1e}){extra}"


def _random_samples(L: LagrangianSpec, count: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        p = HigherPoint(rng.uniform(-1, 1, L.n), [rng.uniform(-1, 1, L.m) for _ in range(L.k)], L.convention)
        out.append((p, [rng.uniform(-1, 1, L.m) for _ in range(L.k - 1)]))
    return out


def consistency_check(L: LagrangianSpec, samples=None, tol: float = 1e-8, H=None, seed: int = 0,
                      count: int = 50, ws: WeightedStructure | None = None) -> ConsistencyReport:
    """Compare the Lagrangian phase dynamics at p with the Hamiltonian one at legendre(p).

    ``samples``: HigherPoints or (HigherPoint, Pi^2..Pi^k) pairs; random if omitted.
    ``H`` defaults to the Legendre-derived Hamiltonian.
    """
    if samples is None:
        samples = _random_samples(L, count, seed)
    rng = np.random.default_rng(seed + 1)
    H = H if H is not None else hamiltonian_from_lagrangian(L)
    ws = ws or lie_algebroid_structure(L.algebroid, L.k)
    diffs = []
    try:
        for item in samples:
            p, free = item if isinstance(item, tuple) else (item, [rng.uniform(-1, 1, L.m) for _ in range(L.k - 1)])
            lag = tulczyjew_differential(L, p, free, ws)
            mp = legendre(L, p)
            dX, dPi = hamiltonian_phase_dynamics(H, ws, mp, free)
            ham = np.concatenate([np.ravel(b) for b in (*dX, *dPi)])
            diffs.append(float(np.max(np.abs(ham - lag.flat()), initial=0.0)))
    except (SingularHessianError, LegendreError, ex.DomainError) as exc:
        return ConsistencyReport(False, float("inf"), tol, len(diffs),
                                 f"hyperregularity failed: {exc}", diffs)
    worst = max(diffs, default=0.0)
    return ConsistencyReport(worst <= tol, worst, tol, len(diffs), "", diffs)


# ---------------------------------------------------------------------------
# Integration


@dataclass
class HamiltonianTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray  # (N, k-1, m)
    pi: np.ndarray  # (N, k, m)
    hamiltonian: np.ndarray  # function values
    energy: np.ndarray  # H + sum_{U>=2} <Pi^U, Y_{k+1-U}>
    convention: str
    status: str = "ok"
    message: str = ""


def integrate_hamiltonian(H, mp0: MironianPoint, Pi_free0: Sequence | None, t_end: float, h: float,
                          ws: WeightedStructure | None = None) -> HamiltonianTrajectory:
    """RK4 on (X_0..X_{k-1}, Pi^1..Pi^k) driven by the Hamiltonian phase dynamics."""
    k, n, m, conv = H.k, H.n, H.m, H.convention
    ws = ws or lie_algebroid_structure(H.algebroid, k)
    Pi_free0 = [np.zeros(m)] * (k - 1) if Pi_free0 is None else Pi_free0
    f1 = ladder_factor(1, k, conv)
    dim_X = n + (k - 1) * m

    def unpack(s):
        x = s[:n]
        ys = [s[n + w * m: n + (w + 1) * m] for w in range(k - 1)]
        Pi = [s[dim_X + U * m: dim_X + (U + 1) * m] for U in range(k)]
        return MironianPoint(x, ys, f1 * Pi[0], conv), Pi[1:]

    def rhs(t, s):
        mp, free = unpack(s)
        dX, dPi = hamiltonian_phase_dynamics(H, ws, mp, free)
        return np.concatenate([np.ravel(b) for b in (*dX, *dPi)])

    steps = int(round(t_end / h))
    s0 = np.concatenate([mp0.x, *mp0.y, mp0.theta / f1, *[np.asarray(b, float) for b in Pi_free0]])
    states = [s0]
    status, message = "ok", ""
    try:
        for i in range(steps):
            nxt = rk4_step(rhs, i * h, states[-1], h)
            if not np.all(np.isfinite(nxt)):
                raise ArithmeticError(f"non-finite state at t = {(i + 1) * h:.6g}")
            states.append(nxt)
    except (ArithmeticError, SingularHessianError) as exc:
        status, message = "failed", str(exc)
    S = np.array(states)
    N = S.shape[0]
    Hv = np.zeros(N)
    E = np.zeros(N)
    for i in range(N):
        mp, free = unpack(S[i])
        Hv[i] = H.function_value(mp)
        _, gtheta = H.gradient(mp)
        Y = [chain_factor(w, conv) * mp.y[w - 1] for w in range(1, k)] + [chain_factor(k, conv) * gtheta]
        E[i] = Hv[i] + sum(float(np.dot(free[U - 2], Y[k - U])) for U in range(2, k + 1))
    return HamiltonianTrajectory(np.arange(N) * h, S[:, :n], S[:, n:dim_X].reshape(N, k - 1, m),
                                 S[:, dim_X:].reshape(N, k, m), Hv, E, conv, status, message)
