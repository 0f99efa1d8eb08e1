"""Weighted coordinates on F_k = A^k, the holonomic embedding, the weighted
structure map in compact form, admissibility and convention changes.

Two coordinate conventions are supported.  ``plain``: y_w is the (w-1)-th time
derivative of y_1 along admissible curves.  ``homogeneous``: y_w carries the
1/w! factor of the weighted chart, so that d/dt y_{w-1} = w y_w.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from math import factorial
from typing import Callable, Mapping, Sequence

import numpy as np

from .algebroid import AlgebroidSpec
from .expr import TaylorScalar

CONVENTIONS = ("plain", "homogeneous")


def check_convention(convention: str) -> str:
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    return convention


def chain_factor(w: int, convention: str) -> float:
    """g_w in d/dt y_{w-1} = g_w y_w (and d/dt x = rho y_1 for w = 1)."""
    return float(w) if convention == "homogeneous" else 1.0


def ladder_factor(U: int, k: int, convention: str) -> float:
    """f_U in f_U pi^U = dL/dy_{k-U+1} - d/dt pi^{U-1}."""
    return float(k - U + 1) if convention == "homogeneous" else 1.0


def _arr(v, size=None) -> np.ndarray:
    a = np.array(v, dtype=float).reshape(-1)
    if size is not None and a.size != size:
        raise ValueError(f"expected a block of length {size}, got {a.size}")
    return a


@dataclass
class HigherPoint:
    x: np.ndarray
    y: tuple
    convention: str = "plain"

    def __post_init__(self):
        self.x = _arr(self.x)
        self.y = tuple(_arr(b) for b in self.y)
        check_convention(self.convention)
        if len({b.size for b in self.y}) > 1:
            raise ValueError("fiber blocks must share one length")

    @property
    def k(self) -> int:
        return len(self.y)

    @property
    def z(self) -> np.ndarray:
        return self.y[-1]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, *self.y]) if self.y else self.x.copy()


@dataclass
class LinearizedVector:
    base: HigherPoint
    Y: tuple


@dataclass
class PhasePoint:
    """Point of D*(F_k): lower coordinates plus the ladder pi^1..pi^k."""

    x: np.ndarray
    y: tuple
    pi: tuple
    convention: str = "plain"

    def __post_init__(self):
        self.x = _arr(self.x)
        self.y = tuple(_arr(b) for b in self.y)
        self.pi = tuple(_arr(b) for b in self.pi)
        check_convention(self.convention)
        if len(self.y) != len(self.pi) - 1:
            raise ValueError("a phase point of order k has k-1 lower blocks and k momenta")

    @property
    def k(self) -> int:
        return len(self.pi)


@dataclass
class MironianPoint:
    x: np.ndarray
    y: tuple
    theta: np.ndarray
    convention: str = "plain"

    def __post_init__(self):
        self.x = _arr(self.x)
        self.y = tuple(_arr(b) for b in self.y)
        self.theta = _arr(self.theta)
        check_convention(self.convention)

    @property
    def k(self) -> int:
        return len(self.y) + 1


def check_dimensions(p, spec: AlgebroidSpec, k: int | None = None):
    if p.x.size != spec.n_base:
        raise ValueError(f"base block has length {p.x.size}, expected {spec.n_base}")
    blocks = list(p.y)
    blocks += [p.theta] if isinstance(p, MironianPoint) else []
    blocks += list(p.pi) if isinstance(p, PhasePoint) else []
    for b in blocks:
        if b.size != spec.m_fiber:
            raise ValueError(f"fiber block has length {b.size}, expected {spec.m_fiber}")
    if k is not None and p.k != k:
        raise ValueError(f"point has order {p.k}, expected {k}")


# ---------------------------------------------------------------------------
# Tower and homogeneity


def project_to_level(p: HigherPoint, level: int) -> HigherPoint:
    if level < 0 or level > p.k:
        raise ValueError(f"level {level} outside 0..{p.k}")
    return HigherPoint(p.x.copy(), tuple(b.copy() for b in p.y[:level]), p.convention)


def homogeneity_scale(p: HigherPoint, t: float) -> HigherPoint:
    if t < 0:
        raise ValueError("the homogeneity action is defined for t >= 0")
    return HigherPoint(p.x.copy(), tuple(t ** (w + 1) * b for w, b in enumerate(p.y)), p.convention)


def convert_convention(p, to: str):
    """Rescale weight blocks: y_w(plain) = w! y_w(homogeneous).

    Momenta are rescaled inversely to their paired holonomic fiber
    coordinates: pi^U(homogeneous) = (k-U)! pi^U(plain), theta = k! theta.
    """
    check_convention(to)
    if p.convention == to:
        return replace(p)
    up = to == "plain"

    def y_scale(w):
        return float(factorial(w)) if up else 1.0 / factorial(w)

    y = tuple(y_scale(w + 1) * b for w, b in enumerate(p.y))
    if isinstance(p, HigherPoint):
        return HigherPoint(p.x.copy(), y, to)
    k = p.k
    if isinstance(p, PhasePoint):
        pi = tuple((1.0 / factorial(k - U) if up else float(factorial(k - U))) * b for U, b in enumerate(p.pi, 1))
        return PhasePoint(p.x.copy(), y, pi, to)
    if isinstance(p, MironianPoint):
        s = 1.0 / factorial(k) if up else float(factorial(k))
        return MironianPoint(p.x.copy(), y, s * p.theta, to)
    raise TypeError(f"cannot convert {type(p).__name__}")


# ---------------------------------------------------------------------------
# Embedding and vertical lift


def holonomic_embed(p: HigherPoint) -> LinearizedVector:
    """Y[U] = U y[U] (homogeneous) or y[U] (plain); base is the k-1 truncation."""
    Y = tuple(chain_factor(U, p.convention) * b for U, b in enumerate(p.y, 1))
    return LinearizedVector(project_to_level(p, p.k - 1), Y)


def vertical_lift(k: int, v, b) -> np.ndarray:
    """Identify T T^k M with D(T^{k+1} M).

    ``v`` is ``(a, dq)``: the base point (q, q', ..., q^(k)) as a (k+1, n)
    array and the tangent components (dq, dq', ..., dq^(k)).  ``b`` is a
    (k+2, n) point of T^{k+1} M over ``a``.  Returns the vertical components
    (0, dq, 2 dq', ..., (k+1) dq^(k)) at ``b``.
    """
    a, dq = (np.atleast_2d(np.asarray(t, dtype=float)) for t in v)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] != k + 1 or dq.shape != a.shape or b.shape != (k + 2, a.shape[1]):
        raise ValueError("vertical_lift: inconsistent block shapes")
    if not np.array_equal(b[: k + 1], a):
        raise ValueError("vertical_lift: base of the vector differs from the projection of b")
    out = np.zeros_like(b)
    out[1:] = np.arange(1, k + 2)[:, None] * dq
    return out


# ---------------------------------------------------------------------------
# Weighted structure


class WeightedStructure:
    """Homogeneous structure functions rho[u] and C[u] of a weighted algebroid.

    ``rho[(u, V)](X)`` is the matrix sending Y_{V-u} to the velocity of
    X_{V-1}; its shape is (dim X_{V-1}, m).  ``bracket[(u, a, b)](X)`` is an
    array C[I, J, K] pairing Y_a and Y_b into Y_{a+b+u-1}.  ``X`` is the list
    of lower blocks X_0..X_{k-1}.
    """

    def __init__(self, k: int, n: int, m: int,
                 rho: Mapping[tuple[int, int], Callable] | None = None,
                 bracket: Mapping[tuple[int, int, int], Callable] | None = None,
                 name: str = "custom"):
        self.k, self.n, self.m = int(k), int(n), int(m)
        self.rho = dict(rho or {})
        self.bracket = dict(bracket or {})
        self.name = name
        for (u, V) in self.rho:
            if not (0 <= u < V <= self.k):
                raise ValueError(f"rho label {(u, V)} outside the weight range")
        for (u, a, b) in self.bracket:
            if not (0 <= u < self.k and a >= 1 and b >= 1 and a + b + u - 1 <= self.k):
                raise ValueError(f"bracket label {(u, a, b)} outside the weight range")

    def dim_X(self, u: int) -> int:
        return self.n if u == 0 else self.m

    def __repr__(self) -> str:
        return f"WeightedStructure({self.name!r}, k={self.k}, n={self.n}, m={self.m})"


def lie_algebroid_structure(spec: AlgebroidSpec, k: int) -> WeightedStructure:
    """Only rho[0] = (rho^A_b, delta^a_b) and C[0] = C^c_ab are nonzero."""
    eye = np.eye(spec.m_fiber)
    rho = {(0, 1): lambda X: spec.anchor_at(X[0])}
    for V in range(2, k + 1):
        rho[(0, V)] = lambda X, eye=eye: eye
    bracket = {}
    if spec.structure:
        bracket[(0, 1, 1)] = lambda X: spec.structure_at(X[0])
    return WeightedStructure(k, spec.n_base, spec.m_fiber, rho, bracket, name=f"lie_algebroid[{spec.name}]")


def tangent_structure(k: int, n: int) -> WeightedStructure:
    eye = np.eye(n)
    rho = {(0, V): (lambda X, eye=eye: eye) for V in range(1, k + 1)}
    return WeightedStructure(k, n, n, rho, {}, name=f"tangent(k={k}, n={n})")


def _zeros_if_missing(ladder, index, size):
    if index in ladder and ladder[index] is not None:
        return np.asarray(ladder[index], dtype=float)
    return np.zeros(size)


def _as_weight_map(seq, first: int) -> dict:
    if isinstance(seq, Mapping):
        return dict(seq)
    return {first + i: v for i, v in enumerate(seq)}


def epsilon_apply(ws: WeightedStructure, X, Y, P, Pi):
    """Compact weighted structure map.

    X: lower blocks X_0..X_{k-1}.  Y: fiber blocks Y_1..Y_k.  P: momenta
    P^2..P^{k+1}, P^V dual to X_{k+1-V} (mapping weight -> block, or a list
    starting at weight 2).  Pi: ladder Pi^1..Pi^k.  Returns (dX, dPi) with
    dX[U-1] the velocity of X_{U-1} and dPi[U-1] = delta Pi^{U+1}.
    Labels outside the declared ranges read as zero.
    """
    k, m = ws.k, ws.m
    X = list(X)
    Yw = _as_weight_map(Y, 1)
    Pw = _as_weight_map(P, 2)
    Piw = _as_weight_map(Pi, 1)
    if len(X) != k or len(Yw) != k or len(Piw) != k:
        raise ValueError("ladders must have k blocks")
    for u, block in enumerate(X):
        if np.size(block) != ws.dim_X(u):
            raise ValueError(f"X_{u} has length {np.size(block)}, expected {ws.dim_X(u)}")
    for V in range(2, k + 2):
        if V in Pw and Pw[V] is not None and np.size(Pw[V]) != ws.dim_X(k + 1 - V):
            raise ValueError(f"P^{V} has the wrong length")
    cache: dict = {}

    def rho(u, V):
        key = ("r", u, V)
        if key not in cache:
            fn = ws.rho.get((u, V))
            cache[key] = None if fn is None else np.asarray(fn(X), dtype=float)
        return cache[key]

    def bracket(u, a, b):
        key = ("c", u, a, b)
        if key not in cache:
            fn = ws.bracket.get((u, a, b))
            cache[key] = None if fn is None else np.asarray(fn(X), dtype=float)
        return cache[key]

    dX = []
    for U in range(1, k + 1):
        acc = np.zeros(ws.dim_X(U - 1))
        for u in range(U):
            r = rho(u, U)
            if r is not None:
                acc = acc + r @ _zeros_if_missing(Yw, U - u, m)
        dX.append(acc)
    dPi = []
    for U in range(1, k + 1):
        acc = np.zeros(m)
        for u in range(U):
            V = k + 1 - U + u
            r = rho(u, V) if V <= k else None
            if r is not None:
                acc = acc + r.T @ _zeros_if_missing(Pw, U + 1 - u, ws.dim_X(V - 1))
        for u in range(k):
            for Up in range(1, k + 1):
                w = U + 1 - Up - u
                if w < 1 or w > k:
                    continue
                c = bracket(u, Up, k + 1 - U)
                if c is not None:
                    acc = acc + np.einsum("ijk,i,k->j", c, _zeros_if_missing(Yw, Up, m), _zeros_if_missing(Piw, w, m))
        dPi.append(acc)
    return dX, dPi


def scale_epsilon_inputs(ws: WeightedStructure, X, Y, P, Pi, t: float):
    """Apply the weight action to epsilon inputs (used by equivariance checks)."""
    k = ws.k
    Xs = [t ** u * np.asarray(b, float) for u, b in enumerate(X)]
    Ys = [t ** U * np.asarray(b, float) for U, b in enumerate(Y, 1)]
    Ps = {V: t ** V * np.asarray(b, float) for V, b in _as_weight_map(P, 2).items()}
    Pis = [t ** U * np.asarray(b, float) for U, b in enumerate(Pi, 1)]
    return Xs, Ys, Ps, Pis


def equivariance_error(ws: WeightedStructure, X, Y, P, Pi, t: float) -> float:
    """Max relative deviation from weight equivariance of epsilon_apply."""
    dX, dPi = epsilon_apply(ws, X, Y, P, Pi)
    sX, sPi = epsilon_apply(ws, *scale_epsilon_inputs(ws, X, Y, P, Pi, t))
    worst = 0.0
    for U in range(1, ws.k + 1):
        for got, ref in ((sX[U - 1], t ** U * dX[U - 1]), (sPi[U - 1], t ** (U + 1) * dPi[U - 1])):
            scale = max(np.max(np.abs(ref), initial=0.0), 1e-300)
            worst = max(worst, float(np.max(np.abs(got - ref), initial=0.0) / scale))
    return worst


# ---------------------------------------------------------------------------
# Curves and admissibility


def jet_scalars(coeffs: np.ndarray, order: int | None = None) -> list[TaylorScalar]:
    """Rows of a (dim, d+1) coefficient array as TaylorScalar jets."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if order is not None:
        coeffs = coeffs[:, : order + 1]
    return [TaylorScalar(row) for row in coeffs]


def differentiate_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """Normalized Taylor coefficients of the time derivative (one order lower)."""
    coeffs = np.asarray(coeffs, dtype=float)
    d = coeffs.shape[-1] - 1
    return coeffs[..., 1:] * np.arange(1, d + 1)


def lift_fiber_jets(y1: np.ndarray, k: int, convention: str) -> list[np.ndarray]:
    """Jets of y_1..y_k along the prolongation of a curve in A."""
    out = [np.atleast_2d(np.asarray(y1, dtype=float))]
    for w in range(2, k + 1):
        out.append(differentiate_coeffs(out[-1]) / chain_factor(w, convention))
    d = out[-1].shape[-1] - 1
    if d < 0:
        raise ValueError("insufficient jet order for the requested lift")
    return [b[:, : d + 1] for b in out]


def base_jet_from_anchor(spec: AlgebroidSpec, x0, y1: np.ndarray) -> np.ndarray:
    """Jet of x solving dx/dt = rho(x) y_1 through x0, with the order of y1 plus one."""
    y1 = np.atleast_2d(np.asarray(y1, dtype=float))
    d = y1.shape[1] - 1
    n = spec.n_base
    x = np.zeros((n, d + 2))
    x[:, 0] = x0
    for j in range(d + 1):
        xs = jet_scalars(x[:, : j + 1])
        ys = jet_scalars(y1[:, : j + 1])
        rho, _ = spec.evaluate_jets(xs)
        for A in range(n):
            acc = TaylorScalar.constant(0.0, j)
            for b in range(spec.m_fiber):
                acc = acc + rho[A][b] * ys[b]
            x[A, j + 1] = acc.c[j] / (j + 1)
    return x


def admissibility_residual(ws: WeightedStructure | AlgebroidSpec, x_jet, y_jets, convention: str = "plain",
                           k: int | None = None) -> np.ndarray:
    """Residual of d/dt X_{U-1} = sum_u rho[u] Y_{U-u} with Y the holonomic embedding.

    ``x_jet``: (n, d+1) coefficients; ``y_jets``: k arrays (m, d+1), d >= 1.
    """
    check_convention(convention)
    y_jets = [np.atleast_2d(np.asarray(b, dtype=float)) for b in y_jets]
    if isinstance(ws, AlgebroidSpec):
        ws = lie_algebroid_structure(ws, len(y_jets) if k is None else k)
    k = ws.k
    if len(y_jets) != k:
        raise ValueError(f"expected {k} fiber jets")
    if ws.n:
        x_jet = np.atleast_2d(np.asarray(x_jet, dtype=float)).reshape(ws.n, -1)
    else:
        x_jet = np.zeros((0, y_jets[0].shape[1]))
    if x_jet.shape[1] < 2 or any(b.shape[1] < 2 for b in y_jets[:-1]):
        raise ValueError("admissibility needs jets of order >= 1")
    lower = [x_jet] + y_jets[:-1]
    X = [b[:, 0] for b in lower]
    Y = [chain_factor(U, convention) * b[:, 0] for U, b in enumerate(y_jets, 1)]
    dX, _ = epsilon_apply(ws, X, Y, {}, [np.zeros(ws.m)] * k)
    return np.concatenate([b[:, 1] - d for b, d in zip(lower, dX)])


def higher_admissible_membership(spec: AlgebroidSpec, x_jet, y_jet, k: int, tol: float = 1e-9) -> bool:
    """Whether the (k-1)-jet of a curve (x, y) in A lies in A^k.

    The prolonged anchor image must be holonomic: the jet of
    dx/dt - rho(x) y vanishes through order k-2.
    """
    x_jet = np.atleast_2d(np.asarray(x_jet, dtype=float)).reshape(spec.n_base, -1)
    y_jet = np.atleast_2d(np.asarray(y_jet, dtype=float)).reshape(spec.m_fiber, -1)
    if x_jet.shape[1] < k or y_jet.shape[1] < k:
        raise ValueError(f"jet order must be at least k-1 = {k - 1}")
    if k <= 1 or spec.n_base == 0:
        return True
    order = k - 2
    xs = jet_scalars(x_jet[:, : order + 1])
    ys = jet_scalars(y_jet[:, : order + 1])
    rho, _ = spec.evaluate_jets(xs)
    xdot = differentiate_coeffs(x_jet[:, : k])
    worst = 0.0
    for A in range(spec.n_base):
        acc = TaylorScalar.constant(0.0, order)
        for b in range(spec.m_fiber):
            acc = acc + rho[A][b] * ys[b]
        worst = max(worst, float(np.max(np.abs(xdot[A] - acc.c))))
    return worst <= tol
