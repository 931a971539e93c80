"""Semialgebraic set model, slicing frames, lifted supports, ball moments.

A slice of a set L inside the ball of radius R is parameterized as
x = theta*t + Z*y with theta a unit direction, t the affine offset and y
local coordinates on the slicing hyperplane.  In ambient dimensions 2, 4
and 8 the frame Z is eliminated through division-algebra multiplication
tables; in dimension 3 it is parameterized by an auxiliary unit vector b
via the cross product; otherwise theta and Z must be fixed numerically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .polyalg import (
    Polynomial,
    PolyError,
    RewriteRule,
    RuleSet,
    VarSpace,
    compose,
    partial,
    reduce,
)


class GeometryError(ValueError):
    pass


# -- semialgebraic sets ----------------------------------------------------


@dataclass
class SemialgebraicSet:
    """Basic semialgebraic set {x : g_i(x) >= 0} inside the ball of radius R.

    The ball inequality R^2 - |x|^2 is appended automatically when the user
    description omits it; the compactness bound is required, not inferred.
    """

    space: VarSpace
    inequalities: list[Polynomial]
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError(f"enclosing radius must be positive and finite, got {self.radius}")
        for g in self.inequalities:
            if g.space.names != self.space.names:
                raise GeometryError("set inequality lives in the wrong space")
        ball = self.ball_constraint()
        if not any(g == ball for g in self.inequalities):
            self.inequalities = list(self.inequalities) + [ball]

    @property
    def ambient_dim(self) -> int:
        return self.space.dim

    def ball_constraint(self) -> Polynomial:
        terms = {(0,) * self.space.dim: self.radius**2}
        for i in range(self.space.dim):
            e = [0] * self.space.dim
            e[i] = 2
            terms[tuple(e)] = -1.0
        return Polynomial(self.space, terms)

    @classmethod
    def from_inequalities(cls, n: int, ineqs: list[Polynomial], radius: float):
        space = x_space(n)
        return cls(space, ineqs, radius)


def x_space(n: int) -> VarSpace:
    return VarSpace(tuple(f"x{i + 1}" for i in range(n)))


# -- ball moments ----------------------------------------------------------


def ball_moment(alpha, m: int, radius: float) -> float:
    """Integral of y^alpha over the m-dimensional ball of the given radius.

    Closed form R^(m+|a|) * prod Gamma((a_i+1)/2) / Gamma(1+(m+|a|)/2),
    with odd exponents forcing an exact zero.  Evaluated through log-Gamma
    so large degrees do not overflow.
    """
    if m <= 0:
        raise GeometryError("ball moments need slice dimension >= 1 (is the ambient dimension 1?)")
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != m:
        raise GeometryError(f"multi-index {alpha} does not match dimension {m}")
    if any(a < 0 for a in alpha):
        raise GeometryError("negative exponent")
    if any(a % 2 for a in alpha):
        return 0.0
    total = m + sum(alpha)
    log_val = sum(math.lgamma((a + 1) / 2.0) for a in alpha) - math.lgamma(1.0 + total / 2.0)
    return radius**total * math.exp(log_val)


class BallMomentTable:
    """Memoized ball moments for one slice dimension and radius.

    Warm up to the needed degree before sharing across threads; afterwards
    reads are pure dictionary lookups.
    """

    def __init__(self, slice_dim: int, radius: float):
        if slice_dim <= 0:
            raise GeometryError("slice dimension must be >= 1")
        self.slice_dim = slice_dim
        self.radius = float(radius)
        self.cache: dict[tuple, float] = {}

    def moment(self, alpha) -> float:
        alpha = tuple(int(a) for a in alpha)
        v = self.cache.get(alpha)
        if v is None:
            v = ball_moment(alpha, self.slice_dim, self.radius)
            self.cache[alpha] = v
        return v

    def warm_up(self, max_degree: int):
        def rec(prefix, remaining_dims, budget):
            if remaining_dims == 0:
                self.moment(tuple(prefix))
                return
            for e in range(0, budget + 1):
                rec(prefix + [e], remaining_dims - 1, budget - e)

        rec([], self.slice_dim, max_degree)

    def volume(self) -> float:
        return self.moment((0,) * self.slice_dim)


# -- division-algebra multiplication tables --------------------------------


def _cayley_dickson_table(n: int) -> np.ndarray:
    """Structure tensor T[i, j, k] with e_i * e_j = sum_k T[i,j,k] e_k.

    Built by Cayley-Dickson doubling from the reals; for n in {1, 2, 4, 8}
    the result is a normed algebra, so left multiplication by a unit vector
    is orthogonal.
    """
    if n == 1:
        return np.ones((1, 1, 1))
    half = n // 2
    sub = _cayley_dickson_table(half)

    def conj_sign(i):
        return 1.0 if i == 0 else -1.0

    table = np.zeros((n, n, n))
    # (a,b)(c,d) = (a c - d* b, d a + b c*)
    for i in range(n):
        for j in range(n):
            ai, bi = (i, None) if i < half else (None, i - half)
            cj, dj = (j, None) if j < half else (None, j - half)
            if ai is not None and cj is not None:
                table[i, j, :half] += sub[ai, cj]
            if bi is not None and dj is not None:
                # -d* b : conjugate d, multiply d* b, negate
                table[i, j, :half] -= conj_sign(dj) * sub[dj, bi]
            if ai is not None and dj is not None:
                table[i, j, half:] += sub[dj, ai]
            if bi is not None and cj is not None:
                table[i, j, half:] += conj_sign(cj) * sub[bi, cj]
    return table


def _division_frame_matrix(n: int):
    """Entries of the left-multiplication matrix as (sign, theta-index) pairs.

    Column j of the matrix is theta * e_j in the division algebra, so the
    matrix has first column theta and, for unit theta, orthonormal columns.
    """
    table = _cayley_dickson_table(n)
    entries = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            ks = np.nonzero(table[i, j])[0]
            if len(ks) != 1:
                raise GeometryError("degenerate multiplication table")
            k = int(ks[0])
            sign = float(table[i, j, k])
            if entries[k][j] is not None:
                raise GeometryError("multiplication table is not a signed permutation")
            entries[k][j] = (sign, i)
    return entries


# -- frames ----------------------------------------------------------------


class FrameMode(enum.Enum):
    DIVISION2 = "division2"
    DIVISION4 = "division4"
    DIVISION8 = "division8"
    CROSS3 = "cross3"
    FIXED = "fixed"
    TRANSLATION = "translation"


_DIVISION_DIMS = {FrameMode.DIVISION2: 2, FrameMode.DIVISION4: 4, FrameMode.DIVISION8: 8}


@dataclass
class Frame:
    """Lifting x = theta*t + Z*y with Z eliminated, parameterized, or fixed."""

    mode: FrameMode
    ambient_dim: int
    lifted: VarSpace
    substitution: dict[str, Polynomial]
    equalities: list[Polynomial]
    theta_vars: tuple[str, ...]
    t_var: str
    y_vars: tuple[str, ...]
    b_vars: tuple[str, ...] = ()
    theta0: np.ndarray | None = None
    z0: np.ndarray | None = None

    @property
    def rotational(self) -> bool:
        return len(self.theta_vars) > 0

    def quotient_rules(self) -> RuleSet:
        """Eliminations for the unit-sphere equalities: last-variable squares."""
        rules = []
        for group in (self.theta_vars, self.b_vars):
            if not group:
                continue
            last = group[-1]
            lhs = list((0,) * self.lifted.dim)
            lhs[self.lifted.index(last)] = 2
            rhs = Polynomial.constant(self.lifted, 1.0)
            for name in group[:-1]:
                rhs = rhs - Polynomial.variable(self.lifted, name) ** 2
            rules.append(RewriteRule(tuple(lhs), rhs))
        return RuleSet(rules)

    def residual_equalities(self, quotient: bool) -> list[Polynomial]:
        """Equalities the quotient rules do not absorb (all of them if quotient is off)."""
        if not quotient:
            return list(self.equalities)
        absorbed = set()
        for group in (self.theta_vars, self.b_vars):
            if group:
                sq = Polynomial.constant(self.lifted, -1.0)
                for name in group:
                    sq = sq + Polynomial.variable(self.lifted, name) ** 2
                absorbed.add(hash(sq))
        return [h for h in self.equalities if hash(h) not in absorbed]


def _sphere_equality(space: VarSpace, names) -> Polynomial:
    p = Polynomial.constant(space, -1.0)
    for n in names:
        p = p + Polynomial.variable(space, n) ** 2
    return p


def build_frame(n: int, mode: FrameMode, theta0=None, z0=None) -> Frame:
    """Construct the slicing frame for ambient dimension n.

    Division modes require n in {2, 4, 8}; CROSS3 requires n = 3; FIXED and
    TRANSLATION take a numeric direction (default e1) for any n >= 2 and
    complete it to an orthogonal matrix.
    """
    if n < 2:
        raise GeometryError("ambient dimension must be at least 2")
    if mode in _DIVISION_DIMS:
        if _DIVISION_DIMS[mode] != n:
            raise GeometryError(f"{mode.value} frame requires ambient dimension {_DIVISION_DIMS[mode]}, got {n}")
        theta = tuple(f"theta{i + 1}" for i in range(n))
        ys = tuple(f"y{j + 1}" for j in range(n - 1))
        lifted = VarSpace(theta + ("t",) + ys)
        entries = _division_frame_matrix(n)
        subst = {}
        col_vars = ("t",) + ys
        for k in range(n):
            p = Polynomial(lifted)
            for j in range(n):
                sign, i = entries[k][j]
                term = Polynomial.variable(lifted, theta[i]) * Polynomial.variable(lifted, col_vars[j]) * sign
                p = p + term
            subst[f"x{k + 1}"] = p
        eqs = [_sphere_equality(lifted, theta)]
        return Frame(mode, n, lifted, subst, eqs, theta, "t", ys)

    if mode is FrameMode.CROSS3:
        if n != 3:
            raise GeometryError("cross-product frame requires ambient dimension 3")
        theta = ("theta1", "theta2", "theta3")
        bs = ("b1", "b2", "b3")
        ys = ("y1", "y2")
        lifted = VarSpace(theta + ("t",) + bs + ys)
        th = [Polynomial.variable(lifted, v) for v in theta]
        b = [Polynomial.variable(lifted, v) for v in bs]
        cross = [
            th[1] * b[2] - th[2] * b[1],
            th[2] * b[0] - th[0] * b[2],
            th[0] * b[1] - th[1] * b[0],
        ]
        t = Polynomial.variable(lifted, "t")
        y1 = Polynomial.variable(lifted, "y1")
        y2 = Polynomial.variable(lifted, "y2")
        subst = {f"x{k + 1}": th[k] * t + b[k] * y1 + cross[k] * y2 for k in range(3)}
        dot = th[0] * b[0] + th[1] * b[1] + th[2] * b[2]
        eqs = [_sphere_equality(lifted, theta), _sphere_equality(lifted, bs), dot]
        return Frame(mode, n, lifted, subst, eqs, theta, "t", ys, b_vars=bs)

    if mode in (FrameMode.FIXED, FrameMode.TRANSLATION):
        th0 = np.zeros(n)
        th0[0] = 1.0
        if theta0 is not None:
            th0 = np.asarray(theta0, dtype=float)
            if th0.shape != (n,):
                raise GeometryError(f"direction must have {n} components")
            nrm = np.linalg.norm(th0)
            if nrm == 0:
                raise GeometryError("direction must be nonzero")
            th0 = th0 / nrm
        if z0 is not None:
            z = np.asarray(z0, dtype=float)
        else:
            z = _orthonormal_completion(th0)
        frame_mat = np.column_stack([th0, z])
        if np.max(np.abs(frame_mat.T @ frame_mat - np.eye(n))) > 1e-12:
            raise GeometryError("fixed frame [theta0, Z0] is not orthogonal to 1e-12")
        ys = tuple(f"y{j + 1}" for j in range(n - 1))
        lifted = VarSpace(("t",) + ys)
        t = Polynomial.variable(lifted, "t")
        yp = [Polynomial.variable(lifted, v) for v in ys]
        subst = {}
        for k in range(n):
            p = t * float(th0[k])
            for j in range(n - 1):
                p = p + yp[j] * float(z[k, j])
            subst[f"x{k + 1}"] = p
        return Frame(mode, n, lifted, subst, [], (), "t", ys, theta0=th0, z0=z)

    raise GeometryError(f"unsupported frame mode {mode}; free rotation only exists for n in {{2, 3, 4, 8}}")


def _orthonormal_completion(theta: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the hyperplane orthogonal to theta."""
    n = len(theta)
    basis = np.eye(n)
    cols = [theta]
    for e in basis:
        v = e.copy()
        for c in cols:
            v -= np.dot(v, c) * c
        nrm = np.linalg.norm(v)
        if nrm > 1e-8:
            cols.append(v / nrm)
        if len(cols) == n:
            break
    return np.column_stack(cols[1:])


# -- lifted support sets ----------------------------------------------------


@dataclass
class LiftedSet:
    """Support sets of the lifted program.

    psi: frame box constraints (t and y ranges); psi_L adds the composed set
    inequalities; faces[i] is psi_L with composed inequality i turned into
    an equality.
    """

    frame: Frame
    psi: list[Polynomial]
    composed: list[Polynomial]
    equalities: list[Polynomial]
    radius: float
    translate: bool

    @property
    def psi_L(self) -> list[Polynomial]:
        return self.psi + self.composed

    def face(self, i: int):
        """(equality, inequalities) describing face i of the lifted set."""
        ineqs = self.psi + self.composed[:i] + self.composed[i + 1 :]
        return self.composed[i], ineqs


def lift_set(
    L: SemialgebraicSet,
    frame: Frame,
    quotient: bool = True,
    translate: bool = True,
) -> LiftedSet:
    """Compose the set description through the frame substitution.

    With translate=False the offset t is pinned to zero: composed data get
    t substituted away and the t-range constraint is dropped (the caller is
    expected to mask t out of every monomial basis as well).
    """
    if L.ambient_dim != frame.ambient_dim:
        raise GeometryError(
            f"set dimension {L.ambient_dim} does not match frame dimension {frame.ambient_dim}"
        )
    R = L.radius
    lifted = frame.lifted
    rules = frame.quotient_rules() if quotient else RuleSet()

    subst = dict(frame.substitution)
    if not translate:
        zero = Polynomial.constant(lifted, 0.0)
        subst = {k: _substitute_var(v, frame.t_var, zero) for k, v in subst.items()}

    def post(p: Polynomial) -> Polynomial:
        return reduce(p, rules) if quotient else p

    psi = []
    if translate:
        t = Polynomial.variable(lifted, frame.t_var)
        psi.append(Polynomial.constant(lifted, R * R) - t * t)
    ysq = Polynomial(lifted)
    for v in frame.y_vars:
        ysq = ysq + Polynomial.variable(lifted, v) ** 2
    psi.append(Polynomial.constant(lifted, R * R) - ysq)

    composed = [post(compose(g, subst)) for g in L.inequalities]
    eqs = [post(h) for h in frame.residual_equalities(quotient)]
    return LiftedSet(frame, psi, composed, eqs, R, translate)


def _substitute_var(p: Polynomial, var: str, image: Polynomial) -> Polynomial:
    subst = {n: Polynomial.variable(p.space, n) for n in p.space.names}
    subst[var] = image
    return compose(p, subst)


# -- y-integration -----------------------------------------------------------


def integrate_y(w: Polynomial, table: BallMomentTable, y_vars: tuple[str, ...]) -> Polynomial:
    """Integrate the y-part of every monomial over the slice ball.

    The result lives in the same space with all y exponents zeroed; odd
    y-moments vanish exactly.
    """
    space = w.space
    y_idx = [space.index(v) for v in y_vars]
    out: dict[tuple, float] = {}
    for m, c in w.terms.items():
        alpha = tuple(m[i] for i in y_idx)
        mom = table.moment(alpha)
        if mom == 0.0:
            continue
        m2 = list(m)
        for i in y_idx:
            m2[i] = 0
        key = tuple(m2)
        v = out.get(key, 0.0) + c * mom
        if v == 0.0:
            out.pop(key, None)
        else:
            out[key] = v
    return Polynomial(space, out)


def grad_y_composed(g: Polynomial, frame: Frame, quotient: bool = True, translate: bool = True):
    """Gradient in the slice coordinates y of the composed constraint.

    Differentiating the composed polynomial equals the chain-rule form
    Z^T grad_x g because the substitution is linear in y.
    """
    lifted_g = lift_constraint(g, frame, quotient, translate)
    return [partial(lifted_g, v) for v in frame.y_vars]


def lift_constraint(g: Polynomial, frame: Frame, quotient: bool = True, translate: bool = True) -> Polynomial:
    subst = dict(frame.substitution)
    if not translate:
        zero = Polynomial.constant(frame.lifted, 0.0)
        subst = {k: _substitute_var(v, frame.t_var, zero) for k, v in subst.items()}
    out = compose(g, subst)
    if quotient:
        out = reduce(out, frame.quotient_rules())
    return out
