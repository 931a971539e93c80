"""Slice-volume bounding programs: indicator, Stokes, Radon variants.

Each builder compiles one optimization program into a standard-form SDP:

  indicator     min gamma:  gamma >= integral_y(w) on the direction set,
                w >= 1 on the lifted body, w >= 0 on the lifted box.
  stokes        same, with w >= 1 relaxed by a divergence term div_y(u) and
                per-face constraints -u . grad_y(g_i) >= 0 tied to it.
  radon-max     min gamma:  gamma >= integral_y(w), w >= f on the lifted box
                (f a polynomial payload instead of the body indicator).
  radon-approx  min of the full (theta, t, y) integral of w subject to
                w >= 1 on the lifted body and w >= 0 on the lifted box
                (outer approximation of the slice-volume profile; n = 2).

The solved dual attaches a moment sequence to the direction set, from which
maximizer candidates (theta, t) are read off when the moment matrix is
nearly rank one.
"""

from __future__ import annotations

import enum
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    BallMomentTable,
    Frame,
    FrameMode,
    SemialgebraicSet,
    integrate_y,
    lift_constraint,
    lift_set,
)
from .polyalg import Polynomial, RuleSet, partial
from .polyalg import reduce as poly_reduce
from .sdpsolve import CandidateMeta, SdpSolution, extract_candidate, solve
from .sos import (
    LinearTarget,
    ProgramBuilder,
    SdpProblem,
    SymmetryGroup,
    WsosConstraint,
    monomial_basis,
)


class ProgramError(ValueError):
    pass


class Variant(enum.Enum):
    INDICATOR = "indicator"
    STOKES = "stokes"
    RADON_MAX = "radon-max"
    RADON_APPROX = "radon-approx"


@dataclass
class ProgramSpec:
    """Everything needed to build one bounding program at one degree."""

    body: SemialgebraicSet
    frame_mode: FrameMode
    half_degree: int
    variant: Variant = Variant.INDICATOR
    translate: bool = True
    symmetry: bool = True
    quotient: bool = True
    radon_payload: Polynomial | None = None
    theta0: tuple | None = None
    u_degree: int | None = None  # None -> 2k - 2; -1 forces u == 0

    def describe(self) -> str:
        return (
            f"{self.frame_mode.value}/{self.variant.value} k={self.half_degree}"
            f" translate={'on' if self.translate else 'off'}"
        )


@dataclass
class SliceBound:
    k: int
    variant: Variant
    bound: float
    duality_gap: float
    status: str
    candidates: list = field(default_factory=list)
    candidate_note: str = ""
    wall_ms: float = 0.0
    report: dict = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.status == "Optimal"


@dataclass
class BuiltProgram:
    spec: ProgramSpec
    frame: Frame
    problem: SdpProblem
    rules: RuleSet
    group: SymmetryGroup
    w_basis: list
    w_ids: list
    gamma_id: int | None
    u_ids: list
    moments: BallMomentTable
    mask: tuple
    envelope_volume: float

    def w_polynomial(self, sol: SdpSolution) -> Polynomial:
        space = self.frame.lifted
        terms = {}
        for mono, sid in zip(self.w_basis, self.w_ids):
            v = self.problem.scalar_value(sol, sid)
            if v:
                terms[mono] = v
        return Polynomial(space, terms)

    def q_polynomial(self, sol: SdpSolution) -> Polynomial:
        """q(theta, t) = integral over the slice ball of the solved w."""
        return integrate_y(self.w_polynomial(sol), self.moments, self.frame.y_vars)

    def candidate_meta(self) -> CandidateMeta | None:
        frame, spec = self.frame, self.spec
        z_names = list(frame.theta_vars)
        if spec.translate:
            z_names.append(frame.t_var)
        if not z_names:
            return None
        space = frame.lifted
        one = Polynomial.constant(space, 1.0)
        mass = self.problem.moment_combo("omega", poly_reduce(one, self.rules))
        if not mass:
            return None
        dim = len(z_names)
        pair = [[None] * dim for _ in range(dim)]
        for a in range(dim):
            for b in range(dim):
                prod = Polynomial.variable(space, z_names[a]) * Polynomial.variable(space, z_names[b])
                pair[a][b] = self.problem.moment_combo("omega", poly_reduce(prod, self.rules))
        first = None
        if not self.group.generators:
            first = [
                self.problem.moment_combo("omega", Polynomial.variable(space, nm)) for nm in z_names
            ]
        return CandidateMeta(
            pair_combos=pair,
            first_combos=first,
            mass_combo=mass,
            n_theta=len(frame.theta_vars),
            has_t=spec.translate,
        )


# -- program construction -----------------------------------------------------


def build_program(spec: ProgramSpec) -> BuiltProgram:
    if spec.half_degree < 1:
        raise ProgramError("half degree must be at least 1")
    body = spec.body
    n = body.ambient_dim
    frame = _frame_for(spec, n)
    lifted = lift_set(body, frame, quotient=spec.quotient, translate=spec.translate)
    space = frame.lifted
    rules = frame.quotient_rules() if spec.quotient else RuleSet()
    R = body.radius
    two_k = 2 * spec.half_degree

    mask = tuple(v for v in space.names if spec.translate or v != frame.t_var)
    mask_omega = tuple(v for v in mask if v not in frame.y_vars)

    data = list(lifted.psi) + list(lifted.composed) + list(lifted.equalities)
    payload = None
    if spec.variant is Variant.RADON_MAX:
        if spec.radon_payload is None:
            raise ProgramError("radon-max needs a polynomial payload")
        payload = lift_constraint(spec.radon_payload, frame, spec.quotient, spec.translate)
        if payload.degree() > two_k:
            raise ProgramError(
                f"payload composes to degree {payload.degree()} > 2k = {two_k}; "
                f"raise k to at least {(payload.degree() + 1) // 2}"
            )
        data.append(payload)
    if spec.variant is Variant.RADON_APPROX:
        if frame.mode is not FrameMode.DIVISION2 or not spec.translate:
            raise ProgramError("the slice-profile approximation is built for rotating frames in dimension 2")

    group = SymmetryGroup.discover(space, data) if spec.symmetry else SymmetryGroup.trivial(space)
    builder = ProgramBuilder(space, rules, group)

    moments = BallMomentTable(n - 1, R)
    moments.warm_up(two_k)

    parity = group.identity_class if group.generators else None
    w_basis = monomial_basis(space, two_k, rules, parity=parity, group=group, mask=mask)
    w_ids = [builder.new_scalar(f"w.{m}") for m in w_basis]

    gamma_id = None
    if spec.variant in (Variant.INDICATOR, Variant.STOKES, Variant.RADON_MAX):
        gamma_id = builder.new_scalar("gamma", objective_coeff=1.0)

    # integral of w over the slice ball, as an affine function of the w scalars
    lam_terms = []
    for mono, sid in zip(w_basis, w_ids):
        lam = integrate_y(Polynomial.monomial(space, mono), moments, frame.y_vars)
        if not lam.is_zero():
            lam_terms.append((sid, lam))

    u_ids: list = []
    psiL_target_terms = [(sid, Polynomial.monomial(space, m)) for m, sid in zip(w_basis, w_ids)]
    face_targets: list[LinearTarget] = []

    if spec.variant is Variant.STOKES:
        u_deg = spec.u_degree if spec.u_degree is not None else _default_u_degree(spec, body, two_k)
        if u_deg < -1:
            raise ProgramError(
                f"no room for divergence test functions at k={spec.half_degree}; "
                f"raise k to at least {(max(g.degree() for g in body.inequalities) + 1 + 1) // 2}"
            )
        if spec.u_degree is not None and spec.u_degree > two_k + 1:
            raise ProgramError("divergence of u would exceed the matching degree")
        grads = {}
        for gi, comp in enumerate(lifted.composed):
            grads[gi] = [partial(comp, yv) for yv in frame.y_vars]
        face_terms: list[list] = [[] for _ in lifted.composed]
        if u_deg >= 0:
            for j, yv in enumerate(frame.y_vars):
                par_j = group.class_of(space.unit(yv)) if group.generators else None
                basis_j = monomial_basis(space, u_deg, rules, parity=par_j, group=group, mask=mask)
                for mono in basis_j:
                    sid = builder.new_scalar(f"u[{j}].{mono}")
                    u_ids.append(sid)
                    div_part = partial(Polynomial.monomial(space, mono), yv)
                    if not div_part.is_zero():
                        # w - 1 - div(u): the group average is the identity here
                        # because each u component is parity-matched to its y.
                        psiL_target_terms.append((sid, -div_part))
                    for gi in range(len(lifted.composed)):
                        prod = poly_reduce(Polynomial.monomial(space, mono) * grads[gi][j], rules)
                        if not prod.is_zero():
                            face_terms[gi].append((sid, -prod))
        for gi in range(len(lifted.composed)):
            face_targets.append(LinearTarget(Polynomial.zero(space), face_terms[gi]))

    # constraint families
    if spec.variant in (Variant.INDICATOR, Variant.STOKES, Variant.RADON_MAX):
        omega_target = LinearTarget(
            Polynomial.zero(space),
            [(gamma_id, Polynomial.constant(space, 1.0))] + [(sid, -lam) for sid, lam in lam_terms],
        )
        omega_ineqs = []
        if spec.translate:
            t = Polynomial.variable(space, frame.t_var)
            omega_ineqs.append(Polynomial.constant(space, R * R) - t * t)
        builder.add_wsos(
            WsosConstraint("omega", omega_target, omega_ineqs, list(lifted.equalities), spec.half_degree, mask_omega)
        )

    psi_const = Polynomial.zero(space) if payload is None else -payload
    builder.add_wsos(
        WsosConstraint(
            "psi",
            LinearTarget(psi_const, [(sid, Polynomial.monomial(space, m)) for m, sid in zip(w_basis, w_ids)]),
            list(lifted.psi),
            list(lifted.equalities),
            spec.half_degree,
            mask,
        )
    )

    if spec.variant in (Variant.INDICATOR, Variant.STOKES, Variant.RADON_APPROX):
        builder.add_wsos(
            WsosConstraint(
                "psiL",
                LinearTarget(Polynomial.constant(space, -1.0), psiL_target_terms),
                list(lifted.psi_L),
                list(lifted.equalities),
                spec.half_degree,
                mask,
            )
        )

    if spec.variant is Variant.STOKES:
        for gi, target in enumerate(face_targets):
            eq, ineqs = lifted.face(gi)
            builder.add_wsos(
                WsosConstraint(
                    f"face{gi}",
                    target,
                    list(ineqs),
                    list(lifted.equalities) + [eq],
                    spec.half_degree,
                    mask,
                )
            )

    if spec.variant is Variant.RADON_APPROX:
        for mono, sid in zip(w_basis, w_ids):
            coeff = _full_integral_coeff(mono, space, frame, moments, R)
            if coeff:
                builder.set_objective(sid, coeff)

    problem = builder.build()
    if problem.report["rows"] > 20_000:
        raise ProgramError(
            f"{spec.describe()} needs a {problem.report['rows']}-row Schur complement, "
            "above the 20,000-row ceiling"
        )
    envelope = moments.volume()
    return BuiltProgram(
        spec=spec,
        frame=frame,
        problem=problem,
        rules=rules,
        group=group,
        w_basis=w_basis,
        w_ids=w_ids,
        gamma_id=gamma_id,
        u_ids=u_ids,
        moments=moments,
        mask=mask,
        envelope_volume=envelope,
    )


def _frame_for(spec: ProgramSpec, n: int) -> Frame:
    from .geometry import build_frame

    return build_frame(n, spec.frame_mode, theta0=spec.theta0)


def _default_u_degree(spec: ProgramSpec, body: SemialgebraicSet, two_k: int) -> int:
    """Degree cap for the divergence test functions.

    Rotating frames take 2k - 1 (divergence stays within the matching
    degree; face products may raise only the face certificates).  Fixed
    frames keep the substitution linear, so the classical volume-style cap
    2k - max deg g applies and keeps every face product within 2k.
    """
    if spec.frame_mode in (FrameMode.FIXED, FrameMode.TRANSLATION):
        return two_k - max(g.degree() for g in body.inequalities)
    return two_k - 1


def _sphere_moment(a1: int, a2: int) -> float:
    """E[theta1^a1 theta2^a2] under the uniform probability measure on the circle."""
    if a1 % 2 or a2 % 2:
        return 0.0

    def dfac(k):
        out = 1
        while k > 1:
            out *= k
            k -= 2
        return out

    return dfac(a1 - 1) * dfac(a2 - 1) / dfac(a1 + a2)


def _full_integral_coeff(mono, space, frame: Frame, moments: BallMomentTable, R: float) -> float:
    """Integral of the monomial over direction x offset x slice-ball."""
    a1 = mono[space.index(frame.theta_vars[0])]
    a2 = mono[space.index(frame.theta_vars[1])]
    c = mono[space.index(frame.t_var)]
    alpha = tuple(mono[space.index(v)] for v in frame.y_vars)
    if c % 2:
        return 0.0
    t_int = 2.0 * R ** (c + 1) / (c + 1)
    return _sphere_moment(a1, a2) * t_int * moments.moment(alpha)


# -- solving -------------------------------------------------------------------


def solve_program(spec: ProgramSpec, tol: float = 1e-8, max_iter: int = 200):
    """Build, solve, and post-process into a SliceBound."""
    t0 = time.perf_counter()
    built = build_program(spec)
    sol = solve(built.problem.sdp, tol=tol, max_iter=max_iter)
    wall = (time.perf_counter() - t0) * 1000.0
    candidates, note = [], ""
    meta = built.candidate_meta()
    if meta is not None and spec.variant in (Variant.INDICATOR, Variant.STOKES):
        candidates, note = extract_candidate(sol, meta)
    bound = sol.primal_objective
    record = SliceBound(
        k=spec.half_degree,
        variant=spec.variant,
        bound=float(bound),
        duality_gap=float(sol.gap),
        status=sol.status,
        candidates=candidates,
        candidate_note=note,
        wall_ms=wall,
        report=dict(built.problem.report),
    )
    return record, built, sol


def degree_sweep(spec: ProgramSpec, k_range, tol: float = 1e-8, max_iter: int = 200):
    """Solve the same program across degrees; failures are recorded, not raised."""
    ks = list(k_range)
    if not ks or any(k2 < k1 for k1, k2 in zip(ks, ks[1:])):
        raise ProgramError("degree range must be nonempty and ascending")

    def run(k):
        try:
            record, _, _ = solve_program(replace(spec, half_degree=k), tol=tol, max_iter=max_iter)
            return record
        except (ProgramError, ValueError) as exc:
            return SliceBound(k=k, variant=spec.variant, bound=float("nan"), duality_gap=float("nan"), status=f"BuildError: {exc}")

    workers = int(os.environ.get("SLICEVOL_THREADS", "1") or "1")
    if workers > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, ks))
    return [run(k) for k in ks]


def q_grid(built: BuiltProgram, sol: SdpSolution, angles: int = 181, offsets: int = 101):
    """Sample q(theta, t) on an angle x offset grid for plotting.

    Rotating 2-D frames sample theta = (cos phi, sin phi) over half a turn;
    fixed frames sample the offset axis only.  Returns (header, rows).
    """
    q = built.q_polynomial(sol)
    frame = built.frame
    R = built.spec.body.radius
    ts = np.linspace(-R, R, offsets) if built.spec.translate else np.array([0.0])
    rows = []
    if frame.rotational and len(frame.theta_vars) == 2:
        phis = np.linspace(0.0, 180.0, angles)
        space = frame.lifted
        for phi in phis:
            th = np.array([math.cos(math.radians(phi)), math.sin(math.radians(phi))])
            for t in ts:
                pt = np.zeros(space.dim)
                pt[space.index(frame.theta_vars[0])] = th[0]
                pt[space.index(frame.theta_vars[1])] = th[1]
                pt[space.index(frame.t_var)] = t
                rows.append((phi, float(t), q.evaluate(pt)))
        return ("phi_deg", "t", "q"), rows
    space = frame.lifted
    for t in ts:
        pt = np.zeros(space.dim)
        pt[space.index(frame.t_var)] = t
        rows.append((0.0, float(t), q.evaluate(pt)))
    return ("phi_deg", "t", "q"), rows


# re-exported for the group-averaging operation used by the Stokes scheme
from .sos import group_average  # noqa: E402,F401
