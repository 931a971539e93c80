import math

import numpy as np
import pytest
from scipy import integrate

from slicevol.geometry import (
    BallMomentTable,
    FrameMode,
    GeometryError,
    SemialgebraicSet,
    ball_moment,
    build_frame,
    grad_y_composed,
    integrate_y,
    lift_constraint,
    lift_set,
    x_space,
)
from slicevol.polyalg import Polynomial, RewriteRule, RuleSet, VarSpace, parse_polynomial, reduce


def quadrature_ball_moment(alpha, m, radius):
    """Independent oracle: radial part exact, angular part by quadrature."""
    total = m + sum(alpha)
    radial = radius**total / total
    if m == 1:
        # plain 1-D integral
        val, _ = integrate.quad(lambda y: y ** alpha[0], -radius, radius, epsabs=1e-14, epsrel=1e-13)
        return val
    if m == 2:
        ang, _ = integrate.quad(
            lambda phi: math.cos(phi) ** alpha[0] * math.sin(phi) ** alpha[1],
            0.0,
            2 * math.pi,
            epsabs=1e-14,
            epsrel=1e-13,
            limit=200,
        )
        return radial * ang
    if m == 3:
        # spherical coordinates: x = sin(th)cos(ph), y = sin(th)sin(ph), z = cos(th)
        def inner(th):
            val, _ = integrate.quad(
                lambda ph: (math.sin(th) * math.cos(ph)) ** alpha[0]
                * (math.sin(th) * math.sin(ph)) ** alpha[1]
                * math.cos(th) ** alpha[2]
                * math.sin(th),
                0.0,
                2 * math.pi,
                epsabs=1e-14,
                epsrel=1e-13,
                limit=200,
            )
            return val

        ang, _ = integrate.quad(inner, 0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=200)
        return radial * ang
    raise NotImplementedError


def multi_indices(m, max_degree):
    if m == 0:
        yield ()
        return
    for head in range(max_degree + 1):
        for tail in multi_indices(m - 1, max_degree - head):
            yield (head,) + tail


class TestBallMoments:
    def test_unit_disc_area(self):
        assert math.isclose(ball_moment((0, 0), 2, 1.0), math.pi, rel_tol=1e-14)

    def test_odd_moment_exact_zero(self):
        assert ball_moment((1,), 1, 1.0) == 0.0
        assert ball_moment((3, 2), 2, 1.0) == 0.0

    def test_interval_second_moment(self):
        # frozen from the 1-D quadrature of y^2 over [-1, 1]
        assert math.isclose(ball_moment((2,), 1, 1.0), 2.0 / 3.0, rel_tol=1e-14)

    def test_degenerate_dimension(self):
        with pytest.raises(GeometryError):
            ball_moment((), 0, 1.0)

    @pytest.mark.parametrize("m", [1, 2, 3])
    @pytest.mark.parametrize("radius", [0.5, 1.0, 2.0])
    def test_against_quadrature(self, m, radius):
        for alpha in multi_indices(m, 8):
            got = ball_moment(alpha, m, radius)
            want = quadrature_ball_moment(alpha, m, radius)
            if want == 0.0 or abs(want) < 1e-13:
                assert abs(got) <= 1e-10
            else:
                assert abs(got - want) <= 1e-10 * abs(want), (alpha, m, radius)

    def test_radius_scaling(self):
        for alpha in [(0, 0), (2, 0), (4, 2)]:
            base = ball_moment(alpha, 2, 1.0)
            for radius in (0.5, 2.0):
                exact = radius ** (2 + sum(alpha)) * base
                assert math.isclose(ball_moment(alpha, 2, radius), exact, rel_tol=1e-14)

    def test_table_memoizes_and_matches(self):
        table = BallMomentTable(2, 1.5)
        table.warm_up(6)
        for alpha in multi_indices(2, 6):
            assert table.moment(alpha) == ball_moment(alpha, 2, 1.5)
        assert table.volume() == ball_moment((0, 0), 2, 1.5)


def norm2_poly(space):
    p = Polynomial(space)
    for name in space.names:
        p = p + Polynomial.variable(space, name) ** 2
    return p


class TestFrames:
    def test_division2_substitution(self):
        f = build_frame(2, FrameMode.DIVISION2)
        lifted = f.lifted
        want1 = parse_polynomial("theta1*t - theta2*y1", lifted)
        want2 = parse_polynomial("theta2*t + theta1*y1", lifted)
        assert f.substitution["x1"] == want1
        assert f.substitution["x2"] == want2

    @pytest.mark.parametrize("n,mode", [(2, FrameMode.DIVISION2), (4, FrameMode.DIVISION4), (8, FrameMode.DIVISION8)])
    def test_division_orthonormality_symbolic(self, n, mode):
        f = build_frame(n, mode)
        comp = lift_constraint(norm2_poly(x_space(n)), f, quotient=True)
        want = Polynomial.variable(f.lifted, "t") ** 2
        for yv in f.y_vars:
            want = want + Polynomial.variable(f.lifted, yv) ** 2
        assert (comp - want).max_abs_coeff() < 1e-12

    def test_cross3_columns_orthonormal_modulo_ideal(self):
        f = build_frame(3, FrameMode.CROSS3)
        sp = f.lifted
        th = [Polynomial.variable(sp, f"theta{i+1}") for i in range(3)]
        b = [Polynomial.variable(sp, f"b{i+1}") for i in range(3)]
        cross = [
            th[1] * b[2] - th[2] * b[1],
            th[2] * b[0] - th[0] * b[2],
            th[0] * b[1] - th[1] * b[0],
        ]
        lhs = [0] * sp.dim
        lhs[sp.index("theta3")] = 1
        lhs[sp.index("b3")] = 1
        dot_rule = RewriteRule(tuple(lhs), -(th[0] * b[0] + th[1] * b[1]))
        rules = RuleSet(list(f.quotient_rules()) + [dot_rule])
        cols = [th, b, cross]
        zero = Polynomial(sp)

        theta_sq = sum((v * v for v in th), zero) - 1.0
        b_sq = sum((v * v for v in b), zero) - 1.0
        theta_dot_b = sum((th[k] * b[k] for k in range(3)), zero)

        for i in range(3):
            for j in range(i, 3):
                dot = sum((cols[i][k] * cols[j][k] for k in range(3)), zero)
                target = dot - (1.0 if i == j else 0.0)
                if i == 2 and j == 2:
                    # |theta x b|^2 - 1 lies in the ideal with explicit cofactors
                    # (Lagrange identity); the monomial rewrite set alone cannot
                    # normalize it because none of its leads divide the residual.
                    member = (theta_sq * sum((v * v for v in b), zero)) + b_sq - theta_dot_b * theta_dot_b
                    assert (target - member).max_abs_coeff() < 1e-12
                else:
                    assert reduce(target, rules).max_abs_coeff() < 1e-12, (i, j)

    def test_translation_frame_identity(self):
        f = build_frame(3, FrameMode.TRANSLATION)
        lifted = f.lifted
        assert f.substitution["x1"] == parse_polynomial("t", lifted)
        assert f.substitution["x2"] == parse_polynomial("y1", lifted)
        assert f.substitution["x3"] == parse_polynomial("y2", lifted)

    def test_fixed_frame_orthogonal(self):
        f = build_frame(3, FrameMode.FIXED, theta0=[0.6, 0.8, 0.0])
        mat = np.column_stack([f.theta0, f.z0])
        assert np.max(np.abs(mat.T @ mat - np.eye(3))) < 1e-12

    def test_unsupported_dimension(self):
        with pytest.raises(GeometryError, match="requires ambient dimension"):
            build_frame(5, FrameMode.DIVISION4)
        with pytest.raises(GeometryError):
            build_frame(5, FrameMode.CROSS3)


def rectangle(radius=1.0, dx=0.5, dy=0.7):
    sp = x_space(2)
    ineqs = [
        parse_polynomial(f"x1 + {dx}", sp),
        parse_polynomial(f"{dx} - x1", sp),
        parse_polynomial(f"x2 + {dy}", sp),
        parse_polynomial(f"{dy} - x2", sp),
    ]
    return SemialgebraicSet(sp, ineqs, radius)


class TestLiftSet:
    def test_ball_auto_appended(self):
        L = rectangle()
        assert len(L.inequalities) == 5
        ball = L.ball_constraint()
        assert any(g == ball for g in L.inequalities)
        # explicit ball is not appended twice
        L2 = SemialgebraicSet(L.space, list(L.inequalities), 1.0)
        assert len(L2.inequalities) == 5

    def test_unit_disc_lift(self):
        sp = x_space(2)
        L = SemialgebraicSet(sp, [], 1.0)
        f = build_frame(2, FrameMode.DIVISION2)
        lifted = lift_set(L, f)
        # composed ball reduces to 1 - t^2 - y^2 modulo |theta| = 1
        want = parse_polynomial("1 - t^2 - y1^2", f.lifted)
        assert any((g - want).max_abs_coeff() < 1e-12 for g in lifted.composed)

    def test_rectangle_lift_spot_values(self):
        L = rectangle()
        f = build_frame(2, FrameMode.DIVISION2)
        lifted = lift_set(L, f)
        want = parse_polynomial("theta1*t - theta2*y1 + 0.5", f.lifted)
        assert any((g - want).max_abs_coeff() < 1e-12 for g in lifted.composed)
        rng = np.random.default_rng(0)
        for _ in range(20):
            ang = rng.uniform(0, 2 * np.pi)
            th = np.array([np.cos(ang), np.sin(ang)])
            t, y = rng.uniform(-1, 1, size=2)
            x = th * t + np.array([-th[1], th[0]]) * y
            for g, gx in zip(L.inequalities, lifted.composed):
                lifted_pt = np.array([th[0], th[1], t, y])
                assert math.isclose(g.evaluate(x), gx.evaluate(lifted_pt), rel_tol=1e-9, abs_tol=1e-9)

    def test_faces_swap_one_constraint(self):
        L = rectangle()
        f = build_frame(2, FrameMode.DIVISION2)
        lifted = lift_set(L, f)
        eq, ineqs = lifted.face(0)
        assert eq == lifted.composed[0]
        assert lifted.composed[0] not in ineqs
        assert len(ineqs) == len(lifted.psi) + len(lifted.composed) - 1

    def test_dimension_mismatch(self):
        with pytest.raises(GeometryError):
            lift_set(rectangle(), build_frame(3, FrameMode.CROSS3))

    def test_translate_off_drops_t(self):
        L = rectangle()
        f = build_frame(2, FrameMode.DIVISION2)
        lifted = lift_set(L, f, translate=False)
        t_idx = f.lifted.index("t")
        for g in lifted.psi + lifted.composed:
            assert all(m[t_idx] == 0 for m in g.terms)
        assert len(lifted.psi) == 1  # only the y-ball remains


class TestIntegrateY:
    def table(self):
        return BallMomentTable(1, 1.0)

    def test_constant(self):
        f = build_frame(2, FrameMode.DIVISION2)
        w = Polynomial.constant(f.lifted, 1.0)
        out = integrate_y(w, self.table(), f.y_vars)
        assert math.isclose(out.coeff((0, 0, 0, 0)), 2.0, rel_tol=1e-14)
        assert len(out.terms) == 1

    def test_odd_moment_vanishes(self):
        f = build_frame(2, FrameMode.DIVISION2)
        w = parse_polynomial("theta1*y1", f.lifted)
        assert integrate_y(w, self.table(), f.y_vars).is_zero()

    def test_quadratic(self):
        f = build_frame(2, FrameMode.DIVISION2)
        w = parse_polynomial("y1^2", f.lifted)
        out = integrate_y(w, self.table(), f.y_vars)
        assert math.isclose(out.coeff((0, 0, 0, 0)), 2.0 / 3.0, rel_tol=1e-14)

    def test_linearity_symbolic(self):
        f = build_frame(2, FrameMode.DIVISION2)
        w1 = parse_polynomial("y1^2 + theta1*t", f.lifted)
        w2 = parse_polynomial("t^2*y1^2 - y1^4", f.lifted)
        table = self.table()
        lhs = integrate_y(w1 * 2.0 + w2 * -3.5, table, f.y_vars)
        rhs = integrate_y(w1, table, f.y_vars) * 2.0 + integrate_y(w2, table, f.y_vars) * -3.5
        assert (lhs - rhs).max_abs_coeff() < 1e-14


class TestGradY:
    def test_ball_gradient_is_minus_2y(self):
        sp = x_space(2)
        ball = parse_polynomial("1 - x1^2 - x2^2", sp)
        f = build_frame(2, FrameMode.DIVISION2)
        grads = grad_y_composed(ball, f)
        assert len(grads) == 1
        assert grads[0] == parse_polynomial("-2*y1", f.lifted)

    def test_linear(self):
        sp = x_space(2)
        f = build_frame(2, FrameMode.DIVISION2)
        grads = grad_y_composed(parse_polynomial("x1", sp), f)
        assert grads[0] == parse_polynomial("-theta2", f.lifted)

    def test_constant(self):
        sp = x_space(2)
        f = build_frame(2, FrameMode.DIVISION2)
        assert all(g.is_zero() for g in grad_y_composed(Polynomial.constant(sp, 3.0), f))

    def test_matches_finite_differences(self):
        sp = x_space(2)
        g = parse_polynomial("1 - x1^2 - 2*x2^4 + x1*x2", sp)
        f = build_frame(2, FrameMode.DIVISION2)
        grads = grad_y_composed(g, f, quotient=False)
        comp = lift_constraint(g, f, quotient=False)
        rng = np.random.default_rng(11)
        h = 1e-6
        for _ in range(50):
            ang = rng.uniform(0, 2 * np.pi)
            pt = np.array([np.cos(ang), np.sin(ang), rng.uniform(-1, 1), rng.uniform(-1, 1)])
            up, dn = pt.copy(), pt.copy()
            up[3] += h
            dn[3] -= h
            fd = (comp.evaluate(up) - comp.evaluate(dn)) / (2 * h)
            assert math.isclose(grads[0].evaluate(pt), fd, rel_tol=1e-6, abs_tol=1e-6)
