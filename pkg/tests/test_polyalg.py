import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicevol.polyalg import (
    Polynomial,
    PolyError,
    PolyParseError,
    RewriteRule,
    RuleSet,
    VarSpace,
    add,
    compose,
    format_polynomial,
    mul,
    parity_class,
    parse_polynomial,
    partial,
    reduce,
)

SPACE = VarSpace(("x1", "x2", "x3", "x4", "x5", "x6"))
SMALL = VarSpace(("x1", "x2"))


def poly(text, space=SMALL):
    return parse_polynomial(text, space)


@st.composite
def polynomials(draw, space=SPACE, max_degree=4, max_terms=6):
    n_terms = draw(st.integers(1, max_terms))
    terms = {}
    for _ in range(n_terms):
        mono = [0] * space.dim
        budget = draw(st.integers(0, max_degree))
        for _ in range(budget):
            mono[draw(st.integers(0, space.dim - 1))] += 1
        coeff = draw(st.floats(-3, 3, allow_nan=False, allow_infinity=False))
        terms[tuple(mono)] = terms.get(tuple(mono), 0.0) + coeff
    return Polynomial(space, terms)


def rand_points(dim, count, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.5, 1.5, size=(count, dim))


class TestBasics:
    def test_add_cancellation(self):
        p = poly("x1 + 1")
        q = poly("-x1")
        assert add(p, q) == poly("1")

    def test_add_identity(self):
        p = poly("x1^2 - 2*x2")
        assert add(p, Polynomial.zero(SMALL)) == p

    def test_add_like_terms(self):
        assert add(poly("x1^2 + x2"), poly("x2")) == poly("x1^2 + 2*x2")

    def test_mul_difference_of_squares(self):
        assert mul(poly("x1 + 1"), poly("x1 - 1")) == poly("x1^2 - 1")

    def test_mul_zero(self):
        assert mul(Polynomial.zero(SMALL), poly("x1 + x2")).is_zero()

    def test_mul_square(self):
        assert poly("x1 + x2") ** 2 == poly("x1^2 + 2*x1*x2 + x2^2")

    def test_space_mismatch(self):
        with pytest.raises(PolyError):
            add(poly("x1"), parse_polynomial("x1", VarSpace(("x1", "x2", "x3"))))

    def test_no_zero_terms_stored(self):
        p = poly("x1") - poly("x1")
        assert p.terms == {}


class TestCompose:
    def test_orthogonal_frame_preserves_norm(self):
        # g = 1 - x1^2 - x2^2 under x1 -> th1*t - th2*y, x2 -> th2*t + th1*y
        lifted = VarSpace(("th1", "th2", "t", "y"))
        g = poly("1 - x1^2 - x2^2")
        sub = {
            "x1": parse_polynomial("th1*t - th2*y", lifted),
            "x2": parse_polynomial("th2*t + th1*y", lifted),
        }
        got = compose(g, sub)
        want = parse_polynomial("1", lifted) - parse_polynomial("th1^2 + th2^2", lifted) * parse_polynomial(
            "t^2 + y^2", lifted
        )
        assert (got - want).max_abs_coeff() < 1e-14

    def test_identity_substitution(self):
        p = poly("x1^2*x2 - 3*x2 + 1")
        sub = {n: Polynomial.variable(SMALL, n) for n in SMALL.names}
        assert compose(p, sub) == p

    def test_linear_case(self):
        lifted = VarSpace(("th1", "th2", "t", "y"))
        got = compose(parse_polynomial("x1", SMALL), {
            "x1": parse_polynomial("th1*t - th2*y", lifted),
            "x2": Polynomial.zero(lifted),
        })
        assert got == parse_polynomial("th1*t - th2*y", lifted)

    def test_missing_entry(self):
        with pytest.raises(PolyError, match="no substitution"):
            compose(poly("x1 + x2"), {"x1": poly("x1")})

    @given(polynomials(max_degree=3, max_terms=4), polynomials(max_degree=3, max_terms=4))
    @settings(max_examples=40, deadline=None)
    def test_ring_homomorphism(self, p, q):
        target = VarSpace(("u", "v"))
        images = {
            "x1": parse_polynomial("u + v", target),
            "x2": parse_polynomial("u*v", target),
            "x3": parse_polynomial("1 - u", target),
            "x4": parse_polynomial("v^2", target),
            "x5": parse_polynomial("2", target),
            "x6": parse_polynomial("u - 3*v", target),
        }
        lhs = compose(p * q, images)
        rhs = compose(p, images) * compose(q, images)
        scale = max(1.0, lhs.max_abs_coeff(), rhs.max_abs_coeff())
        assert (lhs - rhs).max_abs_coeff() <= 1e-9 * scale


class TestPartial:
    def test_univariate(self):
        assert partial(poly("x2^2"), "x2") == poly("2*x2")

    def test_constant_in_var(self):
        lifted = VarSpace(("th1", "t", "y"))
        assert partial(parse_polynomial("th1*t", lifted), "y").is_zero()

    def test_mixed(self):
        assert partial(poly("x1^2*x2 + x1"), "x1") == poly("2*x1*x2 + 1")

    def test_unknown_variable(self):
        with pytest.raises(PolyError):
            partial(poly("x1"), "zz")

    @given(polynomials(max_degree=4, max_terms=5), polynomials(max_degree=4, max_terms=5))
    @settings(max_examples=40, deadline=None)
    def test_product_rule(self, p, q):
        lhs = partial(p * q, "x2")
        rhs = partial(p, "x2") * q + p * partial(q, "x2")
        scale = max(1.0, lhs.max_abs_coeff(), rhs.max_abs_coeff())
        assert (lhs - rhs).max_abs_coeff() <= 1e-9 * scale


class TestEvaluationConsistency:
    @given(polynomials(), polynomials())
    @settings(max_examples=25, deadline=None)
    def test_add_mul_evaluate(self, p, q):
        pts = rand_points(SPACE.dim, 100, seed=7)
        pv, qv = p.evaluate_many(pts), q.evaluate_many(pts)
        sv = add(p, q).evaluate_many(pts)
        mv = mul(p, q).evaluate_many(pts)
        scale = 1.0 + np.abs(pv) + np.abs(qv) + np.abs(pv * qv)
        assert np.all(np.abs(sv - (pv + qv)) <= 1e-10 * scale)
        assert np.all(np.abs(mv - pv * qv) <= 1e-10 * scale)

    def test_scalar_vs_vector_evaluate(self):
        p = poly("1 - 2*x1*x2 + x2^2")
        pts = rand_points(2, 10)
        vals = p.evaluate_many(pts)
        for pt, v in zip(pts, vals):
            assert math.isclose(p.evaluate(pt), v, rel_tol=1e-12, abs_tol=1e-12)


class TestParity:
    def test_even_pair(self):
        # theta1 * t under the global flip
        assert parity_class((1, 0, 1, 0), [(-1, -1, -1, -1)]) == (1,)

    def test_odd_single(self):
        assert parity_class((1, 0, 0, 0), [(-1, -1, -1, -1)]) == (-1,)

    def test_odd_triple(self):
        assert parity_class((1, 0, 1, 1), [(-1, -1, -1, -1)]) == (-1,)

    @given(st.tuples(*[st.integers(0, 3)] * 4), st.tuples(*[st.integers(0, 3)] * 4))
    @settings(max_examples=50, deadline=None)
    def test_multiplicative(self, m1, m2):
        gens = [(-1, -1, -1, -1), (-1, 1, -1, 1)]
        prod = tuple(a + b for a, b in zip(m1, m2))
        c1, c2, cp = parity_class(m1, gens), parity_class(m2, gens), parity_class(prod, gens)
        assert cp == tuple(a * b for a, b in zip(c1, c2))


class TestReduce:
    def rules(self):
        space = VarSpace(("th1", "th2", "t"))
        lhs = (0, 2, 0)
        rhs = parse_polynomial("1 - th1^2", space)
        return space, RuleSet([RewriteRule(lhs, rhs)])

    def test_single_application(self):
        space, rules = self.rules()
        p = parse_polynomial("th2^2*t", space)
        assert reduce(p, rules) == parse_polynomial("t - th1^2*t", space)

    def test_two_applications(self):
        # th2^4 -> (1 - th1^2)^2; frozen from evaluating both sides on |theta|=1
        space, rules = self.rules()
        p = parse_polynomial("th2^4", space)
        got = reduce(p, rules)
        assert got == parse_polynomial("1 - 2*th1^2 + th1^4", space)

    def test_no_divisible_monomial(self):
        space, rules = self.rules()
        p = parse_polynomial("th1^3 + th2*t", space)
        assert reduce(p, rules) == p

    def test_preserves_values_on_variety(self):
        space, rules = self.rules()
        rng = np.random.default_rng(3)
        p = Polynomial(space, {(2, 2, 1): 1.5, (0, 4, 0): -2.0, (1, 1, 2): 0.7, (0, 0, 0): 1.0})
        q = reduce(p, rules)
        for _ in range(100):
            ang = rng.uniform(0, 2 * np.pi)
            pt = np.array([np.cos(ang), np.sin(ang), rng.uniform(-2, 2)])
            assert math.isclose(p.evaluate(pt), q.evaluate(pt), rel_tol=1e-10, abs_tol=1e-10)

    def test_cycle_detected(self):
        space = VarSpace(("a", "b"))
        r1 = RewriteRule((1, 0), Polynomial.variable(space, "b"))
        r2 = RewriteRule((0, 1), Polynomial.variable(space, "a"))
        with pytest.raises(PolyError, match="cycle|terminat"):
            reduce(parse_polynomial("a", space), RuleSet([r1, r2]))

    def test_rule_invariants(self):
        space = VarSpace(("a",))
        with pytest.raises(PolyError):
            RewriteRule((2,), parse_polynomial("a^3", space))
        with pytest.raises(PolyError):
            RewriteRule((1,), parse_polynomial("a", space))


class TestParser:
    def test_grammar_example(self):
        p = poly("1 - x1^2 - 4*x2^2")
        assert p.coeff((0, 0)) == 1.0
        assert p.coeff((2, 0)) == -1.0
        assert p.coeff((0, 2)) == -4.0

    def test_whitespace_insensitive(self):
        assert poly(" 1-x1 ^2-4 * x2^2 ") == poly("1 - x1^2 - 4*x2^2")

    def test_unknown_variable_cited(self):
        with pytest.raises(PolyParseError, match="unknown variable 'zz'"):
            poly("1 + zz")

    def test_dangling_operator(self):
        with pytest.raises(PolyParseError):
            poly("x1 + ")
        with pytest.raises(PolyParseError):
            poly("2 * ")

    def test_roundtrip_format(self):
        p = poly("3.5*x1^2*x2 - x2 + 0.25")
        assert parse_polynomial(format_polynomial(p), SMALL) == p
