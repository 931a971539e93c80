"""Sparse multivariate polynomial arithmetic over a fixed variable space.

Coefficients are plain floats: everything downstream feeds an inexact
semidefinite solver, so exact rationals buy nothing.  Monomials are exponent
tuples; canonical order is graded lexicographic (total degree first, then
lexicographic in the variable order of the owning space).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

Mono = tuple  # exponent tuple, one entry per variable of the space


class PolyError(ValueError):
    """Structural misuse: mismatched spaces, unknown variables, bad rules."""


@dataclass(frozen=True)
class VarSpace:
    """Ordered, immutable collection of variable names.

    The ordering is load-bearing: graded-lex tie-breaking, rewrite rules and
    basis enumeration all assume it never changes.
    """

    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise PolyError(f"duplicate variable names in {self.names}")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise PolyError(f"unknown variable {name!r}; space has {self.names}") from None

    def unit(self, name: str):
        e = [0] * self.dim
        e[self.index(name)] = 1
        return tuple(e)

    def __repr__(self):
        return f"VarSpace({', '.join(self.names)})"


def _grlex_key(mono):
    return (sum(mono), mono)


class Polynomial:
    """Sparse polynomial: map from exponent tuple to nonzero float coefficient."""

    __slots__ = ("space", "terms")

    def __init__(self, space: VarSpace, terms: Mapping[tuple, float] | None = None):
        self.space = space
        self.terms: dict[tuple, float] = {}
        if terms:
            for m, c in terms.items():
                if len(m) != space.dim:
                    raise PolyError(f"monomial {m} has wrong length for {space}")
                if c != 0.0:
                    self.terms[tuple(m)] = self.terms.get(tuple(m), 0.0) + float(c)
            self.terms = {m: c for m, c in self.terms.items() if c != 0.0}

    # -- constructors --------------------------------------------------

    @classmethod
    def zero(cls, space):
        return cls(space)

    @classmethod
    def constant(cls, space, value: float):
        if value == 0.0:
            return cls(space)
        return cls(space, {(0,) * space.dim: float(value)})

    @classmethod
    def variable(cls, space, name: str):
        return cls(space, {space.unit(name): 1.0})

    @classmethod
    def monomial(cls, space, mono, coeff: float = 1.0):
        return cls(space, {tuple(mono): coeff})

    # -- inspection ----------------------------------------------------

    def degree(self) -> int:
        """Max total degree; -1 for the zero polynomial."""
        return max((sum(m) for m in self.terms), default=-1)

    def is_zero(self, tol: float = 0.0) -> bool:
        if tol <= 0.0:
            return not self.terms
        return all(abs(c) <= tol for c in self.terms.values())

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda mc: _grlex_key(mc[0]))

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def coeff(self, mono) -> float:
        return self.terms.get(tuple(mono), 0.0)

    def prune(self, eps: float) -> "Polynomial":
        """Drop coefficients below eps in absolute value (assembly-time only)."""
        return Polynomial(self.space, {m: c for m, c in self.terms.items() if abs(c) > eps})

    # -- arithmetic ----------------------------------------------------

    def _check(self, other: "Polynomial"):
        if other.space is not self.space and other.space.names != self.space.names:
            raise PolyError(f"operands live in different spaces: {self.space} vs {other.space}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.space, other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m, 0.0) + c
            if v == 0.0:
                out.pop(m, None)
            else:
                out[m] = v
        return Polynomial(self.space, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.space, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            if other == 0:
                return Polynomial(self.space)
            return Polynomial(self.space, {m: c * other for m, c in self.terms.items()})
        self._check(other)
        out: dict[tuple, float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                v = out.get(m, 0.0) + c1 * c2
                if v == 0.0:
                    out.pop(m, None)
                else:
                    out[m] = v
        return Polynomial(self.space, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise PolyError("negative power")
        out = Polynomial.constant(self.space, 1.0)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.space.names == other.space.names and self.terms == other.terms

    def __hash__(self):
        return hash((self.space.names, tuple(self.sorted_terms())))

    # -- evaluation ----------------------------------------------------

    def evaluate(self, point) -> float:
        """Evaluate at a point given as a sequence aligned with the space."""
        pt = np.asarray(point, dtype=float)
        total = 0.0
        for m, c in self.terms.items():
            v = c
            for i, e in enumerate(m):
                if e:
                    v *= pt[i] ** e
            total += v
        return total

    def evaluate_many(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized evaluation over an (N, dim) array of points."""
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[0])
        for m, c in self.terms.items():
            v = np.full(pts.shape[0], c)
            for i, e in enumerate(m):
                if e:
                    v = v * pts[:, i] ** e
            out += v
        return out

    def __repr__(self):
        return f"Polynomial({format_polynomial(self)})"


# -- spec-level operations ----------------------------------------------


def add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def compose(p: Polynomial, subst: Mapping[str, Polynomial]) -> Polynomial:
    """Substitute every variable of p by its image polynomial.

    All images must share one target space; every variable of p needs an
    entry (constants may be encoded as constant polynomials).
    """
    missing = [n for n in p.space.names if n not in subst]
    if missing:
        raise PolyError(f"compose: no substitution for {missing}")
    images = [subst[n] for n in p.space.names]
    target = images[0].space
    for im in images[1:]:
        if im.space.names != target.names:
            raise PolyError("compose: images live in different target spaces")
    # power tables, built lazily up to the needed degree
    powers: list[dict[int, Polynomial]] = [dict() for _ in images]

    def img_pow(i: int, e: int) -> Polynomial:
        tab = powers[i]
        if e not in tab:
            tab[e] = images[i] ** e
        return tab[e]

    out = Polynomial(target)
    for m, c in p.terms.items():
        term = Polynomial.constant(target, c)
        for i, e in enumerate(m):
            if e:
                term = term * img_pow(i, e)
        out = out + term
    return out


def partial(p: Polynomial, var: str) -> Polynomial:
    """Formal partial derivative with respect to a space variable."""
    i = p.space.index(var)
    out: dict[tuple, float] = {}
    for m, c in p.terms.items():
        if m[i] == 0:
            continue
        dm = list(m)
        dm[i] -= 1
        out[tuple(dm)] = out.get(tuple(dm), 0.0) + c * m[i]
    return Polynomial(p.space, out)


def parity_class(mono, generators: Sequence[Sequence[int]]) -> tuple[int, ...]:
    """Sign of the monomial under each sign-flip generator (+1 even, -1 odd)."""
    out = []
    for g in generators:
        s = sum(e for e, gi in zip(mono, g) if gi < 0)
        out.append(-1 if s % 2 else 1)
    return tuple(out)


@dataclass(frozen=True)
class RewriteRule:
    """Monomial rewrite lhs -> rhs with deg(rhs) <= deg(lhs).

    The lhs monomial must never reappear in the rhs, which (together with
    the degree bound) makes repeated application terminate.
    """

    lhs: tuple
    rhs: Polynomial

    def __post_init__(self):
        if self.rhs.degree() > sum(self.lhs):
            raise PolyError("rewrite rule increases degree")
        for m in self.rhs.terms:
            if all(a >= b for a, b in zip(m, self.lhs)):
                raise PolyError("rewrite rule lhs divides a rhs monomial; not terminating")


class RuleSet:
    """Ordered rewrite rules with a shared normal-form cache.

    Rules are tried in list order on the leftmost (graded-lex smallest)
    divisible monomial.  Confluence is not checked; the rule sets shipped
    here are confluent by construction.
    """

    _MAX_STEPS = 100_000

    def __init__(self, rules: Iterable[RewriteRule] = ()):
        self.rules: tuple[RewriteRule, ...] = tuple(rules)
        self._nf_cache: dict[tuple, dict[tuple, float]] = {}
        self._in_progress: set[tuple] = set()

    def __len__(self):
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def _first_divisor(self, mono):
        for r in self.rules:
            if all(a >= b for a, b in zip(mono, r.lhs)):
                return r
        return None

    def normal_form(self, mono) -> dict[tuple, float]:
        cached = self._nf_cache.get(mono)
        if cached is not None:
            return cached
        rule = self._first_divisor(mono)
        if rule is None:
            out = {mono: 1.0}
        else:
            if mono in self._in_progress:
                raise PolyError(f"rewrite cycle at monomial {mono}; rule set not terminating")
            self._in_progress.add(mono)
            try:
                quot = tuple(a - b for a, b in zip(mono, rule.lhs))
                deg = sum(mono)
                out = {}
                for m2, c2 in rule.rhs.terms.items():
                    m = tuple(a + b for a, b in zip(quot, m2))
                    if sum(m) > deg:
                        raise PolyError("rewrite increased degree; rule set not terminating")
                    for m3, c3 in self.normal_form(m).items():
                        v = out.get(m3, 0.0) + c2 * c3
                        if v == 0.0:
                            out.pop(m3, None)
                        else:
                            out[m3] = v
            finally:
                self._in_progress.discard(mono)
        self._nf_cache[mono] = out
        return out

    def reduces(self, mono) -> bool:
        return self._first_divisor(mono) is not None


def reduce(p: Polynomial, rules: RuleSet | Sequence[RewriteRule]) -> Polynomial:
    """Fixpoint of rewriting: no rule lhs divides any surviving monomial."""
    rs = rules if isinstance(rules, RuleSet) else RuleSet(rules)
    if not len(rs):
        return p
    out: dict[tuple, float] = {}
    for m, c in p.terms.items():
        for m2, c2 in rs.normal_form(m).items():
            v = out.get(m2, 0.0) + c * c2
            if v == 0.0:
                out.pop(m2, None)
            else:
                out[m2] = v
    return Polynomial(p.space, out)


# -- text grammar ---------------------------------------------------------
#
#   expr   := [sign] term (sign term)*
#   term   := factor ('*' factor)*
#   factor := NUMBER | NAME ['^' INT]
#   sign   := '+' | '-'
#
# Whitespace-insensitive.  NUMBER accepts decimals and exponent notation.

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[\^*+-]))"
)


class PolyParseError(PolyError):
    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise PolyParseError(f"unexpected character {text[pos]!r}", pos + 1)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    return toks


def parse_polynomial(text: str, space: VarSpace) -> Polynomial:
    """Parse the documented text grammar into a polynomial over `space`."""
    toks = _tokenize(text)
    if not toks:
        raise PolyParseError("empty polynomial", 1)
    out = Polynomial(space)
    i = 0
    n = len(toks)
    while i < n:
        sign = 1.0
        while i < n and toks[i][0] == "op" and toks[i][1] in "+-":
            if toks[i][1] == "-":
                sign = -sign
            i += 1
        if i >= n:
            raise PolyParseError("dangling sign", toks[-1][2])
        term = Polynomial.constant(space, sign)
        expect_factor = True
        while i < n:
            kind, val, col = toks[i]
            if expect_factor:
                if kind == "num":
                    term = term * float(val)
                elif kind == "name":
                    if val not in space.names:
                        raise PolyParseError(f"unknown variable {val!r}", col)
                    exp = 1
                    if i + 1 < n and toks[i + 1][:2] == ("op", "^"):
                        if i + 2 >= n or toks[i + 2][0] != "num":
                            raise PolyParseError("exponent expected after '^'", col)
                        exp_text = toks[i + 2][1]
                        if not exp_text.isdigit():
                            raise PolyParseError("integer exponent expected", toks[i + 2][2])
                        exp = int(exp_text)
                        i += 2
                    term = term * (Polynomial.variable(space, val) ** exp)
                else:
                    raise PolyParseError(f"expected a factor, got {val!r}", col)
                expect_factor = False
                i += 1
            elif kind == "op" and val == "*":
                expect_factor = True
                i += 1
            else:
                break
        if expect_factor:
            raise PolyParseError("dangling '*'", toks[min(i, n - 1)][2])
        out = out + term
    return out


def format_polynomial(p: Polynomial, precision: int = 12) -> str:
    """Render in the same grammar parse_polynomial accepts."""
    if not p.terms:
        return "0"
    parts = []
    for m, c in p.sorted_terms():
        factors = []
        for name, e in zip(p.space.names, m):
            if e == 1:
                factors.append(name)
            elif e > 1:
                factors.append(f"{name}^{e}")
        coeff = f"{c:.{precision}g}"
        if factors and coeff == "1":
            body = "*".join(factors)
        elif factors and coeff == "-1":
            body = "-" + "*".join(factors)
        else:
            body = "*".join([coeff] + factors)
        parts.append(body)
    text = parts[0]
    for part in parts[1:]:
        text += " - " + part[1:] if part.startswith("-") else " + " + part
    return text
