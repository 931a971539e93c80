"""Compile weighted-SOS nonnegativity statements into one standard-form SDP.

A statement "target >= 0 on {g_i >= 0, h_j = 0}" becomes the identity

    target  ==  sigma_0 + sum_i sigma_i g_i + sum_j lambda_j h_j   (mod rewrite rules)

with SOS multipliers sigma (Gram matrix blocks) and free polynomial
multipliers lambda for equalities, matched monomial by monomial.  Sign
symmetries block-diagonalize every Gram matrix by parity class; quotient
rewrite rules shrink the monomial bases.  Free scalars (bound variable,
polynomial template coefficients, lambda coefficients) are split into
differences of nonnegatives inside one diagonal block so the result is a
pure conic program.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .polyalg import Polynomial, RuleSet, VarSpace, parity_class
from .polyalg import reduce as poly_reduce
from .sdpsolve import BlockEntries, StandardSdp


class SosBuildError(ValueError):
    pass


COEFF_PRUNE_EPS = 1e-14  # applied to data polynomials once, at assembly time


# -- sign symmetry -----------------------------------------------------------


class SymmetryGroup:
    """Group generated by commuting sign flips of the variables."""

    def __init__(self, space: VarSpace, generators=()):
        self.space = space
        gens = []
        for g in generators:
            g = tuple(int(v) for v in g)
            if len(g) != space.dim or any(v not in (-1, 1) for v in g):
                raise SosBuildError(f"bad sign-flip generator {g}")
            if any(v == -1 for v in g) and g not in gens:
                gens.append(g)
        self.generators: tuple = tuple(gens)

    @classmethod
    def trivial(cls, space: VarSpace):
        return cls(space, ())

    @classmethod
    def discover(cls, space: VarSpace, data) -> "SymmetryGroup":
        """Largest sign-flip group fixing every polynomial in `data`.

        Solved as a GF(2) nullspace: a flip pattern works iff it has even
        overlap with the exponent pattern of every monomial appearing in
        the data.
        """
        rows = set()
        for p in data:
            for mono in p.terms:
                rows.add(tuple(e % 2 for e in mono))
        rows.discard((0,) * space.dim)
        basis = _gf2_nullspace(sorted(rows), space.dim)
        gens = [tuple(-1 if bit else 1 for bit in vec) for vec in basis]
        return cls(space, gens)

    @property
    def order(self) -> int:
        return 2 ** len(self.generators)

    def class_of(self, mono) -> tuple:
        return parity_class(mono, self.generators)

    @property
    def identity_class(self) -> tuple:
        return (1,) * len(self.generators)

    def is_invariant(self, p: Polynomial) -> bool:
        ident = self.identity_class
        return all(self.class_of(m) == ident for m in p.terms)

    def elements(self):
        """All sign vectors of the group (products of generator subsets)."""
        out = []
        for picks in itertools.product((0, 1), repeat=len(self.generators)):
            vec = [1] * self.space.dim
            for chosen, g in zip(picks, self.generators):
                if chosen:
                    vec = [a * b for a, b in zip(vec, g)]
            out.append(tuple(vec))
        return out


def _gf2_nullspace(rows, dim):
    mat = [int("".join(str(b) for b in row), 2) if dim else 0 for row in rows]
    pivots = {}
    for r in mat:
        cur = r
        while cur:
            lead = cur.bit_length() - 1
            if lead in pivots:
                cur ^= pivots[lead]
            else:
                pivots[lead] = cur
                break
    free = [c for c in range(dim) if (dim - 1 - c) not in pivots]
    basis = []
    for fc in free:
        vec = [0] * dim
        vec[fc] = 1
        # back-substitute pivot rows
        for lead_bit in sorted(pivots):
            row = pivots[lead_bit]
            col = dim - 1 - lead_bit
            acc = 0
            for c in range(dim):
                if c != col and (row >> (dim - 1 - c)) & 1:
                    acc ^= vec[c]
            if acc:
                vec[col] ^= 1
        basis.append(tuple(vec))
    # deduplicate and drop zero
    out = []
    for v in basis:
        if any(v) and v not in out:
            out.append(v)
    return out


def group_average(p: Polynomial, group: SymmetryGroup) -> Polynomial:
    """Reynolds operator: average of p over the sign-flip group.

    For sign groups this keeps exactly the invariant monomials.
    """
    ident = group.identity_class
    kept = {m: c for m, c in p.terms.items() if group.class_of(m) == ident}
    return Polynomial(p.space, kept)


# -- monomial bases -----------------------------------------------------------


def monomial_basis(
    space: VarSpace,
    degree: int,
    rules: RuleSet | None = None,
    parity: tuple | None = None,
    group: SymmetryGroup | None = None,
    mask: tuple[str, ...] | None = None,
):
    """Graded-lex list of monomials of degree <= degree.

    Monomials divisible by a rewrite-rule lhs are excluded; `parity`
    restricts to one class of `group`; `mask` names the allowed variables.
    """
    if degree < 0:
        return []
    allowed = [space.index(v) for v in (mask if mask is not None else space.names)]
    rules = rules or RuleSet()
    out = []

    def rec(mono, pos, budget):
        if pos == len(allowed):
            if not rules.reduces(tuple(mono)):
                if parity is None or group.class_of(tuple(mono)) == parity:
                    out.append(tuple(mono))
            return
        idx = allowed[pos]
        for e in range(budget + 1):
            mono[idx] = e
            rec(mono, pos + 1, budget - e)
        mono[idx] = 0

    rec([0] * space.dim, 0, degree)
    out.sort(key=lambda m: (sum(m), m))
    return out


# -- constraint and target containers ----------------------------------------


@dataclass
class LinearTarget:
    """Polynomial affine in the program's free scalars: const + sum x_s * P_s."""

    const: Polynomial
    terms: list  # list of (scalar_id, Polynomial)

    def degree(self) -> int:
        d = self.const.degree()
        for _, p in self.terms:
            d = max(d, p.degree())
        return d

    def data_polys(self):
        return [self.const] + [p for _, p in self.terms]


@dataclass
class WsosConstraint:
    """target in the truncated weighted-SOS cone of {g_i >= 0, h_j = 0}."""

    family: str
    target: LinearTarget
    set_ineqs: list
    set_eqs: list
    half_degree: int
    mask: tuple | None = None


@dataclass
class GramBlock:
    family: str
    owner: str  # "sigma0" or the inequality it multiplies
    weight: Polynomial
    basis: list
    parity: tuple


def block_diagonalize(basis, group: SymmetryGroup):
    """Partition a monomial basis into parity classes of the sign group."""
    classes: dict[tuple, list] = {}
    for m in basis:
        classes.setdefault(group.class_of(m), []).append(m)
    return classes


# -- assembler -----------------------------------------------------------------


@dataclass
class SdpProblem:
    """Assembled program plus the bookkeeping to interpret a solution."""

    sdp: StandardSdp
    gram_blocks: list
    scalar_names: list
    scalar_split: dict  # scalar id -> (plus index, minus index) in the diag block
    diag_block: int
    row_lookup: dict  # (family, mono) -> row index
    row_scale: np.ndarray
    objective: dict
    report: dict
    notes: list

    def scalar_value(self, sol, scalar_id: int) -> float:
        xp, xm = self.scalar_split[scalar_id]
        v = sol.x_blocks[self.diag_block]
        return float(v[xp] - v[xm])

    def row_dual(self, sol, family: str, mono) -> float:
        """Dual value in the unscaled row convention (0 for absent rows)."""
        key = (family, tuple(mono))
        idx = self.row_lookup.get(key)
        if idx is None:
            return 0.0
        return float(sol.y[idx] / self.row_scale[idx])

    def moment(self, sol, family: str, poly: Polynomial) -> float:
        """Moment of the family's dual measure paired with a polynomial."""
        return -sum(c * self.row_dual(sol, family, m) for m, c in poly.terms.items())

    def moment_combo(self, family: str, poly: Polynomial):
        """(row, coeff) pairs so that sum coeff*y_row equals the moment."""
        combo = []
        for m, c in poly.terms.items():
            idx = self.row_lookup.get((family, tuple(m)))
            if idx is None:
                continue
            combo.append((idx, -c / self.row_scale[idx]))
        return combo


class ProgramBuilder:
    """Accumulates WSOS constraints and emits one StandardSdp."""

    def __init__(self, space: VarSpace, rules: RuleSet | None = None, group: SymmetryGroup | None = None):
        self.space = space
        self.rules = rules or RuleSet()
        self.group = group or SymmetryGroup.trivial(space)
        self.scalar_names: list[str] = []
        self.objective: dict[int, float] = {}
        self.gram_blocks: list[GramBlock] = []
        self.rows: dict = {}  # (family, mono) -> [gram dict, lin dict, rhs float]
        self.lambda_info: dict[int, tuple] = {}  # scalar id -> (family, mono, equality poly)
        self.notes: list[str] = []
        self._families_seen: list[str] = []
        self._constraint_keys: set = set()

    # scalars ---------------------------------------------------------------

    def new_scalar(self, name: str, objective_coeff: float = 0.0) -> int:
        sid = len(self.scalar_names)
        self.scalar_names.append(name)
        if objective_coeff:
            self.objective[sid] = objective_coeff
        return sid

    def set_objective(self, scalar_id: int, coeff: float):
        if coeff:
            self.objective[scalar_id] = self.objective.get(scalar_id, 0.0) + coeff

    # rows --------------------------------------------------------------------

    def _row(self, family: str, mono):
        key = (family, mono)
        row = self.rows.get(key)
        if row is None:
            row = [{}, {}, 0.0]
            self.rows[key] = row
            if family not in self._families_seen:
                self._families_seen.append(family)
        return row

    # templates ----------------------------------------------------------------

    def add_wsos(self, constraint: WsosConstraint):
        """Expand one Putinar template into Gram blocks, multipliers and rows."""
        ckey = self._canonical_constraint_key(constraint)
        if ckey in self._constraint_keys:
            self.notes.append(f"{constraint.family}: duplicate constraint merged")
            return
        self._constraint_keys.add(ckey)

        fam = constraint.family
        ineqs = [g.prune(COEFF_PRUNE_EPS) for g in constraint.set_ineqs]
        eqs = [h.prune(COEFF_PRUNE_EPS) for h in constraint.set_eqs]
        target = constraint.target
        mask = constraint.mask

        group = self.group
        data = ineqs + eqs + target.data_polys()
        if group.generators and not all(group.is_invariant(p) for p in data):
            group = SymmetryGroup.trivial(self.space)
            self.notes.append(f"{fam}: symmetry disabled, constraint data not sign-invariant")

        two_k = 2 * constraint.half_degree
        need = max([target.degree(), 0] + [g.degree() for g in ineqs] + [h.degree() for h in eqs])
        two_k_cert = max(two_k, 2 * ((need + 1) // 2))
        if two_k_cert > two_k:
            self.notes.append(f"{fam}: certificate degree raised to {two_k_cert} to cover degree-{need} data")

        # sigma_0 and one sigma per inequality, block-diagonalized by parity
        weights = [(Polynomial.constant(self.space, 1.0), "sigma0")] + [
            (g, f"sigma[{gi}]") for gi, g in enumerate(ineqs)
        ]
        for weight, owner in weights:
            half = (two_k_cert - max(weight.degree(), 0)) // 2
            if half < 0:
                continue
            basis = monomial_basis(self.space, half, self.rules, mask=mask)
            for par, sub_basis in sorted(block_diagonalize(basis, group).items()):
                if not sub_basis:
                    continue
                self._emit_gram(fam, owner, weight, sub_basis, par)

        # free polynomial multiplier per equality
        for hi, h in enumerate(eqs):
            lam_deg = two_k_cert - max(h.degree(), 0)
            if lam_deg < 0:
                continue
            parity = group.identity_class if group.generators else None
            basis = monomial_basis(self.space, lam_deg, self.rules, parity=parity, group=group, mask=mask)
            for mono in basis:
                sid = self.new_scalar(f"{fam}.lambda[{hi}].{mono}")
                self.lambda_info[sid] = (fam, mono, h)
                prod = poly_reduce(Polynomial.monomial(self.space, mono) * h, self.rules)
                for m, c in prod.terms.items():
                    lin = self._row(fam, m)[1]
                    lin[sid] = lin.get(sid, 0.0) + c

        # target side: subtract affine terms, move constants to the rhs
        for m, c in target.const.terms.items():
            self._row(fam, m)[2] += c
        for sid, poly in target.terms:
            for m, c in poly.terms.items():
                lin = self._row(fam, m)[1]
                lin[sid] = lin.get(sid, 0.0) - c

    def _emit_gram(self, family, owner, weight, basis, parity):
        blk = len(self.gram_blocks)
        self.gram_blocks.append(GramBlock(family, owner, weight, list(basis), parity))
        s = len(basis)
        for i in range(s):
            for j in range(i, s):
                mono = tuple(a + b for a, b in zip(basis[i], basis[j]))
                prod = poly_reduce(Polynomial.monomial(self.space, mono) * weight, self.rules)
                for m, c in prod.terms.items():
                    gram = self._row(family, m)[0]
                    key = (blk, i, j)
                    gram[key] = gram.get(key, 0.0) + c

    def _canonical_constraint_key(self, c: WsosConstraint):
        def pkey(p: Polynomial):
            return tuple(sorted(p.terms.items()))

        return (
            c.family,
            tuple(sorted(pkey(g) for g in c.set_ineqs)),
            tuple(sorted(pkey(h) for h in c.set_eqs)),
            pkey(c.target.const),
            tuple((sid, pkey(p)) for sid, p in c.target.terms),
            c.half_degree,
            c.mask,
        )

    # assembly -------------------------------------------------------------------

    def build(self) -> SdpProblem:
        """Merge rows, rescale, split free scalars, emit the standard form."""
        n_scalars = len(self.scalar_names)
        diag_block = len(self.gram_blocks)
        block_dims = tuple(len(b.basis) for b in self.gram_blocks) + ((-2 * n_scalars,) if n_scalars else ())

        ordered = []
        for fam in self._families_seen:
            monos = sorted((m for f, m in self.rows if f == fam), key=lambda m: (sum(m), m))
            ordered.extend((fam, m) for m in monos)

        row_lookup = {}
        scales = []
        kept_rows = []
        seen_payload = {}
        for fam, mono in ordered:
            gram, lin, rhs = self.rows[(fam, mono)]
            gram = {k: v for k, v in gram.items() if v != 0.0}
            lin = {k: v for k, v in lin.items() if v != 0.0}
            maxc = max(
                [abs(v) for v in gram.values()] + [abs(v) for v in lin.values()] + [0.0]
            )
            if maxc == 0.0:
                if abs(rhs) > 1e-9:
                    raise SosBuildError(
                        f"infeasible at build time: family {fam!r} monomial {mono} forces 0 = {rhs:g}"
                    )
                continue  # vacuous row
            payload = (
                tuple(sorted((k, v / maxc) for k, v in gram.items())),
                tuple(sorted((k, v / maxc) for k, v in lin.items())),
                rhs / maxc,
            )
            dup = seen_payload.get(payload)
            if dup is not None:
                row_lookup[(fam, mono)] = dup
                continue
            idx = len(kept_rows)
            seen_payload[payload] = idx
            row_lookup[(fam, mono)] = idx
            scales.append(maxc)
            kept_rows.append((gram, lin, rhs, maxc))

        m = len(kept_rows)
        per_block = [([], [], [], []) for _ in block_dims]
        b_vec = np.zeros(m)
        for r, (gram, lin, rhs, scale) in enumerate(kept_rows):
            b_vec[r] = rhs / scale
            for (blk, i, j), v in gram.items():
                store = per_block[blk]
                store[0].append(r)
                store[1].append(i)
                store[2].append(j)
                store[3].append(v / scale)
            for sid, v in lin.items():
                store = per_block[diag_block]
                store[0].extend((r, r))
                store[1].extend((2 * sid, 2 * sid + 1))
                store[2].extend((2 * sid, 2 * sid + 1))
                store[3].extend((v / scale, -v / scale))
        # objective on the diagonal split
        if n_scalars:
            store = per_block[diag_block]
            for sid, coeff in sorted(self.objective.items()):
                store[0].extend((-1, -1))
                store[1].extend((2 * sid, 2 * sid + 1))
                store[2].extend((2 * sid, 2 * sid + 1))
                store[3].extend((coeff, -coeff))

        entries = [
            BlockEntries(
                np.array(rows, dtype=int),
                np.array(ii, dtype=int),
                np.array(jj, dtype=int),
                np.array(vv, dtype=float),
            ).canonical()
            for rows, ii, jj, vv in per_block
        ]
        pairs = tuple((diag_block, 2 * s, 2 * s + 1) for s in range(n_scalars))
        sdp = StandardSdp(block_dims, entries, b_vec, split_pairs=pairs)

        hist: dict[int, int] = {}
        for blk in self.gram_blocks:
            hist[len(blk.basis)] = hist.get(len(blk.basis), 0) + 1
        report = {
            "rows": m,
            "scalars": n_scalars,
            "gram_blocks": len(self.gram_blocks),
            "block_histogram": dict(sorted(hist.items())),
            "max_block": max([len(b.basis) for b in self.gram_blocks], default=0),
        }
        return SdpProblem(
            sdp=sdp,
            gram_blocks=list(self.gram_blocks),
            scalar_names=list(self.scalar_names),
            scalar_split={s: (2 * s, 2 * s + 1) for s in range(n_scalars)},
            diag_block=diag_block,
            row_lookup=row_lookup,
            row_scale=np.array(scales),
            objective=dict(self.objective),
            report=report,
            notes=list(self.notes),
        )


def putinar_template(builder: ProgramBuilder, constraint: WsosConstraint):
    """Add one WSOS membership statement to the builder."""
    builder.add_wsos(constraint)


def assemble_sdp(builder: ProgramBuilder, constraints) -> SdpProblem:
    """Expand all constraints and build the standard form in one pass."""
    for c in constraints:
        builder.add_wsos(c)
    return builder.build()


# -- certificate reconstruction (testing / diagnostics) ------------------------


def reconstruct_certificate(problem: SdpProblem, sol, family: str, lambda_info=None):
    """sigma_0 + sum sigma_i g_i + sum lambda_j h_j as an explicit polynomial.

    Uses the solved Gram matrices and multiplier scalars; comparing against
    the target at set points checks both PSD-ness and the monomial matching.
    `lambda_info` is the builder's scalar -> (family, mono, equality) map.
    """
    total = None
    for blk_idx, blk in enumerate(problem.gram_blocks):
        if blk.family != family:
            continue
        space = blk.weight.space
        if total is None:
            total = Polynomial(space)
        Q = sol.x_blocks[blk_idx]
        basis = blk.basis
        acc = {}
        for i in range(len(basis)):
            for j in range(len(basis)):
                mono = tuple(a + b for a, b in zip(basis[i], basis[j]))
                acc[mono] = acc.get(mono, 0.0) + float(Q[i, j])
        total = total + Polynomial(space, acc) * blk.weight
    if total is None:
        raise SosBuildError(f"family {family!r} has no Gram blocks")
    for sid, info in (lambda_info or {}).items():
        fam, mono, h = info
        if fam != family:
            continue
        value = problem.scalar_value(sol, sid)
        total = total + Polynomial.monomial(h.space, mono, value) * h
    return total
