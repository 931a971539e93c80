"""Block-diagonal SDP solver and SDPA sparse-format I/O.

Standard form solved here:

    (P)  min  sum_b <C_b, X_b>      s.t.  sum_b <A_rb, X_b> = b_r,  X_b in cone_b
    (D)  max  b . y                 s.t.  S_b = C_b - sum_r y_r A_rb in cone_b

where cone_b is either the PSD cone of dimension s (block dim +s) or the
nonnegative orthant of dimension d (block dim -d).  Free scalars are encoded
as differences of nonnegatives inside a diagonal block; when the problem
carries `split_pairs` metadata the solver condenses each pair back into one
unconstrained variable and handles it through an augmented Schur system
(the split alone has no central path: its dual demands s+ = s- = 0, and the
primal optimal face is unbounded, which in practice floors the attainable
accuracy near 1e-4).

The algorithm is a dense primal-dual path-following method with
Nesterov-Todd scaling, a Mehrotra predictor-corrector, dense Schur
complement, and Cholesky with escalating diagonal regularization.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


class SdpError(ValueError):
    pass


SCHUR_ROW_CEILING = 20_000


# -- problem container -------------------------------------------------------


@dataclass
class BlockEntries:
    """COO entries of all constraint matrices restricted to one block.

    For PSD blocks entries carry i <= j and stand for a symmetric pair; for
    diagonal blocks i == j.  `row` indexes the constraint, with row == -1
    reserved for the cost matrix C.
    """

    row: np.ndarray
    i: np.ndarray
    j: np.ndarray
    val: np.ndarray

    def canonical(self) -> "BlockEntries":
        order = np.lexsort((self.j, self.i, self.row))
        return BlockEntries(self.row[order], self.i[order], self.j[order], self.val[order])


@dataclass
class StandardSdp:
    """Equality-constrained conic program over PSD and diagonal blocks.

    split_pairs optionally marks diagonal entries (block, i_plus, i_minus)
    that encode one free scalar as a difference of nonnegatives.  It is an
    advisory structural hint, not part of the mathematical problem: `equal`
    ignores it and the SDPA export drops it (the exported file is the pure
    conic split form any SDPA solver accepts).
    """

    block_dims: tuple[int, ...]
    entries: list[BlockEntries]
    b: np.ndarray
    obj_offset: float = 0.0
    split_pairs: tuple = ()

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if len(self.entries) != len(self.block_dims):
            raise SdpError("entries list does not match block dims")
        m = len(self.b)
        for dim, ent in zip(self.block_dims, self.entries):
            size = abs(dim)
            if len(ent.row) and (ent.row.min() < -1 or ent.row.max() >= m):
                raise SdpError("constraint index out of range")
            if len(ent.i) and (ent.i.min() < 0 or ent.i.max() >= size or ent.j.max() >= size):
                raise SdpError("matrix index out of range")
            if len(ent.i) and np.any(ent.i > ent.j):
                raise SdpError("entries must have i <= j")
            if dim < 0 and len(ent.i) and np.any(ent.i != ent.j):
                raise SdpError("diagonal block entries must be diagonal")

    @property
    def num_rows(self) -> int:
        return len(self.b)

    def equal(self, other: "StandardSdp") -> bool:
        if self.block_dims != other.block_dims or self.obj_offset != other.obj_offset:
            return False
        if not np.array_equal(self.b, other.b):
            return False
        for e1, e2 in zip(self.entries, other.entries):
            a, c = e1.canonical(), e2.canonical()
            if not (
                np.array_equal(a.row, c.row)
                and np.array_equal(a.i, c.i)
                and np.array_equal(a.j, c.j)
                and np.array_equal(a.val, c.val)
            ):
                return False
        return True

    def cost_matrix(self, blk: int) -> np.ndarray:
        dim = self.block_dims[blk]
        ent = self.entries[blk]
        mask = ent.row == -1
        if dim > 0:
            C = np.zeros((dim, dim))
            C[ent.i[mask], ent.j[mask]] = ent.val[mask]
            C = C + C.T - np.diag(np.diag(C))
            return C
        c = np.zeros(-dim)
        c[ent.i[mask]] = ent.val[mask]
        return c

    def constraint_csr(self, blk: int):
        """CSR matrix mapping vec(X_blk) (or the diagonal) to row values."""
        dim = self.block_dims[blk]
        ent = self.entries[blk]
        mask = ent.row >= 0
        rows = ent.row[mask]
        ii, jj, vv = ent.i[mask], ent.j[mask], ent.val[mask]
        m = self.num_rows
        if dim > 0:
            off = ii != jj
            data = np.concatenate([vv, vv[off]])
            cols = np.concatenate([ii * dim + jj, jj[off] * dim + ii[off]])
            rws = np.concatenate([rows, rows[off]])
            return sp.csr_matrix((data, (rws, cols)), shape=(m, dim * dim))
        return sp.csr_matrix((vv, (rows, ii)), shape=(m, -dim))


@dataclass
class SdpSolution:
    status: str  # Optimal | Infeasible | MaxIter | NumErr
    primal_objective: float
    dual_objective: float
    gap: float
    x_blocks: list
    s_blocks: list
    y: np.ndarray
    iterations: int
    kkt: dict
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "Optimal"


# -- solver ------------------------------------------------------------------


class _Worker:
    """One solve call; holds the condensed problem and the iterate."""

    def __init__(self, sdp: StandardSdp, tol: float, max_iter: int, verbose: bool):
        self.sdp = sdp
        self.tol = tol
        self.max_iter = max_iter
        self.verbose = verbose
        m = sdp.num_rows
        self.m = m

        self.psd_idx = [k for k, d in enumerate(sdp.block_dims) if d > 0]
        diag_idx = [k for k, d in enumerate(sdp.block_dims) if d < 0]
        self.C = {k: sdp.cost_matrix(k) for k in self.psd_idx}
        self.A = {k: sdp.constraint_csr(k) for k in self.psd_idx}
        self.denseA = {}
        self.rows_touch = {}
        for k in self.psd_idx:
            touched = np.unique(self.A[k].nonzero()[0])
            self.rows_touch[k] = touched
            s = sdp.block_dims[k]
            self.denseA[k] = self.A[k][touched].toarray().reshape(len(touched), s, s)

        # condense split pairs into free columns; keep the rest as a diag cone
        self.free_F = None  # (m, p) dense
        self.free_c = None
        self.diag_map = []  # (block, original diag index) per kept diag column
        self.pair_map = []  # (block, i_plus, i_minus) per free column
        diag_cols = []
        diag_cost = []
        pairs_by_block: dict[int, list] = {}
        for blk, ip, im in sdp.split_pairs:
            pairs_by_block.setdefault(blk, []).append((ip, im))
        f_cols, f_cost = [], []
        for k in diag_idx:
            Ak = sp.csc_matrix(sdp.constraint_csr(k))
            ck = sdp.cost_matrix(k)
            split_here = set()
            for ip, im in pairs_by_block.get(k, []):
                col_p = Ak[:, ip].toarray().ravel()
                col_m = Ak[:, im].toarray().ravel()
                if np.array_equal(col_p, -col_m) and ck[ip] == -ck[im]:
                    f_cols.append(col_p)
                    f_cost.append(ck[ip])
                    self.pair_map.append((k, ip, im))
                    split_here.update((ip, im))
            for idx in range(-sdp.block_dims[k]):
                if idx not in split_here:
                    diag_cols.append(Ak[:, idx].toarray().ravel())
                    diag_cost.append(ck[idx])
                    self.diag_map.append((k, idx))
        self.p = len(f_cols)
        if self.p:
            self.free_F = np.column_stack(f_cols)
            self.free_c = np.array(f_cost)
        self.nd = len(diag_cols)
        self.Ad = np.column_stack(diag_cols) if self.nd else np.zeros((m, 0))
        self.cd = np.array(diag_cost) if self.nd else np.zeros(0)

        self.ndeg = sum(sdp.block_dims[k] for k in self.psd_idx) + self.nd
        self.b_norm = 1.0 + np.linalg.norm(sdp.b)
        self.c_norm = 1.0 + max(
            [np.linalg.norm(self.C[k]) for k in self.psd_idx]
            + [np.linalg.norm(self.cd) if self.nd else 0.0]
            + [np.linalg.norm(self.free_c) if self.p else 0.0]
        )

    # -- linear maps ---------------------------------------------------------

    def apply_A(self, X, xd, f):
        out = np.zeros(self.m)
        for k in self.psd_idx:
            out += self.A[k] @ X[k].reshape(-1)
        if self.nd:
            out += self.Ad @ xd
        if self.p:
            out += self.free_F @ f
        return out

    def adjoint(self, k, y):
        s = self.sdp.block_dims[k]
        M = (self.A[k].T @ y).reshape(s, s)
        return 0.5 * (M + M.T)

    # -- main loop -------------------------------------------------------------

    def run(self) -> SdpSolution:
        sdp, tol = self.sdp, self.tol
        psd = self.psd_idx
        xi, eta = self._initial_scales()
        X = {k: xi * np.eye(sdp.block_dims[k]) for k in psd}
        S = {k: eta * np.eye(sdp.block_dims[k]) for k in psd}
        xd = xi * np.ones(self.nd)
        sd = eta * np.ones(self.nd)
        f = np.zeros(self.p)
        y = np.zeros(self.m)

        history = []
        status = "MaxIter"
        best = None
        best_metric = np.inf
        stall = 0
        it = 0

        def measures():
            rp = sdp.b - self.apply_A(X, xd, f)
            Rd = {k: self.C[k] - S[k] - self.adjoint(k, y) for k in psd}
            rdd = self.cd - sd - self.Ad.T @ y if self.nd else np.zeros(0)
            rf = self.free_c - self.free_F.T @ y if self.p else np.zeros(0)
            mu = (
                sum(np.sum(X[k] * S[k]) for k in psd) + (xd @ sd if self.nd else 0.0)
            ) / max(self.ndeg, 1)
            pobj = (
                sum(np.sum(self.C[k] * X[k]) for k in psd)
                + (self.cd @ xd if self.nd else 0.0)
                + (self.free_c @ f if self.p else 0.0)
                + sdp.obj_offset
            )
            dobj = float(sdp.b @ y) + sdp.obj_offset
            gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
            pinf = np.linalg.norm(rp) / self.b_norm
            dinf = (
                max(
                    [np.linalg.norm(Rd[k]) for k in psd]
                    + [np.linalg.norm(rdd) if self.nd else 0.0]
                    + [np.linalg.norm(rf) if self.p else 0.0]
                )
                / self.c_norm
            )
            return rp, Rd, rdd, rf, mu, pobj, dobj, gap, pinf, dinf

        def snapshot():
            return (
                {k: X[k].copy() for k in psd},
                {k: S[k].copy() for k in psd},
                xd.copy(),
                sd.copy(),
                f.copy(),
                y.copy(),
            )

        for it in range(1, self.max_iter + 1):
            rp, Rd, rdd, rf, mu, pobj, dobj, gap, pinf, dinf = measures()
            history.append(
                {"iter": it, "mu": mu, "pobj": pobj, "dobj": dobj, "pinf": pinf, "dinf": dinf, "gap": gap}
            )
            if self.verbose:
                print(f"  it {it:3d}  mu {mu:9.2e}  gap {gap:9.2e}  pinf {pinf:9.2e}  dinf {dinf:9.2e}")
            metric = max(gap, pinf, dinf)
            if metric < best_metric:
                best_metric, best, stall = metric, snapshot(), 0
            else:
                stall += 1
            if gap <= tol and pinf <= tol and dinf <= tol:
                status = "Optimal"
                break
            if not np.isfinite(mu) or mu > 1e40 or metric > 1e8 * max(best_metric, 1e-14):
                status = "NumErr"
                break
            if stall >= 12:
                break
            ray_status = self._ray_check(y)
            if ray_status:
                status = ray_status
                break

            try:
                scal = self._nt_scalings(X, S)
            except np.linalg.LinAlgError:
                status = "NumErr"
                break
            wdd = xd / sd if self.nd else np.zeros(0)
            solver = self._factor(scal, wdd)
            if solver is None:
                status = "NumErr"
                break

            def direction(Rc, rcd, sigma_mu):
                rhs = rp.copy()
                for k in psd:
                    W = scal[k][2]
                    rhs += self.A[k] @ (W @ Rd[k] @ W - Rc[k]).reshape(-1)
                if self.nd:
                    rhs += self.Ad @ (wdd * rdd - rcd)
                dy, df = solver(rhs, rf)
                dS = {k: Rd[k] - self.adjoint(k, dy) for k in psd}
                dsd = rdd - self.Ad.T @ dy if self.nd else np.zeros(0)
                dX = {}
                for k in psd:
                    W = scal[k][2]
                    M = Rc[k] - W @ dS[k] @ W
                    dX[k] = 0.5 * (M + M.T)
                dxd = rcd - wdd * dsd if self.nd else np.zeros(0)
                return dy, df, dX, dS, dxd, dsd

            # predictor
            Rc_aff = {k: -X[k] for k in psd}
            rc_aff = -xd
            dy_a, df_a, dX_a, dS_a, dxd_a, dsd_a = direction(Rc_aff, rc_aff, 0.0)
            ap_a, ad_a = self._steps(X, S, xd, sd, scal, dX_a, dS_a, dxd_a, dsd_a)
            ap_a, ad_a = min(1.0, 0.99 * ap_a), min(1.0, 0.99 * ad_a)
            mu_aff = (
                sum(np.sum((X[k] + ap_a * dX_a[k]) * (S[k] + ad_a * dS_a[k])) for k in psd)
                + ((xd + ap_a * dxd_a) @ (sd + ad_a * dsd_a) if self.nd else 0.0)
            ) / max(self.ndeg, 1)
            mu_aff = max(mu_aff, 0.0)
            sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-10)) if mu > 0 else 0.1

            # corrector
            Rc = {}
            for k in psd:
                G, Ginv, W, sig, _, _ = scal[k]
                Dxa = Ginv @ dX_a[k] @ Ginv.T
                Dsa = G.T @ dS_a[k] @ G
                hot = 0.5 * (Dxa @ Dsa + Dsa @ Dxa)
                K = -np.diag(sig**2) - hot
                K[np.diag_indices_from(K)] += sigma * mu
                U = 2.0 * K / (sig[:, None] + sig[None, :])
                Rc[k] = G @ U @ G.T
            rcd = (sigma * mu - xd * sd - dxd_a * dsd_a) / sd if self.nd else np.zeros(0)

            dy, df, dX, dS, dxd, dsd = direction(Rc, rcd, sigma * mu)
            ap, ad = self._steps(X, S, xd, sd, scal, dX, dS, dxd, dsd)
            gamma = min(0.99, 0.9 + 0.09 * min(ap_a, ad_a, 1.0))
            ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
            if ap < 1e-10 and ad < 1e-10:
                break

            for k in psd:
                X[k] = X[k] + ap * dX[k]
                S[k] = S[k] + ad * dS[k]
            if self.nd:
                xd = xd + ap * dxd
                sd = sd + ad * dsd
            if self.p:
                f = f + ap * df
            y = y + ad * dy

        if best is not None:
            cur = measures()
            if max(cur[7], cur[8], cur[9]) > best_metric:
                X, S, xd, sd, f, y = best
            if status not in ("Infeasible", "NumErr") and best_metric <= tol:
                status = "Optimal"

        rp, Rd, rdd, rf, mu, pobj, dobj, gap, pinf, dinf = measures()
        if status == "Optimal" and max(gap, pinf, dinf) > tol:
            status = "MaxIter"
        kkt = {
            "pinf": float(pinf),
            "dinf": float(dinf),
            "compl": float(mu),
            "min_eig_x": float(
                min([sla.eigvalsh(X[k])[0] for k in psd] + ([np.min(xd)] if self.nd else []) + [np.inf])
            ),
            "min_eig_s": float(
                min([sla.eigvalsh(S[k])[0] for k in psd] + ([np.min(sd)] if self.nd else []) + [np.inf])
            ),
        }
        x_blocks, s_blocks = self._report_blocks(X, S, xd, sd, f, rf)
        return SdpSolution(
            status=status,
            primal_objective=float(pobj),
            dual_objective=float(dobj),
            gap=float(gap),
            x_blocks=x_blocks,
            s_blocks=s_blocks,
            y=y,
            iterations=it,
            kkt=kkt,
            history=history,
        )

    # -- pieces ------------------------------------------------------------------

    def _initial_scales(self):
        b_scale = 1.0 + (float(np.max(np.abs(self.sdp.b))) if self.m else 0.0)
        a_scale = 1.0
        c_scale = 1.0
        for k, dim in enumerate(self.sdp.block_dims):
            ent = self.sdp.entries[k]
            if len(ent.val):
                a_scale = max(a_scale, float(np.max(np.abs(ent.val))))
        for k in self.psd_idx:
            c_scale = max(c_scale, float(np.max(np.abs(self.C[k]))) if self.C[k].size else 0.0)
        if self.nd:
            c_scale = max(c_scale, float(np.max(np.abs(self.cd))))
        dim_scale = np.sqrt(max((abs(d) for d in self.sdp.block_dims), default=1))
        xi = max(10.0, dim_scale, b_scale / a_scale)
        eta = max(10.0, dim_scale, c_scale, a_scale)
        return xi, eta

    def _ray_check(self, y):
        ynorm = np.linalg.norm(y)
        if ynorm > 1e8 and self.sdp.b @ y > 1e-6 * ynorm:
            ray = y / ynorm
            ok = all(sla.eigvalsh(-self.adjoint(k, ray))[0] >= -1e-9 for k in self.psd_idx)
            if ok and self.nd:
                ok = bool(np.all(-(self.Ad.T @ ray) >= -1e-9))
            if ok and self.p:
                ok = bool(np.max(np.abs(self.free_F.T @ ray)) <= 1e-9)
            if ok:
                return "Infeasible"
        return None

    def _nt_scalings(self, X, S):
        scal = {}
        for k in self.psd_idx:
            Lx = np.linalg.cholesky(X[k])
            Ls = np.linalg.cholesky(S[k])
            U, sig, Vt = np.linalg.svd(Ls.T @ Lx)
            G = Lx @ (Vt.T * sig**-0.5)
            Ginv = (sig[:, None] ** 0.5) * (Vt @ sla.solve_triangular(Lx, np.eye(len(sig)), lower=True))
            W = G @ G.T
            scal[k] = (G, Ginv, W, sig, Lx, Ls)
        return scal

    def _factor(self, scal, wdd):
        m = self.m
        H = np.zeros((m, m))
        for k in self.psd_idx:
            W = scal[k][2]
            T = self.denseA[k]
            V = np.matmul(W, np.matmul(T, W))
            nr = T.shape[0]
            Hk = T.reshape(nr, -1) @ V.reshape(nr, -1).T
            rows = self.rows_touch[k]
            H[np.ix_(rows, rows)] += Hk
        if self.nd:
            H += (self.Ad * wdd) @ self.Ad.T
        scale_h = max(1.0, float(np.max(np.abs(np.diag(H)))))
        reg = 1e-12 * scale_h
        for _ in range(8):
            try:
                cho = sla.cho_factor(H + reg * np.eye(m), lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                cho = None
                reg *= 100.0
        if cho is None:
            return None
        if self.p:
            M = sla.cho_solve(cho, self.free_F, check_finite=False)
            N = self.free_F.T @ M
            reg_f = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(N)))))
            for _ in range(8):
                try:
                    cho_n = sla.cho_factor(N + reg_f * np.eye(self.p), lower=True, check_finite=False)
                    break
                except np.linalg.LinAlgError:
                    cho_n = None
                    reg_f *= 100.0
            if cho_n is None:
                return None

            def solver(rhs, rf):
                u = sla.cho_solve(cho, rhs, check_finite=False)
                df = sla.cho_solve(cho_n, self.free_F.T @ u - rf, check_finite=False)
                dy = u - M @ df
                return dy, df

            return solver

        def solver(rhs, rf):
            return sla.cho_solve(cho, rhs, check_finite=False), np.zeros(0)

        return solver

    def _steps(self, X, S, xd, sd, scal, dX, dS, dxd, dsd):
        ap = ad = np.inf
        for k in self.psd_idx:
            ap = min(ap, _max_step_psd(scal[k][4], dX[k]))
            ad = min(ad, _max_step_psd(scal[k][5], dS[k]))
        if self.nd:
            neg = dxd < 0
            if np.any(neg):
                ap = min(ap, float(np.min(-xd[neg] / dxd[neg])))
            neg = dsd < 0
            if np.any(neg):
                ad = min(ad, float(np.min(-sd[neg] / dsd[neg])))
        return ap, ad

    def _report_blocks(self, X, S, xd, sd, f, rf):
        x_blocks, s_blocks = [], []
        for k, d in enumerate(self.sdp.block_dims):
            if d > 0:
                x_blocks.append(X[k])
                s_blocks.append(S[k])
            else:
                x_blocks.append(np.zeros(-d))
                s_blocks.append(np.zeros(-d))
        for col, (k, idx) in enumerate(self.diag_map):
            x_blocks[k][idx] = xd[col]
            s_blocks[k][idx] = sd[col]
        for col, (k, ip, im) in enumerate(self.pair_map):
            v = f[col]
            x_blocks[k][ip] = max(v, 0.0)
            x_blocks[k][im] = max(-v, 0.0)
            # the split duals collapse to zero at any dual-feasible point
            s_blocks[k][ip] = 0.0
            s_blocks[k][im] = 0.0
        return x_blocks, s_blocks


def _max_step_psd(Lfac: np.ndarray, delta: np.ndarray) -> float:
    """Largest alpha with X + alpha*Delta PSD, given X = L L^T."""
    M = sla.solve_triangular(Lfac, delta, lower=True)
    M = sla.solve_triangular(Lfac, M.T, lower=True)
    lam = sla.eigvalsh(0.5 * (M + M.T))
    worst = lam[0]
    if worst >= -1e-14:
        return np.inf
    return -1.0 / worst


def solve(sdp: StandardSdp, tol: float = 1e-8, max_iter: int = 200, verbose: bool = False) -> SdpSolution:
    """Solve the standard-form problem; never returns a silently wrong answer.

    Statuses: Optimal (gap and residuals within tol), Infeasible (conservative
    dual-ray certificate), MaxIter, NumErr.  Deterministic for fixed inputs.
    """
    if tol <= 0:
        raise SdpError("tolerance must be positive")
    if sdp.num_rows > SCHUR_ROW_CEILING:
        raise SdpError(
            f"Schur complement would have {sdp.num_rows} rows, above the {SCHUR_ROW_CEILING} ceiling"
        )
    return _Worker(sdp, tol, max_iter, verbose).run()


# -- SDPA sparse format -------------------------------------------------------
#
# The exported file encodes the dual view:  min b.x  with  X(x) = sum F_i x_i - F_0,
# where x plays the role of our constraint multipliers, c = b, F_i = A_i and
# F_0 = -C.  A third-party SDPA solver therefore reports the negated optimum.


def export_sdpa(sdp: StandardSdp, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_sdpa(sdp))


def dumps_sdpa(sdp: StandardSdp) -> str:
    out = io.StringIO()
    out.write('"exported by slicevol; objective sign is negated relative to solve()\n')
    m = sdp.num_rows
    out.write(f"{m}\n")
    out.write(f"{len(sdp.block_dims)}\n")
    out.write(" ".join(str(d) for d in sdp.block_dims) + "\n")
    out.write(" ".join(f"{v:.16e}" for v in sdp.b) + "\n")
    for blk, ent in enumerate(sdp.entries):
        ce = ent.canonical()
        for r, i, j, v in zip(ce.row, ce.i, ce.j, ce.val):
            if v == 0.0:
                continue
            value = -v if r == -1 else v
            out.write(f"{int(r) + 1} {blk + 1} {int(i) + 1} {int(j) + 1} {value:.16e}\n")
    return out.getvalue()


def import_sdpa(path) -> StandardSdp:
    with open(path) as fh:
        return loads_sdpa(fh.read())


def loads_sdpa(text: str) -> StandardSdp:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith(('"', "*"))]
    if len(lines) < 4:
        raise SdpError("truncated SDPA file")

    def tokens(line):
        for ch in "{}(),":
            line = line.replace(ch, " ")
        return line.split()

    m = int(tokens(lines[0])[0])
    nblock = int(tokens(lines[1])[0])
    dims = tuple(int(t) for t in tokens(lines[2]))[:nblock]
    if len(dims) != nblock:
        raise SdpError("block size line does not match block count")
    cvals = [float(t) for t in tokens(lines[3])]
    if len(cvals) != m:
        raise SdpError(f"objective vector has {len(cvals)} entries, expected {m}")
    per_block = [([], [], [], []) for _ in dims]
    for ln in lines[4:]:
        tk = tokens(ln)
        if len(tk) != 5:
            raise SdpError(f"bad entry line: {ln!r}")
        r, blk, i, j, v = int(tk[0]), int(tk[1]), int(tk[2]), int(tk[3]), float(tk[4])
        if not (1 <= blk <= nblock):
            raise SdpError(f"block index {blk} out of range")
        if i > j:
            i, j = j, i
        store = per_block[blk - 1]
        store[0].append(r - 1)
        store[1].append(i - 1)
        store[2].append(j - 1)
        store[3].append(-v if r == 0 else v)
    entries = []
    for rows, ii, jj, vv in per_block:
        entries.append(
            BlockEntries(
                np.array(rows, dtype=int),
                np.array(ii, dtype=int),
                np.array(jj, dtype=int),
                np.array(vv, dtype=float),
            ).canonical()
        )
    return StandardSdp(dims, entries, np.array(cvals))


# -- candidate extraction -----------------------------------------------------


@dataclass
class CandidateMeta:
    """Hooks from the program build needed to read candidates off the duals.

    Each combo is a list of (row index, coefficient) pairs whose weighted
    dual values give one moment of the direction-choosing measure.  z layout:
    theta components first, then optionally the offset t.
    """

    pair_combos: list  # (dim_z, dim_z) nested list of combos
    first_combos: list | None  # per z variable, or None when unavailable
    mass_combo: list
    n_theta: int
    has_t: bool
    rank_ratio: float = 1e-3


def extract_candidate(sol: SdpSolution, meta: CandidateMeta):
    """Read (theta, t) candidates from the dual second-moment matrix.

    Returns (candidates, diagnostic); candidates empty when the moment
    spectrum is not close enough to rank one.  theta is renormalized to the
    unit sphere.
    """
    if not sol.optimal:
        return [], "solver status not optimal"

    def combo_value(combo):
        return sum(c * sol.y[r] for r, c in combo)

    mass = combo_value(meta.mass_combo)
    if abs(mass) < 1e-8:
        return [], "direction-measure mass vanished"
    dim = len(meta.pair_combos)
    N = np.empty((dim, dim))
    for a in range(dim):
        for bidx in range(dim):
            N[a, bidx] = combo_value(meta.pair_combos[a][bidx]) / mass
    N = 0.5 * (N + N.T)
    evals, evecs = np.linalg.eigh(N)
    lead, second = evals[-1], (evals[-2] if dim > 1 else 0.0)
    if lead <= 0:
        return [], "second-moment matrix not positive"
    ratio = max(second, 0.0) / lead
    if ratio >= meta.rank_ratio:
        return [], f"moment spectrum not rank-one (ratio {ratio:.2e})"
    v = evecs[:, -1] * np.sqrt(lead)

    if meta.first_combos is not None:
        # no symmetry: signs come straight from first-order moments
        first = np.array([combo_value(c) / mass for c in meta.first_combos])
        if np.linalg.norm(first) > 1e-8 and np.dot(first, v) < 0:
            v = -v
        candidates = [v]
    else:
        candidates = [v, -v]

    out = []
    for cand in candidates:
        if meta.n_theta:
            theta = cand[: meta.n_theta]
            nrm = np.linalg.norm(theta)
            if nrm < 1e-8:
                continue
            theta = theta / nrm
            t = float(cand[meta.n_theta] / nrm) if meta.has_t else 0.0
            out.append((theta, t))
        else:
            t = float(cand[0]) if meta.has_t else 0.0
            out.append((np.zeros(0), t))
    return out, f"rank ratio {ratio:.2e}"
