"""Bounded-variable revised primal simplex over a sparse column basis.

Every row carries a logical column (the constraint matrix is [A | I]), so
an all-logical basis is always available and no artificial variables are
needed: phase 1 starts from any basis and drives the total bound violation
of the basic variables to zero, then phase 2 optimizes the true objective
with the classic bounded-variable ratio test.  Phase 1 uses a long-step
ratio test that passes as many breakpoints as keep the infeasibility
decreasing, which makes warm starts after bound changes cheap.

The basis inverse is kept as an LU factorization (dense below a size
threshold, SuperLU above) plus product-form eta updates, refactorized
periodically.  Pivoting is deterministic: Dantzig pricing with lowest-index
tie breaking, switching to Bland's rule while a stall of degenerate steps
persists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse import csc_matrix, hstack, identity
from scipy.sparse.linalg import splu

BASIC, AT_LOWER, AT_UPPER = 0, 1, 2

_DENSE_LIMIT = 400  # basis size below which a dense LU is cheaper


@dataclass
class SimplexOptions:
    feasibility_tol: float = 1e-7
    optimality_tol: float = 1e-9
    pivot_tol: float = 1e-9
    refactor_interval: int = 100
    stall_limit: int = 1000        # consecutive degenerate pivots before Bland's rule
    iteration_limit: int = 0       # 0 -> 50 * (rows + structural cols)


@dataclass
class BasisSnapshot:
    """Enough state to warm-start a later solve of a compatible model."""

    head: np.ndarray
    status: np.ndarray
    n_struct: int
    n_rows: int


@dataclass
class SimplexOutcome:
    status: str                    # optimal / infeasible / unbounded / iteration-limit / numerical-failure
    values: np.ndarray             # all columns, structurals first
    iterations: int
    basis: BasisSnapshot | None


class _Factor:
    """LU of a basis matrix with forward/transpose solves."""

    def __init__(self, basis: csc_matrix):
        m = basis.shape[0]
        if m <= _DENSE_LIMIT:
            lu, piv = scipy.linalg.lu_factor(basis.toarray(), check_finite=False)
            if np.min(np.abs(np.diag(lu))) < 1e-12:
                raise RuntimeError("singular basis")
            self._dense = (lu, piv)
            self._sparse = None
        else:
            self._dense = None
            self._sparse = splu(basis.tocsc())

    def solve(self, v: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return scipy.linalg.lu_solve(self._dense, v, check_finite=False)
        return self._sparse.solve(v)

    def solve_transpose(self, v: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return scipy.linalg.lu_solve(self._dense, v, trans=1, check_finite=False)
        return self._sparse.solve(v, trans="T")


class BoundedSimplex:
    """Minimizes cost @ v subject to A v + s = b with column bounds.

    ``columns`` is the structural part A (m x n, csc); logical columns are
    appended internally with the bounds supplied in ``logical_lower`` /
    ``logical_upper`` (derived from each row's relation by the caller).
    """

    def __init__(
        self,
        columns: csc_matrix,
        rhs: np.ndarray,
        cost: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        logical_lower: np.ndarray,
        logical_upper: np.ndarray,
        options: SimplexOptions | None = None,
    ):
        self.opt = options or SimplexOptions()
        self.m, self.n = columns.shape
        self.total = self.n + self.m
        self.M = hstack(
            [columns, identity(self.m, format="csc")], format="csc"
        )
        self.MT = self.M.T.tocsr()
        self.b = np.asarray(rhs, dtype=float)
        self.c = np.zeros(self.total)
        self.c[: self.n] = cost
        self.l = np.concatenate([lower, logical_lower]).astype(float)
        self.u = np.concatenate([upper, logical_upper]).astype(float)
        if np.any(np.isinf(self.l) & np.isinf(self.u)):
            raise ValueError("free columns are not supported")
        # devex reference weights, initialized with column norms so the first
        # pivots already behave like normalized pricing
        self._gamma_init = 1.0 + np.asarray(
            self.M.multiply(self.M).sum(axis=0)
        ).ravel()

    # ----- basis bookkeeping -------------------------------------------------

    def _default_status(self) -> np.ndarray:
        status = np.full(self.total, AT_LOWER, dtype=np.int8)
        status[np.isinf(self.l)] = AT_UPPER
        return status

    def _init_state(self, warm: BasisSnapshot | None) -> None:
        self.head = np.arange(self.n, self.total)
        self.status = self._default_status()
        if warm is not None and warm.n_struct == self.n and warm.n_rows <= self.m:
            old_m = warm.n_rows
            head = np.concatenate(
                [warm.head, np.arange(self.n + old_m, self.total)]
            )
            status = self._default_status()
            status[: self.n] = warm.status[: self.n]
            status[self.n : self.n + old_m] = warm.status[self.n :]
            ok = (
                len(head) == self.m
                and len(np.unique(head)) == self.m
                and head.min() >= 0
                and head.max() < self.total
            )
            if ok:
                self.head = head.astype(int)
                self.status = status
        # sanitize: statuses must point at finite bounds and match the head
        nonbasic = np.ones(self.total, dtype=bool)
        nonbasic[self.head] = False
        snap_low = nonbasic & (self.status == AT_LOWER) & np.isinf(self.l)
        self.status[snap_low] = AT_UPPER
        snap_up = nonbasic & (self.status == AT_UPPER) & np.isinf(self.u)
        self.status[snap_up] = AT_LOWER
        self.status[nonbasic & (self.status == BASIC)] = AT_LOWER
        fix_bad = nonbasic & (self.status == AT_LOWER) & np.isinf(self.l)
        self.status[fix_bad] = AT_UPPER
        self.status[self.head] = BASIC
        self.x = np.where(self.status == AT_UPPER, self.u, self.l)
        self.x[np.isinf(self.x)] = 0.0
        self.etas: list[tuple[int, np.ndarray]] = []
        self.gamma = self._gamma_init.copy()

    def _refactor(self) -> None:
        try:
            self.factor = _Factor(self.M[:, self.head])
        except RuntimeError:
            # damaged warm basis: restart from the all-logical basis
            self.head = np.arange(self.n, self.total)
            self.status = self._default_status()
            self.status[self.head] = BASIC
            self.x = np.where(self.status == AT_UPPER, self.u, self.l)
            self.x[np.isinf(self.x)] = 0.0
            self.factor = _Factor(self.M[:, self.head])
        self.etas = []
        tmp = self.x.copy()
        tmp[self.head] = 0.0
        residual = self.b - self.M @ tmp
        self.x[self.head] = self.factor.solve(residual)

    def _column(self, q: int) -> np.ndarray:
        col = np.zeros(self.m)
        a, b = self.M.indptr[q], self.M.indptr[q + 1]
        col[self.M.indices[a:b]] = self.M.data[a:b]
        return col

    def _ftran(self, col: np.ndarray) -> np.ndarray:
        w = self.factor.solve(col)
        for r, d in self.etas:
            t = w[r] / d[r]
            if t != 0.0:
                w -= d * t
            w[r] = t
        return w

    def _btran(self, basic_costs: np.ndarray) -> np.ndarray:
        w = basic_costs.astype(float).copy()
        for r, d in reversed(self.etas):
            s = d @ w
            w[r] = (w[r] - (s - d[r] * w[r])) / d[r]
        return self.factor.solve_transpose(w)

    # ----- pivoting ----------------------------------------------------------

    def _violations(self) -> np.ndarray:
        xb = self.x[self.head]
        return np.maximum(self.l[self.head] - xb, 0.0) + np.maximum(
            xb - self.u[self.head], 0.0
        )

    def _choose_entering(self, red: np.ndarray, bland: bool) -> int | None:
        tol = self.opt.optimality_tol
        movable = self.u > self.l
        up = (self.status == AT_LOWER) & movable & (red < -tol)
        down = (self.status == AT_UPPER) & movable & (red > tol)
        eligible = np.nonzero(up | down)[0]
        if eligible.size == 0:
            return None
        if bland:
            return int(eligible[0])
        scores = red[eligible] ** 2 / self.gamma[eligible]
        return int(eligible[np.argmax(scores)])

    def _ratio_test_phase2(self, q, sigma, w, bland):
        """Classic bounded ratio test: stop at the first blocking basic.

        Returns (step, basis position, leave bound); position -1 encodes a
        bound flip of the entering column, (None, ...) an unbounded ray.
        """
        ftol = self.opt.feasibility_tol
        delta = sigma * w
        cand = np.nonzero(np.abs(delta) > self.opt.pivot_tol)[0]
        flip = self.u[q] - self.l[q]
        best_t = np.inf
        ratios = None
        if cand.size:
            d = delta[cand]
            cols = self.head[cand]
            xv = self.x[cols]
            lo = self.l[cols]
            hi = self.u[cols]
            dec = d > 0
            block = np.where(
                dec,
                np.where(xv > hi + ftol, hi, lo),
                np.where(xv < lo - ftol, lo, hi),
            )
            ok = np.where(dec, xv >= lo - ftol, xv <= hi + ftol) & np.isfinite(block)
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios = np.where(ok, (xv - block) / d, np.inf)
            ratios = np.maximum(ratios, 0.0)
            best_t = float(np.min(ratios, initial=np.inf))
        if flip <= best_t:
            if not np.isfinite(flip):
                return None, -1, 0.0
            return flip, -1, 0.0
        ties = np.nonzero(ratios <= best_t + 1e-12)[0]
        if bland:
            pick = ties[np.argmin(cols[ties])]
        else:
            pick = ties[np.argmax(np.abs(d[ties]))]
        return float(max(ratios[pick], 0.0)), int(cand[pick]), float(block[pick])

    def _ratio_test_phase1(self, q, sigma, w, slope0):
        """Long-step phase-1 ratio test.

        Walks the breakpoints where basic variables hit a bound, accumulating
        the slope of the piecewise-linear total infeasibility, and stops at
        the breakpoint where the slope turns nonnegative.  Passing
        breakpoints in a single pivot is what makes phase 1 converge in few
        iterations from a warm basis.
        """
        ftol = self.opt.feasibility_tol
        delta = sigma * w
        cand = np.nonzero(np.abs(delta) > self.opt.pivot_tol)[0]
        events_t: list[float] = []
        events_pos: list[int] = []
        events_bound: list[float] = []
        events_jump: list[float] = []
        for idx in cand:
            d = delta[idx]
            col = self.head[idx]
            xv = self.x[col]
            lo = self.l[col]
            hi = self.u[col]
            if d > 0:  # basic decreases
                if xv > hi + ftol:
                    bounds = (hi, lo)
                elif xv >= lo - ftol:
                    bounds = (lo,)
                else:
                    bounds = ()   # already below its lower bound, moving away
            else:      # basic increases
                if xv < lo - ftol:
                    bounds = (lo, hi)
                elif xv <= hi + ftol:
                    bounds = (hi,)
                else:
                    bounds = ()   # already above its upper bound, moving away
            for bound in bounds:
                if not np.isfinite(bound):
                    continue
                t = (xv - bound) / d
                events_t.append(max(t, 0.0))
                events_pos.append(int(idx))
                events_bound.append(float(bound))
                events_jump.append(abs(d))
        flip = self.u[q] - self.l[q]
        if not events_t:
            if not np.isfinite(flip):
                return None, -1, 0.0
            return flip, -1, 0.0
        order = sorted(range(len(events_t)), key=lambda k: (events_t[k], -events_jump[k]))
        slope = slope0
        for k in order:
            t = events_t[k]
            if flip < t:
                return flip, -1, 0.0
            slope += events_jump[k]
            if slope >= -1e-12:
                return t, events_pos[k], events_bound[k]
        if np.isfinite(flip):
            return flip, -1, 0.0
        return None, -1, 0.0

    def solve(
        self, warm: BasisSnapshot | None = None, cutoff: float | None = None
    ) -> SimplexOutcome:
        """Solve the LP; minimizes internally.

        With a warm basis whose reduced costs are still dual feasible (the
        objective is unchanged; only bounds or new rows differ), a dual
        simplex pass repairs primal feasibility first — it is the natural
        re-solver inside a search tree.  ``cutoff`` (maximize-sense) stops
        the dual pass early once its bound proves the subproblem cannot beat
        the incumbent; the returned objective is then a valid upper bound
        and the status is "cutoff".  Any irregularity falls back to the
        two-phase primal method, which also verifies every optimal claim on
        a refactorized basis.
        """
        self._init_state(warm)
        self._refactor()
        self._iters = 0
        if warm is not None:
            outcome = self._dual_loop(cutoff)
            if outcome is not None:
                return outcome
        return self._primal_loop()

    def _primal_loop(self) -> SimplexOutcome:
        max_iter = self.opt.iteration_limit or 50 * (self.m + self.n)
        ftol = self.opt.feasibility_tol
        degenerate = 0
        bland = False
        verified = False
        while True:
            iters = self._iters
            if iters >= max_iter:
                return self._outcome("iteration-limit", iters)
            if len(self.etas) >= self.opt.refactor_interval:
                self._refactor()
            viol = self._violations()
            in_phase1 = bool(np.max(viol, initial=0.0) > ftol)
            if in_phase1:
                xb = self.x[self.head]
                cb = np.zeros(self.m)
                cb[xb > self.u[self.head] + ftol] = 1.0
                cb[xb < self.l[self.head] - ftol] = -1.0
            else:
                cb = self.c[self.head]
            pi = self._btran(cb)
            red = -(self.MT @ pi)
            if not in_phase1:
                red += self.c
            q = self._choose_entering(red, bland)
            if q is None:
                if not verified:
                    # refactorize and re-price once before trusting the claim
                    self._refactor()
                    verified = True
                    continue
                if in_phase1:
                    return self._outcome("infeasible", iters)
                return self._outcome("optimal", iters)
            verified = False
            sigma = 1.0 if self.status[q] == AT_LOWER else -1.0
            w = self._ftran(self._column(q))
            if in_phase1:
                step, leave_pos, leave_bound = self._ratio_test_phase1(
                    q, sigma, w, sigma * red[q]
                )
            else:
                step, leave_pos, leave_bound = self._ratio_test_phase2(
                    q, sigma, w, bland
                )
            if step is None:
                if in_phase1:
                    return self._outcome("numerical-failure", iters)
                return self._outcome("unbounded", iters)
            self._iters += 1
            if step < 1e-10:
                degenerate += 1
                if degenerate > self.opt.stall_limit:
                    bland = True
            else:
                # progress: leave anti-cycling mode, Dantzig pricing resumes
                degenerate = 0
                bland = False
            if leave_pos < 0:
                # bound flip: the entering column hits its opposite bound
                self.x[self.head] -= step * sigma * w
                self.x[q] = self.u[q] if sigma > 0 else self.l[q]
                self.status[q] = AT_UPPER if sigma > 0 else AT_LOWER
                continue
            leaving = self.head[leave_pos]
            self._update_devex(q, leave_pos, w)
            self.x[self.head] -= step * sigma * w
            self.x[q] = self.x[q] + sigma * step
            self.x[leaving] = leave_bound
            self.status[leaving] = (
                AT_LOWER if leave_bound == self.l[leaving] else AT_UPPER
            )
            self.status[q] = BASIC
            self.head[leave_pos] = q
            self.etas.append((leave_pos, w))

    def _dual_feasible(self) -> bool:
        pi = self._btran(self.c[self.head])
        red = self.c - (self.MT @ pi)
        movable = self.u > self.l
        tol = 1e-7
        bad_low = (self.status == AT_LOWER) & movable & (red < -tol)
        bad_up = (self.status == AT_UPPER) & movable & (red > tol)
        return not bool(np.any(bad_low | bad_up))

    def _dual_loop(self, cutoff: float | None) -> SimplexOutcome | None:
        """Dual simplex pass from the current (dual-feasible) basis.

        Returns an outcome for the conclusive statuses (infeasible proven by
        the primal fallback, early cutoff) and None when the primal loop
        should finish the job — either to verify an optimal claim or because
        the dual pass hit an irregularity and the primal method must take
        over from the current state.
        """
        if not self._dual_feasible():
            return None
        max_iter = self.opt.iteration_limit or 50 * (self.m + self.n)
        dual_budget = self._iters + 5 * self.m + 100
        ftol = self.opt.feasibility_tol
        ptol = 1e-7
        while True:
            if self._iters >= min(max_iter, dual_budget):
                return None
            if len(self.etas) >= self.opt.refactor_interval:
                self._refactor()
            xb = self.x[self.head]
            below = self.l[self.head] - xb
            above = xb - self.u[self.head]
            worst = np.maximum(below, above)
            r_pos = int(np.argmax(worst))
            if worst[r_pos] <= ftol:
                return None  # primal feasible: let the primal loop certify
            if cutoff is not None and -(self.c @ self.x) <= cutoff:
                return self._outcome("cutoff", self._iters)
            is_below = below[r_pos] >= above[r_pos]
            probe = np.zeros(self.m)
            probe[r_pos] = 1.0
            alpha = self.MT @ self._btran(probe)
            pi = self._btran(self.c[self.head])
            red = self.c - (self.MT @ pi)
            abar = alpha if is_below else -alpha
            movable = self.u > self.l
            at_low = (self.status == AT_LOWER) & movable & (abar < -ptol)
            at_up = (self.status == AT_UPPER) & movable & (abar > ptol)
            eligible = np.nonzero(at_low | at_up)[0]
            if eligible.size == 0:
                # dual ray: the subproblem is primal infeasible; let the
                # primal phase 1 certify that from scratch
                self.head = np.arange(self.n, self.total)
                self.status = self._default_status()
                self.status[self.head] = BASIC
                self.x = np.where(self.status == AT_UPPER, self.u, self.l)
                self.x[np.isinf(self.x)] = 0.0
                self._refactor()
                return None
            mags = np.where(at_low[eligible], red[eligible], -red[eligible])
            ratios = np.maximum(mags, 0.0) / np.abs(abar[eligible])
            order = np.lexsort((eligible, -np.abs(abar[eligible]), ratios))
            q = int(eligible[order[0]])
            alpha_q = alpha[q]
            if abs(alpha_q) < 1e-7:
                return None
            bound_r = (
                self.l[self.head[r_pos]] if is_below else self.u[self.head[r_pos]]
            )
            delta_q = (xb[r_pos] - bound_r) / alpha_q
            w = self._ftran(self._column(q))
            leaving = self.head[r_pos]
            self.x[self.head] -= delta_q * w
            self.x[q] = self.x[q] + delta_q
            self.x[leaving] = bound_r
            self.status[leaving] = AT_LOWER if is_below else AT_UPPER
            self.status[q] = BASIC
            self.head[r_pos] = q
            self.etas.append((r_pos, w))
            self._iters += 1

    def _update_devex(self, q: int, leave_pos: int, w: np.ndarray) -> None:
        """Forrest-Goldfarb devex weight update around one pivot."""
        alpha = w[leave_pos]
        if abs(alpha) < 1e-12:
            return
        probe = np.zeros(self.m)
        probe[leave_pos] = 1.0
        pivot_row = self.MT @ self._btran(probe)
        gamma_q = self.gamma[q]
        candidate = (pivot_row / alpha) ** 2 * gamma_q
        np.maximum(self.gamma, candidate, out=self.gamma)
        leaving = self.head[leave_pos]
        self.gamma[leaving] = max(gamma_q / alpha**2, self._gamma_init[leaving])
        if self.gamma.max() > 1e12:
            self.gamma = self._gamma_init.copy()

    def _outcome(self, status, iters):
        snapshot = BasisSnapshot(
            head=self.head.copy(),
            status=self.status.copy(),
            n_struct=self.n,
            n_rows=self.m,
        )
        return SimplexOutcome(
            status=status,
            values=self.x.copy(),
            iterations=iters,
            basis=snapshot,
        )
