"""Dense two-phase simplex with Bland's anti-cycling rule.

Problems here have a few dozen variables at most, so a full tableau is the
simplest thing that is exact enough for the property audits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LE, GE, EQ = "<=", ">=", "="

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


class LpError(RuntimeError):
    """The solver could not produce an optimum (infeasible, unbounded, stalled)."""

    def __init__(self, status: str, message: str):
        super().__init__(message)
        self.status = status


@dataclass
class LpProblem:
    """maximize ``c @ x`` subject to ``A[i] @ x (sense[i]) b[i]`` and bounds."""

    c: np.ndarray
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, self.c.size)
        self.b = np.asarray(self.b, dtype=float)
        n = self.c.size
        if self.A.shape[0] != self.b.size or len(self.senses) != self.b.size:
            raise ValueError(
                f"{self.A.shape[0]} rows, {self.b.size} right-hand sides, {len(self.senses)} senses")
        if any(s not in (LE, GE, EQ) for s in self.senses):
            raise ValueError(f"unknown row sense in {self.senses}")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds do not match the number of variables")
        for arr in (self.c, self.A, self.b, self.lower):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")
        if np.any(np.isnan(self.upper)) or np.any(self.upper < self.lower):
            raise ValueError("inconsistent variable bounds")


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    iterations: int
    degenerate: bool = field(default=False)


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])


def _run(T: np.ndarray, basis: list[int], allowed: int, max_iter: int) -> int:
    """Maximize the objective stored in the last row of ``T`` (reduced costs).

    The last row holds ``-reduced cost``; a negative entry can improve.
    Only the first ``allowed`` columns may enter.
    """
    it = 0
    nrows = T.shape[0] - 1
    while True:
        cost = T[-1, :allowed]
        candidates = np.nonzero(cost < -PIVOT_TOL)[0]
        if candidates.size == 0:
            return it
        if it >= max_iter:
            raise LpError("stalled", f"simplex did not converge in {max_iter} pivots")
        col = int(candidates[0])
        column = T[:nrows, col]
        positive = column > PIVOT_TOL
        if not positive.any():
            raise LpError("unbounded", "objective is unbounded")
        ratios = np.full(nrows, np.inf)
        ratios[positive] = T[:nrows, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + PIVOT_TOL * max(1.0, abs(best)))[0]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
        it += 1


def solve_lp(problem: LpProblem, max_iter: int = 50_000) -> LpResult:
    n = problem.c.size
    lower = problem.lower
    A = problem.A
    b = problem.b - A @ lower
    senses = list(problem.senses)
    rows = [A]
    rhs = [b]
    finite_ub = np.nonzero(np.isfinite(problem.upper))[0]
    if finite_ub.size:
        rows.append(np.eye(n)[finite_ub])
        rhs.append(problem.upper[finite_ub] - lower[finite_ub])
        senses += [LE] * finite_ub.size
    A = np.vstack(rows)
    b = np.concatenate(rhs)

    # flip rows so every right-hand side is nonnegative
    neg = b < 0
    A = np.where(neg[:, None], -A, A)
    b = np.where(neg, -b, b)
    senses = [{LE: GE, GE: LE, EQ: EQ}[s] if f else s for s, f in zip(senses, neg)]

    mrows = A.shape[0]
    n_slack = sum(s != EQ for s in senses)
    n_art = sum(s != LE for s in senses)
    total = n + n_slack + n_art
    T = np.zeros((mrows + 1, total + 1))
    T[:mrows, :n] = A
    T[:mrows, -1] = b
    basis = [0] * mrows
    si, ai = n, n + n_slack
    art_cols = []
    for r, s in enumerate(senses):
        if s == LE:
            T[r, si] = 1.0
            basis[r] = si
            si += 1
        else:
            if s == GE:
                T[r, si] = -1.0
                si += 1
            T[r, ai] = 1.0
            basis[r] = ai
            art_cols.append(ai)
            ai += 1

    iterations = 0
    if art_cols:
        # phase 1: maximize -sum(artificials)
        T[-1, :] = 0.0
        T[-1, art_cols] = 1.0
        for r, col in enumerate(basis):
            if col >= n + n_slack:
                T[-1] -= T[r]
        iterations += _run(T, basis, n + n_slack, max_iter)
        infeasibility = -T[-1, -1]
        if infeasibility > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            raise LpError("infeasible", f"no feasible point (phase-1 residual {infeasibility:.3g})")
        # drive remaining artificials out of the basis
        keep = []
        for r in range(mrows):
            if basis[r] < n + n_slack:
                keep.append(r)
                continue
            nz = np.nonzero(np.abs(T[r, :n + n_slack]) > PIVOT_TOL)[0]
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
                keep.append(r)
            # otherwise the row is redundant and is dropped
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[r] for r in keep]
        T = np.delete(T, art_cols, axis=1)

    # phase 2
    mrows = T.shape[0] - 1
    T[-1, :] = 0.0
    T[-1, :n] = -problem.c
    for r, col in enumerate(basis):
        if T[-1, col] != 0.0:
            T[-1] -= T[-1, col] * T[r]
    iterations += _run(T, basis, n + n_slack, max_iter)

    x = np.zeros(T.shape[1] - 1)
    for r, col in enumerate(basis):
        x[col] = T[r, -1]
    x = np.maximum(x[:n], 0.0) + lower
    degenerate = any(abs(T[r, -1]) <= PIVOT_TOL for r in range(mrows))
    return LpResult(x, float(problem.c @ x), iterations, degenerate)
