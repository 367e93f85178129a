"""Dense two-phase primal simplex.

Solves ``maximize c @ x`` subject to ``A_eq @ x == b_eq``, ``A_ub @ x <= b_ub``,
``0 <= x <= upper``. Upper bounds become explicit slack rows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import EdgeSliceError

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
# consecutive degenerate pivots tolerated before switching to Bland's rule
DEGENERATE_STREAK = 20


class DimensionError(EdgeSliceError, ValueError):
    pass


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpProblem:
    objective: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        self.A_eq, self.b_eq = _pair(self.A_eq, self.b_eq, n, "eq")
        self.A_ub, self.b_ub = _pair(self.A_ub, self.b_ub, n, "ub")
        if self.upper is not None:
            self.upper = np.asarray(self.upper, dtype=float).ravel()
            if self.upper.size != n:
                raise DimensionError(f"upper has {self.upper.size} entries, expected {n}")
            if np.any(np.isnan(self.upper)):
                raise DimensionError("upper bounds must not be NaN")
        for arr in (self.objective, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(arr)):
                raise DimensionError("LP data must be finite")

    @property
    def n(self) -> int:
        return self.objective.size

    def residuals(self, x: np.ndarray) -> float:
        """Largest constraint violation of ``x`` (0 when feasible)."""
        worst = float(max(0.0, -x.min(initial=0.0)))
        if self.A_eq.shape[0]:
            worst = max(worst, float(np.abs(self.A_eq @ x - self.b_eq).max()))
        if self.A_ub.shape[0]:
            worst = max(worst, float((self.A_ub @ x - self.b_ub).max(initial=0.0)))
        if self.upper is not None:
            worst = max(worst, float((x - self.upper).max(initial=0.0)))
        return worst


def _pair(A, b, n, name):
    if A is None and b is None:
        return np.zeros((0, n)), np.zeros(0)
    if A is None or b is None:
        raise DimensionError(f"A_{name} and b_{name} must be given together")
    A = np.asarray(A, dtype=float)
    if A.ndim == 1 and A.size == 0:
        A = A.reshape(0, n)
    b = np.asarray(b, dtype=float).ravel()
    if A.ndim != 2 or A.shape[1] != n:
        raise DimensionError(f"A_{name} has shape {A.shape}, expected (*, {n})")
    if A.shape[0] != b.size:
        raise DimensionError(f"A_{name} has {A.shape[0]} rows but b_{name} has {b.size}")
    return A, b


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    pivots: int

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Tableau with the objective row last; rhs in the last column.

    The objective row holds ``c_B B^-1 A_j - c_j`` so a negative entry is an
    improving column for maximization.
    """

    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.pivots = 0
        self.bland = False
        self.streak = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        prow = T[row] / T[row, col]
        T -= np.outer(T[:, col], prow)
        T[row] = prow
        self.basis[row] = col
        self.pivots += 1

    def entering(self, ncols: int) -> int | None:
        z = self.T[-1, :ncols]
        if z.size == 0:
            return None
        if self.bland:
            cand = np.flatnonzero(z < -FEAS_TOL)
            return int(cand[0]) if cand.size else None
        j = int(np.argmin(z))
        return j if z[j] < -FEAS_TOL else None

    def leaving(self, col: int) -> int | None:
        a = self.T[:-1, col]
        rhs = self.T[:-1, -1]
        rows = np.flatnonzero(a > PIVOT_TOL)
        if rows.size == 0:
            return None
        ratios = rhs[rows] / a[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL]
        # smallest basic variable index among ties
        return int(min(ties, key=lambda i: self.basis[i]))

    def run(self, ncols: int) -> bool:
        """Iterate to optimality over the first ``ncols`` columns.

        Returns False if the objective is unbounded.
        """
        while True:
            col = self.entering(ncols)
            if col is None:
                return True
            row = self.leaving(col)
            if row is None:
                return False
            degenerate = self.T[row, -1] <= PIVOT_TOL
            self.pivot(row, col)
            self.streak = self.streak + 1 if degenerate else 0
            if self.streak >= DEGENERATE_STREAK:
                self.bland = True


def _phase_one(p: LpProblem):
    """Build the phase-1 tableau and drive it to a feasible basis.

    Returns ``(tableau, None)`` or ``(None, pivots)`` when infeasible.
    """
    n = p.n
    A_rows = [p.A_ub]
    b_rows = [p.b_ub]
    if p.upper is not None:
        finite = np.flatnonzero(np.isfinite(p.upper))
        A_rows.append(np.eye(n)[finite])
        b_rows.append(p.upper[finite])
    A_le = np.vstack(A_rows)
    b_le = np.concatenate(b_rows)
    m_le, m_eq = A_le.shape[0], p.A_eq.shape[0]
    m = m_le + m_eq

    # columns: structural | slacks | artificials | rhs
    neg_le = b_le < 0
    need_art = np.concatenate([neg_le, np.ones(m_eq, dtype=bool)])
    n_art = int(need_art.sum())
    ncols = n + m_le + n_art
    T = np.zeros((m + 1, ncols + 1))
    T[:m_le, :n] = A_le
    T[:m_le, n:n + m_le] = np.eye(m_le)
    T[:m_le, -1] = b_le
    T[m_le:m, :n] = p.A_eq
    T[m_le:m, -1] = p.b_eq
    flip = np.concatenate([neg_le, p.b_eq < 0])
    T[:m][flip] *= -1

    basis = []
    art_rows = np.flatnonzero(need_art)
    art_col = dict(zip(art_rows.tolist(), range(n + m_le, ncols)))
    for i in range(m):
        if i in art_col:
            T[i, art_col[i]] = 1.0
            basis.append(art_col[i])
        else:
            basis.append(n + i)

    tab = _Tableau(T, basis)
    if n_art:
        # maximize -sum(artificials)
        T[-1, n + m_le:ncols] = 1.0
        for i in art_rows:
            T[-1] -= T[i]
        tab.run(ncols)
        if T[-1, -1] < -FEAS_TOL * max(1.0, np.abs(p.b_eq).max(initial=0.0), np.abs(b_le).max(initial=0.0)):
            return None, tab.pivots
        # pivot remaining artificials out of the basis, dropping redundant rows
        first_art = n + m_le
        keep = []
        for i in range(m):
            if tab.basis[i] >= first_art:
                cand = np.flatnonzero(np.abs(T[i, :first_art]) > PIVOT_TOL)
                if cand.size:
                    tab.pivot(i, int(cand[0]))
                    keep.append(i)
            else:
                keep.append(i)
        rows = keep + [m]
        tab.T = np.ascontiguousarray(np.delete(T[rows], np.s_[first_art:ncols], axis=1))
        tab.basis = [tab.basis[i] for i in keep]
    tab.bland = False
    tab.streak = 0
    return tab, None


def _extract(tab: _Tableau, n: int) -> np.ndarray:
    x = np.zeros(n)
    for i, j in enumerate(tab.basis):
        if j < n:
            x[j] = tab.T[i, -1]
    return np.maximum(x, 0.0)


def solve_lp(p: LpProblem) -> LpResult:
    """Maximize ``p.objective`` with the two-phase simplex method."""
    tab, spent = _phase_one(p)
    if tab is None:
        return LpResult(LpStatus.INFEASIBLE, None, float("nan"), spent)
    n = p.n
    phase1 = tab.pivots
    ncols = tab.T.shape[1] - 1
    c = np.zeros(ncols)
    c[:n] = p.objective
    tab.T[-1, :] = 0.0
    tab.T[-1, :ncols] = -c
    for i, j in enumerate(tab.basis):
        if c[j] != 0.0:
            tab.T[-1] += c[j] * tab.T[i]
    tab.pivots = 0
    bounded = tab.run(ncols)
    pivots = phase1 + tab.pivots
    if not bounded:
        return LpResult(LpStatus.UNBOUNDED, None, float("inf"), pivots)
    x = _extract(tab, n)
    return LpResult(LpStatus.OPTIMAL, x, float(p.objective @ x), pivots)


def find_feasible(p: LpProblem) -> LpResult:
    """Any point satisfying the constraints of ``p`` (objective ignored)."""
    tab, spent = _phase_one(p)
    if tab is None:
        return LpResult(LpStatus.INFEASIBLE, None, float("nan"), spent)
    x = _extract(tab, p.n)
    return LpResult(LpStatus.OPTIMAL, x, 0.0, tab.pivots)
