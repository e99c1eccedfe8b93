"""Thin linear-programming layer over HiGHS (through scipy).

Rows are appended in batches of sparse triplets and kept in insertion order,
so a model built from the same inputs is always the same matrix.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


class Sense(enum.Enum):
    LE = "<="
    EQ = "="


@dataclass
class LpSolution:
    status: Status
    values: np.ndarray | None
    objective: float | None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


class LpModel:
    """Minimisation LP with bounded variables and ``<=`` / ``=`` rows."""

    def __init__(self):
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._names: list[tuple[str, int, int]] = []
        self.n_vars = 0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.n_rows = 0
        self._obj_cols = np.zeros(0, dtype=np.int64)
        self._obj_vals = np.zeros(0)
        self._cache = None

    # variables ---------------------------------------------------------
    def add_variables(self, count: int, lb=0.0, ub=np.inf, name: str = "x") -> np.ndarray:
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (count,)).copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (count,)).copy()
        if np.any(lb > ub):
            raise ValueError("variable lower bound exceeds upper bound")
        idx = np.arange(self.n_vars, self.n_vars + count)
        self._lb.append(lb)
        self._ub.append(ub)
        self._names.append((name, self.n_vars, count))
        self.n_vars += count
        self._cache = None
        return idx

    def set_bounds(self, idx, lb, ub):
        lb_all, ub_all = self.bounds()
        lb_all[idx] = lb
        ub_all[idx] = ub
        if np.any(lb_all > ub_all):
            raise ValueError("variable lower bound exceeds upper bound")
        self._lb = [lb_all]
        self._ub = [ub_all]
        self._cache = None

    def bounds(self):
        lb = np.concatenate(self._lb) if self._lb else np.zeros(0)
        ub = np.concatenate(self._ub) if self._ub else np.zeros(0)
        return lb, ub

    def var_name(self, j: int) -> str:
        for name, start, count in self._names:
            if start <= j < start + count:
                return f"{name}_{j - start}" if count > 1 else name
        raise IndexError(j)

    # rows ----------------------------------------------------------------
    def add_rows(self, rows, cols, vals, sense, rhs) -> np.ndarray:
        """Append ``len(rhs)`` rows given as local triplets ``(row, col, val)``.

        ``sense`` is a :class:`Sense`, an array of them (one per row) or a
        boolean array flagging the equality rows.
        Returns the global indices of the new rows.
        """
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        k = rhs.size
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if rows.size and (rows.min() < 0 or rows.max() >= k):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise ValueError("constraint references an undeclared variable")
        if isinstance(sense, Sense):
            s = np.full(k, sense is Sense.EQ)
        elif isinstance(sense, np.ndarray) and sense.dtype == bool:
            s = sense.copy()
        else:
            s = np.array([x is Sense.EQ for x in sense])
        self._rows.append(rows + self.n_rows)
        self._cols.append(cols)
        self._vals.append(vals)
        self._sense.append(s)
        self._rhs.append(rhs)
        out = np.arange(self.n_rows, self.n_rows + k)
        self.n_rows += k
        self._cache = None
        return out

    def add_row(self, coeffs: dict, sense: Sense, rhs: float) -> int:
        cols = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
        vals = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        return int(self.add_rows(np.zeros(len(cols)), cols, vals, sense, [rhs])[0])

    def set_objective(self, coeffs: dict):
        self._obj_cols = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
        self._obj_vals = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        np.add.at(c, self._obj_cols, self._obj_vals)
        return c

    def matrix(self):
        """``(A, is_eq, rhs)`` with ``A`` in CSR form (duplicates summed)."""
        if self._cache is None:
            if self._rows:
                r = np.concatenate(self._rows)
                c = np.concatenate(self._cols)
                v = np.concatenate(self._vals)
                A = sparse.csr_matrix((v, (r, c)), shape=(self.n_rows, self.n_vars))
                A.sum_duplicates()
                is_eq = np.concatenate(self._sense)
                rhs = np.concatenate(self._rhs)
            else:
                A = sparse.csr_matrix((0, self.n_vars))
                is_eq = np.zeros(0, dtype=bool)
                rhs = np.zeros(0)
            self._cache = (A, is_eq, rhs)
        return self._cache

    # audit ---------------------------------------------------------------
    def max_violation(self, x) -> float:
        """Largest violation of any row or bound at ``x``."""
        A, is_eq, rhs = self.matrix()
        r = A @ x - rhs
        viol = np.where(is_eq, np.abs(r), np.maximum(r, 0.0))
        lb, ub = self.bounds()
        bviol = np.maximum(np.maximum(lb - x, x - ub), 0.0)
        parts = [viol.max(initial=0.0), bviol.max(initial=0.0)]
        return float(max(parts))

    def row_violations(self, x) -> np.ndarray:
        A, is_eq, rhs = self.matrix()
        r = A @ x - rhs
        return np.where(is_eq, np.abs(r), np.maximum(r, 0.0))

    # export --------------------------------------------------------------
    def write_lp(self, path):
        """Write the model in CPLEX LP text format."""
        A, is_eq, rhs = self.matrix()
        c = self.objective_vector()
        lb, ub = self.bounds()
        names = [f"x{j}" for j in range(self.n_vars)]

        def expr(cols, vals):
            parts = []
            for j, v in zip(cols, vals):
                if v == 0:
                    continue
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {float(abs(v))!r} {names[j]}")
            return " ".join(parts) if parts else "0 x0"

        with open(path, "w") as fh:
            fh.write("\\ written by pwa_barrier\nMinimize\n obj: ")
            nz = np.flatnonzero(c)
            fh.write(expr(nz, c[nz]) + "\nSubject To\n")
            A = A.tocsr()
            for i in range(self.n_rows):
                s, e = A.indptr[i], A.indptr[i + 1]
                op = "=" if is_eq[i] else "<="
                fh.write(f" c{i}: {expr(A.indices[s:e], A.data[s:e])} {op} {float(rhs[i])!r}\n")
            fh.write("Bounds\n")
            for j in range(self.n_vars):
                lo, hi = lb[j], ub[j]
                if lo == -np.inf and hi == np.inf:
                    fh.write(f" {names[j]} free\n")
                elif lo == hi:
                    fh.write(f" {names[j]} = {float(lo)!r}\n")
                else:
                    los = "-inf" if lo == -np.inf else repr(float(lo))
                    his = "+inf" if hi == np.inf else repr(float(hi))
                    fh.write(f" {los} <= {names[j]} <= {his}\n")
            fh.write("End\n")


_STATUS = {0: Status.OPTIMAL, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}


def solve(model: LpModel, tol: float = DEFAULT_TOL, method: str = "highs") -> LpSolution:
    """Solve ``model``; the returned status is never an exception."""
    A, is_eq, rhs = model.matrix()
    c = model.objective_vector()
    lb, ub = model.bounds()
    A_ub = A[~is_eq] if np.any(~is_eq) else None
    A_eq = A[is_eq] if np.any(is_eq) else None
    options = {"primal_feasibility_tolerance": tol,
               "dual_feasibility_tolerance": tol,
               "presolve": True}
    try:
        res = linprog(c,
                      A_ub=A_ub, b_ub=rhs[~is_eq] if A_ub is not None else None,
                      A_eq=A_eq, b_eq=rhs[is_eq] if A_eq is not None else None,
                      bounds=np.column_stack([lb, ub]) if model.n_vars else None,
                      method=method, options=options)
    except (ValueError, MemoryError) as exc:  # pragma: no cover - backend failure
        return LpSolution(Status.NUMERICAL_FAILURE, None, None, str(exc))
    status = _STATUS.get(res.status, Status.NUMERICAL_FAILURE)
    if status is not Status.OPTIMAL:
        return LpSolution(status, None, None, res.message)
    x = np.asarray(res.x, dtype=float)
    viol = model.max_violation(x)
    if viol > 10 * max(tol, 1e-9) * max(1.0, np.abs(rhs).max(initial=1.0)):
        logger.warning("solver point violates the model by %.3g", viol)
    return LpSolution(status, x, float(c @ x), res.message)
