"""
Linear programs and a bounded-variable revised simplex solver.

Programs are stated in maximize form:

    maximize    cᵀx
    subject to  A_i x  (=, <=, >=)  b_i     for every row i
                l_j <= x_j <= u_j           (bounds may be infinite)

Internally each row gets a logical variable s_i with A_i x + s_i = b_i and
bounds [0, 0] for '=', [0, ∞) for '<=', (-∞, 0] for '>='. Rows whose
starting residual violates those bounds get an artificial column, and a
phase-1 program minimizes the sum of artificials.

Solver Properties:
- Dense LU of the basis, refactored every iteration, then one step of
  iterative refinement on the final basis
- Dantzig pricing. After ``stall_limit`` pivots without objective gain the
  bounds of the basic variables are widened by a random amount of order
  ``perturbation``; the original bounds are restored at the end of the
  phase and a dual simplex pass removes the leftover infeasibility
- Bland's rule when no basic variable is left to widen (or perturbation is
  0), kept until the objective improves by more than ``optimality``
- Bounded ratio test with bound flips
- Deterministic: identical programs give identical solutions

Infeasibility:
    The phase-1 row prices y at a positive optimum satisfy
    yᵀb > sup over the bounds of yᵀ[A I]x, which is a Farkas certificate.
    ``extract_farkas`` returns it normalized to max|y| = 1.

Usage:
    lp = LinearProgram("demo")
    x = lp.add_variable("x")
    y = lp.add_variable("y")
    lp.add_constraint("cap", [x, y], [1.0, 1.0], Relation.LE, 4.0)
    lp.set_objective({x: 2.0, y: 3.0})
    sol = solve(lp)
"""
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve

from .logging import DebugLogger, performance_trace
from .types import SolverTolerances
from .utils import decimal_str

INF = math.inf

# nonbasic states
_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3

_DEGENERATE_STEP = 1e-12
_SINGULAR_PIVOT = 1e-13


class LpError(Exception):
    """Malformed linear program."""


class LpNumericalError(LpError):
    """Solver could not meet its residual tolerances."""


class FarkasError(LpError):
    """No valid infeasibility ray could be extracted."""


class Relation(str, Enum):
    EQ = "="
    LE = "<="
    GE = ">="


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0
    upper: float = INF


@dataclass(frozen=True)
class Constraint:
    name: str
    indices: np.ndarray
    values: np.ndarray
    relation: Relation
    rhs: float


class LinearProgram:
    """Sparse maximize-form linear program built row by row.

    Attributes:
        name: Label used in dumps and logs
        variables: Declared columns in index order
        constraints: Declared rows in index order
        metadata: Free-form annotations for callers (the builder records
            the experiment, frequencies and scenario here)
    """

    def __init__(self, name: str = "lp"):
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self._objective: Dict[int, float] = {}
        self._index: Dict[str, int] = {}
        self._row_index: Dict[str, int] = {}
        self.metadata: Dict[str, Any] = {}

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def add_variable(self, name: str, lower: float = 0.0, upper: float = INF) -> int:
        if name in self._index:
            raise LpError(f"duplicate variable name {name!r}")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, float(lower), float(upper)))
        return len(self.variables) - 1

    def add_constraint(
        self,
        name: str,
        indices: Sequence[int],
        values: Sequence[float],
        relation: Relation,
        rhs: float,
    ) -> int:
        if name in self._row_index:
            raise LpError(f"duplicate constraint name {name!r}")
        idx = np.asarray(indices, dtype=np.int64)
        val = np.asarray(values, dtype=float)
        if idx.shape != val.shape or idx.ndim != 1:
            raise LpError(f"constraint {name!r}: indices and values must be 1-d and equally long")
        self._row_index[name] = len(self.constraints)
        self.constraints.append(Constraint(name, idx, val, Relation(relation), float(rhs)))
        return len(self.constraints) - 1

    def set_objective(self, coefficients: Mapping[int, float]) -> None:
        self._objective = {int(j): float(v) for j, v in coefficients.items()}

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LpError(f"unknown variable {name!r}") from None

    def row_of(self, name: str) -> int:
        try:
            return self._row_index[name]
        except KeyError:
            raise LpError(f"unknown constraint {name!r}") from None

    # array views -------------------------------------------------------

    def matrix(self) -> sp.csr_matrix:
        """Constraint matrix (rows x variables); duplicate entries are summed."""
        m, n = self.n_constraints, self.n_variables
        if m == 0:
            return sp.csr_matrix((0, n))
        rows = np.concatenate([np.full(len(c.indices), i, dtype=np.int64) for i, c in enumerate(self.constraints)])
        cols = np.concatenate([c.indices for c in self.constraints])
        vals = np.concatenate([c.values for c in self.constraints])
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))

    def rhs(self) -> np.ndarray:
        return np.array([c.rhs for c in self.constraints], dtype=float)

    def relations(self) -> List[Relation]:
        return [c.relation for c in self.constraints]

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.array([v.lower for v in self.variables], dtype=float)
        hi = np.array([v.upper for v in self.variables], dtype=float)
        return lo, hi

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_variables)
        for j, v in self._objective.items():
            c[j] = v
        return c

    def validate(self) -> None:
        """Raise LpError on NaN, infinite coefficients, bad indices or empty boxes."""
        n = self.n_variables
        for v in self.variables:
            if math.isnan(v.lower) or math.isnan(v.upper):
                raise LpError(f"variable {v.name!r} has a NaN bound")
            if v.lower > v.upper:
                raise LpError(f"variable {v.name!r} has lower {v.lower} > upper {v.upper}")
            if v.lower == INF or v.upper == -INF:
                raise LpError(f"variable {v.name!r} has an empty bound box")
        for c in self.constraints:
            if len(c.indices) and (c.indices.min() < 0 or c.indices.max() >= n):
                raise LpError(f"constraint {c.name!r} references an undeclared variable")
            if not np.all(np.isfinite(c.values)):
                raise LpError(f"constraint {c.name!r} has a non-finite coefficient")
            if not math.isfinite(c.rhs):
                raise LpError(f"constraint {c.name!r} has a non-finite right-hand side")
        for j, v in self._objective.items():
            if not 0 <= j < n:
                raise LpError(f"objective references undeclared variable {j}")
            if not math.isfinite(v):
                raise LpError(f"objective coefficient of {self.variables[j].name!r} is not finite")

    # interchange -------------------------------------------------------

    def to_lp_format(self) -> str:
        """CPLEX LP text.

        Names are rewritten to [A-Za-z0-9_.] (a leading digit or '.' gets an
        ``_`` prefix, collisions get ``__<index>``). Terms are written with
        shortest round-trip decimals, eight per line.
        """
        vnames = _lp_names([v.name for v in self.variables])
        rnames = _lp_names([c.name for c in self.constraints])

        def terms(pairs) -> List[str]:
            out = []
            for j, v in pairs:
                sign = "-" if v < 0 else "+"
                out.append(f"{sign} {decimal_str(abs(v))} {vnames[j]}")
            if not out and self.variables:
                out.append(f"+ 0.0 {vnames[0]}")
            return out

        def wrap(head: str, items: List[str], tail: str = "") -> List[str]:
            lines = []
            for start in range(0, max(len(items), 1), 8):
                chunk = " ".join(items[start:start + 8])
                lines.append((f" {head} " if start == 0 else "   ") + chunk)
            if tail:
                lines[-1] += f" {tail}"
            return lines

        out = [f"\\ detlp: {self.name}", "Maximize"]
        out += wrap("obj:", terms(sorted(self._objective.items())))
        out.append("Subject To")
        for name, c in zip(rnames, self.constraints):
            pairs = list(zip(c.indices.tolist(), c.values.tolist()))
            out += wrap(f"{name}:", terms(pairs), f"{c.relation.value} {decimal_str(c.rhs)}")
        out.append("Bounds")
        for name, v in zip(vnames, self.variables):
            if v.lower == 0.0 and v.upper == INF:
                continue
            if v.lower == -INF and v.upper == INF:
                out.append(f" {name} free")
                continue
            lo = "-inf" if v.lower == -INF else decimal_str(v.lower)
            hi = "+inf" if v.upper == INF else decimal_str(v.upper)
            out.append(f" {lo} <= {name} <= {hi}")
        out.append("End")
        return "\n".join(out) + "\n"


def _lp_names(names: Sequence[str]) -> List[str]:
    out, seen = [], set()
    for i, name in enumerate(names):
        clean = re.sub(r"[^A-Za-z0-9_.]", "_", name) or "_"
        if clean[0].isdigit() or clean[0] == ".":
            clean = "_" + clean
        if clean in seen:
            clean = f"{clean}__{i}"
        seen.add(clean)
        out.append(clean)
    return out


@dataclass
class FarkasRay:
    """Row multipliers proving infeasibility: yᵀb - sup_box yᵀAx = margin > 0."""
    y: np.ndarray
    margin: float


@dataclass
class LpSolution:
    """Result of a solve.

    Duals follow the maximize sense: reduced_costs = c - Aᵀ duals, and at
    an optimum dual_objective equals objective up to the residuals.
    """
    status: LpStatus
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    dual_objective: float
    iterations: int
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    cs_residual: float = 0.0
    farkas: Optional[FarkasRay] = None
    phase_one_iterations: int = 0

    @property
    def duality_gap(self) -> float:
        return self.dual_objective - self.objective


@dataclass
class _Work:
    """Mutable state of one simplex run over [A | I | artificials]."""
    M: sp.csc_matrix
    MT: sp.csr_matrix
    b: np.ndarray
    L: np.ndarray
    U: np.ndarray
    x: np.ndarray
    basis: np.ndarray
    state: np.ndarray
    n: int
    m: int
    artificials: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    iterations: int = 0


class SimplexSolver:
    """Two-phase bounded revised simplex.

    Args:
        tolerances: Feasibility, optimality and pivot tolerances plus limits
        logger: Optional DebugLogger for solve events
    """

    def __init__(self, tolerances: Optional[SolverTolerances] = None, logger: Optional[DebugLogger] = None):
        self.tol = tolerances or SolverTolerances()
        self.logger = logger

    @performance_trace()
    def solve(self, lp: LinearProgram) -> LpSolution:
        lp.validate()
        w = self._setup(lp)
        c = lp.objective_vector()
        b_scale = max(1.0, float(np.max(np.abs(w.b)))) if w.m else 1.0

        phase_one = 0
        if len(w.artificials):
            cost1 = np.zeros(len(w.x))
            cost1[w.artificials] = 1.0
            status, pi = self._iterate(w, cost1, phase=1)
            phase_one = w.iterations
            infeasibility = float(np.sum(w.x[w.artificials]))
            if infeasibility > self.tol.feasibility * b_scale:
                return self._infeasible(lp, w, pi, infeasibility, phase_one)
            w.U[w.artificials] = 0.0
            w.x[w.artificials] = np.minimum(w.x[w.artificials], 0.0)

        cost2 = np.zeros(len(w.x))
        cost2[: w.n] = -c
        status, pi = self._iterate(w, cost2, phase=2)
        if status == LpStatus.UNBOUNDED:
            if self.logger is not None:
                self.logger.info("lp_solved", {"lp": lp.name, "status": "unbounded", "iterations": w.iterations})
            x = w.x[: w.n].copy()
            return LpSolution(
                LpStatus.UNBOUNDED, x, np.zeros(w.m), np.zeros(w.n), INF, INF, w.iterations,
                phase_one_iterations=phase_one,
            )

        pi = self._refine(w, cost2)
        return self._optimal(lp, w, c, pi, phase_one)

    # setup ---------------------------------------------------------------

    def _setup(self, lp: LinearProgram) -> _Work:
        A = lp.matrix().tocsc()
        m, n = A.shape
        b = lp.rhs()
        lo, hi = lp.bounds()
        rel = lp.relations()
        s_lo = np.array([-INF if r == Relation.GE else 0.0 for r in rel])
        s_hi = np.array([INF if r == Relation.LE else 0.0 for r in rel])

        x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        state0 = np.where(np.isfinite(lo), _LOWER, np.where(np.isfinite(hi), _UPPER, _FREE))
        resid = b - A @ x0 if m else np.zeros(0)

        feas = self.tol.feasibility
        slack_ok = (resid >= s_lo - feas) & (resid <= s_hi + feas)
        art_rows = np.flatnonzero(~slack_ok)
        n_art = len(art_rows)
        signs = np.sign(resid[art_rows])
        art = sp.csc_matrix((signs, (art_rows, np.arange(n_art))), shape=(m, n_art))

        blocks = [A]
        if m:
            blocks.append(sp.identity(m, format="csc"))
        if n_art:
            blocks.append(art)
        M = sp.hstack(blocks, format="csc") if len(blocks) > 1 else A
        L = np.concatenate([lo, s_lo, np.zeros(n_art)])
        U = np.concatenate([hi, s_hi, np.full(n_art, INF)])

        x = np.concatenate([x0, np.zeros(m), np.abs(resid[art_rows])])
        state = np.concatenate([state0, np.zeros(m, dtype=np.int64), np.zeros(n_art, dtype=np.int64)]).astype(np.int64)
        basis = np.empty(m, dtype=np.int64)
        for i in range(m):
            if slack_ok[i]:
                basis[i] = n + i
                x[n + i] = resid[i]
            else:
                # nonbasic logicals sit on their finite bound, which is 0
                state[n + i] = _UPPER if rel[i] == Relation.GE else _LOWER
        basis[art_rows] = n + m + np.arange(n_art)
        state[basis] = _BASIC
        artificials = n + m + np.arange(n_art, dtype=np.int64)
        return _Work(M, M.T.tocsr(), b, L, U, x, basis, state, n, m, artificials)

    # core loop -----------------------------------------------------------

    def _factor(self, w: _Work):
        B = w.M[:, w.basis].toarray()
        lu, piv = lu_factor(B, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.size and diag.min() <= _SINGULAR_PIVOT * max(1.0, diag.max()):
            raise LpNumericalError("basis matrix became singular")
        return lu, piv

    def _primal(self, w: _Work, factor) -> None:
        xn = w.x.copy()
        xn[w.basis] = 0.0
        w.x[w.basis] = lu_solve(factor, w.b - w.M @ xn, check_finite=False)

    def _iterate(self, w: _Work, cost: np.ndarray, phase: int) -> Tuple[LpStatus, np.ndarray]:
        """Minimize cost over the current work state.

        Stalls are broken by widening the bounds of the basic variables by a
        small random amount. Once the widened program is optimal the original
        bounds come back, the dual simplex removes the resulting primal
        infeasibility, and a last primal pass confirms optimality.
        """
        if w.m == 0:
            return self._iterate_unconstrained(w, cost)
        L0, U0 = w.L.copy(), w.U.copy()
        status, pi, perturbed = self._primal_loop(w, cost, phase, perturb=self.tol.perturbation > 0.0)
        if not perturbed:
            return status, pi

        w.L, w.U = L0, U0
        at_lower = w.state == _LOWER
        at_upper = w.state == _UPPER
        w.x[at_lower] = w.L[at_lower]
        w.x[at_upper] = w.U[at_upper]
        if status == LpStatus.UNBOUNDED:
            return status, pi
        start = w.iterations
        self._dual_cleanup(w, cost, phase)
        status, pi, _ = self._primal_loop(w, cost, phase, perturb=False)
        if self.logger is not None:
            self.logger.debug("bounds_restored", {"phase": phase, "cleanup_iterations": w.iterations - start})
        return status, pi

    def _primal_loop(
        self, w: _Work, cost: np.ndarray, phase: int, perturb: bool
    ) -> Tuple[LpStatus, np.ndarray, bool]:
        tol = self.tol
        bland = False
        perturbed = False
        stalled = 0
        last = INF
        touched = np.zeros(len(w.x), dtype=bool)
        rng = np.random.default_rng(phase)

        while True:
            if w.iterations >= tol.max_iterations:
                raise LpNumericalError(f"iteration limit {tol.max_iterations} reached in phase {phase}")

            factor = self._factor(w)
            self._primal(w, factor)
            value = float(cost @ w.x)
            if last - value > tol.optimality * max(1.0, abs(value)):
                stalled = 0
                bland = False
            else:
                stalled += 1
            last = value

            pi = lu_solve(factor, cost[w.basis], trans=1, check_finite=False)
            d = cost - w.MT @ pi

            movable = w.U > w.L
            inc = (((w.state == _LOWER) & movable) | (w.state == _FREE)) & (d < -tol.optimality)
            dec = (((w.state == _UPPER) & movable) | (w.state == _FREE)) & (d > tol.optimality)
            candidates = np.flatnonzero(inc | dec)
            if candidates.size == 0:
                return LpStatus.OPTIMAL, pi, perturbed

            if stalled >= tol.stall_limit and not bland:
                if perturb and self._perturb(w, touched, rng):
                    perturbed = True
                    stalled = 0
                    if self.logger is not None:
                        self.logger.debug("bounds_perturbed", {
                            "phase": phase, "iteration": w.iterations, "variables": int(touched.sum()),
                        })
                else:
                    bland = True
                    if self.logger is not None:
                        self.logger.warning("bland_rule_engaged", {"phase": phase, "iteration": w.iterations})

            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(d[candidates]))])
            direction = 1.0 if d[q] < 0 else -1.0

            col = w.M[:, q].toarray().ravel()
            alpha = lu_solve(factor, col, check_finite=False)
            rate = direction * alpha
            xb = w.x[w.basis]
            lb = w.L[w.basis]
            ub = w.U[w.basis]

            limits = np.full(w.m, INF)
            down = (rate > tol.pivot) & np.isfinite(lb)
            up = (rate < -tol.pivot) & np.isfinite(ub)
            limits[down] = np.maximum(xb[down] - lb[down], 0.0) / rate[down]
            limits[up] = np.maximum(ub[up] - xb[up], 0.0) / -rate[up]
            theta_ratio = float(limits.min())
            theta_flip = float(w.U[q] - w.L[q]) if np.isfinite(w.L[q]) and np.isfinite(w.U[q]) else INF

            if theta_ratio == INF and theta_flip == INF:
                return LpStatus.UNBOUNDED, pi, perturbed

            w.iterations += 1
            if theta_flip <= theta_ratio:
                w.x[q] = w.U[q] if direction > 0 else w.L[q]
                w.state[q] = _UPPER if direction > 0 else _LOWER
                continue

            ties = np.flatnonzero(limits <= theta_ratio + _DEGENERATE_STEP)
            if bland:
                r = int(ties[np.argmin(w.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = int(w.basis[r])
            w.x[q] += direction * theta_ratio
            if rate[r] > 0:
                w.x[leaving] = w.L[leaving]
                w.state[leaving] = _LOWER
            else:
                w.x[leaving] = w.U[leaving]
                w.state[leaving] = _UPPER
            w.basis[r] = q
            w.state[q] = _BASIC

    def _perturb(self, w: _Work, touched: np.ndarray, rng: np.random.Generator) -> bool:
        """Widen the finite bounds of basic variables not widened yet; False if none are left."""
        idx = w.basis[~touched[w.basis]]
        touched[idx] = True
        lo, hi = w.L[idx], w.U[idx]
        fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
        if not (fin_lo.any() or fin_hi.any()):
            return False
        base = self.tol.perturbation
        r = rng.random((2, idx.size))
        w.L[idx[fin_lo]] = lo[fin_lo] - base * (1.0 + np.abs(lo[fin_lo])) * (1.0 + r[0][fin_lo])
        w.U[idx[fin_hi]] = hi[fin_hi] + base * (1.0 + np.abs(hi[fin_hi])) * (1.0 + r[1][fin_hi])
        return True

    def _dual_cleanup(self, w: _Work, cost: np.ndarray, phase: int) -> None:
        """Dual simplex from a dual-feasible basis until the basic variables are within bounds."""
        tol = self.tol
        target = 0.1 * tol.feasibility
        while True:
            if w.iterations >= tol.max_iterations:
                raise LpNumericalError(f"iteration limit {tol.max_iterations} reached in phase {phase}")

            factor = self._factor(w)
            self._primal(w, factor)
            xb = w.x[w.basis]
            below = w.L[w.basis] - xb
            above = xb - w.U[w.basis]
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= target:
                return
            raise_r = below[r] > above[r]

            pi = lu_solve(factor, cost[w.basis], trans=1, check_finite=False)
            d = cost - w.MT @ pi
            e = np.zeros(w.m)
            e[r] = 1.0
            # row r of B^-1 [A I art]; moving x_j up by t moves x_Br by -alpha_j t
            alpha = w.MT @ lu_solve(factor, e, trans=1, check_finite=False)

            movable = w.U > w.L
            can_inc = ((w.state == _LOWER) & movable) | (w.state == _FREE)
            can_dec = ((w.state == _UPPER) & movable) | (w.state == _FREE)
            if raise_r:
                inc = can_inc & (alpha < -tol.pivot)
                dec = can_dec & (alpha > tol.pivot)
            else:
                inc = can_inc & (alpha > tol.pivot)
                dec = can_dec & (alpha < -tol.pivot)
            ratio = np.full(len(w.x), INF)
            ratio[inc] = np.maximum(d[inc], 0.0) / np.abs(alpha[inc])
            ratio[dec] = np.minimum(ratio[dec], np.maximum(-d[dec], 0.0) / np.abs(alpha[dec]))
            best = float(ratio.min())
            if best == INF:
                raise LpNumericalError(f"no entering column while restoring bounds in phase {phase}")
            ties = np.flatnonzero(ratio <= best + tol.optimality)
            q = int(ties[np.argmax(np.abs(alpha[ties]))])

            leaving = int(w.basis[r])
            if raise_r:
                w.x[leaving] = w.L[leaving]
                w.state[leaving] = _LOWER
            else:
                w.x[leaving] = w.U[leaving]
                w.state[leaving] = _UPPER
            w.basis[r] = q
            w.state[q] = _BASIC
            w.iterations += 1

    def _iterate_unconstrained(self, w: _Work, cost: np.ndarray) -> Tuple[LpStatus, np.ndarray]:
        for j in range(len(w.x)):
            if cost[j] < 0:
                if w.U[j] == INF:
                    return LpStatus.UNBOUNDED, np.zeros(0)
                w.x[j], w.state[j] = w.U[j], _UPPER
            elif cost[j] > 0:
                if w.L[j] == -INF:
                    return LpStatus.UNBOUNDED, np.zeros(0)
                w.x[j], w.state[j] = w.L[j], _LOWER
        return LpStatus.OPTIMAL, np.zeros(0)

    def _refine(self, w: _Work, cost: np.ndarray) -> np.ndarray:
        if w.m == 0:
            return np.zeros(0)
        factor = self._factor(w)
        self._primal(w, factor)
        resid = w.b - w.M @ w.x
        w.x[w.basis] += lu_solve(factor, resid, check_finite=False)
        return lu_solve(factor, cost[w.basis], trans=1, check_finite=False)

    # results -------------------------------------------------------------

    def _infeasible(self, lp: LinearProgram, w: _Work, pi: np.ndarray, infeasibility: float, phase_one: int) -> LpSolution:
        scale = float(np.max(np.abs(pi))) if pi.size else 0.0
        ray = None
        if scale > 0.0:
            y = pi / scale
            ray = FarkasRay(y, farkas_margin(lp, y, self.tol.optimality))
        if self.logger is not None:
            self.logger.info("lp_solved", {
                "lp": lp.name, "status": "infeasible", "iterations": w.iterations,
                "phase_one_infeasibility": infeasibility,
                "farkas_margin": None if ray is None else ray.margin,
            })
        n = w.n
        return LpSolution(
            LpStatus.INFEASIBLE, w.x[:n].copy(), np.zeros(w.m), np.zeros(n), -INF, -INF,
            w.iterations, farkas=ray, phase_one_iterations=phase_one,
        )

    def _optimal(self, lp: LinearProgram, w: _Work, c: np.ndarray, pi: np.ndarray, phase_one: int) -> LpSolution:
        n, m = w.n, w.m
        A = w.M[:, :n]
        x = w.x[:n].copy()
        lo, hi = w.L[:n], w.U[:n]
        b = w.b
        y = -pi
        red = c - (A.T @ y if m else np.zeros(n))
        objective = float(c @ x)

        ax = A @ x if m else np.zeros(0)
        rel = lp.relations()
        eq = np.array([r == Relation.EQ for r in rel], dtype=bool)
        le = np.array([r == Relation.LE for r in rel], dtype=bool)
        ge = np.array([r == Relation.GE for r in rel], dtype=bool)

        row_viol = np.zeros(m)
        row_viol[eq] = np.abs(ax[eq] - b[eq])
        row_viol[le] = np.maximum(ax[le] - b[le], 0.0)
        row_viol[ge] = np.maximum(b[ge] - ax[ge], 0.0)
        bound_viol = np.maximum(np.maximum(lo - x, x - hi), 0.0)
        b_scale = max(1.0, float(np.max(np.abs(b)))) if m else 1.0
        primal_res = max(_max(row_viol), _max(bound_viol)) / b_scale

        dual_viol = np.zeros(n)
        dual_viol[hi == INF] = np.maximum(red[hi == INF], 0.0)
        dual_viol[lo == -INF] = np.maximum(dual_viol[lo == -INF], np.maximum(-red[lo == -INF], 0.0))
        row_dual_viol = np.zeros(m)
        row_dual_viol[le] = np.maximum(-y[le], 0.0)
        row_dual_viol[ge] = np.maximum(y[ge], 0.0)
        c_scale = max(1.0, float(np.max(np.abs(c)))) if n else 1.0
        dual_res = max(_max(dual_viol), _max(row_dual_viol)) / c_scale

        gap = np.zeros(n)
        pos = red > 0
        neg = red < 0
        gap[pos & np.isfinite(hi)] = (hi - x)[pos & np.isfinite(hi)]
        gap[neg & np.isfinite(lo)] = (x - lo)[neg & np.isfinite(lo)]
        cs_cols = np.abs(red) * np.abs(gap)
        cs_rows = np.abs(y) * np.abs(b - ax)
        cs_rows[eq] = 0.0
        cs_res = max(_max(cs_cols), _max(cs_rows)) / max(1.0, abs(objective))

        dual_objective = float(y @ b) + _box_sup(red, lo, hi, self.tol.optimality * c_scale)

        sol = LpSolution(
            LpStatus.OPTIMAL, x, y, red, objective, dual_objective, w.iterations,
            primal_res, dual_res, cs_res, phase_one_iterations=phase_one,
        )
        if self.logger is not None:
            self.logger.info("lp_solved", {
                "lp": lp.name, "status": "optimal", "iterations": w.iterations,
                "phase_one_iterations": phase_one, "objective": objective,
                "primal_residual": primal_res, "dual_residual": dual_res, "cs_residual": cs_res,
            })
        limit = self.tol.feasibility
        if primal_res > limit or dual_res > limit or cs_res > limit:
            if self.logger is not None:
                self.logger.error("lp_residuals", {
                    "lp": lp.name, "primal": primal_res, "dual": dual_res, "cs": cs_res,
                })
            raise LpNumericalError(
                f"residuals above {limit:g} after refinement: primal {primal_res:.3e}, "
                f"dual {dual_res:.3e}, complementary slackness {cs_res:.3e}"
            )
        return sol


def _max(a: np.ndarray) -> float:
    return float(a.max()) if a.size else 0.0


def _box_sup(a: np.ndarray, lo: np.ndarray, hi: np.ndarray, tol: float) -> float:
    """Σ_j sup_{lo_j <= x_j <= hi_j} a_j x_j, with |a_j| <= tol treated as 0 on infinite sides.

    Returns +inf when a coefficient beyond tol pushes toward an infinite bound.
    """
    total = 0.0
    pos = a > tol
    neg = a < -tol
    if np.any(pos & (hi == INF)) or np.any(neg & (lo == -INF)):
        return INF
    total += float(a[pos] @ hi[pos]) + float(a[neg] @ lo[neg])
    small = ~(pos | neg)
    both = small & np.isfinite(lo) & np.isfinite(hi)
    if np.any(both):
        total += float(np.sum(np.maximum(a[both] * lo[both], a[both] * hi[both])))
    return total


def farkas_margin(lp: LinearProgram, y: np.ndarray, tol: float = 1e-9) -> float:
    """yᵀb minus the sup over the variable box of yᵀAx; -inf if the sup diverges.

    Row signs must match the relations: '<=' rows need y <= 0 and '>=' rows
    y >= 0 (entries within tol of zero are accepted).
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (lp.n_constraints,):
        raise FarkasError(f"ray has shape {y.shape}, expected ({lp.n_constraints},)")
    scale = max(1.0, float(np.max(np.abs(y)))) if y.size else 1.0
    for yi, r in zip(y, lp.relations()):
        if r == Relation.LE and yi > tol * scale:
            return -INF
        if r == Relation.GE and yi < -tol * scale:
            return -INF
    a = lp.matrix().T @ y
    lo, hi = lp.bounds()
    sup = _box_sup(a, lo, hi, tol * scale)
    if sup == INF:
        return -INF
    return float(y @ lp.rhs()) - sup


def extract_farkas(lp: LinearProgram, sol: LpSolution, tol: float = 1e-9) -> FarkasRay:
    """The infeasibility ray of an Infeasible solve, sign-snapped and re-checked."""
    if sol.status != LpStatus.INFEASIBLE:
        raise FarkasError(f"no Farkas ray: solve status is {sol.status.value}")
    if sol.farkas is None:
        raise FarkasError("solver returned no ray")
    y = sol.farkas.y.copy()
    for i, r in enumerate(lp.relations()):
        if r == Relation.LE:
            y[i] = min(y[i], 0.0)
        elif r == Relation.GE:
            y[i] = max(y[i], 0.0)
    margin = farkas_margin(lp, y, tol)
    if not margin > 0.0:
        raise FarkasError(f"extracted ray does not separate: margin {margin!r}")
    return FarkasRay(y, margin)


def solve(
    lp: LinearProgram,
    tolerances: Optional[SolverTolerances] = None,
    logger: Optional[DebugLogger] = None,
) -> LpSolution:
    return SimplexSolver(tolerances, logger).solve(lp)
