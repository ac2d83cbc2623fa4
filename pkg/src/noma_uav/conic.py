"""Structured second-order cone programs and first-order surrogate bounds.

The planners assemble their convex subproblems as a :class:`ConeProgram`:
named variable slices, a linear objective, and four constraint kinds
(linear equality/inequality, Euclidean-norm bounds, and diagonal convex
quadratics under an affine cap). Programs are lowered to standard conic
form and handed to the Clarabel interior-point solver; the returned point
is re-checked against every stored constraint so the report's feasibility
residual is independent of the solver's own bookkeeping.

The surrogate builders produce the affine/concave lower bounds used by the
successive-approximation loops: the supporting line of a squared distance,
the supporting line of the jointly convex half-square coupling a duration
with a rate slack, and the tangent of the rate as a convex function of
squared distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

from .errors import Infeasible, InvariantViolation, MaxIterations, SolverFailure

_LOG2E = math.log2(math.e)


@dataclass
class SolveReport:
    status: str  # "optimal" | "infeasible" | "max_iter"
    solution: np.ndarray
    objective: float
    feasibility_residual: float
    optimality_gap: float
    iterations: int
    slices: dict = field(default_factory=dict)

    def value(self, name: str) -> np.ndarray:
        off, size = self.slices[name]
        return self.solution[off : off + size]


class ConeProgram:
    """Linear objective over named variables under conic constraints."""

    def __init__(self) -> None:
        self._slices: dict[str, tuple[int, int]] = {}
        self._n = 0
        self._obj_cols: list[np.ndarray] = []
        self._obj_vals: list[np.ndarray] = []
        self._eq: list[tuple[np.ndarray, np.ndarray, float]] = []
        self._ineq: list[tuple[np.ndarray, np.ndarray, float]] = []
        self._socs: list[list[tuple[np.ndarray, np.ndarray, float]]] = []
        self._soc_kinds: list[str] = []

    # -- variables and objective -------------------------------------------

    def add_var(self, name: str, size: int) -> int:
        """Declare a variable slice; returns its offset into the flat vector."""
        if name in self._slices:
            raise InvariantViolation(f"variable slice {name!r} declared twice")
        off = self._n
        self._slices[name] = (off, size)
        self._n += size
        return off

    @property
    def n_vars(self) -> int:
        return self._n

    def offset(self, name: str) -> int:
        return self._slices[name][0]

    def add_objective(self, cols, vals) -> None:
        """Accumulate linear objective terms (minimization)."""
        self._obj_cols.append(np.asarray(cols, dtype=int))
        self._obj_vals.append(np.asarray(vals, dtype=float))

    # -- constraints ---------------------------------------------------------

    def lin_eq(self, cols, vals, rhs: float) -> None:
        """a.x = rhs"""
        self._eq.append((np.asarray(cols, dtype=int), np.asarray(vals, dtype=float), float(rhs)))

    def lin_ineq(self, cols, vals, rhs: float) -> None:
        """a.x <= rhs"""
        self._ineq.append((np.asarray(cols, dtype=int), np.asarray(vals, dtype=float), float(rhs)))

    def norm_bound(self, rows, d_cols, d_vals, e: float) -> None:
        """|| F.x + g || <= d.x + e

        ``rows`` lists (cols, vals, const) per component of F.x + g.
        """
        block = [(np.asarray(d_cols, dtype=int), np.asarray(d_vals, dtype=float), float(e))]
        for cols, vals, g in rows:
            block.append((np.asarray(cols, dtype=int), np.asarray(vals, dtype=float), float(g)))
        self._socs.append(block)
        self._soc_kinds.append("norm")

    def quad_upper(self, terms, d_cols, d_vals, e: float) -> None:
        """0.5 * sum_k w_k * (x_k - o_k)^2 <= d.x + e

        ``terms`` lists (col, weight, offset) triples with positive weights.
        Lowered to a rotated-cone style second-order cone.
        """
        d_cols = np.asarray(d_cols, dtype=int)
        d_vals = np.asarray(d_vals, dtype=float)
        e = float(e)
        block = [(d_cols, d_vals, e + 1.0)]
        for col, w, o in terms:
            if w <= 0:
                raise InvariantViolation("quad_upper weights must be positive")
            s = math.sqrt(2.0 * w)
            block.append((np.array([col], dtype=int), np.array([s]), -s * float(o)))
        block.append((d_cols, d_vals, e - 1.0))
        self._socs.append(block)
        self._soc_kinds.append("quad")

    # -- lowering and solving -------------------------------------------------

    def _lower(self):
        rows_i: list[np.ndarray] = []
        cols_i: list[np.ndarray] = []
        vals_i: list[np.ndarray] = []
        b: list[float] = []
        cones: list = []
        r = 0

        def push(cols, vals, const):
            # Encodes one slack component s_r = const + vals.x (A row = -vals).
            nonlocal r
            rows_i.append(np.full(len(cols), r, dtype=int))
            cols_i.append(cols)
            vals_i.append(-vals)
            b.append(const)
            r += 1

        if self._eq:
            for cols, vals, rhs in self._eq:
                push(cols, -vals, rhs)  # s = rhs - a.x must sit in the zero cone
            cones.append(clarabel.ZeroConeT(len(self._eq)))
        if self._ineq:
            for cols, vals, rhs in self._ineq:
                push(cols, -vals, rhs)  # s = rhs - a.x must stay nonnegative
            cones.append(clarabel.NonnegativeConeT(len(self._ineq)))
        for block in self._socs:
            for cols, vals, const in block:
                push(cols, vals, const)
            cones.append(clarabel.SecondOrderConeT(len(block)))

        a_mat = sparse.csc_matrix(
            (np.concatenate(vals_i) if vals_i else np.zeros(0),
             (np.concatenate(rows_i) if rows_i else np.zeros(0, dtype=int),
              np.concatenate(cols_i) if cols_i else np.zeros(0, dtype=int))),
            shape=(r, self._n),
        )
        q = np.zeros(self._n)
        for cols, vals in zip(self._obj_cols, self._obj_vals):
            np.add.at(q, cols, vals)
        return q, a_mat, np.array(b), cones

    def residual(self, x: np.ndarray) -> float:
        """Largest relative constraint violation at ``x``."""
        worst = 0.0
        for cols, vals, rhs in self._eq:
            worst = max(worst, abs(float(vals @ x[cols]) - rhs) / max(1.0, abs(rhs)))
        for cols, vals, rhs in self._ineq:
            worst = max(worst, (float(vals @ x[cols]) - rhs) / max(1.0, abs(rhs)))
        for kind, block in zip(self._soc_kinds, self._socs):
            s = np.array([const + float(vals @ x[cols]) for cols, vals, const in block])
            if kind == "norm":
                viol = float(np.linalg.norm(s[1:])) - s[0]
                scale = max(1.0, abs(s[0]))
            else:
                # s = [u+1, sqrt(2 w_k)(x_k-o_k)..., u-1] encodes
                # 0.5 sum w_k (x_k-o_k)^2 <= u, so the left side is a quarter
                # of the middle entries' square sum.
                u = (s[0] + s[-1]) / 2.0
                viol = 0.25 * float(np.sum(s[1:-1] ** 2)) - u
                scale = max(1.0, abs(u))
            worst = max(worst, viol / scale)
        return worst

    def objective_value(self, x: np.ndarray) -> float:
        total = 0.0
        for cols, vals in zip(self._obj_cols, self._obj_vals):
            total += float(vals @ x[cols])
        return total

    def dump(self) -> str:
        """One-constraint-per-line text form for offline inspection."""
        lines = [f"vars: {self._n} " + " ".join(f"{k}[{v[1]}]@{v[0]}" for k, v in self._slices.items())]
        for cols, vals, rhs in self._eq:
            lines.append("eq: " + _row_text(cols, vals) + f" = {rhs:.12g}")
        for cols, vals, rhs in self._ineq:
            lines.append("ineq: " + _row_text(cols, vals) + f" <= {rhs:.12g}")
        for kind, block in zip(self._soc_kinds, self._socs):
            parts = [f"[{_row_text(cols, vals)} + {const:.12g}]" for cols, vals, const in block]
            lines.append(f"{kind}: " + " ; ".join(parts))
        return "\n".join(lines)

    def solve(
        self,
        feas_tol: float = 1e-7,
        opt_tol: float = 1e-7,
        max_iter: int = 200,
        warm_objective: float | None = None,
    ) -> SolveReport:
        """Solve to optimality; raises on certified infeasibility or stall."""
        if feas_tol <= 0 or opt_tol <= 0:
            raise InvariantViolation("tolerances must be > 0")
        q, a_mat, b, cones = self._lower()
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_threads = 1
        settings.max_iter = max_iter
        settings.tol_feas = min(feas_tol * 0.1, 1e-8)
        settings.tol_gap_abs = min(opt_tol * 0.1, 1e-8)
        settings.tol_gap_rel = min(opt_tol * 0.1, 1e-8)
        p_mat = sparse.csc_matrix((self._n, self._n))
        solver = clarabel.DefaultSolver(p_mat, q, a_mat, b, cones, settings)
        sol = solver.solve()
        status = str(sol.status)
        x = np.asarray(sol.x, dtype=float)
        report = SolveReport(
            status="optimal",
            solution=x,
            objective=self.objective_value(x),
            feasibility_residual=self.residual(x),
            optimality_gap=abs(sol.obj_val - sol.obj_val_dual) / max(1.0, abs(sol.obj_val)),
            iterations=int(sol.iterations),
            slices=dict(self._slices),
        )
        if status in ("Solved", "AlmostSolved"):
            if report.feasibility_residual > feas_tol:
                raise SolverFailure(
                    f"solution residual {report.feasibility_residual:.2e} exceeds {feas_tol:.2e}"
                )
            return report
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            report.status = "infeasible"
            raise Infeasible("program certified primal infeasible", report)
        if status == "MaxIterations":
            report.status = "max_iter"
            raise MaxIterations(f"no convergence within {max_iter} iterations", report)
        raise SolverFailure(f"solver returned status {status}")


def _row_text(cols, vals) -> str:
    return " + ".join(f"{v:.12g}*x{c}" for c, v in zip(cols, vals)) or "0"


# ---------------------------------------------------------------------------
# Surrogate bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineDistanceBound:
    """Supporting line of q -> ||q - b||^2 at a reference point.

    Exact at the reference, never above the true squared distance.
    """

    const: float
    grad: np.ndarray

    def __call__(self, q: np.ndarray) -> float:
        return self.const + float(self.grad @ np.asarray(q, dtype=float))


def taylor_distance_lower_bound(q_ref: np.ndarray, b: np.ndarray) -> AffineDistanceBound:
    q_ref = np.asarray(q_ref, dtype=float)
    b = np.asarray(b, dtype=float)
    grad = 2.0 * (q_ref - b)
    const = float(np.sum((q_ref - b) ** 2)) - float(grad @ q_ref)
    return AffineDistanceBound(const=const, grad=grad)


@dataclass(frozen=True)
class BilinearBound:
    """Affine minorant of (t + pi)^2 / 2 anchored at a reference pair.

    Subtracting t^2/2 + pi^2/2 from it gives a global lower bound on the
    product t*pi that touches at the reference.
    """

    slope: float  # t_ref + pi_ref

    def __call__(self, t, pi):
        return self.slope * (np.asarray(t) + np.asarray(pi)) - self.slope**2 / 2.0

    def product_lower(self, t, pi):
        return self(t, pi) - np.asarray(t) ** 2 / 2.0 - np.asarray(pi) ** 2 / 2.0


def bilinear_lower_bound(t_ref: float, pi_ref: float) -> BilinearBound:
    return BilinearBound(slope=float(t_ref) + float(pi_ref))


@dataclass(frozen=True)
class RateBound:
    """Tangent of the rate as a convex function of squared distance.

    ``__call__`` takes the squared horizontal distance and returns a bound
    that equals the true spectral rate at the reference distance and sits
    below it everywhere else.
    """

    level: float  # rate at the reference, bit/s/Hz
    slope: float  # positive decay per m^2
    dist_sq_ref: float

    def __call__(self, dist_sq):
        return self.level - self.slope * (np.asarray(dist_sq) - self.dist_sq_ref)


def rate_lower_bound(
    q_ref: np.ndarray, b: np.ndarray, eta: float, height_diff: float, alpha: float
) -> RateBound:
    if eta <= 0 or height_diff <= 0:
        raise InvariantViolation("rate bound needs eta > 0 and height_diff > 0")
    z_ref = float(np.sum((np.asarray(q_ref, dtype=float) - np.asarray(b, dtype=float)) ** 2))
    u = z_ref + height_diff**2
    level = math.log2(1.0 + eta / u ** (alpha / 2.0))
    slope = (alpha / 2.0) * _LOG2E * eta / (u * (u ** (alpha / 2.0) + eta))
    return RateBound(level=level, slope=slope, dist_sq_ref=z_ref)
