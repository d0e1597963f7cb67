"""Linear-programming layer with named rows/columns and first-class duals.

Market prices are read off the duals of nodal balance rows, so dual quality
is part of this module's contract, not an afterthought:

* :func:`solve` returns a :class:`PrimalDualSolution` whose duals follow the
  sensitivity convention ``y_r = d(objective)/d(rhs_r)`` for the *minimization*
  objective. Equality rows have free-signed duals, ``<=`` rows nonpositive,
  ``>=`` rows nonnegative.
* :func:`certify` is an independent numpy check (it never calls the solver):
  primal feasibility, dual feasibility, complementary slackness, and the
  duality gap, each reported as a number and compared against a tolerance.
* :func:`complete_duals` extends a candidate partial dual vector (e.g. a
  published price vector pinned to the balance rows) to a full dual vector by
  solving the restricted Lagrangian problem, so candidates can be certified
  without trusting any solver's duals.

Solving is delegated to HiGHS (dual simplex) via scipy, which is
deterministic for identical input and returns exact basis duals; two solves
of the same program yield bitwise-identical vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

__all__ = [
    "LinearProgram",
    "PrimalDualSolution",
    "SolveStatus",
    "CertificateReport",
    "DualCompletion",
    "solve",
    "certify",
    "complete_duals",
    "to_mps",
]

#: absolute feasibility tolerance handed to the solver's pivoting; tighter
#: settings make HiGHS misclassify models whose coefficients span several
#: orders of magnitude (susceptances vs. efficiencies), so this stays at the
#: solver's native default, well inside the certification tolerance
FEASIBILITY_TOL = 1e-7
#: relative tolerance used by certification
CERTIFY_TOL = 1e-6


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    FAILED = "failed"


@dataclass(frozen=True)
class _Variable:
    name: str
    lower: float
    upper: float
    objective: float


@dataclass(frozen=True)
class _Constraint:
    name: str
    coeffs: dict[str, float]
    relation: str  # "<=", "=", ">="
    rhs: float


class LinearProgram:
    """Minimization LP with uniquely named columns and rows.

    Variables carry box bounds (either side may be infinite) and an objective
    coefficient; constraints are sparse rows with relation ``<=``, ``=`` or
    ``>=`` and a finite right-hand side.
    """

    def __init__(self, name: str = "lp"):
        self.name = name
        self._vars: list[_Variable] = []
        self._var_index: dict[str, int] = {}
        self._cons: list[_Constraint] = []
        self._con_index: dict[str, int] = {}

    def add_variable(self, name: str, lower: float = 0.0, upper: float = math.inf,
                     objective: float = 0.0) -> None:
        if name in self._var_index:
            raise ValueError(f"duplicate variable {name!r}")
        if math.isnan(lower) or math.isnan(upper) or lower > upper:
            raise ValueError(f"bad bounds [{lower}, {upper}] for {name!r}")
        self._var_index[name] = len(self._vars)
        self._vars.append(_Variable(name, float(lower), float(upper), float(objective)))

    def add_constraint(self, name: str, coeffs: dict[str, float], relation: str,
                       rhs: float) -> None:
        if name in self._con_index:
            raise ValueError(f"duplicate constraint {name!r}")
        if relation not in ("<=", "=", ">="):
            raise ValueError(f"unknown relation {relation!r}")
        if not math.isfinite(rhs):
            raise ValueError(f"non-finite rhs for {name!r}")
        for var in coeffs:
            if var not in self._var_index:
                raise ValueError(f"constraint {name!r} references unknown variable {var!r}")
        self._con_index[name] = len(self._cons)
        self._cons.append(_Constraint(name, dict(coeffs), relation, float(rhs)))

    # -- read access ---------------------------------------------------------

    @property
    def variable_names(self) -> list[str]:
        return [v.name for v in self._vars]

    @property
    def constraint_names(self) -> list[str]:
        return [c.name for c in self._cons]

    @property
    def num_variables(self) -> int:
        return len(self._vars)

    @property
    def num_constraints(self) -> int:
        return len(self._cons)

    def objective_vector(self) -> np.ndarray:
        return np.array([v.objective for v in self._vars])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([v.lower for v in self._vars])
        hi = np.array([v.upper for v in self._vars])
        return lo, hi

    def matrix(self) -> sp.csr_matrix:
        """Constraint matrix in row order, columns in variable order."""
        rows, cols, data = [], [], []
        for i, con in enumerate(self._cons):
            for var, coef in con.coeffs.items():
                rows.append(i)
                cols.append(self._var_index[var])
                data.append(coef)
        return sp.csr_matrix((data, (rows, cols)),
                             shape=(len(self._cons), len(self._vars)))

    def rhs_vector(self) -> np.ndarray:
        return np.array([c.rhs for c in self._cons])

    def relations(self) -> list[str]:
        return [c.relation for c in self._cons]


@dataclass
class PrimalDualSolution:
    status: SolveStatus
    objective: float = math.nan
    primal: dict[str, float] = field(default_factory=dict)
    duals: dict[str, float] = field(default_factory=dict)
    reduced_costs: dict[str, float] = field(default_factory=dict)
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


_SCIPY_STATUS = {
    0: SolveStatus.OPTIMAL,
    2: SolveStatus.INFEASIBLE,
    3: SolveStatus.UNBOUNDED,
}


def solve(lp: LinearProgram, feasibility_tol: float = FEASIBILITY_TOL) -> PrimalDualSolution:
    """Solve to optimality with deterministic pivoting; never raises on
    solver trouble, the status/message carry the diagnosis."""
    c = lp.objective_vector()
    lo, hi = lp.bounds()
    A = lp.matrix()
    b = lp.rhs_vector()
    relations = np.array(lp.relations())

    ub_mask = relations == "<="
    ge_mask = relations == ">="
    eq_mask = relations == "="

    blocks_ub = []
    rhs_ub = []
    if ub_mask.any():
        blocks_ub.append(A[ub_mask])
        rhs_ub.append(b[ub_mask])
    if ge_mask.any():
        blocks_ub.append(-A[ge_mask])
        rhs_ub.append(-b[ge_mask])
    A_ub = sp.vstack(blocks_ub, format="csr") if blocks_ub else None
    b_ub = np.concatenate(rhs_ub) if rhs_ub else None
    A_eq = A[eq_mask] if eq_mask.any() else None
    b_eq = b[eq_mask] if eq_mask.any() else None

    bounds = [(None if l == -math.inf else l, None if u == math.inf else u)
              for l, u in zip(lo, hi)]

    def _run(presolve: bool):
        return linprog(
            c,
            A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
            bounds=bounds,
            method="highs-ds",
            options={
                "presolve": presolve,
                "primal_feasibility_tolerance": feasibility_tol,
                "dual_feasibility_tolerance": feasibility_tol,
            },
        )

    res = _run(presolve=True)
    if res.status in (3, 4):
        # presolve occasionally misclassifies degenerate models; the retry
        # is a fixed rule of the input, so determinism is preserved
        res = _run(presolve=False)

    status = _SCIPY_STATUS.get(res.status, SolveStatus.FAILED)
    if status is not SolveStatus.OPTIMAL:
        return PrimalDualSolution(status=status, message=res.message)

    x = np.asarray(res.x)

    # reassemble duals in original row order (>= rows were negated above)
    y = np.zeros(lp.num_constraints)
    if A_ub is not None:
        marg = np.asarray(res.ineqlin.marginals)
        n_le = int(ub_mask.sum())
        y[np.where(ub_mask)[0]] = marg[:n_le]
        y[np.where(ge_mask)[0]] = -marg[n_le:]
    if A_eq is not None:
        y[np.where(eq_mask)[0]] = np.asarray(res.eqlin.marginals)

    z = c - A.T @ y  # reduced costs from our own data, not the solver's

    names_v = lp.variable_names
    names_c = lp.constraint_names
    return PrimalDualSolution(
        status=SolveStatus.OPTIMAL,
        objective=float(c @ x),
        primal=dict(zip(names_v, x.tolist())),
        duals=dict(zip(names_c, y.tolist())),
        reduced_costs=dict(zip(names_v, z.tolist())),
        message=res.message,
    )


@dataclass
class CertificateReport:
    max_primal_infeasibility: float
    max_dual_infeasibility: float
    max_complementarity: float
    duality_gap: float
    primal_objective: float
    dual_objective: float
    tol: float
    passed: bool

    def __str__(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag} primal_infeas={self.max_primal_infeasibility:.3e} "
                f"dual_infeas={self.max_dual_infeasibility:.3e} "
                f"comp_slack={self.max_complementarity:.3e} "
                f"gap={self.duality_gap:.3e}")


def certify(lp: LinearProgram, solution: PrimalDualSolution,
            tol: float = CERTIFY_TOL) -> CertificateReport:
    """Check a primal/dual pair against the optimality conditions.

    All metrics are computed from the program data with plain numpy algebra.
    Pass/fail uses ``tol`` relative to the natural scale of each quantity
    (right-hand sides for primal residuals, objective coefficients for dual
    residuals, the objective value for products and the gap).
    """
    if not solution.is_optimal:
        raise ValueError("certification requires an optimal solution")

    c = lp.objective_vector()
    lo, hi = lp.bounds()
    A = lp.matrix()
    b = lp.rhs_vector()
    relations = lp.relations()

    x = np.array([solution.primal[n] for n in lp.variable_names])
    y = np.array([solution.duals[n] for n in lp.constraint_names])

    ax = A @ x if lp.num_constraints else np.zeros(0)
    primal_infeas = 0.0
    dual_infeas = 0.0
    comp = 0.0
    for i, rel in enumerate(relations):
        resid = ax[i] - b[i]
        if rel == "<=":
            primal_infeas = max(primal_infeas, resid)
            dual_infeas = max(dual_infeas, y[i])        # must be <= 0
            comp = max(comp, abs(y[i] * min(resid, 0.0)))
        elif rel == ">=":
            primal_infeas = max(primal_infeas, -resid)
            dual_infeas = max(dual_infeas, -y[i])       # must be >= 0
            comp = max(comp, abs(y[i] * max(resid, 0.0)))
        else:
            primal_infeas = max(primal_infeas, abs(resid))

    primal_infeas = max(primal_infeas,
                        float(np.max(lo - x, initial=0.0)),
                        float(np.max(x - hi, initial=0.0)))

    z = c - (A.T @ y if lp.num_constraints else 0.0)
    # reduced-cost sign conditions: z_j >= 0 needs a finite lower bound to
    # lean on, z_j <= 0 a finite upper bound; otherwise it is a dual violation
    dual_obj = float(y @ b) if lp.num_constraints else 0.0
    for j in range(lp.num_variables):
        zj = float(z[j])
        if zj > 0:
            if lo[j] == -math.inf:
                dual_infeas = max(dual_infeas, zj)
            else:
                dual_obj += zj * lo[j]
                comp = max(comp, abs(zj * (x[j] - lo[j])))
        elif zj < 0:
            if hi[j] == math.inf:
                dual_infeas = max(dual_infeas, -zj)
            else:
                dual_obj += zj * hi[j]
                comp = max(comp, abs(zj * (hi[j] - x[j])))

    primal_obj = float(c @ x)
    gap = abs(primal_obj - dual_obj)

    scale_b = 1.0 + (float(np.max(np.abs(b))) if lp.num_constraints else 0.0)
    scale_c = 1.0 + float(np.max(np.abs(c), initial=0.0))
    scale_obj = 1.0 + abs(primal_obj)
    passed = (primal_infeas <= tol * scale_b
              and dual_infeas <= tol * scale_c
              and comp <= tol * scale_obj
              and gap <= tol * scale_obj)

    return CertificateReport(
        max_primal_infeasibility=primal_infeas,
        max_dual_infeasibility=dual_infeas,
        max_complementarity=comp,
        duality_gap=gap,
        primal_objective=primal_obj,
        dual_objective=dual_obj,
        tol=tol,
        passed=passed,
    )


@dataclass
class DualCompletion:
    """Candidate duals for a row subset, extended to a full dual vector."""

    status: SolveStatus
    duals: dict[str, float] = field(default_factory=dict)
    dual_objective: float = math.nan
    message: str = ""


def complete_duals(lp: LinearProgram, fixed: dict[str, float]) -> DualCompletion:
    """Pin duals on a subset of rows and optimize the remaining duals.

    Solves the Lagrangian relaxation in which the fixed rows are priced into
    the objective at the candidate duals and dropped as constraints. The
    optimal value of that restricted program (plus the fixed-dual rhs term)
    is the best dual bound attainable with the candidate; its row duals
    complete the candidate into a full dual vector. The candidate is
    dual-optimal for the original program iff the completed vector certifies
    with zero duality gap against the original primal optimum.
    """
    unknown = [name for name in fixed if name not in lp._con_index]
    if unknown:
        raise ValueError(f"fixed duals reference unknown rows: {unknown}")

    restricted = LinearProgram(name=lp.name + "+fixed-duals")
    price = {v.name: v.objective for v in lp._vars}
    rhs_term = 0.0
    for con in lp._cons:
        if con.name in fixed:
            y = fixed[con.name]
            rhs_term += y * con.rhs
            for var, coef in con.coeffs.items():
                price[var] -= y * coef
    for v in lp._vars:
        restricted.add_variable(v.name, v.lower, v.upper, price[v.name])
    for con in lp._cons:
        if con.name not in fixed:
            restricted.add_constraint(con.name, con.coeffs, con.relation, con.rhs)

    sub = solve(restricted)
    if not sub.is_optimal:
        return DualCompletion(status=sub.status, message=sub.message)

    duals = dict(fixed)
    duals.update(sub.duals)
    return DualCompletion(
        status=SolveStatus.OPTIMAL,
        duals=duals,
        dual_objective=sub.objective + rhs_term,
    )


def to_mps(lp: LinearProgram) -> str:
    """Free-format MPS export with the exact row/column names preserved."""
    out = [f"NAME {lp.name}", "ROWS", " N  OBJ"]
    rel_tag = {"<=": "L", "=": "E", ">=": "G"}
    for con in lp._cons:
        out.append(f" {rel_tag[con.relation]}  {con.name}")

    out.append("COLUMNS")
    entries: dict[str, list[tuple[str, float]]] = {v.name: [] for v in lp._vars}
    for v in lp._vars:
        if v.objective != 0.0:
            entries[v.name].append(("OBJ", v.objective))
    for con in lp._cons:
        for var, coef in con.coeffs.items():
            entries[var].append((con.name, coef))
    for v in lp._vars:
        for row, coef in entries[v.name]:
            out.append(f"    {v.name}  {row}  {coef!r}")

    out.append("RHS")
    for con in lp._cons:
        if con.rhs != 0.0:
            out.append(f"    RHS  {con.name}  {con.rhs!r}")

    out.append("BOUNDS")
    for v in lp._vars:
        if v.lower == -math.inf and v.upper == math.inf:
            out.append(f" FR BND  {v.name}")
            continue
        if v.lower == -math.inf:
            out.append(f" MI BND  {v.name}")
        elif v.lower != 0.0:
            out.append(f" LO BND  {v.name}  {v.lower!r}")
        if v.upper != math.inf:
            out.append(f" UP BND  {v.name}  {v.upper!r}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"
