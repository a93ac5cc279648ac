"""Second-order Kirchhoff regularization of the junction problem.

For a diffusion strength eps > 0 the system

    -eps u'' + u + H_i(u', x) = 0   on each edge,
    sum_i u_{x_i}(0-) = 0           at the junction,

is discretized with central differences inside the edges and a second-order
one-sided stencil for the junction slope sum (first-order stencils pollute
the O(eps) boundary layer). The nonlinear system is solved by damped Newton
with an analytically assembled sparse Jacobian whose dH/dp entries come from
finite differences on the slope argument (step 1e-7 (1 + |p|), tolerant of
kinked Hamiltonians), warm-started by a continuation that halves eps from
1.0 down to the target.

The vanishing-diffusion sweep records junction values and slopes per eps,
extrapolates the limit, and classifies it: either the state-constraint
junction value is recovered, or the limit sits strictly below it with a
vanishing junction slope sum.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .edge import Dirichlet, GridFunction1D, StateConstraint
from .junction import (
    JunctionGridFunction,
    JunctionProblem,
    solve_junction_direct,
)

SELECTS_STATE_CONSTRAINT = "selects_state_constraint"
KIRCHHOFF_LIMIT = "kirchhoff_limit"
UNDETERMINED = "undetermined"
NO_GUARANTEE = "no_guarantee"


@dataclass(frozen=True)
class ViscousParams:
    epsilon: float
    newton_tol: float = 1e-10
    max_newton: int = 60
    damping_factor: float = 0.5
    min_step: float = 1.0 / 64
    continuation_start: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class ViscousSolveReport:
    iterations: int
    final_residual: float
    converged: bool
    wall_time: float
    stages: list = field(default_factory=list)
    method: str = "newton"


@dataclass
class SweepRecord:
    epsilon: float
    node_value: float
    slopes: tuple
    kirchhoff_sum: float
    newton_iters: int


@dataclass
class VanishingViscosityReport:
    records: list
    extrapolated_node_value: float
    classification: str
    predicted_selection: str
    sc_reference: float


# ---------------------------------------------------------------------------
# discrete system
# ---------------------------------------------------------------------------

class _ViscousSystem:
    """Unknowns: edge i contributes u_{i,0..n_i-1}; the final unknown is the
    shared junction value u0 = u_i(0) for every i."""

    def __init__(self, problem: JunctionProblem):
        self.problem = problem
        self.offsets = []
        off = 0
        for e in problem.edges:
            if isinstance(e.far_bc, StateConstraint):
                raise ValueError(
                    "viscous solver supports dirichlet/neumann far ends only")
            self.offsets.append(off)
            off += e.n_cells
        self.size = off + 1
        self.grids = [e.grid() for e in problem.edges]

    def edge_values(self, z, i):
        e = self.problem.edges[i]
        off = self.offsets[i]
        ue = np.empty(e.n_cells + 1)
        ue[:-1] = z[off:off + e.n_cells]
        ue[-1] = z[-1]
        return ue

    def residual(self, z, eps):
        R = np.empty(self.size)
        kirchhoff = 0.0
        for i, (e, H) in enumerate(zip(self.problem.edges,
                                       self.problem.hamiltonians)):
            off = self.offsets[i]
            n = e.n_cells
            h = e.h
            ue = self.edge_values(z, i)
            x = self.grids[i]
            p = (ue[2:] - ue[:-2]) / (2.0 * h)
            R[off + 1:off + n] = (
                -eps * (ue[2:] - 2.0 * ue[1:-1] + ue[:-2]) / h ** 2
                + ue[1:-1] + np.asarray(H(p, x[1:-1]))
            )
            far = e.far_bc
            if isinstance(far, Dirichlet):
                R[off] = ue[0] - far.value
            else:
                R[off] = (-3.0 * ue[0] + 4.0 * ue[1] - ue[2]) / (2.0 * h) \
                    - far.slope
            kirchhoff += (3.0 * ue[n] - 4.0 * ue[n - 1] + ue[n - 2]) / (2.0 * h)
        R[-1] = kirchhoff
        return R

    def jacobian(self, z, eps):
        rows, cols, vals = [], [], []
        node_col = self.size - 1
        node_diag = 0.0
        for i, (e, H) in enumerate(zip(self.problem.edges,
                                       self.problem.hamiltonians)):
            off = self.offsets[i]
            n = e.n_cells
            h = e.h
            ue = self.edge_values(z, i)
            x = self.grids[i]
            p = (ue[2:] - ue[:-2]) / (2.0 * h)
            d = 1e-7 * (1.0 + np.abs(p))
            dH = (np.asarray(H(p + d, x[1:-1]))
                  - np.asarray(H(p - d, x[1:-1]))) / (2.0 * d)
            diag = 2.0 * eps / h ** 2 + 1.0
            lower = -eps / h ** 2 - dH / (2.0 * h)
            upper = -eps / h ** 2 + dH / (2.0 * h)
            for j in range(1, n):
                r = off + j
                rows.append(r), cols.append(off + j - 1), vals.append(lower[j - 1])
                rows.append(r), cols.append(off + j), vals.append(diag)
                c_up = node_col if j == n - 1 else off + j + 1
                rows.append(r), cols.append(c_up), vals.append(upper[j - 1])
            far = e.far_bc
            if isinstance(far, Dirichlet):
                rows.append(off), cols.append(off), vals.append(1.0)
            else:
                for c, v in ((off, -3.0), (off + 1, 4.0), (off + 2, -1.0)):
                    rows.append(off), cols.append(c), vals.append(v / (2.0 * h))
            # junction slope row
            node_diag += 3.0 / (2.0 * h)
            rows.append(node_col), cols.append(off + n - 1), vals.append(-2.0 / h)
            rows.append(node_col), cols.append(off + n - 2), vals.append(1.0 / (2.0 * h))
        rows.append(node_col), cols.append(node_col), vals.append(node_diag)
        return sp.csr_matrix((vals, (rows, cols)),
                             shape=(self.size, self.size))

    def newton(self, z, eps, params: ViscousParams):
        res = float(np.max(np.abs(self.residual(z, eps))))
        for it in range(params.max_newton):
            if res <= params.newton_tol:
                return z, res, it, True
            J = self.jacobian(z, eps)
            R = self.residual(z, eps)
            step = spla.spsolve(J, -R)
            s = 1.0
            accepted = False
            while s >= params.min_step:
                z_try = z + s * step
                res_try = float(np.max(np.abs(self.residual(z_try, eps))))
                if res_try <= (1.0 - 1e-4 * s) * res:
                    z, res = z_try, res_try
                    accepted = True
                    break
                s *= params.damping_factor
            if not accepted:
                return z, res, it + 1, False
        return z, res, params.max_newton, res <= params.newton_tol


def _continuation_schedule(start, target):
    if target >= start:
        return [target]
    seq = [start]
    while seq[-1] / 2.0 > target * (1.0 + 1e-12):
        seq.append(seq[-1] / 2.0)
    seq.append(target)
    return seq


def solve_viscous_kirchhoff(problem: JunctionProblem, params: ViscousParams,
                            init=None):
    """Solve the diffusion-regularized junction system at fixed eps.

    Warm-started continuation halves eps from continuation_start down to the
    target; a Newton stagnation retries the failed leg with quarter steps
    (geometric) before giving up.
    """
    t0 = time.perf_counter()
    sys_ = _ViscousSystem(problem)
    if init is not None:
        z = init.copy()
        schedule = [params.epsilon]
    else:
        flat = float(np.mean([-float(H(0.0, 0.0))
                              for H in problem.hamiltonians]))
        z = np.full(sys_.size, flat)
        for i, e in enumerate(problem.edges):
            if isinstance(e.far_bc, Dirichlet):
                z[sys_.offsets[i]] = e.far_bc.value
        schedule = _continuation_schedule(params.continuation_start,
                                          params.epsilon)

    stages = []
    total = 0
    eps_prev = None
    i = 0
    while i < len(schedule):
        eps = schedule[i]
        z_new, res, iters, ok = sys_.newton(z.copy(), eps, params)
        total += iters
        if ok:
            z = z_new
            stages.append((eps, iters))
            eps_prev = eps
            i += 1
            continue
        if eps_prev is None or eps_prev <= eps:
            rep = ViscousSolveReport(total, res, False,
                                     time.perf_counter() - t0, stages)
            return _assemble(sys_, z_new), rep
        # stagnation: refine this continuation leg with quarter steps
        ratio = (eps / eps_prev) ** 0.25
        refined = [eps_prev * ratio ** k for k in (1, 2, 3)] + [eps]
        failed = False
        for eps_r in refined:
            z_new, res, iters, ok = sys_.newton(z.copy(), eps_r, params)
            total += iters
            if not ok:
                failed = True
                break
            z = z_new
            stages.append((eps_r, iters))
            eps_prev = eps_r
        if failed:
            rep = ViscousSolveReport(total, res, False,
                                     time.perf_counter() - t0, stages)
            return _assemble(sys_, z_new), rep
        i += 1

    rep = ViscousSolveReport(total, float(np.max(np.abs(
        sys_.residual(z, params.epsilon)))), True,
        time.perf_counter() - t0, stages)
    return _assemble(sys_, z), rep


def _assemble(sys_, z):
    grids = [GridFunction1D(sys_.edge_values(z, i), e, "generic")
             for i, e in enumerate(sys_.problem.edges)]
    return JunctionGridFunction(grids, float(z[-1]))


def viscous_scheme_residual(sol: JunctionGridFunction,
                            problem: JunctionProblem, epsilon):
    """Re-evaluate the discrete second-order system residual of a solution
    (interior rows, far rows, junction slope row) as one max-norm."""
    sys_ = _ViscousSystem(problem)
    z = np.empty(sys_.size)
    for i, e in enumerate(problem.edges):
        z[sys_.offsets[i]:sys_.offsets[i] + e.n_cells] = \
            sol.per_edge[i].values[:-1]
    z[-1] = sol.node_value
    R = sys_.residual(z, epsilon)
    return float(np.max(np.abs(R))), float(abs(R[-1]))


def _node_slopes(sol: JunctionGridFunction):
    out = []
    for g in sol.per_edge:
        v = g.values
        h = g.edge.h
        out.append(float((3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)))
    return tuple(out)


# ---------------------------------------------------------------------------
# sweep, prediction, classification
# ---------------------------------------------------------------------------

def predict_selection(problem: JunctionProblem, tol=1e-9):
    """The vanishing-diffusion limit provably recovers the state-constraint
    solution when the largest minimizers of the edge Hamiltonians sum to a
    nonpositive value."""
    total = 0.0
    for H in problem.hamiltonians:
        if not len(H.minima):
            raise ValueError(f"H({H.source}) has no recorded minima")
        total += max(H.minima)
    return SELECTS_STATE_CONSTRAINT if total <= tol else NO_GUARANTEE


def richardson_extrapolate(records):
    """Limit estimate from the last two records, assuming node_value(eps)
    deviates linearly in eps."""
    if len(records) < 2:
        return records[-1].node_value
    r1, r2 = records[-2], records[-1]
    e1, e2 = r1.epsilon, r2.epsilon
    if e1 == e2:
        return r2.node_value
    slope = (r1.node_value - r2.node_value) / (e1 - e2)
    return r2.node_value - slope * e2


def classify_limit(report: VanishingViscosityReport, sc_value,
                   delta_sc=5e-2, delta_kirchhoff=5e-2):
    """Dichotomy verdict for a sweep: the limit either matches the
    state-constraint junction value or sits strictly below it with a
    vanishing junction slope sum; anything else is undetermined."""
    if len(report.records) < 3:
        raise ValueError("classification needs at least 3 sweep records")
    extrap = report.extrapolated_node_value
    if abs(extrap - sc_value) <= delta_sc:
        return SELECTS_STATE_CONSTRAINT
    if extrap < sc_value - delta_sc and \
            abs(report.records[-1].kirchhoff_sum) <= delta_kirchhoff:
        return KIRCHHOFF_LIMIT
    return UNDETERMINED


def epsilon_sweep(problem: JunctionProblem, eps_list, params=None,
                  delta_sc=5e-2, delta_kirchhoff=5e-2, sc_reference=None):
    """Solve the regularized system along a decreasing eps schedule (each
    solve warm-starts the next), extrapolate the junction value, and
    classify the limit against the state-constraint reference."""
    eps_arr = [float(e) for e in eps_list]
    if len(eps_arr) < 3:
        raise ValueError("eps_list needs at least 3 entries")
    if any(b >= a for a, b in zip(eps_arr, eps_arr[1:])):
        raise ValueError("eps_list must decrease strictly")
    h_max = max(e.h for e in problem.edges)
    if h_max > eps_arr[-1] / 4.0 + 1e-15:
        raise ValueError(
            f"grid too coarse for smallest epsilon: need h <= {eps_arr[-1] / 4:g}")

    base = params or ViscousParams(epsilon=eps_arr[0])
    records = []
    z = None
    sys_ = _ViscousSystem(problem)
    for k, eps in enumerate(eps_arr):
        p = ViscousParams(epsilon=eps, newton_tol=base.newton_tol,
                          max_newton=base.max_newton,
                          damping_factor=base.damping_factor,
                          min_step=base.min_step,
                          continuation_start=base.continuation_start)
        sol, rep = solve_viscous_kirchhoff(problem, p, init=z)
        if not rep.converged:
            raise RuntimeError(f"viscous solve failed at eps={eps:g}")
        z = np.empty(sys_.size)
        for i, e in enumerate(problem.edges):
            z[sys_.offsets[i]:sys_.offsets[i] + e.n_cells] = \
                sol.per_edge[i].values[:-1]
        z[-1] = sol.node_value
        slopes = _node_slopes(sol)
        records.append(SweepRecord(
            epsilon=eps, node_value=sol.node_value, slopes=slopes,
            kirchhoff_sum=float(sum(slopes)), newton_iters=rep.iterations))

    if sc_reference is None:
        sc_prob = JunctionProblem(problem.edges, problem.hamiltonians,
                                  StateConstraint())
        sc_sol, _ = solve_junction_direct(sc_prob)
        sc_reference = sc_sol.node_value

    report = VanishingViscosityReport(
        records=records,
        extrapolated_node_value=richardson_extrapolate(records),
        classification=UNDETERMINED,
        predicted_selection=predict_selection(problem),
        sc_reference=float(sc_reference),
    )
    report.classification = classify_limit(report, sc_reference,
                                           delta_sc, delta_kirchhoff)
    return report
