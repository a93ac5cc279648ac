"""K-edge junction problems glued at x = 0.

Three junction conditions are solved with the same per-edge interior
machinery:

  * state constraint, directly: the node value carries the residual
    R0 = u0 + max_i min over q in [p_in_i, P_i] of H_i(q, 0),
    the binding-test-slope form of the junction supersolution inequality
    (the minimum over independent per-edge test slopes of max_i H_i equals
    the max over i of the per-edge envelope minima);
  * state constraint, constructively: each edge's own constrained solution
    is computed, the node value is the smallest of their node values, and
    the remaining edges are re-solved with that value as Dirichlet data;
  * flux-limited with limiter A: the node residual gains the floor A,
    R0 = u0 + max(A, max_i min over q >= p_in_i of H_i(q, 0)), which is the
    monotone discretization of the junction condition
    u + max(A, max_i H_i^-(u_{x_i}, 0)) = 0 built from nonincreasing parts.

R0 is nondecreasing in u0 and nonincreasing in each neighbor value, so the
node update fits the same monotone relaxation as the interior scheme.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .edge import (
    Dirichlet,
    EdgeDiscretization,
    EdgeSpec,
    GridFunction1D,
    Neumann,
    SolveReport,
    SolverParams,
    StateConstraint,
    _default_init,
    _solve_increasing,
    node_slope,
    one_sided_quotients,
    solve_edge,
)
from .hamiltonians import (
    Hamiltonian,
    ensure_level,
    make_flux_limiter,
    rightward_min_threshold,
)


@dataclass(frozen=True)
class FluxLimited:
    """Flux-limited junction condition with limiter level A."""

    A: float


@dataclass
class JunctionProblem:
    edges: list
    hamiltonians: list
    junction_condition: object = StateConstraint()

    def __post_init__(self):
        if len(self.edges) != len(self.hamiltonians) or not self.edges:
            raise ValueError("need one Hamiltonian per edge (K >= 1)")
        if not isinstance(self.junction_condition, (StateConstraint, FluxLimited)):
            raise ValueError(
                f"unsupported junction condition {self.junction_condition!r}")

    @property
    def k(self):
        return len(self.edges)


def make_junction_problem(edges, hamiltonians, condition=StateConstraint(),
                          level=None):
    """Assemble a JunctionProblem, re-probing every Hamiltonian at a shared
    coercivity level that dominates the plausible solution values."""
    edges = list(edges)
    hams = list(hamiltonians)
    if level is None:
        level = 2.0
        for H, e in zip(hams, edges):
            xs = e.grid()[:: max(1, e.n_cells // 8)]
            level = max(level, 2.0 + float(np.max(np.abs(H(0.0 * xs, xs)))))
            for m in H.minima:
                level = max(level, 2.0 + abs(float(H(m, 0.0))))
            if isinstance(e.far_bc, Dirichlet):
                level = max(level, 2.0 + abs(e.far_bc.value))
        if isinstance(condition, FluxLimited):
            level = max(level, 2.0 + abs(condition.A))
    hams = [ensure_level(H, level) for H in hams]
    return JunctionProblem(edges, hams, condition)


@dataclass
class JunctionGridFunction:
    """Per-edge grid functions sharing one junction value at x = 0."""

    per_edge: list
    node_value: float

    def __post_init__(self):
        for g in self.per_edge:
            if g.values[-1] != self.node_value:
                raise ValueError("edge node samples must equal node_value")

    @property
    def k(self):
        return len(self.per_edge)

    def copy(self):
        return JunctionGridFunction([g.copy() for g in self.per_edge],
                                    self.node_value)


@dataclass
class NodeDiagnostics:
    node_value: float
    slopes: tuple
    sc_residual: float
    flux_residual: Optional[float]
    kirchhoff_sum: float
    p_bar_list: tuple
    p_under_list: tuple


@dataclass
class JunctionSolveReport:
    iterations: int
    final_residual: float
    dt: float
    converged: bool
    wall_time: float
    method: str
    flux: str = "lax_friedrichs"
    flags: tuple = ()
    per_edge_theta: Optional[list] = None


def _thread_count():
    try:
        return max(1, int(os.environ.get("HJJ_THREADS", "1")))
    except ValueError:
        return 1


def _map_edges(fn, items):
    n = _thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(*args) for args in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(lambda args: fn(*args), items))


# ---------------------------------------------------------------------------
# coupled discretization
# ---------------------------------------------------------------------------

class JunctionDiscretization:
    def __init__(self, problem: JunctionProblem, cfl=0.9):
        self.problem = problem
        self.discs = [EdgeDiscretization(H, e, "external", cfl=cfl)
                      for H, e in zip(problem.hamiltonians, problem.edges)]
        self.cfl = cfl
        self.h_min = min(e.h for e in problem.edges)
        self.floor = problem.junction_condition.A \
            if isinstance(problem.junction_condition, FluxLimited) else -np.inf

    def node_residual(self, us, u0):
        """R0 = u0 + max(A, max_i envelope-min_i(p_in_i)) and the node theta."""
        worst = self.floor
        th0 = 0.0
        for d, u in zip(self.discs, us):
            S = d.theta_tab.span
            p_in = min(max((u0 - u[-2]) / d.h, -S), S)
            worst = max(worst, d.env_node(p_in))
            th0 = max(th0, float(d.theta_tab.range_max(p_in - 1.0, p_in + 1.0)))
        return u0 + worst, th0

    def residuals(self, us, u0, thetas=None, flux="lax_friedrichs"):
        Rs = []
        ths = []
        for i, (d, u) in enumerate(zip(self.discs, us)):
            th_i = None if thetas is None else thetas[i]
            R, th = d.residual(u, theta=th_i, flux=flux)
            Rs.append(R)
            ths.append(th)
        r0, th0 = self.node_residual(us, u0)
        return Rs, r0, ths, th0

    def max_residual(self, Rs, r0):
        return max(abs(r0), max(float(np.max(np.abs(R))) for R in Rs))


def _junction_driver(problem, params, init=None):
    """Jacobi relaxation over all edges plus the node row, with the same
    stiffness fallback to Godunov Gauss-Seidel sweeps as the edge driver."""
    t0 = time.perf_counter()
    jd = JunctionDiscretization(problem, cfl=params.cfl)
    K = problem.k

    if init is None:
        start = min(_default_init(H, d.x)
                    for H, d in zip(problem.hamiltonians, jd.discs))
        if isinstance(problem.junction_condition, FluxLimited):
            start = min(start, -problem.junction_condition.A - 0.5)
        for e in problem.edges:
            if isinstance(e.far_bc, Dirichlet):
                start = min(start, e.far_bc.value)
        us = [np.full(e.n_cells + 1, start) for e in problem.edges]
        u0 = start
    else:
        us = [g.values.copy() for g in init.per_edge]
        u0 = init.node_value
    for e, d, u in zip(problem.edges, jd.discs, us):
        if isinstance(e.far_bc, Dirichlet):
            u[0] = e.far_bc.value
        u[-1] = u0

    it = 0
    dt_min = 0.0
    res = np.inf
    ths = None
    frozen = None
    last_check = (0, np.inf)
    use_sweeps = params.method == "sweep"
    flux_used = "lax_friedrichs"

    if not use_sweeps:
        while it < params.max_iters:
            th_list = None if frozen is None else frozen[0]
            Rs, r0, ths, th0 = jd.residuals(us, u0, thetas=th_list)
            if frozen is not None:
                th0 = frozen[1]
            res = jd.max_residual(Rs, r0)
            if res <= params.tol:
                break
            dts = []
            for d, u, R, th in zip(jd.discs, us, Rs, ths):
                dt = params.cfl * d.h / (th + d.h)
                u -= dt * R
                active = ~d.pinned
                dts.append(float(dt[active].min()) if active.any() else 1.0)
            dt0 = params.cfl * jd.h_min / (th0 + jd.h_min)
            u0 = u0 - dt0 * r0
            for u in us:
                u[-1] = u0
            dt_min = min(min(dts), dt0)
            it += 1
            if frozen is None and res < 1e-3:
                frozen = ([t * 1.02 + 0.01 for t in ths], th0 * 1.02 + 0.01)
            elif frozen is not None and res > 1e-2:
                frozen = None
            if params.method == "auto" and it % params.switch_after == 0:
                it0, res0 = last_check
                last_check = (it, res)
                if not np.isfinite(res0):
                    continue
                rate = (res / res0) ** (1.0 / (it - it0))
                projected = np.inf if rate >= 1.0 - 1e-12 else \
                    it + np.log(params.tol / res) / np.log(rate)
                if projected > params.projected_budget:
                    use_sweeps = True
                    break
        if res <= params.tol and frozen is not None:
            _, _, th_req, th0_req = jd.residuals(us, u0)
            ok = all(np.all(f >= r - 1e-9)
                     for f, r in zip(frozen[0], th_req))
            if not ok or frozen[1] < th0_req - 1e-9:
                frozen = None
                use_sweeps = True  # rare; finish with the sweep phase

    sweeps = 0
    if params.method != "jacobi" and (use_sweeps or res > params.tol):
        flux_used = "godunov"
        lift = max(d.super_level for d in jd.discs)
        for d, u in zip(jd.discs, us):
            u[:] = np.where(d.pinned, u, np.maximum(u, lift))
        u0 = max(u0, lift)
        for u in us:
            u[-1] = u0
        best = np.inf
        stall = 0
        while sweeps < params.max_sweeps:
            for d, u in zip(jd.discs, us):
                d.gauss_seidel_sweep(u, params.tol, flux="godunov")
            u0 = _solve_increasing(
                lambda v: jd.node_residual(us, v)[0], u0, 0.1 * params.tol,
                scale=jd.h_min)
            for u in us:
                u[-1] = u0
            sweeps += 1
            Rs, r0, ths, _ = jd.residuals(us, u0, flux="godunov")
            res = jd.max_residual(Rs, r0)
            if res <= params.tol:
                break
            if res < 0.999 * best:
                best, stall = res, 0
            else:
                stall += 1
                if stall >= 60:
                    break

    grids = [GridFunction1D(u, e, "generic")
             for u, e in zip(us, problem.edges)]
    sol = JunctionGridFunction(grids, float(u0))
    name = "jacobi" if sweeps == 0 else (
        "godunov_sweep" if it == 0 else "jacobi+godunov_sweep")
    theta_rec = None
    if flux_used == "lax_friedrichs":
        theta_rec = frozen[0] if frozen is not None else ths
    rep = JunctionSolveReport(
        iterations=it + sweeps, final_residual=res, dt=dt_min,
        converged=res <= params.tol, wall_time=time.perf_counter() - t0,
        method=name, flux=flux_used, per_edge_theta=theta_rec)
    flags = []
    for g, H in zip(sol.per_edge, problem.hamiltonians):
        if g.discrete_lipschitz() > 2.0 * H.coercivity_bound + 1e-6:
            flags.append("lipschitz_exceeded")
    rep.flags = tuple(flags)
    return sol, rep


def junction_scheme_residuals(sol, problem, report, cfl=0.9):
    """Re-evaluate the discrete residuals of a junction solution with the
    flux and dissipation coefficients recorded in its report."""
    jd = JunctionDiscretization(problem, cfl=cfl)
    us = [g.values for g in sol.per_edge]
    Rs, r0, _, _ = jd.residuals(us, sol.node_value,
                                thetas=report.per_edge_theta,
                                flux=report.flux)
    return Rs, r0


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def solve_junction_direct(problem, params=None):
    """State-constraint junction solution via the coupled monotone node
    scheme."""
    if not isinstance(problem.junction_condition, StateConstraint):
        raise ValueError("solve_junction_direct expects a state-constraint "
                         "junction condition")
    return _junction_driver(problem, params or SolverParams())


def solve_junction_constructive(problem, params=None, tie_tol=None):
    """State-constraint junction solution assembled from per-edge solves.

    Each edge's own constrained solution is computed first; the junction
    value is the smallest of their node values; edges whose node value
    exceeds it by more than tie_tol (default 2h) are re-solved with the
    junction value as Dirichlet data."""
    if not isinstance(problem.junction_condition, StateConstraint):
        raise ValueError("solve_junction_constructive expects a "
                         "state-constraint junction condition")
    params = params or SolverParams()

    sc = _map_edges(
        lambda H, e: solve_edge(H, e, StateConstraint(), params),
        [(H, e) for H, e in zip(problem.hamiltonians, problem.edges)])
    sc_values = [g.node_value for g, _ in sc]
    c_star = min(sc_values)

    grids = []
    reports = [rep for _, rep in sc]
    for (g, rep), H, e, v in zip(sc, problem.hamiltonians, problem.edges,
                                 sc_values):
        tt = 2.0 * e.h if tie_tol is None else tie_tol
        if v - c_star <= tt:
            kept = g.copy()
            kept.values[-1] = c_star
            grids.append(kept)
        else:
            gd, rd = solve_edge(H, e, Dirichlet(c_star), params,
                                init=g.values, sc_value=v)
            gd.values[-1] = c_star
            grids.append(gd)
            reports.append(rd)

    sol = JunctionGridFunction(grids, c_star)
    rep = JunctionSolveReport(
        iterations=sum(r.iterations for r in reports),
        final_residual=max(r.final_residual for r in reports),
        dt=min((r.dt for r in reports if r.dt), default=0.0),
        converged=all(r.converged for r in reports),
        wall_time=sum(r.wall_time for r in reports),
        method="constructive",
        flux=reports[0].flux,
        flags=tuple(f for r in reports for f in r.flags),
    )
    return sol, rep


def solve_flux_limited(problem, params=None):
    """Flux-limited junction solution for quasiconvex Hamiltonians with no
    flat parts; the node residual carries the limiter floor A."""
    if not isinstance(problem.junction_condition, FluxLimited):
        raise ValueError("solve_flux_limited expects a flux-limited "
                         "junction condition")
    for H in problem.hamiltonians:
        if len(H.minima) != 1 or not H.flags.no_flat_parts:
            raise ValueError(
                "flux-limited junction requires quasiconvex Hamiltonians "
                f"with no flat parts, got {H.source}")
    return _junction_driver(problem, params or SolverParams())


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def node_diagnostics(sol: JunctionGridFunction, problem: JunctionProblem,
                     window=4):
    """Junction-side diagnostics of a solved (or candidate) grid function.

    The state-constraint residual uses the scheme's own first-order inward
    quotients, so it vanishes (to solver tolerance) on converged direct
    solutions; the reported slopes are the order-2 one-sided values."""
    jd = JunctionDiscretization(problem)
    us = [g.values for g in sol.per_edge]
    sc_res, _ = jd.node_residual(us, sol.node_value)
    if isinstance(problem.junction_condition, FluxLimited):
        sc_res = sol.node_value + max(
            d.env_node(min(max((sol.node_value - u[-2]) / d.h,
                               -d.theta_tab.span), d.theta_tab.span))
            for d, u in zip(jd.discs, us))

    slopes = tuple(node_slope(g, order=2) for g in sol.per_edge)
    flux_res = None
    if isinstance(problem.junction_condition, FluxLimited):
        lim = make_flux_limiter(problem.hamiltonians,
                                problem.junction_condition.A)
        flux_res = float(sol.node_value + lim(list(slopes)))

    bars, unders = [], []
    for g in sol.per_edge:
        b, un = one_sided_quotients(g, window=min(window, g.edge.n_cells // 2))
        bars.append(b)
        unders.append(un)
    return NodeDiagnostics(
        node_value=sol.node_value,
        slopes=slopes,
        sc_residual=float(sc_res),
        flux_residual=flux_res,
        kirchhoff_sum=float(sum(slopes)),
        p_bar_list=tuple(bars),
        p_under_list=tuple(unders),
    )


def compare_grid_functions(v: JunctionGridFunction, u: JunctionGridFunction):
    """Max over all grid nodes of v - u (positive means v exceeds u)."""
    if v.k != u.k:
        raise ValueError("grid mismatch: different edge counts")
    worst = -np.inf
    for gv, gu in zip(v.per_edge, u.per_edge):
        if gv.values.shape != gu.values.shape or gv.edge.length != gu.edge.length:
            raise ValueError("grid mismatch: incompatible edge grids")
        worst = max(worst, float(np.max(gv.values - gu.values)))
    return worst


@dataclass
class SlopeBoundReport:
    matches_state_constraint: bool
    sc_distance: float
    p_bar: float
    threshold: float
    slope_bound_ok: bool
    interior_max_residual: float

    @property
    def ok(self):
        return self.matches_state_constraint or self.slope_bound_ok


def subsolution_slope_bound_check(u: GridFunction1D, H: Hamiltonian,
                                  params=None, tol=5e-2, window=4):
    """Check the subsolution dichotomy: either u is (numerically) the
    state-constraint solution of its edge, or its one-sided upper quotient
    at the junction stays below the rightmost global minimizer of H."""
    params = params or SolverParams()
    u_sc, _ = solve_edge(H, u.edge, StateConstraint(), params)
    dist = float(np.max(np.abs(u.values - u_sc.values)))
    p_bar, _ = one_sided_quotients(u, window=min(window, u.edge.n_cells // 2))
    pbar_thresh = rightward_min_threshold(H)
    disc = EdgeDiscretization(H, u.edge, "external")
    R, _ = disc.residual(u.values)
    interior = float(np.max(R[1:-1]))
    return SlopeBoundReport(
        matches_state_constraint=dist <= tol,
        sc_distance=dist,
        p_bar=p_bar,
        threshold=pbar_thresh,
        slope_bound_ok=p_bar <= pbar_thresh + tol,
        interior_max_residual=interior,
    )
