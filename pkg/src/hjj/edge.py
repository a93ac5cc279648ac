"""Monotone finite differences for u + H(u_x, x) = 0 on a single edge (-a, 0).

The scheme is Lax-Friedrichs with a per-point dissipation coefficient
theta_j bounding |dH/dp| over the locally encountered slope range:

    R_j = u_j + H((p- + p+)/2, x_j) - (theta_j / 2)(p+ - p-),

driven to zero by pseudo-time relaxation u_j <- u_j - dt_j R_j with the
monotonicity step restriction dt_j = cfl * h / (theta_j + h). Boundary rows
replace the flux with the binding-test-slope construction: at the junction
end x = 0 the admissible test slopes are q >= p_in = (u_n - u_{n-1})/h and
the residual uses min over q in [p_in, P] of H(q, 0); at the far end the
mirrored prefix envelope is used. Dirichlet rows pin the value; a Neumann
row supplies a ghost slope.

Pseudo-time is a solver device only. When its step restriction makes the
iteration impractically long (stiff Hamiltonians with large |dH/dp|), the
driver switches to nonlinear Gauss-Seidel sweeps that solve each nodal
equation exactly; the nodal equations, and hence the fixed point, are
identical for both drivers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .hamiltonians import (
    Hamiltonian,
    SlopeEnvelope,
    SlopeLipschitzTable,
    find_minima,
)

THETA_PAD = 1.0


# ---------------------------------------------------------------------------
# boundary conditions and basic containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dirichlet:
    value: float


@dataclass(frozen=True)
class Neumann:
    slope: float


@dataclass(frozen=True)
class StateConstraint:
    pass


@dataclass(frozen=True)
class EdgeSpec:
    """Geometry of one edge: the interval (-length, 0) with n_cells cells."""

    length: float
    n_cells: int
    far_bc: object = Neumann(0.0)

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("edge length must be positive")
        if self.n_cells < 8:
            raise ValueError("n_cells must be >= 8")
        if not isinstance(self.far_bc, (Dirichlet, Neumann, StateConstraint)):
            raise ValueError(f"unsupported far boundary condition {self.far_bc!r}")

    @property
    def h(self):
        return self.length / self.n_cells

    def grid(self):
        return -self.length + self.h * np.arange(self.n_cells + 1)


@dataclass
class GridFunction1D:
    """Nodal values u_0..u_n on an edge grid; u_n sits at the junction x=0."""

    values: np.ndarray
    edge: EdgeSpec
    role: str = "generic"

    @property
    def node_value(self):
        return float(self.values[-1])

    def discrete_lipschitz(self):
        return float(np.max(np.abs(np.diff(self.values))) / self.edge.h)

    def copy(self):
        return GridFunction1D(self.values.copy(), self.edge, self.role)


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    dt: float
    converged: bool
    wall_time: float
    method: str = "jacobi"
    flags: tuple = ()
    # dissipation coefficients of the converged Lax-Friedrichs scheme, or
    # None when the Godunov flux finished the solve
    theta: Optional[np.ndarray] = None
    flux: str = "lax_friedrichs"


@dataclass(frozen=True)
class SolverParams:
    """Driver configuration.

    method "jacobi" runs the Lax-Friedrichs pseudo-time iteration as is;
    "sweep" runs nonlinear Gauss-Seidel with the sampled-Godunov flux;
    "auto" starts with Jacobi and falls back to sweeps when the projected
    iteration count exceeds projected_budget (stiff Hamiltonians whose
    |dH/dp| forces a tiny pseudo-time step).
    """

    tol: float = 1e-8
    max_iters: int = 200_000
    cfl: float = 0.9
    method: str = "auto"  # auto | jacobi | sweep
    flux: str = "lax_friedrichs"  # flux of the Jacobi phase
    switch_after: int = 2000
    projected_budget: int = 40_000
    max_sweeps: int = 3000


# ---------------------------------------------------------------------------
# flux and boundary residual primitives
# ---------------------------------------------------------------------------

def lax_friedrichs_flux(H, p_minus, p_plus, theta, x=0.0):
    """Monotone numerical Hamiltonian H((p- + p+)/2, x) - (theta/2)(p+ - p-).

    Nondecreasing in p_minus and nonincreasing in p_plus provided theta
    bounds |dH/dp| on the relevant slope range.
    """
    return H((np.asarray(p_minus) + np.asarray(p_plus)) / 2.0, x) \
        - (theta / 2.0) * (np.asarray(p_plus) - np.asarray(p_minus))


def boundary_supersolution_residual(H, u0, u_in, h):
    """Junction-end supersolution residual u0 + min_{q in [p_in, P]} H(q, 0)
    with p_in = (u0 - u_in)/h, the inward difference quotient.

    Admissible test slopes for a function touching from below at the right
    endpoint are exactly q >= p_in; the binding inequality is the envelope
    minimum over them.
    """
    env = SlopeEnvelope(H, x0=0.0, side="right")
    return float(u0 + env((u0 - u_in) / h))


# ---------------------------------------------------------------------------
# discretization context
# ---------------------------------------------------------------------------

class EdgeDiscretization:
    """Precomputed tables and residual evaluation for one edge.

    node_bc may be Dirichlet, StateConstraint, or the string "external"
    (the junction solver owns the node row)."""

    def __init__(self, H: Hamiltonian, edge: EdgeSpec, node_bc, cfl=0.9):
        self.H = H
        self.edge = edge
        self.node_bc = node_bc
        self.cfl = cfl
        self.x = edge.grid()
        self.h = edge.h
        n = edge.n_cells
        xs = self.x[:: max(1, n // 24)]
        span = 2.0 * H.coercivity_bound + 2.0
        self.theta_tab = SlopeLipschitzTable(H, xs, span=span)
        # interior critical slopes of H(., 0): Godunov candidate set
        P = H.coercivity_bound
        maxima = find_minima(lambda p, x: -np.asarray(H.fn(p, x)), P,
                             resolution=2048)
        self.crit = np.unique(np.concatenate(
            [np.asarray(H.minima, dtype=float), maxima]))
        # constant upper barrier: u = super_level is a discrete super-solution
        qs = np.linspace(-P, P, 2049)
        hmin = min(float(np.min(np.asarray(H(qs, x)))) for x in xs)
        self.super_level = -hmin + 1.0
        self.env_node = None
        if isinstance(node_bc, StateConstraint) or node_bc == "external":
            self.env_node = SlopeEnvelope(H, x0=0.0, side="right")
        self.env_far = None
        if isinstance(edge.far_bc, StateConstraint):
            self.env_far = SlopeEnvelope(H, x0=float(self.x[0]), side="left")
        self.pinned = np.zeros(n + 1, dtype=bool)
        if isinstance(edge.far_bc, Dirichlet):
            self.pinned[0] = True
        if isinstance(node_bc, Dirichlet) or node_bc == "external":
            self.pinned[-1] = True

    # -- vectorized residual ------------------------------------------------

    def local_theta(self, p):
        """Dissipation coefficients: theta at grid point j bounds |dH/dp|
        over [min(p-, p+) - pad, max(p-, p+) + pad]."""
        lo = np.minimum(p[:-1], p[1:]) - THETA_PAD
        hi = np.maximum(p[:-1], p[1:]) + THETA_PAD
        return self.theta_tab.range_max(lo, hi)

    def godunov_flux(self, pm, pp, x):
        """Sampled-Godunov numerical Hamiltonian: min of H over [p-, p+]
        when p- <= p+, max over [p+, p-] otherwise.

        Candidates are the two endpoints, the interior critical slopes of
        H(., 0), and a few midpoint samples (cover for x-dependent H whose
        critical slopes drift)."""
        pm = np.asarray(pm, dtype=float)
        pp = np.asarray(pp, dtype=float)
        lo = np.minimum(pm, pp)
        hi = np.maximum(pm, pp)
        vals = [np.asarray(self.H(pm, x)), np.asarray(self.H(pp, x))]
        for c in self.crit:
            vals.append(np.asarray(self.H(np.clip(c, lo, hi), x)))
        for t in (0.25, 0.5, 0.75):
            vals.append(np.asarray(self.H(lo + t * (hi - lo), x)))
        stack = np.stack(vals)
        return np.where(pm <= pp, stack.min(axis=0), stack.max(axis=0))

    def residual(self, u, theta=None, flux="lax_friedrichs"):
        """Full residual vector and the per-point theta actually used.

        Pinned rows report zero. theta, when given, must cover interior
        points (used by the monotonicity property tests)."""
        h = self.h
        n = self.edge.n_cells
        p = np.diff(u) / h
        R = np.zeros(n + 1)

        far = self.edge.far_bc
        lo = np.empty(n + 1)
        hi = np.empty(n + 1)
        lo[1:-1] = np.minimum(p[:-1], p[1:])
        hi[1:-1] = np.maximum(p[:-1], p[1:])
        g = far.slope if isinstance(far, Neumann) else 0.0
        lo[0] = min(g, p[0]) if isinstance(far, Neumann) else p[0]
        hi[0] = max(g, p[0]) if isinstance(far, Neumann) else p[0]
        lo[n] = hi[n] = p[-1]
        th = self.theta_tab.range_max(lo - THETA_PAD, hi + THETA_PAD)
        if theta is not None:
            th = np.broadcast_to(np.asarray(theta, dtype=float), (n + 1,)).copy()

        # slope arguments of H are clamped to the tabulated span: transient
        # slopes beyond it would outrun the dissipation bound (the clamp is
        # inactive at the fixed point, whose slopes obey the Lipschitz bound)
        S = self.theta_tab.span
        pc = np.clip(p, -S, S)
        if flux == "godunov":
            R[1:-1] = u[1:-1] + self.godunov_flux(pc[:-1], pc[1:], self.x[1:-1])
            if isinstance(far, Neumann):
                R[0] = u[0] + float(self.godunov_flux(g, float(pc[0]), self.x[0]))
        else:
            avg = 0.5 * (pc[:-1] + pc[1:])
            R[1:-1] = u[1:-1] + np.asarray(self.H(avg, self.x[1:-1])) \
                - 0.5 * th[1:-1] * (p[1:] - p[:-1])
            if isinstance(far, Neumann):
                R[0] = u[0] + float(self.H(0.5 * (g + float(pc[0])), self.x[0])) \
                    - 0.5 * th[0] * (p[0] - g)
        if isinstance(far, StateConstraint):
            R[0] = u[0] + self.env_far(float(pc[0]))

        if isinstance(self.node_bc, StateConstraint):
            R[n] = u[n] + self.env_node(float(pc[-1]))
        R[self.pinned] = 0.0
        return R, th

    def pseudo_time_step(self, u, theta=None):
        """One Jacobi relaxation step; returns (u_new, residual, dt_min)."""
        R, th = self.residual(u, theta=theta)
        dt = self.cfl * self.h / (th + self.h)
        u_new = u - dt * R
        u_new[self.pinned] = u[self.pinned]
        active = ~self.pinned
        return u_new, R, float(dt[active].min()) if active.any() else 0.0

    # -- scalar nodal equations (Gauss-Seidel driver) -------------------------

    def nodal_residual(self, u, j, v, th_j, flux="lax_friedrichs"):
        """Residual of row j with the center value replaced by v.

        Slope arguments of H are clamped to the tabulated span; linear
        penalty terms keep the map strictly increasing in v (slope >= 1)
        and finite for any candidate value."""
        h = self.h
        n = self.edge.n_cells
        S = self.theta_tab.span
        clamp = lambda q: min(max(q, -S), S)
        if j == 0:
            far = self.edge.far_bc
            pp = (u[1] - v) / h
            if isinstance(far, Neumann):
                g = far.slope
                if flux == "godunov":
                    return v + float(self.godunov_flux(g, clamp(pp), self.x[0])) \
                        + max(-pp - S, 0.0)
                return v + float(self.H(clamp(0.5 * (g + pp)), self.x[0])) \
                    - 0.5 * th_j * (pp - g)
            if isinstance(far, StateConstraint):
                return v + self.env_far(clamp(pp)) + max(-pp - S, 0.0)
            return 0.0
        if j == n:
            if isinstance(self.node_bc, StateConstraint):
                p_in = (v - u[n - 1]) / h
                return v + self.env_node(clamp(p_in)) + max(p_in - S, 0.0)
            return 0.0
        pm = (v - u[j - 1]) / h
        pp = (u[j + 1] - v) / h
        if flux == "godunov":
            return v + float(self.godunov_flux(clamp(pm), clamp(pp), self.x[j])) \
                + max(pm - S, 0.0) + max(-pp - S, 0.0)
        return v + float(self.H(clamp(0.5 * (pm + pp)), self.x[j])) \
            - 0.5 * th_j * (pp - pm)

    def theta_at(self, u, j):
        h = self.h
        n = self.edge.n_cells
        if j == 0:
            pm = self.edge.far_bc.slope if isinstance(self.edge.far_bc, Neumann) \
                else (u[1] - u[0]) / h
            pp = (u[1] - u[0]) / h
        elif j == n:
            pm = pp = (u[n] - u[n - 1]) / h
        else:
            pm = (u[j] - u[j - 1]) / h
            pp = (u[j + 1] - u[j]) / h
        return float(self.theta_tab.range_max(min(pm, pp) - THETA_PAD,
                                              max(pm, pp) + THETA_PAD))

    def gauss_seidel_sweep(self, u, tol, flux="godunov"):
        """One forward+backward sweep solving each nodal equation exactly."""
        n = self.edge.n_cells
        order = list(range(n + 1)) + list(range(n, -1, -1))
        lf = flux != "godunov"
        for j in order:
            if self.pinned[j]:
                continue
            for _ in range(3):
                th_j = self.theta_at(u, j) if lf else 0.0
                v = _solve_increasing(
                    lambda w: self.nodal_residual(u, j, w, th_j, flux),
                    u[j], 0.1 * tol, scale=self.h)
                moved = abs(v - u[j])
                u[j] = v
                if not lf or moved <= self.h * THETA_PAD:
                    break
        return u


def _solve_increasing(f, v0, tol, scale):
    """Root of a strictly increasing scalar function with slope >= 1.

    The slope bound places the root within |f(v0)| of v0, giving a safe
    initial bracket; inside it a bisection-guarded secant finishes."""
    f0 = f(v0)
    if abs(f0) <= tol:
        return v0
    width = abs(f0) * (1.0 + 1e-12) + 1e-15
    if f0 > 0:
        lo, hi, fhi = v0 - width, v0, f0
        flo = f(lo)
        while flo > 0 and width < 1e12:
            hi, fhi = lo, flo
            width *= 2.0
            lo -= width
            flo = f(lo)
    else:
        lo, flo, hi = v0, f0, v0 + width
        fhi = f(hi)
        while fhi < 0 and width < 1e12:
            lo, flo = hi, fhi
            width *= 2.0
            hi += width
            fhi = f(hi)
    side = 0
    for _ in range(100):
        if fhi > flo:
            mid = (flo * hi - fhi * lo) / (flo - fhi)
        else:
            mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or hi - lo <= 1e-14 * (1.0 + abs(mid)):
            return mid
        if fm > 0:
            hi, fhi = mid, fm
            if side == 1:
                flo *= 0.5
            side = 1
        else:
            lo, flo = mid, fm
            if side == -1:
                fhi *= 0.5
            side = -1
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _default_init(H, x):
    return float(-np.max(np.asarray(H(np.zeros_like(x), x))) - 0.5)


def _run_solver(disc: EdgeDiscretization, u, params: SolverParams):
    """Shared driver: Jacobi pseudo-time with optional Gauss-Seidel phase."""
    t0 = time.perf_counter()
    method = params.method
    flags = []
    it = 0
    dt_min = 0.0
    res = np.inf
    last_check = (0, np.inf)
    use_sweeps = method == "sweep"

    # once the residual is small, freeze theta so the update becomes a fixed
    # map (state-dependent theta can limit-cycle just above the tolerance)
    frozen_th = None
    if not use_sweeps:
        active = ~disc.pinned
        while it < params.max_iters:
            R, th = disc.residual(u, theta=frozen_th)
            res = float(np.max(np.abs(R)))
            if res <= params.tol:
                ok = True
                if frozen_th is not None:
                    _, th_req = disc.residual(u)
                    ok = bool(np.all(frozen_th >= th_req - 1e-9))
                if ok:
                    rep = SolveReport(it, res, dt_min, True,
                                      time.perf_counter() - t0, "jacobi",
                                      tuple(flags), theta=th.copy())
                    return u, rep
                frozen_th = None
                continue
            dt = params.cfl * disc.h / (th + disc.h)
            u = u - dt * R  # pinned rows carry zero residual
            dt_min = float(dt[active].min()) if active.any() else 0.0
            it += 1
            if frozen_th is None and res < 1e-3:
                frozen_th = th * 1.02 + 0.01
            elif frozen_th is not None and res > 1e-2:
                frozen_th = None
            if method == "auto" and it % params.switch_after == 0:
                it0, res0 = last_check
                last_check = (it, res)
                if not np.isfinite(res0):
                    continue
                rate = (res / res0) ** (1.0 / (it - it0))
                if rate >= 1.0 - 1e-12:
                    projected = np.inf
                else:
                    projected = it + np.log(params.tol / res) / np.log(rate)
                if projected > params.projected_budget:
                    use_sweeps = True
                    break
        if not use_sweeps:
            rep = SolveReport(it, res, dt_min, res <= params.tol,
                              time.perf_counter() - t0, "jacobi",
                              ("max_iters",), theta=th.copy())
            return u, rep

    # sweeps descend fast from a super-solution; lift the state above one
    u = np.where(disc.pinned, u, np.maximum(u, disc.super_level))
    sweeps = 0
    best = np.inf
    stall = 0
    while sweeps < params.max_sweeps:
        u = disc.gauss_seidel_sweep(u, params.tol, flux="godunov")
        sweeps += 1
        R, th = disc.residual(u, flux="godunov")
        res = float(np.max(np.abs(R)))
        if res <= params.tol:
            break
        if res < 0.999 * best:
            best, stall = res, 0
        else:
            stall += 1
            if stall >= 60:
                flags.append("sweep_stalled")
                break
    name = "godunov_sweep" if it == 0 else "jacobi+godunov_sweep"
    rep = SolveReport(it + sweeps, res, dt_min, res <= params.tol,
                      time.perf_counter() - t0, name, tuple(flags),
                      flux="godunov")
    return u, rep


def solve_edge(H, edge, node_bc, params=None, init=None, sc_value=None):
    """Solve u + H(u_x, x) = 0 on the edge with the given junction-end
    condition (Dirichlet(c) or StateConstraint()).

    Dirichlet data above the state-constraint value is unattainable by the
    continuous problem; in that case the state-constraint solution is
    returned and the report carries the flag "dirichlet_not_attained".
    Pass sc_value (the state-constraint node value) to skip its recomputation.
    """
    params = params or SolverParams()
    if isinstance(node_bc, Dirichlet):
        if sc_value is None:
            u_sc, _ = solve_edge(H, edge, StateConstraint(), params, init=init)
            sc_value = u_sc.node_value
            sc_grid = u_sc
        else:
            sc_grid = None
        if node_bc.value > sc_value:
            if sc_grid is None:
                sc_grid, rep = solve_edge(H, edge, StateConstraint(), params,
                                          init=init)
            else:
                rep = SolveReport(0, 0.0, 0.0, True, 0.0, "jacobi")
            rep.flags = rep.flags + ("dirichlet_not_attained",)
            sc_grid.role = "state_constraint"
            return sc_grid, rep

    disc = EdgeDiscretization(H, edge, node_bc, cfl=params.cfl)
    x = disc.x
    if init is None:
        start = _default_init(H, x)
        if isinstance(node_bc, Dirichlet):
            start = min(start, node_bc.value)
        if isinstance(edge.far_bc, Dirichlet):
            start = min(start, edge.far_bc.value)
        u = np.full(edge.n_cells + 1, start)
    else:
        u = np.array(init, dtype=float, copy=True)
    if isinstance(edge.far_bc, Dirichlet):
        u[0] = edge.far_bc.value
    if isinstance(node_bc, Dirichlet):
        u[-1] = node_bc.value

    u, rep = _run_solver(disc, u, params)
    role = "state_constraint" if isinstance(node_bc, StateConstraint) else "dirichlet"
    g = GridFunction1D(u, edge, role)
    if g.discrete_lipschitz() > 2.0 * H.coercivity_bound + 1e-6:
        rep.flags = rep.flags + ("lipschitz_exceeded",)
    return g, rep


# ---------------------------------------------------------------------------
# node diagnostics on one edge
# ---------------------------------------------------------------------------

def node_slope(u: GridFunction1D, order=2):
    """One-sided slope at the junction end x = 0-."""
    v = u.values
    h = u.edge.h
    if order == 1:
        return float((v[-1] - v[-2]) / h)
    if order == 2:
        if u.edge.n_cells < 2:
            raise ValueError("order 2 needs at least 2 cells")
        return float((3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h))
    raise ValueError("order must be 1 or 2")


def one_sided_quotients(u: GridFunction1D, window):
    """Extremes of the difference quotients (u_n - u_{n-k})/(k h), k <= window,
    discrete stand-ins for the one-sided limsup/liminf at 0-."""
    if window > u.edge.n_cells // 2:
        raise ValueError("window too large for the grid")
    v = u.values
    h = u.edge.h
    ks = np.arange(1, window + 1)
    quot = (v[-1] - v[-1 - ks]) / (ks * h)
    return float(quot.max()), float(quot.min())


@dataclass
class PropertyReport:
    c_values: np.ndarray
    node_values: np.ndarray
    node_slopes: np.ndarray
    equation_residuals: np.ndarray
    h_forward_diffs: np.ndarray
    values_nondecreasing: bool
    slopes_nondecreasing: bool
    residuals_small: bool
    on_decreasing_part: bool

    @property
    def passed(self):
        return (self.values_nondecreasing and self.slopes_nondecreasing
                and self.residuals_small and self.on_decreasing_part)


def check_dirichlet_structure(H, edge, c_list, params=None, slope_tol=1e-3,
                              residual_tol=5e-2, decrease_tol=1e-2):
    """Solve the Dirichlet family u(0) = c for increasing c below the
    state-constraint value and verify the expected structure: node values and
    slopes nondecreasing in c, the equation holding at the node, and the node
    slope sitting on the decreasing part of H."""
    params = params or SolverParams()
    c_arr = np.asarray(sorted(c_list), dtype=float)
    u_sc, _ = solve_edge(H, edge, StateConstraint(), params)
    sc0 = u_sc.node_value
    if np.any(c_arr >= sc0 - 2.0 * params.tol):
        raise ValueError(
            f"every c must lie below the state-constraint value {sc0:.6g}")
    slopes, values, residuals, fds = [], [], [], []
    prev = None
    for c in c_arr:
        g, rep = solve_edge(H, edge, Dirichlet(float(c)), params,
                            init=prev, sc_value=sc0)
        prev = g.values
        s = node_slope(g, order=2)
        slopes.append(s)
        values.append(g.node_value)
        residuals.append(float(c + H(s, 0.0)))
        d = 1e-4
        fds.append(float((H(s + d, 0.0) - H(s, 0.0)) / d))
    slopes = np.asarray(slopes)
    values = np.asarray(values)
    residuals = np.asarray(residuals)
    fds = np.asarray(fds)
    return PropertyReport(
        c_values=c_arr,
        node_values=values,
        node_slopes=slopes,
        equation_residuals=residuals,
        h_forward_diffs=fds,
        values_nondecreasing=bool(np.all(np.diff(values) >= -slope_tol)),
        slopes_nondecreasing=bool(np.all(np.diff(slopes) >= -slope_tol)),
        residuals_small=bool(np.all(np.abs(residuals) <= residual_tol)),
        on_decreasing_part=bool(np.all(fds <= decrease_tol)),
    )
