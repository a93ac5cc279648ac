import numpy as np
import pytest

from hjj import edge as ed
from hjj import hamiltonians as hm


@pytest.fixture(scope="module")
def h_abs():
    return hm.make_builtin("abs_shift", b=0.0, c=1.0)


@pytest.fixture(scope="module")
def h_quad():
    return hm.make_builtin("quadratic", b=1.0, c=1.0)


@pytest.fixture(scope="module")
def spec400():
    return ed.EdgeSpec(1.0, 400)


@pytest.fixture(scope="module")
def sc_abs(h_abs, spec400):
    return ed.solve_edge(h_abs, spec400, ed.StateConstraint())


@pytest.fixture(scope="module")
def dir_abs(h_abs, spec400):
    # analytic solution u_c(x) = 1 + (c-1)e^x: substituting gives
    # u + |u_x| - 1 = 1 + (c-1)e^x + (1-c)e^x - 1 = 0 for c < 1
    return ed.solve_edge(h_abs, spec400, ed.Dirichlet(0.0), sc_value=1.0)


class TestEdgeSpec:
    def test_grid(self):
        s = ed.EdgeSpec(2.0, 10)
        g = s.grid()
        assert g[0] == -2.0 and g[-1] == 0.0 and len(g) == 11
        assert s.h == 0.2

    def test_validation(self):
        with pytest.raises(ValueError):
            ed.EdgeSpec(-1.0, 100)
        with pytest.raises(ValueError):
            ed.EdgeSpec(1.0, 4)
        with pytest.raises(ValueError):
            ed.EdgeSpec(1.0, 100, far_bc="reflecting")


class TestLaxFriedrichsFlux:
    def test_consistency(self, h_abs):
        assert ed.lax_friedrichs_flux(h_abs, 1.0, 1.0, 1.0) == 0.0

    def test_dissipation(self, h_abs):
        assert ed.lax_friedrichs_flux(h_abs, 0.0, 2.0, 1.0) == -1.0

    def test_quadratic(self, h_quad):
        assert ed.lax_friedrichs_flux(h_quad, 2.0, 0.0, 4.0) == 3.0


class TestBoundaryResidual:
    def test_state_constraint_solution_residual_zero(self, h_abs):
        assert ed.boundary_supersolution_residual(h_abs, 1.0, 1.0, 0.1) == \
            pytest.approx(0.0, abs=1e-12)

    def test_negative_inward_slope(self, h_abs):
        assert ed.boundary_supersolution_residual(h_abs, 0.0, 0.1, 0.1) == \
            pytest.approx(-1.0, abs=1e-12)

    def test_quadratic(self, h_quad):
        assert ed.boundary_supersolution_residual(h_quad, 0.0, 0.2, 0.1) == \
            pytest.approx(-1.0, abs=1e-12)


class TestSolveEdge:
    def test_state_constraint_constant(self, sc_abs):
        u, rep = sc_abs
        assert rep.converged
        assert np.max(np.abs(u.values - 1.0)) <= 1e-2
        assert u.role == "state_constraint"

    def test_dirichlet_analytic(self, dir_abs, spec400):
        u, rep = dir_abs
        assert rep.converged
        exact = 1.0 - np.exp(spec400.grid())
        assert np.max(np.abs(u.values - exact)) <= 1e-2

    def test_shifted_level(self, spec400):
        H = hm.make_builtin("abs_shift", b=0.0, c=2.0)
        u, rep = ed.solve_edge(H, spec400, ed.StateConstraint())
        assert np.max(np.abs(u.values - 2.0)) <= 1e-2

    def test_dirichlet_above_sc_detaches(self, h_abs, spec400):
        u, rep = ed.solve_edge(h_abs, spec400, ed.Dirichlet(2.0))
        assert "dirichlet_not_attained" in rep.flags
        assert np.max(np.abs(u.values - 1.0)) <= 1e-2

    def test_far_dirichlet(self, h_abs):
        # rising branch from u(-1) = 0: u + u_x - 1 = 0 gives
        # u(x) = 1 - exp(-(x+1)); at the node the supersolution envelope
        # min over q >= e^{-1} of |q|-1 equals e^{-1}-1 = -u(0)
        spec = ed.EdgeSpec(1.0, 400, far_bc=ed.Dirichlet(0.0))
        u, rep = ed.solve_edge(h_abs, spec, ed.StateConstraint())
        exact = 1.0 - np.exp(-(spec.grid() + 1.0))
        assert rep.converged
        assert np.max(np.abs(u.values - exact)) <= 1e-2

    def test_far_state_constraint(self, h_abs):
        spec = ed.EdgeSpec(1.0, 400, far_bc=ed.StateConstraint())
        u, rep = ed.solve_edge(h_abs, spec, ed.StateConstraint())
        assert rep.converged
        assert np.max(np.abs(u.values - 1.0)) <= 1e-2

    def test_warm_start_and_tolerance(self, h_abs, spec400):
        u0, _ = ed.solve_edge(h_abs, spec400, ed.StateConstraint())
        u, rep = ed.solve_edge(h_abs, spec400, ed.StateConstraint(),
                               init=u0.values)
        assert rep.converged and rep.iterations <= 5

    def test_non_convergence_reported(self, h_abs, spec400):
        params = ed.SolverParams(max_iters=10, method="jacobi")
        u, rep = ed.solve_edge(h_abs, spec400, ed.StateConstraint(), params)
        assert not rep.converged
        assert rep.final_residual > params.tol

    def test_lipschitz_bound(self, sc_abs, dir_abs, h_abs):
        for u, rep in (sc_abs, dir_abs):
            assert u.discrete_lipschitz() <= 2.0 * h_abs.coercivity_bound
            assert "lipschitz_exceeded" not in rep.flags


class TestStiffHamiltonian:
    def test_double_well_jacobi_vs_sweep(self):
        H = hm.make_builtin("double_well", b=-2.0, c=0.0)
        spec = ed.EdgeSpec(1.0, 64, far_bc=ed.StateConstraint())
        ug, rg = ed.solve_edge(H, spec, ed.StateConstraint(),
                               ed.SolverParams(method="sweep"))
        ua, ra = ed.solve_edge(H, spec, ed.StateConstraint())
        assert rg.converged and ra.converged
        assert np.max(np.abs(ug.values - ua.values)) <= 2e-2

    def test_godunov_flux_consistency(self):
        H = hm.make_builtin("double_well", b=-2.0, c=0.0)
        spec = ed.EdgeSpec(1.0, 64)
        disc = ed.EdgeDiscretization(H, spec, ed.StateConstraint())
        for p in (-3.3, -2.0, -0.5, 1.2):
            assert float(disc.godunov_flux(p, p, 0.0)) == pytest.approx(
                float(H(p)), abs=1e-12)
        # min over [-3, -1] hits the well at -3 and -1 (value 0)
        assert float(disc.godunov_flux(-3.0, -1.0, 0.0)) == pytest.approx(0.0)
        # max over [-3, -1] hits the hump at -2 (value 1)
        assert float(disc.godunov_flux(-1.0, -3.0, 0.0)) == pytest.approx(1.0)


class TestNodeSlope:
    def test_analytic_dirichlet_slope(self, dir_abs):
        u, _ = dir_abs
        assert ed.node_slope(u, order=2) == pytest.approx(-1.0, abs=3e-3)

    def test_constant(self, spec400):
        g = ed.GridFunction1D(np.full(401, 3.0), spec400)
        assert ed.node_slope(g, 1) == 0.0
        assert ed.node_slope(g, 2) == 0.0

    def test_linear_exact(self, spec400):
        g = ed.GridFunction1D(2.5 * spec400.grid() + 1.0, spec400)
        assert ed.node_slope(g, 1) == pytest.approx(2.5, abs=1e-9)
        assert ed.node_slope(g, 2) == pytest.approx(2.5, abs=1e-9)


class TestOneSidedQuotients:
    def test_smooth(self, dir_abs):
        u, _ = dir_abs
        p_bar, p_under = ed.one_sided_quotients(u, window=8)
        assert p_bar == pytest.approx(-1.0, abs=0.05)
        assert p_under == pytest.approx(-1.0, abs=0.05)
        assert p_bar >= p_under

    def test_kink_function(self, spec400):
        g = ed.GridFunction1D(np.abs(spec400.grid()), spec400)
        p_bar, p_under = ed.one_sided_quotients(g, window=5)
        assert p_bar == pytest.approx(-1.0, abs=1e-12)
        assert p_under == pytest.approx(-1.0, abs=1e-12)

    def test_constant(self, spec400):
        g = ed.GridFunction1D(np.zeros(401), spec400)
        assert ed.one_sided_quotients(g, window=4) == (0.0, 0.0)

    def test_window_validation(self, spec400):
        g = ed.GridFunction1D(np.zeros(401), spec400)
        with pytest.raises(ValueError):
            ed.one_sided_quotients(g, window=300)


class TestDirichletStructure:
    def test_abs_family(self, h_abs, spec400):
        cs = [-1.0, -0.5, 0.0, 0.5]
        rep = ed.check_dirichlet_structure(h_abs, spec400, cs)
        assert rep.passed
        np.testing.assert_allclose(rep.node_slopes,
                                   np.asarray(cs) - 1.0, atol=5e-3)
        assert abs(rep.equation_residuals[2]) <= 1e-2

    def test_quadratic_branch(self, h_quad, spec400):
        # c + (s-1)^2 - 1 = 0 on the decreasing branch: s = 1 - sqrt(1+c)...
        # at c = -1: s = 1 - sqrt(2)
        rep = ed.check_dirichlet_structure(h_quad, spec400, [-1.0])
        assert rep.passed
        assert rep.node_slopes[0] == pytest.approx(1.0 - np.sqrt(2.0), abs=1e-2)

    def test_rejects_c_above_sc(self, h_abs, spec400):
        with pytest.raises(ValueError, match="state-constraint value"):
            ed.check_dirichlet_structure(h_abs, spec400, [0.0, 1.5])


class TestSchemeProperties:
    def test_interior_monotonicity(self, h_quad):
        # random perturbation check under the CFL constraint
        rng = np.random.default_rng(7)
        spec = ed.EdgeSpec(1.0, 64)
        disc = ed.EdgeDiscretization(h_quad, spec, ed.StateConstraint())
        P = h_quad.coercivity_bound
        theta = disc.theta_tab.range_max(-2 * P, 2 * P)
        for _ in range(200):
            u = np.cumsum(rng.uniform(-2 * P, 2 * P, 65) * spec.h)
            j = rng.integers(1, 64)
            k = int(rng.choice([j - 1, j + 1]))
            delta = rng.uniform(0, spec.h)
            un, _, _ = disc.pseudo_time_step(u, theta=theta)
            u2 = u.copy()
            u2[k] += delta
            un2, _, _ = disc.pseudo_time_step(u2, theta=theta)
            assert un2[j] >= un[j] - 1e-12
            u3 = u.copy()
            u3[j] += delta
            un3, _, _ = disc.pseudo_time_step(u3, theta=theta)
            assert un3[j] <= un[j] + delta + 1e-12

    def test_comparison_one_step(self, h_abs):
        rng = np.random.default_rng(11)
        spec = ed.EdgeSpec(1.0, 64)
        disc = ed.EdgeDiscretization(h_abs, spec, ed.StateConstraint())
        theta = 2.0
        for _ in range(100):
            u = np.cumsum(rng.uniform(-1, 1, 65) * spec.h)
            v = u - rng.uniform(0, 1, 65)
            un, _, _ = disc.pseudo_time_step(u, theta=theta)
            vn, _, _ = disc.pseudo_time_step(v, theta=theta)
            assert np.all(vn <= un + 1e-12)

    def test_consistency_order_h(self, h_abs):
        # scheme residual of the sampled analytic solution is O(h)
        cs = []
        for n in (100, 200):
            spec = ed.EdgeSpec(1.0, n)
            disc = ed.EdgeDiscretization(h_abs, spec, ed.Dirichlet(0.0))
            exact = 1.0 - np.exp(spec.grid())
            R, _ = disc.residual(exact)
            cs.append(np.max(np.abs(R)) / spec.h)
        assert cs[1] <= 1.5 * cs[0] + 0.05

    def test_convergence_order(self, h_abs):
        errs = []
        for n in (100, 200, 400):
            spec = ed.EdgeSpec(1.0, n)
            u, rep = ed.solve_edge(h_abs, spec, ed.Dirichlet(0.0), sc_value=1.0)
            exact = 1.0 - np.exp(spec.grid())
            errs.append(np.max(np.abs(u.values - exact)))
        orders = np.log2(np.asarray(errs[:-1]) / np.asarray(errs[1:]))
        assert np.all(orders >= 0.9)
