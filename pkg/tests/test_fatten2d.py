import numpy as np
import pytest

from hjj import edge as ed
from hjj import fatten2d as ft
from hjj import hamiltonians as hm


@pytest.fixture(scope="module")
def h_abs1():
    return hm.make_builtin("abs_shift", c=1.0)


@pytest.fixture(scope="module")
def h_abs2():
    return hm.make_builtin("abs_shift", c=2.0)


@pytest.fixture(scope="module")
def H2_max(h_abs1, h_abs2):
    return hm.max_form_2d(h_abs1, h_abs2)


class TestBuildDomain:
    def test_tube_geometry(self):
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.05)
        # 4 cells across: 5 gridlines inside the arm cross-section
        j_in = np.abs(dom.x2) <= 0.1 + 1e-12
        i_mid = int(np.argmin(np.abs(dom.x1 + 0.5)))
        assert dom.mask[i_mid, j_in].sum() == 5
        assert dom.mask.any()

    def test_too_coarse(self):
        with pytest.raises(ValueError, match="4 cells"):
            ft.build_fat_domain(1.0, 1.0, 0.2, 0.1)

    def test_width_constraint(self):
        with pytest.raises(ValueError, match="eps < min"):
            ft.build_fat_domain(0.3, 1.0, 0.2, 0.05)

    def test_asymmetric_arms(self):
        dom = ft.build_fat_domain(1.0, 2.0, 0.2, 0.05)
        assert dom.x1[0] <= -1.2 + 1e-12
        assert dom.x2[0] <= -2.2 + 1e-12
        j0 = int(np.argmin(np.abs(dom.x2)))
        arm1 = dom.x1[dom.mask[:, j0]]
        assert arm1.min() == pytest.approx(-1.0, abs=1e-9)

    def test_boundary_cells(self):
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.05)
        b = dom.boundary_cells()
        assert b.sum() > 0
        assert not (b & ~dom.mask).any()


class TestSolve:
    def test_max_form_constant(self, H2_max):
        # min H2 = -1, so u = 1 is the exact constrained solution
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.025)
        u2, rep = ft.solve_fat_state_constraint(H2_max, dom)
        assert rep.converged
        vals = u2.values[dom.mask]
        assert np.max(np.abs(vals - 1.0)) <= 1e-6

    def test_degenerate_single_arm(self, h_abs1):
        H2 = hm.make_hamiltonian2d(
            lambda p1, p2, x1, x2: np.abs(p1) - 1.0,
            level=3.0, coercivity_bound=4.0, source="transverse-free")
        dom = ft.build_rectangle_domain(1.0, 0.2, 0.025)
        u2, rep = ft.solve_fat_state_constraint(H2, dom)
        assert rep.converged
        tr = ft.extract_axis_trace(u2, dom, 1)
        u1, _ = ed.solve_edge(h_abs1, ed.EdgeSpec(1.0, 40),
                              ed.StateConstraint())
        x1d = ed.EdgeSpec(1.0, 40).grid()
        interp = np.interp(tr.edge.grid(), x1d, u1.values)
        assert np.max(np.abs(tr.values - interp)) <= 2e-2
        # constant across the tube
        spread = 0.0
        for i in range(dom.mask.shape[0]):
            row = u2.values[i, dom.mask[i]]
            if row.size > 1:
                spread = max(spread, float(row.max() - row.min()))
        assert spread <= 1e-6

    def test_monotone_from_subsolution_start(self, H2_max):
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.05)
        sys_ = ft.FatSystem(H2_max, dom)
        u = sys_.default_init()
        for _ in range(300):
            u_new, R, _ = sys_.step(u)
            assert np.all(u_new >= u - 1e-12)
            u = u_new

    def test_x_dependent_hamiltonian(self, h_abs1, h_abs2):
        H2 = hm.parse_expression_2d(
            "max(abs(p1) - 1, abs(p2) - 2) + 0.3*x1")
        dom = ft.build_fat_domain(0.6, 0.6, 0.2, 0.05)
        u2, rep = ft.solve_fat_state_constraint(H2, dom)
        assert rep.converged
        assert u2.discrete_lipschitz() <= 2.0 * H2.coercivity_bound + 1e-6


class TestTrace:
    def test_symmetric_traces_agree(self, h_abs1):
        H2 = hm.max_form_2d(h_abs1, h_abs1)
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.05)
        u2, _ = ft.solve_fat_state_constraint(H2, dom)
        t1 = ft.extract_axis_trace(u2, dom, 1)
        t2 = ft.extract_axis_trace(u2, dom, 2)
        assert np.max(np.abs(t1.values - t2.values)) <= 1e-6

    def test_trace_endpoints(self, H2_max):
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.05)
        u2, _ = ft.solve_fat_state_constraint(H2_max, dom)
        tr = ft.extract_axis_trace(u2, dom, 1)
        g = tr.edge.grid()
        assert abs(g[-1]) <= dom.h2
        assert abs(g[0] + 1.0) <= dom.h2

    def test_bad_axis(self, H2_max):
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.05)
        u2, _ = ft.solve_fat_state_constraint(H2_max, dom)
        with pytest.raises(ValueError, match="axis"):
            ft.extract_axis_trace(u2, dom, 3)


class TestStudy:
    def test_max_form_convergence(self, H2_max):
        rep = ft.fattening_study(H2_max, [0.2, 0.1], n_1d=200)
        errs = [r.trace_error for r in rep.records]
        assert errs[1] <= errs[0] + 1e-9
        assert errs[1] <= 0.1
        for r in rep.records:
            assert r.converged
            assert r.node_super_residual >= -5e-2
            assert max(r.reduced_residuals) <= 3.0 * (r.epsilon + r.h2)

    def test_anisotropic_quadratic(self):
        H2 = hm.parse_expression_2d("p1^2 + 10*p2^2 - 2")
        rep = ft.fattening_study(
            H2, [0.2], a1=0.5, a2=0.5, h2_over_eps=0.25, n_1d=160,
            solver_params=ed.SolverParams(method="sweep"))
        r = rep.records[0]
        assert r.converged
        # traces obey their own reduced equations even though the joint
        # Hamiltonian is not the max of the reductions
        assert max(r.reduced_residuals) <= 0.1
        assert abs(r.node_value - rep.reference_node_value) <= 0.1

    def test_eps_order_validated(self, H2_max):
        with pytest.raises(ValueError, match="decrease"):
            ft.fattening_study(H2_max, [0.1, 0.2])


class TestSchemeProperties:
    def test_interior_monotonicity(self, H2_max):
        rng = np.random.default_rng(5)
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.05)
        sys_ = ft.FatSystem(H2_max, dom)
        interior = np.nonzero((sys_.mode1 == 0) & (sys_.mode2 == 0))[0]
        theta = (np.full(sys_.count, 1.5), np.full(sys_.count, 1.5))
        for _ in range(100):
            u = rng.uniform(-1.0, 1.0, sys_.count) * dom.h2 * 4
            j = int(rng.choice(interior))
            nbr = int(rng.choice([sys_.iE[j], sys_.iW[j],
                                  sys_.iN[j], sys_.iS[j]]))
            delta = rng.uniform(0, dom.h2)
            un, _, _ = sys_.step(u, theta=theta)
            u2 = u.copy()
            u2[nbr] += delta
            un2, _, _ = sys_.step(u2, theta=theta)
            assert un2[j] >= un[j] - 1e-12

    def test_lipschitz_bound(self, H2_max):
        dom = ft.build_fat_domain(1.0, 1.0, 0.2, 0.025)
        u2, _ = ft.solve_fat_state_constraint(H2_max, dom)
        assert u2.discrete_lipschitz() <= 2.0 * H2_max.coercivity_bound
