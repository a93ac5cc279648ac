import json
import os

import numpy as np
import pytest

from hjj import cli
from hjj import edge as ed
from hjj import junction as jn
from hjj import reports as rp
from hjj.problems import (
    ProblemValidationError,
    hamiltonian2d_from_spec,
    hamiltonian_from_spec,
    load_problem,
    parse_problem_dict,
    write_problem,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "problems")


def minimal_problem(**overrides):
    data = {
        "schema_version": 1,
        "K": 2,
        "edges": [
            {"length": 1.0, "n_cells": 64,
             "far_bc": {"kind": "neumann", "slope": 0.0},
             "hamiltonian": {"family": "abs_shift", "b": 0.0, "c": 1.0}},
            {"length": 1.0, "n_cells": 64,
             "far_bc": {"kind": "neumann", "slope": 0.0},
             "hamiltonian": {"family": "abs_shift", "b": 0.0, "c": 2.0}},
        ],
        "junction": {"kind": "state_constraint"},
    }
    data.update(overrides)
    return data


class TestHamiltonianSpecs:
    def test_family_spec(self):
        H = hamiltonian_from_spec({"family": "abs_shift", "b": 0.0, "c": 1.0})
        assert H(2.0) == 1.0

    def test_expr_spec(self):
        H = hamiltonian_from_spec({"expr": "abs(p)-1"})
        assert H(1.0) == 0.0

    def test_minima_override(self):
        H = hamiltonian_from_spec({"expr": "abs(p)-1", "minima": [0.0]})
        assert H.minima == (0.0,)

    def test_unknown_family_named(self):
        with pytest.raises(ProblemValidationError, match="cubic"):
            hamiltonian_from_spec({"family": "cubic"})

    def test_2d_specs(self):
        H2 = hamiltonian2d_from_spec({"expr": "p1^2 + 10*p2^2"})
        assert H2(1.0, 1.0) == 11.0
        Hm = hamiltonian2d_from_spec({"max_form": [
            {"family": "abs_shift", "c": 1.0},
            {"family": "abs_shift", "c": 2.0}]})
        assert Hm(0.0, 0.0) == -1.0


class TestLoadProblem:
    def test_fixture_roundtrip(self, tmp_path):
        pf = load_problem(os.path.join(FIXTURES, "junction_abs12.json"))
        assert pf.k == 2
        out = tmp_path / "copy.json"
        write_problem(pf.raw, out)
        pf2 = load_problem(out)
        assert pf2.raw == pf.raw

    def test_all_shipped_fixtures_load(self):
        for name in os.listdir(FIXTURES):
            pf = load_problem(os.path.join(FIXTURES, name))
            assert pf.problem.k >= 1

    def test_eps_must_decrease(self):
        data = minimal_problem(viscous={"eps_list": [0.1, 0.2]})
        with pytest.raises(ProblemValidationError, match="must decrease"):
            parse_problem_dict(data)

    def test_unknown_family_in_file(self):
        data = minimal_problem()
        data["edges"][0]["hamiltonian"] = {"family": "septic"}
        with pytest.raises(ProblemValidationError, match="septic"):
            parse_problem_dict(data)

    def test_k_mismatch(self):
        data = minimal_problem(K=3)
        with pytest.raises(ProblemValidationError, match="K=3"):
            parse_problem_dict(data)

    def test_parse_error_has_position(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"schema_version": 1,\n  "K": }')
        with pytest.raises(ProblemValidationError, match="line 2"):
            load_problem(bad)

    def test_flux_needs_A(self):
        data = minimal_problem(junction={"kind": "flux_limited"})
        with pytest.raises(ProblemValidationError, match="junction.A"):
            parse_problem_dict(data)

    def test_fatten_requires_two_edges(self):
        data = minimal_problem(K=1)
        data["edges"] = data["edges"][:1]
        data["fatten"] = {"hamiltonian2d": {"expr": "p1^2+p2^2"},
                         "eps_list": [0.2], "h2": 0.05}
        with pytest.raises(ProblemValidationError, match="K=2"):
            parse_problem_dict(data)


def run_cli(args):
    return cli.main(args)


class TestCli:
    def test_solve_junction_report(self, tmp_path):
        data = minimal_problem()
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        out = tmp_path / "out"
        assert run_cli(["solve-junction", "--problem", str(prob),
                        "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["direct"]["node_value"] == pytest.approx(1.0, abs=2e-2)
        assert (out / "grid.csv").exists()
        assert (out / "plot_profiles.gp").exists()

    def test_solve_edge_dirichlet(self, tmp_path):
        data = minimal_problem()
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        out = tmp_path / "out"
        assert run_cli(["solve-edge", "--problem", str(prob), "--out",
                        str(out), "--dirichlet", "0.0"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["solve"]["node_value"] == 0.0
        assert report["solve"]["node_slope"] == pytest.approx(-1.0, abs=2e-2)

    def test_flux_limited_requires_kind(self, tmp_path):
        data = minimal_problem()
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        assert run_cli(["flux-limited", "--problem", str(prob),
                        "--out", str(tmp_path / "o")]) == 3

    def test_flux_limited_bound(self, tmp_path):
        data = minimal_problem(junction={"kind": "flux_limited", "A": -0.5})
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        out = tmp_path / "out"
        assert run_cli(["flux-limited", "--problem", str(prob),
                        "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["solve"]["bound_minus_A_ok"]

    def test_viscous_sweep_and_determinism(self, tmp_path):
        data = minimal_problem(viscous={"eps_list": [0.4, 0.2, 0.1]})
        for e in data["edges"]:
            e["far_bc"] = {"kind": "dirichlet", "value": 0.0}
            e["hamiltonian"] = {"family": "abs_shift", "b": 0.0, "c": 1.0}
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            assert run_cli(["viscous-sweep", "--problem", str(prob),
                            "--out", str(out), "--seed", "7"]) == 0
            outs.append((out / "sweep.csv").read_bytes())
        assert outs[0] == outs[1]
        report = json.loads((tmp_path / "a" / "report.json").read_text())
        assert report["sweep"]["classification"] == "selects_state_constraint"

    def test_convergence_subcommand(self, tmp_path):
        data = minimal_problem()
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        out = tmp_path / "out"
        assert run_cli(["convergence", "--problem", str(prob), "--out",
                        str(out), "--grids", "50,100,200"]) == 0
        report = json.loads((out / "report.json").read_text())
        rows = report["convergence"]["rows"]
        assert rows[0]["observed_order"] is None
        assert all(r["observed_order"] >= 0.9 for r in rows[1:])
        text = (out / "convergence.csv").read_text().splitlines()
        assert text[0] == "h,error,observed_order"

    def test_non_convergence_exit_code(self, tmp_path):
        data = minimal_problem()
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        out = tmp_path / "out"
        # an impossible tolerance forces the non-convergence path
        code = run_cli(["solve-junction", "--problem", str(prob),
                        "--out", str(out), "--tol", "1e-300",
                        "--max-iters", "300"])
        assert code == 2
        report = json.loads((out / "report.json").read_text())
        assert not report["direct"]["converged"]

    def test_validation_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli(["solve-junction", "--problem", str(bad),
                        "--out", str(tmp_path / "o")]) == 3


class TestCliHeavySubcommands:
    def test_fatten2d_subcommand(self, tmp_path):
        data = minimal_problem()
        for e in data["edges"]:
            e["n_cells"] = 100
        data["fatten"] = {
            "hamiltonian2d": {"max_form": [
                {"family": "abs_shift", "c": 1.0},
                {"family": "abs_shift", "c": 2.0}]},
            "eps_list": [0.2],
            "h2_over_eps": 0.125,
        }
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        out = tmp_path / "out"
        assert run_cli(["fatten2d", "--problem", str(prob),
                        "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        rec = report["fatten"]["records"][0]
        assert rec["trace_error"] <= 0.1
        assert (out / "fatten.csv").read_text().startswith("epsilon,h2,")

    def test_verify_subcommand(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run_cli(["verify", "--out", str(out), "--trials", "25"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["failures"] == 0
        assert "checks passed" in capsys.readouterr().out

    def test_solve_edge_state_constraint_default(self, tmp_path):
        data = minimal_problem()
        prob = tmp_path / "p.json"
        write_problem(data, prob)
        out = tmp_path / "out"
        assert run_cli(["solve-edge", "--problem", str(prob), "--edge", "1",
                        "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["solve"]["node_value"] == pytest.approx(2.0, abs=2e-2)
        assert report["solve"]["role"] == "state_constraint"


def test_constructive_parallel_matches_serial(monkeypatch):
    h1 = hamiltonian_from_spec({"family": "abs_shift", "c": 1.0})
    h2 = hamiltonian_from_spec({"family": "abs_shift", "c": 2.0})
    e = ed.EdgeSpec(1.0, 100)
    prob = jn.make_junction_problem([e, e], [h1, h2])
    serial, _ = jn.solve_junction_constructive(prob)
    monkeypatch.setenv("HJJ_THREADS", "2")
    parallel, _ = jn.solve_junction_constructive(prob)
    assert jn.compare_grid_functions(serial, parallel) == 0.0
    assert jn.compare_grid_functions(parallel, serial) == 0.0


class TestReports:
    def test_finite_check(self):
        with pytest.raises(ValueError, match="non-finite"):
            rp.check_finite({"a": [1.0, float("nan")]})

    def test_jsonable_handles_numpy(self):
        out = rp.jsonable({"x": np.float64(1.5), "v": np.arange(3)})
        assert out == {"x": 1.5, "v": [0, 1, 2]}

    def test_plot_missing_series(self, tmp_path):
        with pytest.raises(ValueError, match="sweep.csv"):
            rp.emit_plot_script({"csv_files": []}, "sweep", str(tmp_path))

    def test_plot_unknown_kind(self, tmp_path):
        with pytest.raises(ValueError, match="unknown plot kind"):
            rp.emit_plot_script({"csv_files": []}, "pie", str(tmp_path))

    def test_atomic_write(self, tmp_path):
        p = tmp_path / "f.txt"
        rp.atomic_write_text(p, "hello")
        assert p.read_text() == "hello"
        assert not any(n.startswith(".tmp_") for n in os.listdir(tmp_path))
