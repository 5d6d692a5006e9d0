"""Study drivers and the command-line front end."""
import numpy as np
import pytest

from sparsebeam.cli import main
from sparsebeam.config import ConfigError, load_config
from sparsebeam.experiments import (
    fit_rate,
    format_number,
    run_convergence,
    run_locking,
    run_solve,
    run_sweep,
    support_measure,
    support_runs,
    write_sweep_csv,
)
from sparsebeam.meshes import P0Field, build_uniform_mesh


def write_config(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return path


TOY = """
[geometry]
n = 20

[material]
youngs_modulus = 1.0
thickness = 0.01
kappa_override = 1.0

[control]
nu = 1e-6
eta = {eta}
lower = -15
upper = 15

[data]
f = sine: 40, 2
w_d = sine: 0.01, 1
"""

STUDY = """
[study]
etas = 0, 1e-4, 2e-4, 5e-4, 7e-4
"""

GRID = """
[study]
thicknesses = 0.01, 0.001
mesh_sizes = 8, 16
ref_factor = 4
"""


class TestHelpers:
    def test_format_number(self):
        assert format_number("locking_free") == "locking_free"
        assert format_number(True) == "1"
        assert format_number(7) == "7"
        assert format_number(0.000123456789) == "0.000123457"

    def test_fit_rate_recovers_exact_slope(self):
        hs = [0.1, 0.05, 0.025, 0.0125]
        errs = [3.0 * h**2 for h in hs]
        assert fit_rate(hs, errs) == pytest.approx(2.0, abs=1e-12)

    def test_fit_rate_degenerate(self):
        assert np.isnan(fit_rate([0.1, 0.05], [0.0, 0.0]))

    def test_support_runs_and_measure(self):
        mesh = build_uniform_mesh(8)
        u = P0Field(mesh, np.array([0.0, 1.0, 1.0, 0.0, 0.0, -2.0, 0.0, 3.0]))
        assert support_runs(u) == 3
        assert support_measure(u) == pytest.approx(4.0 / 8.0)
        assert support_runs(P0Field.zeros(mesh)) == 0
        assert support_measure(P0Field.zeros(mesh)) == 0.0
        full = P0Field(mesh, np.ones(8))
        assert support_runs(full) == 1
        assert support_measure(full) == pytest.approx(1.0)


class TestRunSolve:
    def test_zero_data_writes_zero_fields(self, tmp_path):
        body = "[geometry]\nn = 12\n\n[control]\nnu = 1e-4\neta = 0\nlower = -1\nupper = 1\n"
        cfg = load_config(write_config(tmp_path, body))
        out = tmp_path / "results"
        res = run_solve(cfg, out)
        assert res.converged
        u = np.loadtxt(out / "u.dat")
        assert u.shape == (12, 2)
        assert np.all(u[:, 1] == 0.0)
        for name in ("w.dat", "theta.dat", "p.dat", "q.dat"):
            assert (out / name).exists()
        text = (out / "summary.csv").read_text()
        assert text.startswith("# n = 12")
        header = [l for l in text.splitlines() if not l.startswith("#")][0]
        assert header.split(",")[:4] == ["eta", "nu", "cost", "tracking_cost"]

    def test_field_files_reload_as_inputs(self, tmp_path):
        cfg = load_config(write_config(tmp_path, TOY.format(eta="1e-4")))
        out = tmp_path / "results"
        res = run_solve(cfg, out)
        # the written control reloads bit-exactly through the file: catalog
        body2 = TOY.format(eta="1e-4") + f"\n# reload\n"
        cfg2 = load_config(write_config(tmp_path, body2, name="again.ini"))
        from sparsebeam.config import realize_field
        mesh = build_uniform_mesh(20)
        u2 = realize_field(f"file: {out/'u.dat'}", mesh, 1.0)
        assert isinstance(u2, P0Field)
        assert np.array_equal(u2.values, res.u.values)


class TestRunSweep:
    def test_rows_and_determinism(self, tmp_path):
        cfg = load_config(write_config(tmp_path, TOY.format(eta="0") + STUDY))
        rows1 = run_sweep(cfg)
        rows2 = run_sweep(cfg)
        assert len(rows1) == 5
        assert all(r.converged for r in rows1)
        # identical up to the runtime column
        for a, b in zip(rows1, rows2):
            assert (a.eta, a.cost, a.l2norm, a.null, a.iterations) == \
                   (b.eta, b.cost, b.l2norm, b.null, b.iterations)
        costs = [r.cost for r in rows1]
        assert costs == sorted(costs)

    def test_eta_list_validation(self, tmp_path):
        cfg = load_config(write_config(tmp_path, TOY.format(eta="0")))
        with pytest.raises(ConfigError):
            run_sweep(cfg)  # no etas given
        bad = load_config(write_config(
            tmp_path, TOY.format(eta="0") + "[study]\netas = 2e-4, 1e-4\n", name="bad.ini"))
        with pytest.raises(ConfigError):
            run_sweep(bad)

    def test_csv_shape(self, tmp_path):
        cfg = load_config(write_config(tmp_path, TOY.format(eta="0") + STUDY))
        rows = run_sweep(cfg)
        write_sweep_csv(rows, tmp_path / "sweep.csv", cfg, seed=7)
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert "# seed = 7" in lines
        data = [l for l in lines if not l.startswith("#")]
        assert data[0] == "eta,cost,l2norm,null,iterations,converged,runtime"
        assert len(data) == 6


class TestGridStudies:
    def test_locking_rows(self, tmp_path):
        cfg = load_config(write_config(tmp_path, TOY.format(eta="1e-4") + GRID))
        rows = run_locking(cfg)
        # schemes x thicknesses x mesh sizes
        assert len(rows) == 2 * 2 * 2
        assert all(r["converged"] for r in rows)
        keys = {(r["scheme"], r["thickness"], r["n"]) for r in rows}
        assert ("standard", 0.001, 16) in keys
        assert rows == sorted(rows, key=lambda r: (r["scheme"], r["thickness"], r["n"]))
        thin = {r["scheme"]: r for r in rows if r["thickness"] == 0.001 and r["n"] == 16}
        assert thin["standard"]["control_error"] > thin["locking_free"]["control_error"]

    def test_convergence_rows_and_slopes(self, tmp_path):
        cfg = load_config(write_config(tmp_path, TOY.format(eta="1e-4") + GRID))
        rows, slopes = run_convergence(cfg)
        assert len(rows) == 2
        assert set(slopes) == {"control", "state", "adjoint"}
        assert all(r["converged"] for r in rows)
        errs = [r["control_error"] for r in rows]
        assert errs[0] > errs[1]  # finer mesh, smaller error


class TestCLI:
    def test_solve_roundtrip_exit_zero(self, tmp_path, capsys):
        path = write_config(tmp_path, TOY.format(eta="1e-4"))
        code = main(["solve", "--config", str(path), "--out", str(tmp_path / "r")])
        assert code == 0
        assert (tmp_path / "r" / "summary.csv").exists()

    def test_config_error_exit_one(self, tmp_path, capsys):
        path = write_config(tmp_path, "[geometry]\nn = -2\n\n[control]\nnu = 1\neta = 0\n")
        code = main(["solve", "--config", str(path), "--out", str(tmp_path / "r")])
        assert code == 1
        assert "configuration error:" in capsys.readouterr().err

    def test_missing_config_exit_one(self, tmp_path, capsys):
        code = main(["solve", "--config", str(tmp_path / "gone.ini"),
                     "--out", str(tmp_path / "r")])
        assert code == 1

    def test_nonconvergence_exit_two(self, tmp_path):
        body = TOY.format(eta="3e-4") + "\n[solver]\nmax_iter = 1\n"
        path = write_config(tmp_path, body)
        code = main(["solve", "--config", str(path), "--out", str(tmp_path / "r")])
        assert code == 2

    def test_sweep_command_writes_csv(self, tmp_path):
        path = write_config(tmp_path, TOY.format(eta="0") + STUDY)
        code = main(["sweep", "--config", str(path), "--out", str(tmp_path / "s"),
                     "--seed", "3"])
        assert code == 0
        text = (tmp_path / "s" / "sweep.csv").read_text()
        assert "# seed = 3" in text

    def test_convergence_command_writes_both_files(self, tmp_path):
        path = write_config(tmp_path, TOY.format(eta="1e-4") + GRID)
        code = main(["convergence", "--config", str(path), "--out", str(tmp_path / "c")])
        assert code == 0
        assert (tmp_path / "c" / "convergence.csv").exists()
        slopes = (tmp_path / "c" / "convergence_slopes.csv").read_text()
        data = [l for l in slopes.splitlines() if not l.startswith("#")]
        assert data[0] == "quantity,slope"
        assert [row.split(",")[0] for row in data[1:]] == ["adjoint", "control", "state"]

    def test_locking_command(self, tmp_path):
        path = write_config(tmp_path, TOY.format(eta="1e-4") + GRID)
        code = main(["locking", "--config", str(path), "--out", str(tmp_path / "l")])
        assert code == 0
        text = (tmp_path / "l" / "locking.csv").read_text()
        assert "locking_free" in text and "standard" in text

    def test_bad_jobs_rejected(self, tmp_path, capsys):
        path = write_config(tmp_path, TOY.format(eta="0") + STUDY)
        code = main(["sweep", "--config", str(path), "--out", str(tmp_path / "x"),
                     "--jobs", "0"])
        assert code == 1
