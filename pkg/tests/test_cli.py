import subprocess
import sys

import numpy as np
import pytest

from vortexpatch import cli
from vortexpatch.dynamics import EvolutionState
from vortexpatch.errors import BlowUp
from vortexpatch.geometry import Domain, build_grid
from vortexpatch.io import read_csv, read_dump

DISK = (
    "seed: 7\n"
    "domain: {kind: disk, radius: 1.0}\n"
    "grid: {resolution: 32}\n"
    f"patch: {{lambda: {4 / np.pi!r}, mass: 1.0}}\n"
    "dynamics: {T: 0.5, sample_interval: 0.25}\n"
    "stability: {T: 0.5, samples: 2, deltas: [0.025, 0.05, 0.1]}\n"
)


@pytest.fixture
def conf(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(DISK)
    return p


def run(conf, out, command, *extra):
    return cli.main(["--config", str(conf), "--out", str(out), command, *extra])


def summary(path):
    out = {}
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            k, v = line.split(" = ")
            out[k] = v
    return out


def test_solve_outputs(conf, tmp_path):
    out = tmp_path / "o"
    assert run(conf, out, "solve") == 0
    for name in ("energy_history.csv", "restarts.csv", "maximizer.vpl", "summary.txt"):
        assert (out / name).exists()
    s = summary(out / "summary.txt")
    h = 2.0 / 32
    assert abs(float(s["radius"]) - 0.5) <= 2 * h
    assert s["converged"] == "yes"
    energies = [float(r["energy"]) for r in read_csv(out / "energy_history.csv")]
    assert np.all(np.diff(energies) >= -1e-12 * energies[-1])


def test_every_text_output_echoes_config(conf, tmp_path):
    out = tmp_path / "o"
    assert run(conf, out, "solve") == 0
    assert run(conf, out, "evolve") == 0
    for path in list(out.glob("*.csv")) + list(out.glob("*.txt")):
        text = path.read_text()
        assert text.startswith("# vortexpatch ")
        assert "# resolved config:" in text and "resolution: 32" in text


def test_missing_lambda_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("domain: {kind: disk}\ngrid: {resolution: 32}\n")
    assert run(p, tmp_path / "o", "solve") == 2
    assert "patch.lambda" in capsys.readouterr().err


def test_parse_error_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("domain:\n  kind: disk\n  radius: 1: 2\n")
    assert run(p, tmp_path / "o", "solve") == 2
    assert "line 3" in capsys.readouterr().err


def test_nonconvergence_exit_3_with_partial_outputs(conf, tmp_path):
    out = tmp_path / "o"
    assert run(conf, out, "solve", "--override", "solver.max_iter=1") == 3
    assert (out / "summary.txt").exists() and (out / "energy_history.csv").exists()
    assert summary(out / "summary.txt")["converged"] == "no"


def test_evolve_zero_horizon_single_row(conf, tmp_path):
    out = tmp_path / "o"
    assert run(conf, out, "evolve", "--override", "dynamics.T=0") == 0
    rows = read_csv(out / "diagnostics.csv")
    assert len(rows) == 1 and float(rows[0]["t"]) == 0.0


def test_evolve_maximizer_energy_within_tolerance(conf, tmp_path):
    out = tmp_path / "o"
    assert run(conf, out, "evolve", "--override", "dynamics.energy_tol=0.05") == 0
    s = summary(out / "summary.txt")
    assert s["energy_check"] == "pass"
    e = [float(r["E"]) for r in read_csv(out / "diagnostics.csv")]
    assert (max(e) - min(e)) / e[0] <= 0.05


def test_evolve_from_dump_and_field_dumps(conf, tmp_path):
    out = tmp_path / "o"
    assert run(conf, out, "solve") == 0
    out2 = tmp_path / "o2"
    assert run(conf, out2, "evolve", "--override", f"dynamics.dump={out / 'maximizer.vpl'}",
               "--override", "dynamics.init=dump", "--override", "output.dump_fields=true") == 0
    assert sorted(p.name for p in out2.glob("field_*.vpl")) == ["field_0000.vpl", "field_0001.vpl", "field_0002.vpl"]
    first, *_ = read_dump(out2 / "field_0000.vpl")
    start, *_ = read_dump(out / "maximizer.vpl")
    assert np.array_equal(first, start)


def test_corrupt_dump_exit_2(conf, tmp_path, capsys):
    bad = tmp_path / "bad.vpl"
    bad.write_bytes(b"XXXX" + bytes(60))
    code = run(conf, tmp_path / "o", "evolve", "--override", "dynamics.init=dump", "--override", f"dynamics.dump={bad}")
    assert code == 2
    assert "b'XXXX'" in capsys.readouterr().err
    code = run(conf, tmp_path / "o", "evolve", "--override", "dynamics.init=dump",
               "--override", f"dynamics.dump={tmp_path / 'missing.vpl'}")
    assert code == 2


def test_blowup_exit_4_with_snapshot(conf, tmp_path, monkeypatch):
    g = build_grid(Domain.disk(), 32)

    def explode(grid, omega0, T, lam, params, interval=None, on_sample=None):
        exc = BlowUp("vorticity exceeded the bound", state=EvolutionState(0.25, omega0, g.zeros(), 0.01))
        exc.samples = []
        raise exc

    monkeypatch.setattr(cli, "evolve", explode)
    out = tmp_path / "o"
    assert run(conf, out, "evolve", "--override", "dynamics.init=patch") == 4
    assert (out / "last_good.vpl").exists() and (out / "diagnostics.csv").exists()


def test_stability_sweep(conf, tmp_path):
    out = tmp_path / "o"
    # at coarser grids the baseline's own drift hides the smallest perturbation
    assert run(conf, out, "stability", "--override", "stability.deltas=[0.0, 0.025, 0.05, 0.1]",
               "--override", "grid.resolution=64") == 0
    rows = [r for r in read_csv(out / "sweep_summary.csv") if r["p"] == "1"]
    assert [float(r["delta"]) for r in rows] == [0.0, 0.025, 0.05, 0.1]
    assert float(rows[0]["sup_excess"]) == 0.0
    for col in ("sup_dist", "sup_excess"):
        sup = [float(r[col]) for r in rows]
        assert all(a <= b for a, b in zip(sup, sup[1:])), col
    zero = read_csv(out / "experiment_d0.0_translate_s0_p1.csv")
    assert list(zero[0]) == ["t", "dist_p1", "dist_p2", "E", "mass", "profile_drift"]
    assert len(list(out.glob("experiment_*.csv"))) == 8
    assert "# summary " in (out / "experiment_d0.05_translate_s0_p2.csv").read_text()


def test_stability_empty_deltas_exit_2(conf, tmp_path):
    assert run(conf, tmp_path / "o", "stability", "--override", "stability.deltas=[]") == 2


def test_stability_threads_do_not_change_outputs(conf, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["--config", str(conf), "--out", "a", "stability"]) == 0
    (tmp_path / "b").mkdir()
    monkeypatch.chdir(tmp_path / "b")
    assert cli.main(["--config", str(conf), "--out", "a", "stability", "--threads", "3"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b" / "a").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / "a" / name).read_bytes(), name


def test_solve_is_deterministic(conf, tmp_path, monkeypatch):
    for d in ("x", "y"):
        (tmp_path / d).mkdir()
        monkeypatch.chdir(tmp_path / d)
        assert cli.main(["--config", str(conf), "--out", "o", "solve", "--override", "solver.restarts=2"]) == 0
    for name in ("energy_history.csv", "restarts.csv", "summary.txt", "maximizer.vpl"):
        assert (tmp_path / "x/o" / name).read_bytes() == (tmp_path / "y/o" / name).read_bytes()


def test_oracle_passes_and_fails(tmp_path, capsys):
    small = ["--override", "oracle.fuzz_trials=50", "--override", "oracle.poisson_resolutions=[16, 32]",
             "--override", "oracle.kernel_resolutions=[16, 32]"]
    assert cli.main(["--out", str(tmp_path / "o"), "oracle", *small]) == 0
    report = read_csv(tmp_path / "o" / "oracle_report.csv")
    assert {r["status"] for r in report} == {"pass"}
    assert cli.main(["--out", str(tmp_path / "o"), "oracle", *small, "--override", "oracle.poisson_order=5"]) == 5
    assert "poisson_order" in capsys.readouterr().err


def test_flags_before_or_after_subcommand(conf, tmp_path):
    assert cli.main(["solve", "--config", str(conf), "--out", str(tmp_path / "o")]) == 0
    assert cli.main(["--threads", "0", "--config", str(conf), "solve"]) == 2


def test_module_entry_point_version():
    done = subprocess.run([sys.executable, "-m", "vortexpatch", "--version"], capture_output=True, text=True)
    assert done.returncode == 0 and done.stdout.startswith("vortexpatch ")
