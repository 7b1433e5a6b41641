import json

import pytest
import yaml

from cqac import io
from cqac.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from cqac.config import ConfigError, parse_config

SMALL_GRID = {"Lx": 1.0, "Ly": 0.9, "M": 10, "N": 9}


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


@pytest.mark.parametrize(
    "data, key",
    [
        ({"run": "nope"}, "run"),
        ({"run": "cov-continue", "colour": 1}, "colour"),
        ({"run": "cov-continue", "grid": {"M": 1}}, "grid.M"),
        ({"run": "cov-continue", "grid": {"Lx": -1}}, "grid.Lx"),
        ({"run": "cov-continue", "noise": [{"K": 0}]}, "noise[0].K"),
        ({"run": "cov-continue", "noise": {"g_kind": "cubic"}}, "noise.g_kind"),
        ({"run": "cov-continue", "solver": {"methods": ["sor"]}}, "solver.methods[0]"),
        ({"run": "mc-validate", "mc": {"dt": -1}}, "mc.dt"),
        ({"run": "fit-scaling", "fit": {"norm": "frobenius"}}, "fit.norm"),
        ({"run": "det-continue", "continuation": {"branches": ["G1"]}}, "continuation.branches[0]"),
        ({"run": "det-continue", "continuation": {"settings": {"stepp": 0.1}}}, "continuation.settings.stepp"),
        ({"run": "det-continue", "dump_diag": "yes"}, "dump_diag"),
    ],
)
def test_config_errors_name_key(data, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(data)
    assert exc.value.key == key
    assert str(exc.value).startswith(key)


def test_defaults_resolve():
    cfg = parse_config({"run": "cov-continue"})
    r = cfg.resolved()
    assert r["grid"] == {"Lx": 1.0, "Ly": 0.9, "M": 50, "N": 45}
    assert r["noise"][0]["sigma_tilde"] == 5.0 and r["noise"][0]["g_kind"] == "additive"
    assert r["solver"]["tol"] == 1e-4 and r["solver"]["maxit"] == 200
    json.dumps(r)


def test_cli_exit_code_config(tmp_path, capsys):
    p = _write(tmp_path, {"run": "det-continue", "grid": {"M": 1}})
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "grid.M" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_cli_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    p = _write(tmp_path, {"run": "det-continue", "grid": SMALL_GRID, "output": "file/sub"})
    assert main(["run", str(p)]) == EXIT_CONFIG


def test_cli_exit_code_numerical(tmp_path):
    data = {
        "run": "mc-validate",
        "grid": SMALL_GRID,
        "output": "out",
        "mc": {"mu": 0.5, "dt": 0.05, "T": 50.0, "seeds": [0]},
    }
    with pytest.warns(Warning):
        code = main(["run", str(_write(tmp_path, data))])
    assert code == EXIT_NUMERICAL
    summary = json.loads((tmp_path / "out" / "mc_summary.json").read_text())
    assert "diverged_at" in summary["paths"][0]


def test_det_continue_small_grid(tmp_path):
    data = {"run": "det-continue", "grid": SMALL_GRID, "output": "out"}
    assert main(["run", str(_write(tmp_path, data))]) == EXIT_OK
    out = tmp_path / "out"
    rows = io.read_csv(out / "branch_Gamma0.csv")
    assert list(rows[0]) == list(io.BRANCH_COLUMNS)
    summary = json.loads((out / "bifurcation_summary.json").read_text())
    assert list(summary["regimes"]) == ["R0", "R1", "R2", "R3", "R4"]
    for f in out.iterdir():
        if not f.name.endswith(".meta.json"):
            meta = json.loads((out / (f.name + ".meta.json")).read_text())
            assert meta["config"]["run"] == "det-continue"
            assert meta["config"]["grid"]["M"] == 10


@pytest.mark.slow
def test_det_continue_default_grid(tmp_path):
    data = {"run": "det-continue", "output": "out", "continuation": {"branches": ["Gamma0"]}}
    assert main(["run", str(_write(tmp_path, data))]) == EXIT_OK
    rows = io.read_csv(tmp_path / "out" / "branch_Gamma0.csv")
    first = next(r for r in rows if r["kind"] == "branch_point")
    assert 1.3769 <= float(first["mu"]) <= 1.3789


def test_cov_continue_truncations(tmp_path):
    data = {
        "run": "cov-continue",
        "grid": SMALL_GRID,
        "output": "out",
        "noise": [{"K": 2}, {"K": 4}, {"K": 8}],
        "dump_diag": True,
        "continuation": {"branches": ["Gamma0"], "samples": {"linspace": [[0.0, 1.2, 4]]}},
    }
    assert main(["run", str(_write(tmp_path, data))]) == EXIT_OK
    out = tmp_path / "out"
    mus = [[r["mu"] for r in io.read_csv(out / f"cov_Gamma0_K{k}_additive_s5.csv")] for k in (2, 4, 8)]
    assert mus[0] == mus[1] == mus[2] and len(mus[0]) == 4
    diag = io.read_csv(out / "cov_Gamma0_K8_additive_s5_diag_000.csv")
    assert len(diag) == 9 * 8 and list(diag[0]) == list(io.DIAG_COLUMNS)


def test_solver_bench_rows(tmp_path):
    data = {
        "run": "solver-bench",
        "grid": SMALL_GRID,
        "output": "out",
        "continuation": {"samples": [0.5, 1.0]},
        "solver": {"methods": ["bicgstab", "gmres(10)", "gmres(0)", "qmr"]},
    }
    assert main(["run", str(_write(tmp_path, data))]) == EXIT_OK
    rows = io.read_csv(tmp_path / "out" / "solver_bench_Gamma0_K8_additive_s5.csv")
    pairs = [(r["index"], r["solver"]) for r in rows]
    assert len(pairs) == len(set(pairs)) == 2 * 4
    assert {r["solver"] for r in rows} == {"bicgstab", "gmres(10)", "gmres(0)", "qmr"}


def _bodies(directory, drop=("wall_time_s",)):
    out = {}
    for f in sorted(directory.glob("*.csv")):
        rows = f.read_text().splitlines()
        header = rows[0].split(",")
        keep = [i for i, h in enumerate(header) if h not in drop]
        out[f.name] = [[line.split(",")[i] for i in keep] for line in rows]
    return out


def test_reproducible_bodies(tmp_path):
    base = {
        "grid": SMALL_GRID,
        "continuation": {"samples": [0.5, 1.0]},
        "noise": [{"K": 4, "g_kind": "sup_shift"}],
    }
    mc = {"run": "mc-validate", "mc": {"mu": 0.5, "dt": 1e-4, "T": 0.01, "seeds": [3], "paths": 2}}
    for kind in ({"run": "cov-continue"}, mc):
        dirs = []
        for rep in ("a", "b"):
            data = {**base, **kind, "output": rep}
            assert main(["run", str(_write(tmp_path, data))]) == EXIT_OK
            dirs.append(tmp_path / rep)
        a, b = (_bodies(d) for d in dirs)
        assert a and a == b
        if kind["run"] == "mc-validate":
            f = "path_seed3_p1.csv"
            assert (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()
            assert (dirs[0] / "mc_summary.json").read_bytes() == (dirs[1] / "mc_summary.json").read_bytes()


def test_fit_scaling_small_grid(tmp_path):
    data = {"run": "fit-scaling", "grid": SMALL_GRID, "output": "out", "noise": {"K": 2}}
    assert main(["run", str(_write(tmp_path, data))]) == EXIT_OK
    fit = json.loads((tmp_path / "out" / "scaling_fit_Gamma0.json").read_text())
    assert set(fit) == {"mu_crit", "alpha", "kappa", "window", "r_squared", "n_points"}
    assert 0.85 <= fit["alpha"] <= 1.15


def test_defaults_command(capsys):
    assert main(["defaults", "mc-validate"]) == EXIT_OK
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["noise"][0]["K"] == 11
    assert parse_config(cfg).mc.dt == 1e-5
