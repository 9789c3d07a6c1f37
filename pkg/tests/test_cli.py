import csv
import json

import pytest

from stokes_shape.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_ITERATION_CAP, EXIT_OK, main
from stokes_shape.mesh import load_gmsh, obstacle_loop, read_vtu

SMALL = """\
seed = 1
[mesh]
n_obstacle = 48
h_max = 0.8
grading = 0.4
[optimizer]
max_inner = {inner}
max_outer = {outer}
[output]
directory = "{out}"
snapshots = 1
timing = false
"""


def write_config(tmp_path, inner=1, outer=1, name="exp.toml"):
    path = tmp_path / name
    path.write_text(SMALL.format(inner=inner, outer=outer, out=(tmp_path / "out").as_posix()))
    return path


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", "--config", str(cfg)]) == EXIT_ITERATION_CAP
    out = tmp_path / "out"
    names = {p.name for p in out.iterdir()}
    assert {"config.toml", "run.csv", "multipliers.csv", "final.vtu", "summary.json",
            "snapshot_00000.vtu", "snapshot_00001.vtu"} <= names
    assert len(rows(out / "run.csv")) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "iteration_cap" and summary["exit_code"] == EXIT_ITERATION_CAP
    assert summary["mesh"]["obstacle_edges"] == 48
    vtu = read_vtu(out / "final.vtu")
    assert {"velocity", "pressure", "mu"} <= set(vtu.point_data) and "quality" in vtu.cell_data
    assert (out / "config.toml").read_text() == cfg.read_text()
    assert "iteration_cap" in capsys.readouterr().out


def test_run_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, inner=2, outer=2)
    out = tmp_path / "out"
    files = ("run.csv", "multipliers.csv", "final.vtu", "summary.json", "snapshot_00002.vtu")
    main(["run", "--config", str(cfg)])
    first = {f: (out / f).read_bytes() for f in files}
    main(["run", "--config", str(cfg)])
    assert first == {f: (out / f).read_bytes() for f in files}


def test_output_and_snapshot_flags(tmp_path):
    cfg = write_config(tmp_path, inner=2)
    other = tmp_path / "elsewhere"
    main(["run", "--config", str(cfg), "--output", str(other), "--snapshots", "0"])
    assert (other / "run.csv").exists() and not list(other.glob("snapshot_*"))
    assert not (tmp_path / "out").exists()


def test_malformed_config_exits_2_without_outputs(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[optimizer]\nmemory = -1\n[output]\ndirectory = "%s"\n' % (tmp_path / "out").as_posix())
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    assert not (tmp_path / "out").exists()
    err = capsys.readouterr().err
    assert "bad.toml:2" in err and "memory" in err


def test_fixed_multipliers_mode(tmp_path):
    cfg = write_config(tmp_path, inner=2)
    cfg.write_text(cfg.read_text().replace("max_outer = 1", "max_outer = 1\nfixed_multipliers = [0, 0, -25]"))
    main(["run", "--config", str(cfg)])
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["fixed_multipliers"] and summary["multipliers"] == [0.0, 0.0, -25.0]
    assert summary["outer_iterations"] == 1


@pytest.mark.parametrize("jobs", ["1", "2"])
def test_compare_caps_at_one_row(tmp_path, jobs, capsys):
    cfg = write_config(tmp_path)
    assert main(["compare", "--config", str(cfg), "--jobs", jobs]) == EXIT_OK
    out = tmp_path / "out"
    table = rows(out / "compare.csv")
    assert len(table) == 1
    assert list(table[0]) == ["iter", "J_gs", "worst_quality_gs", "J_g1", "worst_quality_g1"]
    for leg in ("gs", "g1"):
        assert len(rows(out / leg / "run.csv")) == 1
    status = json.loads((out / "compare_summary.json").read_text())["runs"]
    assert status == {"gs": "iteration_cap", "g1": "iteration_cap"}


def test_gen_mesh(tmp_path):
    path = tmp_path / "m.msh"
    assert main(["gen-mesh", "--n-obstacle", "40", "--h-max", "1.0", "--grading", "0.5",
                 "--output", str(path)]) == EXIT_OK
    mesh = load_gmsh(path)
    assert len(obstacle_loop(mesh)) == 40
    from_cfg = tmp_path / "exp.toml"
    from_cfg.write_text('[mesh]\nsource = "m.msh"\n[optimizer]\nmax_inner = 1\nmax_outer = 1\n[output]\n'
                        'directory = "%s"\n' % (tmp_path / "run").as_posix())
    assert main(["run", "--config", str(from_cfg)]) == EXIT_ITERATION_CAP


def test_gen_mesh_infeasible_geometry(tmp_path, capsys):
    assert main(["gen-mesh", "--radius", "3", "--output", str(tmp_path / "x.msh")]) == EXIT_CONFIG
    assert "does not fit" in capsys.readouterr().err
    assert not (tmp_path / "x.msh").exists()


def test_gen_mesh_odd_count_falls_back_to_unsymmetric(tmp_path):
    path = tmp_path / "odd.msh"
    assert main(["gen-mesh", "--n-obstacle", "41", "--h-max", "1.0", "--grading", "0.5",
                 "--output", str(path)]) == EXIT_OK
    assert len(obstacle_loop(load_gmsh(path))) == 41


def test_verify_detects_flipped_sign(tmp_path, capsys):
    cfg = tmp_path / "exp.toml"
    cfg.write_text("[mesh]\nn_obstacle = 48\nh_max = 0.8\ngrading = 0.4\n")
    assert main(["verify", "--config", str(cfg), "--flip-objective-sign"]) == EXIT_FAILED
    out = capsys.readouterr().out
    assert "FAIL  shape derivative" in out and "PASS  stokes convergence" in out


def test_verify_passes_on_default_mesh(capsys):
    assert main(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "0.1.0" in capsys.readouterr().out


def test_gen_mesh_fine_scale(tmp_path):
    path = tmp_path / "fine.msh"
    assert main(["gen-mesh", "--paper-scale", "--output", str(path)]) == EXIT_OK
    mesh = load_gmsh(path)
    assert len(obstacle_loop(mesh)) == 633
    assert 9000 <= mesh.n_triangles <= 11500
