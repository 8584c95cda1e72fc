import subprocess
import sys

import numpy as np
import pytest

from floatrefine.cli import main, read_grid_csv
from floatrefine.floating_mesh import FloatingMesh, read_mesh, write_mesh
from floatrefine.harness import CSV_COLUMNS
from floatrefine.image_core import read_image, write_image
from floatrefine.strength_model import StrengthParams


@pytest.fixture
def mesh_file(tmp_path):
    r = np.random.default_rng(2)
    x, y = r.random(500) * 31, r.random(500) * 23
    p = tmp_path / "m.csv"
    write_mesh(FloatingMesh(x, y, 100 + 3 * x + np.sin(y) * 20), p)
    return p


def run(*argv):
    return main([str(a) for a in argv])


def test_no_arguments_prints_usage(capsys):
    assert run() == 1
    assert "usage: floatrefine" in capsys.readouterr().err


def test_missing_flag_named(capsys, tmp_path):
    assert run("refine", "--width", 3, "--height", 3, "--out", tmp_path / "o.pgm") == 1
    err = capsys.readouterr().err
    assert "--mesh" in err and "usage:" in err


@pytest.mark.parametrize("argv", [["frobnicate"], ["xi", "--bogus"], ["reconstruct", "--mesh", "m", "--width", "0"]])
def test_usage_errors(argv, capsys):
    assert run(*argv) == 1


def test_version_and_help(capsys):
    with pytest.raises(SystemExit) as e:
        run("--version")
    assert e.value.code == 0
    with pytest.raises(SystemExit):
        run("bench", "--help")
    assert "--spec" in capsys.readouterr().out


def test_runtime_error_is_stage_labelled(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,value\n0,0,1\n1,1,2\n2,2,3\n")
    out = tmp_path / "o.pgm"
    assert run("refine", "--mesh", bad, "--width", 4, "--height", 4, "--out", out) == 2
    err = capsys.readouterr().err
    assert "triangulation: degenerate point set" in err
    assert not out.exists()
    assert [p.name for p in tmp_path.iterdir()] == ["bad.csv"]


def test_reconstruct_with_mask(tmp_path, mesh_file):
    out, mask = tmp_path / "r.pgm", tmp_path / "mask.pgm"
    assert run("reconstruct", "--mesh", mesh_file, "--width", 32, "--height", 24, "--method", "li", "--out", out, "--mask", mask) == 0
    assert read_image(out).shape == (24, 32)
    assert set(np.unique(read_image(mask))) <= {0.0, 255.0}


def test_refine_dumps(tmp_path, mesh_file):
    params = tmp_path / "p.kv"
    params.write_text(StrengthParams(60.0, -1.0, 0.8, "ci").to_kv())
    args = ["refine", "--mesh", mesh_file, "--width", 32, "--height", 24, "--method", "ci", "--params", params]
    args += ["--denoiser", "blend", "--out", tmp_path / "o.pgm", "--dump-xi", tmp_path / "xi.csv"]
    args += ["--dump-strength", tmp_path / "s.csv", "--dump-initial", tmp_path / "i.pgm"]
    assert run(*args) == 0
    xi = read_grid_csv(tmp_path / "xi.csv", (24, 32))
    assert (tmp_path / "xi.csv").read_text().startswith("i,j,xi\n0,0,")
    s = read_grid_csv(tmp_path / "s.csv", (24, 32))
    assert np.all((s >= 0) & (s < 60)) and xi.min() >= 0


def test_denoise_uniform_and_csv(tmp_path):
    img = np.random.default_rng(1).random((20, 20)) * 255
    write_image(img, tmp_path / "n.pgm")
    assert run("denoise", "--in", tmp_path / "n.pgm", "--strength", "uniform:100", "--kind", "blend", "--out", tmp_path / "a.pgm") == 0
    (tmp_path / "s.csv").write_text("i,j,strength\n" + "".join(f"{i},{j},100\n" for i in range(20) for j in range(20)))
    assert run("denoise", "--in", tmp_path / "n.pgm", "--strength", tmp_path / "s.csv", "--kind", "blend", "--out", tmp_path / "b.pgm") == 0
    np.testing.assert_array_equal(read_image(tmp_path / "a.pgm"), read_image(tmp_path / "b.pgm"))
    (tmp_path / "short.csv").write_text("i,j,strength\n0,0,1\n")
    assert run("denoise", "--in", tmp_path / "n.pgm", "--strength", tmp_path / "short.csv", "--out", tmp_path / "c.pgm") == 2


def test_xi_outputs(tmp_path, mesh_file):
    assert run("xi", "--mesh", mesh_file, "--width", 8, "--height", 6, "--out", tmp_path / "x.csv") == 0
    assert len((tmp_path / "x.csv").read_text().splitlines()) == 1 + 48
    assert run("xi", "--mesh", mesh_file, "--width", 8, "--height", 6, "--out", tmp_path / "x.pgm") == 0
    assert read_image(tmp_path / "x.pgm").max() == 255


def test_mesh_rotate(tmp_path):
    write_image(np.arange(30.0).reshape(5, 6), tmp_path / "s.pgm")
    assert run("mesh-rotate", "--in", tmp_path / "s.pgm", "--degrees", 10, "--out", tmp_path / "r.csv") == 0
    assert len(read_mesh(tmp_path / "r.csv")) == 30


def _micro(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    ii, jj = np.indices((60, 70))
    write_image(128 + 80 * np.sin(ii / 5.0) * np.cos(jj / 7.0), corpus / "waves.pgm")
    write_image(np.clip(128 + (ii - 30) * 2.0 + (jj % 9) * 4.0, 0, 255), corpus / "ramp.pgm")
    spec = tmp_path / "spec.kv"
    spec.write_text("corpus_dir=corpus\nphi=5\nratios=0.3,0.6\nmethods=nn,ci\ndenoiser=bm3d\nseed=11\n")
    return corpus, spec


def test_bench_writes_csv_and_prints_seed(tmp_path, capsys):
    _, spec = _micro(tmp_path)
    out = tmp_path / "r.csv"
    assert run("bench", "--spec", spec, "--out", out) == 0
    assert "seed=11" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 2 * 2 * 2


def test_calibrate_fits_desk_crops(tmp_path, capsys):
    skdata = pytest.importorskip("skimage.data")
    corpus = tmp_path / "crops"
    corpus.mkdir()
    for name in ("camera", "moon"):
        write_image(getattr(skdata, name)()[:300, :300].astype(float), corpus / f"{name}.pgm")
    out = tmp_path / "p.kv"
    args = ["calibrate", "--corpus", corpus, "--method", "nn", "--denoiser", "blend", "--out", out]
    assert run(*args, "--ratios", "0.2,0.5,0.8", "--bins", 8, "--seed", 4) == 0
    assert "seed=4" in capsys.readouterr().out
    p = StrengthParams.from_kv(out)
    assert p.method.value == "NN" and p.denoiser == "blend"
    assert 0 < p.gamma and p.alpha > 60


def test_calibrate_failure_reports_best_and_writes_nothing(tmp_path, capsys):
    # on this synthetic pair the max-gain path increases with xi, so the decreasing law cannot fit
    corpus, _ = _micro(tmp_path)
    out = tmp_path / "p.kv"
    args = ["calibrate", "--corpus", corpus, "--method", "nn", "--denoiser", "blend", "--out", out]
    assert run(*args, "--ratios", "0.2,0.5,0.8", "--bins", 8, "--seed", 4) == 2
    err = capsys.readouterr().err
    assert "fit:" in err and "best so far" in err
    assert not out.exists()


def test_console_script_threads_env(tmp_path):
    _, spec = _micro(tmp_path)
    outs = []
    for k, env_threads in enumerate(("1", "3")):
        out = tmp_path / f"r{k}.csv"
        subprocess.run(
            [sys.executable, "-m", "floatrefine.cli", "bench", "--spec", str(spec), "--out", str(out)],
            check=True,
            env={"FLOATREFINE_THREADS": env_threads, "PATH": "/usr/bin:/bin"},
            capture_output=True,
        )
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
