import numpy as np
import pytest

from dgmaxwell.cli import ConfigError, load_config, main, parse_config_text


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_config_parsing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nk = 2   # inline\nscheme = symplectic_euler\n\n")
    cfg = load_config(str(p), {"steps": "5"})
    assert (cfg.k, cfg.scheme, cfg.steps) == (2, "symplectic_euler", 5)
    assert cfg.alpha_value() == 9.0
    assert cfg.dt_spec() == ("auto", 0.5)
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(None, {"bogus": "1"})
    with pytest.raises(ConfigError, match="'k'"):
        load_config(None, {"k": "two"})
    with pytest.raises(ConfigError, match=":1:"):
        parse_config_text("k 2", "f")


@pytest.mark.parametrize("key,value", [("dt", "auto/2"), ("alpha", "-1"), ("init", "mode:0,1"),
                                       ("epsilon", "0"), ("mesh", "structured:x"),
                                       ("scheme", "rk4"), ("reps", "3")])
def test_config_errors_exit_2(tmp_path, capsys, key, value):
    assert _run(tmp_path, "run", "--set", f"{key}={value}") == 2
    err = capsys.readouterr().err
    assert err.startswith("error: config key") and key in err


def test_missing_config_file(tmp_path):
    assert _run(tmp_path, "run", "--config", str(tmp_path / "nope.cfg")) == 2


def test_run_writes_outputs_deterministically(tmp_path):
    args = ["run", "--set", "mesh=structured:1", "--set", "k=1", "--set", "steps=20",
            "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("energy.csv", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    text = (tmp_path / "a" / "energy.csv").read_text().splitlines()
    assert "# seed = 7" in text and "step,t,energy" in text
    summary = (tmp_path / "a" / "summary.txt").read_text()
    assert "diverged = False" in summary and "np.float64" not in summary


def test_run_material_profile(tmp_path):
    assert _run(tmp_path, "run", "--set", "mesh=structured:1", "--set", "k=1",
                "--set", "epsilon=ramp_x", "--set", "steps=5") == 0


def test_unstable_run_exits_3(tmp_path, capsys):
    code = _run(tmp_path, "run", "--set", "mesh=structured:1", "--set", "k=1",
                "--set", "scheme=symplectic_euler", "--set", "dt=auto*1.5",
                "--set", "steps=1000", "--set", "record_every=50")
    assert code == 3
    assert "instability" in capsys.readouterr().err
    assert "diverged = True" in (tmp_path / "summary.txt").read_text()


def test_eigs(tmp_path):
    code = _run(tmp_path, "eigs", "--set", "mesh=structured:2", "--set", "k=1",
                "--set", "p_min=1", "--set", "p_max=3", "--set", "modes=2")
    assert code == 0
    rows = [l for l in (tmp_path / "convergence.csv").read_text().splitlines()
            if not l.startswith("#")]
    assert len(rows) == 1 + 3 * 2
    err = [float(l.split(",")[-1]) for l in rows[1:] if l.split(",")[2] == "0"]
    assert err[-1] < err[0]
    spur = (tmp_path / "spurious.csv").read_text()
    assert "alpha,near_kernel_count" in spur


def test_bench(tmp_path, capsys):
    code = _run(tmp_path, "bench", "--set", "bench_p_min=2", "--set", "bench_p_max=6",
                "--threads", "1")
    assert code == 0
    text = (tmp_path / "scaling.csv").read_text()
    assert "slope_sweep" in text and "p,N,t_sweep_ns,t_dense_ns" in text


def test_verify_relations(tmp_path, capsys):
    assert _run(tmp_path, "verify-relations") == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("pass") >= 8
    assert (tmp_path / "relations.csv").read_text().startswith("# dgmaxwell")


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "dgmaxwell", "run", "--set", "k=x",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 2 and "config key 'k'" in r.stderr
