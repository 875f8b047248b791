import copy
import hashlib
import json

import numpy as np
import pytest

from nsfde.cli import emit_plotdata, main
from nsfde.config import parse_config
from nsfde.errors import ConfigError, SchemaError

UNIFORM_03 = {"terms": [{"type": "distributed", "measure": {"density": {"pieces": [[-1.0, 0.0, 0.3, 0.0]]}}}]}
DRIFT = {"terms": [{"type": "point", "lag": 0.0, "map": {"name": "affine", "a": -1.0}}]}


def base_config(out, **changes):
    cfg = {
        "task": "solve",
        "output": str(out),
        "numerics": {"h": 0.01, "seed": 7, "n_paths": 5},
        "problem": {"tau": 1.0, "T": 1.0, "D": UNIFORM_03, "f": DRIFT, "g": {"terms": [], "offset": 0.5},
                    "psi": {"constant": 1.0}},
    }
    cfg.update(changes)
    return copy.deepcopy(cfg)


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def with_D(tmp_path, D):
    cfg = base_config(tmp_path / "out")
    cfg["problem"]["D"] = D
    return write(tmp_path, cfg)


def test_validate_beyond_contraction(tmp_path, capsys):
    D = {"terms": [{"type": "distributed", "measure": {"density": {"pieces": [[-1.0, 0.0, 2.0, 0.0]]}}}]}
    assert main(["validate", with_D(tmp_path, D)]) == 0
    out = capsys.readouterr().out
    assert "verdict = exists (uniformly non-atomic, Mao contraction fails)" in out
    assert "T1 = " in out and "gamma = " in out and "rho0_profile" in out


def test_validate_atomic_failure(tmp_path, capsys):
    D = {"terms": [{"type": "point", "lag": 0.0, "map": {"name": "affine", "a": 1.5}}]}
    assert main(["validate", with_D(tmp_path, D)]) == 3
    assert "verdict = non-atomicity failure" in capsys.readouterr().out


def test_validate_max_contraction(tmp_path, capsys):
    D = {"terms": [{"type": "max", "coef": 0.9, "window": [-1.0, 0.0]}]}
    assert main(["validate", with_D(tmp_path, D)]) == 0
    assert "verdict = exists (Mao contraction holds)" in capsys.readouterr().out


@pytest.mark.parametrize("mutate,field", [
    (lambda c: c["numerics"].pop("seed"), "numerics.seed"),
    (lambda c: c["numerics"].update(h=0.3), "numerics.h"),
    (lambda c: c.update(task="fly"), "task"),
    (lambda c: c["problem"].update(T=-1.0), "problem.T"),
    (lambda c: c["problem"]["D"]["terms"].append({"type": "wavelet"}), "problem.D"),
    (lambda c: c["numerics"].update(n_paths=0), "numerics.n_paths"),
    (lambda c: c["numerics"].update(seed="x"), "numerics.seed"),
])
def test_config_errors_name_the_field(tmp_path, mutate, field):
    cfg = base_config(tmp_path)
    mutate(cfg)
    with pytest.raises(ConfigError) as info:
        parse_config(cfg)
    assert info.value.field == field
    assert str(info.value).startswith(field + ":")


def test_config_error_exit_code(tmp_path, capsys):
    cfg = base_config(tmp_path)
    del cfg["numerics"]["seed"]
    assert main(["run", write(tmp_path, cfg)]) == 2
    assert "numerics.seed" in capsys.readouterr().err


def test_overrides_apply():
    cfg = parse_config(base_config("x"), {"seed": 99, "n_paths": 3, "h": 0.02, "output": "y"})
    assert (cfg.numerics.seed, cfg.numerics.n_paths, cfg.numerics.h, cfg.output) == (99, 3, 0.02, "y")


def test_run_solve_manifest_and_reproducibility(tmp_path):
    cfg_path = write(tmp_path, base_config(tmp_path / "a"))
    assert main(["run", cfg_path]) == 0
    assert main(["run", cfg_path, "--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    for name in ("paths.csv", "diagnostics.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = (a / "manifest.txt").read_text()
    for f in a.iterdir():
        if f.name != "manifest.txt":
            assert f"file {f.name} sha256 {hashlib.sha256(f.read_bytes()).hexdigest()}" in manifest
    assert "seed = 7" in manifest and "config_sha256 = " in manifest
    assert main(["run", cfg_path, "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "paths.csv").read_bytes() != (a / "paths.csv").read_bytes()


def test_run_divergence_exit_code(tmp_path):
    cfg = base_config(tmp_path / "d")
    cfg["numerics"]["max_iter"] = 1
    assert main(["run", write(tmp_path, cfg)]) == 5


def test_counterexample_maxtype_exit_four(tmp_path):
    cfg = {"task": "counterexample", "output": str(tmp_path / "w"), "numerics": {"h": 0.01, "seed": 1, "n_paths": 2000},
           "counterexample": {"kind": "maxtype", "kappa": 1.0, "delta_lb": 1.0, "T": 1.0, "psi": {"constant": 0.5}}}
    assert main(["run", write(tmp_path, cfg)]) == 4
    text = (tmp_path / "w" / "witness.txt").read_text()
    assert "A = 1" in text and "monotone = True" in text
    assert (tmp_path / "w" / "witness.csv").exists()


def test_counterexample_maxtype_below_one_is_refused(tmp_path):
    cfg = {"task": "counterexample", "output": str(tmp_path / "w"), "numerics": {"h": 0.01, "seed": 1, "n_paths": 20},
           "counterexample": {"kind": "maxtype", "kappa": 0.5, "delta_lb": 1.0}}
    assert main(["run", write(tmp_path, cfg)]) == 3


def test_gronwall_demo(tmp_path):
    cfg = {"task": "gronwall-demo", "output": str(tmp_path / "g"), "numerics": {"h": 0.01, "seed": 0},
           "gronwall": {"c": 0.7, "T": 2.0}}
    assert main(["run", write(tmp_path, cfg)]) == 0
    rows = (tmp_path / "g" / "gronwall.csv").read_text().splitlines()
    assert rows[0] == "t,z,y,x,violation" and len(rows) == 202
    assert "dominated = True" in (tmp_path / "g" / "gronwall.txt").read_text()


def test_certify_and_plotdata(tmp_path):
    cfg = base_config(tmp_path / "cert", task="certify", certify={"p": 2.0})
    cfg["numerics"]["n_paths"] = 600
    cfg["problem"]["T"] = 4.0
    assert main(["run", write(tmp_path, cfg)]) == 0
    out = tmp_path / "cert"
    text = (out / "certificate.txt").read_text()
    assert "check_mean_rate = pass" in text and "check_as_rate = pass" in text
    written = emit_plotdata(out)
    assert {p.name for p in written} == {"plot_moments.dat", "plot_rate.dat"}
    rows = [l.split() for l in (out / "plot_moments.dat").read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 401 and all(len(r) == 3 for r in rows)


def test_picard_diagnostics_and_plotdata(tmp_path):
    cfg = base_config(tmp_path / "pd", task="picard-diagnostics")
    cfg["numerics"]["n_paths"] = 100
    assert main(["run", write(tmp_path, cfg)]) == 0
    assert "within_bound = True" in (tmp_path / "pd" / "contraction.txt").read_text()
    assert main(["plotdata", str(tmp_path / "pd")]) == 0
    data = np.loadtxt(tmp_path / "pd" / "plot_picard.dat")
    gamma = float((tmp_path / "pd" / "contraction.txt").read_text().split("gamma = ")[1].split()[0])
    assert np.allclose(data[:, 2], data[0, 1] * gamma ** np.arange(len(data)))


def test_plotdata_schema_errors(tmp_path):
    with pytest.raises(SchemaError):
        emit_plotdata(tmp_path)
    (tmp_path / "moments.csv").write_text("t,m_p,stderr,log_mp\n")
    with pytest.raises(SchemaError):
        emit_plotdata(tmp_path)
    (tmp_path / "moments.csv").write_text("t,m_p\n0,1\n")
    with pytest.raises(SchemaError):
        emit_plotdata(tmp_path)
    assert main(["plotdata", str(tmp_path)]) == 2
