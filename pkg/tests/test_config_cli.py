import json

import numpy as np
import pytest

from polyrestrict import cli
from polyrestrict.config import ExperimentConfig, derive_rng, derive_seed
from polyrestrict.errors import ConfigError


def test_default_config_validates():
    ExperimentConfig().validate()


@pytest.mark.parametrize("field,value", [("experiment", "nope"), ("n", 1), ("k", 5), ("K", 1), ("A", -1),
                                         ("p", ["x"]), ("p", ["1/2"]), ("R", 1), ("delta", 0.5),
                                         ("D", [1]), ("c_quad", 0), ("tolerance_profile", "loose"),
                                         ("seed", -1)])
def test_invalid_fields_rejected(field, value):
    with pytest.raises(ConfigError):
        ExperimentConfig(**{field: value}).validate()


def test_hash_ignores_output_location_and_threads():
    a = ExperimentConfig(out="a", threads=1)
    b = ExperimentConfig(out="b", threads=4)
    assert a.hash() == b.hash()
    assert a.hash() != ExperimentConfig(seed=1).hash()
    # equivalent rationals hash identically
    assert ExperimentConfig(p=["4", "3"]).hash() == ExperimentConfig(p=["8/2", "3"]).hash()


def test_unknown_config_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(str(path))


def test_derived_streams():
    a = derive_rng(7, "alpha").normal(size=4)
    assert np.array_equal(a, derive_rng(7, "alpha").normal(size=4))
    assert not np.array_equal(a, derive_rng(7, "beta").normal(size=4))
    assert not np.array_equal(a, derive_rng(8, "alpha").normal(size=4))
    assert derive_seed(7, "alpha") == derive_seed(7, "alpha")


def _run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def _output_dir(tmp_path, experiment):
    (d,) = (tmp_path / experiment).iterdir()
    return d


def test_cli_exponents(tmp_path, capsys):
    assert _run(tmp_path, "exponents") == 0
    d = _output_dir(tmp_path, "exponents")
    text = (d / "exponents.csv").read_text()
    assert text.startswith("# config_hash=")
    row = next(line for line in text.splitlines() if line.startswith("4,"))
    assert "14/5" in row
    meta = json.loads((d / "metadata.json").read_text())
    assert meta["backend"] in ("cython", "numpy")
    assert json.loads(capsys.readouterr().out)["status"] == "ok"


def test_cli_slab_json(tmp_path):
    cfg = tmp_path / "slab.json"
    cfg.write_text(json.dumps({"R_list": [32, 48, 64], "p": ["4", "3"]}))
    assert cli.main(["slab", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    d = _output_dir(tmp_path / "o", "slab")
    out = json.loads((d / "slab.json").read_text())
    assert [r["p"] for r in out["runs"]] == ["4", "3"]
    assert all(np.isfinite(r["slope"]) for r in out["runs"])
    assert (d / "slab_p4.csv").exists()


def test_cli_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"n": 0}))
    assert cli.main(["exponents", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "invalid_config"


def test_cli_outputs_are_deterministic(tmp_path):
    for run in ("a", "b"):
        assert cli.main(["exponents", "--seed", "3", "--out", str(tmp_path / run)]) == 0
    da, db = _output_dir(tmp_path / "a", "exponents"), _output_dir(tmp_path / "b", "exponents")
    assert da.name == db.name
    for name in ("exponents.csv", "exponents.json"):
        assert (da / name).read_bytes() == (db / name).read_bytes()
