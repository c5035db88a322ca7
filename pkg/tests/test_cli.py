import json
import math

import pytest

from nematic_dimers.cli import dumps, main, normalize, ConfigError


def run_json(tmp_path, config, *extra):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "out.json"
    code = main(["run", str(path), "-o", str(out), *extra])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_transfer_example(tmp_path):
    code, doc = run_json(tmp_path, {"subcommand": "transfer", "z": 1, "J": 0, "ell": 4})
    assert code == 0
    # 1 + 3z + z^2 e^J at z = 1, J = 0
    assert doc["result"]["psi"] == pytest.approx(5.0, rel=1e-15)
    assert doc["config"]["ell"] == 4


def test_enumerate_example(tmp_path):
    code, doc = run_json(tmp_path, {"subcommand": "enumerate", "rect": [2, 2], "z": 1, "J": 0, "ell0": 0})
    assert code == 0
    assert doc["result"]["Z"] == 7
    assert doc["result"]["configurations"] == 7


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"subcommand": "transfer",')
    assert main(["run", str(path)]) == 1
    assert "malformed JSON at line" in capsys.readouterr().err


def test_unknown_key_and_subcommand(tmp_path):
    assert run_json(tmp_path, {"subcommand": "transfer", "z": 1, "J": 0, "ell": 4, "foo": 1})[0] == 1
    assert run_json(tmp_path, {"subcommand": "nope"})[0] == 1
    assert run_json(tmp_path, {"subcommand": "transfer", "z": 1})[0] == 1
    with pytest.raises(ConfigError):
        normalize({"subcommand": "enumerate", "z": 1, "J": 0})


def test_bad_flag_is_invalid_input():
    with pytest.raises(SystemExit) as exc:
        main(["enumerate", "--rect", "2x2", "--z", "1", "--J", "0", "--bogus", "1"])
    assert exc.value.code == 1


def test_size_cap_exit_code(capsys):
    assert main(["enumerate", "--rect", "7x7", "--z", "1", "--J", "0"]) == 2
    assert "[gibbs]" in capsys.readouterr().err


def test_validation_exit_code(capsys):
    assert main(["enumerate", "--rect", "2x2", "--z", "-1", "--J", "0"]) == 1
    assert "[transfer1d]" in capsys.readouterr().err


def test_artifact_roundtrip(tmp_path):
    code, doc = run_json(tmp_path, {"subcommand": "oriented", "rect": [3, 4], "z": 2.5, "J": 1.25, "ell0": 1})
    assert code == 0
    first = (tmp_path / "out.json").read_text()
    again = tmp_path / "again.json"
    assert main(["run", str(tmp_path / "out.json"), "-o", str(again)]) == 0
    assert again.read_text() == first


def test_mc_csv_and_sidecar(tmp_path):
    out = tmp_path / "mc.csv"
    args = ["mc", "--rect", "4x4", "--z", "2", "--J", "1", "--edge", "1,1,v", "--pair", "1,0,v;1,2,v",
            "--sweeps", "3200", "--bin", "200", "--seed", "5", "-o", str(out)]
    assert main(args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "observable,mean,stderr,bins"
    assert len(lines) == 3
    meta = json.loads((tmp_path / "mc.csv.meta.json").read_text())
    assert meta["metadata"]["rng"].startswith("numpy.random.Philox")
    assert meta["config"]["seed"] == 5
    # rerun from the sidecar reproduces the table bit for bit
    out2 = tmp_path / "mc2.csv"
    assert main(["run", str(tmp_path / "mc.csv.meta.json"), "-o", str(out2)]) == 0
    assert out2.read_text() == out.read_text()


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("NEMATIC_THREADS", "2")
    out = tmp_path / "scan.csv"
    args = ["nematic-scan", "--boxes", "4", "--zs", "1,2", "--Js", "0.5", "--sweeps", "1600",
            "--bin", "100", "--therm", "100", "-o", str(out)]
    assert main(args) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("L,z,J,epsilon,occ_v")
    assert len(rows) == 3


def test_cluster_and_decompose(tmp_path):
    system = {"n": 1, "zeta": [0.3], "incompatible_pairs": [], "a": [1], "d": [0], "delta": 0.5}
    code, doc = run_json(tmp_path, {"subcommand": "cluster", "system": system, "max_order": 5, "pinned": 0})
    assert code == 0
    assert doc["result"]["exact_log_partition"] == pytest.approx(math.log(1.3))
    code, doc = run_json(tmp_path, {"subcommand": "decompose", "dimers": [[0, 0, "h"]], "q": "v",
                                    "rect": [6, 6], "ell0": 2})
    assert code == 0
    assert len(doc["result"]["family"]["loops"]) == 1
    assert doc["result"]["external_contours"] == [0]


def test_factorization_check(tmp_path):
    code, doc = run_json(tmp_path, {"subcommand": "factorization-check", "rect": [4, 4], "z": 2, "J": 3, "ell0": 1})
    assert code == 0
    assert doc["result"]["passed"] is True


def test_dumps_uses_17_digits():
    assert dumps(0.1) == "0.10000000000000001"
    assert json.loads(dumps({"a": [1.0 / 3, math.inf]}))["a"][0] == 1.0 / 3
