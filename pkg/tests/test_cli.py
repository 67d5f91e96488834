import json
import subprocess
import sys

import numpy as np
import pytest

from tgbformer import tzr
from tgbformer.cli import main

SMALL = {"N": 2, "c": 8, "h": 2, "w": 3, "sttm": {"heads": 2}}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def test_run_synth(tmp_path, small_config):
    out, report = tmp_path / "b.tzr", tmp_path / "r.json"
    assert main(["run", "--config", small_config, "--synth", "--output", str(out), "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert tzr.load(out).shape == (8, 12)
    assert data["output_shape"] == [8, 12] and all(data["invariants"].values())
    assert set(data) >= {"stage_timings_ms", "invariants", "checksums", "outputs"}
    assert data["checksums"]["blender"] == tzr.checksum(tzr.load(out))


def test_run_from_input_matches_synth(tmp_path, small_config):
    frames = tmp_path / "f.tzr"
    assert main(["synth", "--config", small_config, "--seed", "4", "--output", str(frames)]) == 0
    a, b = tmp_path / "a.tzr", tmp_path / "b.tzr"
    assert main(["run", "--config", small_config, "--seed", "4", "--input", str(frames), "--output", str(a),
                 "--report", str(tmp_path / "r.json")]) == 0
    assert main(["run", "--config", small_config, "--seed", "4", "--synth", "--output", str(b),
                 "--report", str(tmp_path / "r2.json")]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"N": 0}')
    assert main(["run", "--config", str(bad), "--synth"]) == 2
    assert "field N" in capsys.readouterr().err
    bad.write_text("{not json")
    assert main(["oracle", "--config", str(bad)]) == 2


def test_frames_config_mismatch_exit(tmp_path, small_config):
    frames = tmp_path / "f.tzr"
    tzr.save(frames, np.zeros((2, 8, 4, 4)))
    assert main(["run", "--config", small_config, "--input", str(frames)]) == 2


def test_io_error_exit(tmp_path, small_config):
    assert main(["run", "--config", small_config, "--input", str(tmp_path / "none.tzr")]) == 3
    assert main(["run", "--config", str(tmp_path / "none.json"), "--synth"]) == 3
    corrupt = tmp_path / "c.tzr"
    corrupt.write_bytes(b"garbage")
    assert main(["run", "--config", small_config, "--input", str(corrupt)]) == 3


def test_oracle(capsys):
    assert main(["oracle", "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert "spat_mhsa" in out and "FAIL" not in out


def test_oracle_fault(capsys):
    assert main(["oracle", "--inject-fault"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_oracle_single_token(tmp_path):
    path = tmp_path / "one.json"
    path.write_text('{"N": 1, "h": 1, "w": 1}')
    assert main(["oracle", "--config", str(path)]) == 0


def test_gradcheck_subset(capsys):
    assert main(["gradcheck", "--only", "blender"]) == 0
    assert "blender" in capsys.readouterr().out


def test_gradcheck_tiny_step_warns(capsys):
    assert main(["gradcheck", "--only", "tensor.softmax", "--h", "1e-12"]) == 0
    assert "warning" in capsys.readouterr().err


def test_sweep(tmp_path, small_config, capsys):
    assert main(["sweep", "--grid", "N", "--config", small_config, "--outdir", str(tmp_path / "s")]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["point"] for r in rows] == ["N=1", "N=10", "N=15", "N=20", "N=25", "N=30"]
    assert all((tmp_path / "s" / f"{r['point'].replace('=', '')}.tzr").exists() for r in rows)


def test_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["run"])
    assert err.value.code == 2


def test_module_entry_point(tmp_path, small_config):
    proc = subprocess.run([sys.executable, "-m", "tgbformer", "run", "--config", small_config, "--synth"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["output_shape"] == [8, 12]
