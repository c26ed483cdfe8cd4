import json
import subprocess
import sys

import numpy as np
import pytest

from statdisk.cli import config_hash, main
from statdisk.disk import DiskTrace

BALL = {"kind": "ball", "n": 2}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def config(task, **params):
    return {"schema_version": 1, "task": task, "domain": BALL, "structure": "standard",
            "params": {"N": 32, "M": 8, **params}}


def test_solve_disk_writes_straight_disk(tmp_path):
    cfg = config("solve-disk", x0=[0, 0, 0, 0], v0=[1, 0, 0, 0])
    out = tmp_path / "run"
    assert main(["solve-disk", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    tr = DiskTrace.from_csv(out / "disk.csv", M=8)
    assert np.abs(tr.boundary[:, 0] - tr.grid.zeta).max() < 1e-8
    assert np.abs(tr.boundary[:, 1]).max() < 1e-8
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_sha256"] == config_hash(cfg)
    assert manifest["status"] == 0
    assert "result.json" in manifest["artifacts"]


def test_indices_example(tmp_path):
    out = tmp_path / "idx"
    cfg = config("indices", x0=[0, 0, 0, 0], v0=[1, 0, 0, 0], N=64, M=16)
    assert main(["indices", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["fredholm_index"] == 8
    assert result["indices"] == [2, 1, 1, 0]


def test_missing_x0_is_config_error(tmp_path):
    cfg = config("solve-disk")
    out = tmp_path / "never"
    assert main(["solve-disk", "--config", write(tmp_path, cfg), "--out", str(out)]) == 3
    assert not out.exists()


@pytest.mark.parametrize("bad", [
    {"params": {"x0": [0, 0, 0, 0], "N": 48}},
    {"params": {"x0": [0, 0, 0]}},
    {"schema_version": 99},
    {"task": "indices"},
])
def test_invalid_configs(tmp_path, bad):
    cfg = {**config("solve-disk", x0=[0, 0, 0, 0]), **bad}
    assert main(["solve-disk", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3


def test_unreadable_config_is_io_error(tmp_path):
    assert main(["check", "--config", str(tmp_path / "missing.json")]) == 4


def test_outside_domain_is_rejected(tmp_path):
    cfg = config("solve-disk", x0=[2, 0, 0, 0])
    assert main(["solve-disk", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3


def test_reruns_are_byte_identical(tmp_path):
    cfg = config("good-boundary", x0=[0.1, 0, 0, 0], v0=[0, 0, 1, 0])
    path = write(tmp_path, cfg)
    blobs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["good-boundary", "--config", path, "--out", str(out), "--seed", "7"]) == 0
        blobs.append((out / "result.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_check_task(tmp_path):
    out = tmp_path / "chk"
    assert main(["check", "--config", write(tmp_path, config("check")), "--out", str(out)]) == 0
    assert json.loads((out / "result.json").read_text())["passed"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "statdisk", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "solve-disk" in proc.stdout
