import json

import numpy as np
import pytest

from spikehybrid.cli import main
from spikehybrid.codec import decode, encode_rate
from spikehybrid.hybrid import hybrid_matmul
from spikehybrid.pipeline import BlockConfig
from spikehybrid.quantizer import quantize
from spikehybrid.serialize import (dumps, format_tensor, load_quant_tensor, load_spike_train,
                                   load_trace, parse_tensor, read_tensor, write_tensor)


def test_tensor_text_format(tmp_path):
    x = np.array([[1.5, -2.0, 0.1], [3.0, 1e-17, -7.25]])
    text = format_tensor(x)
    assert text.splitlines()[0] == "2 3"
    assert len(text.splitlines()) == 3
    write_tensor(tmp_path / "x.txt", x)
    assert np.array_equal(read_tensor(tmp_path / "x.txt"), x)
    assert format_tensor(np.array([[1, -2]])) == "1 2\n1 -2\n"
    assert np.array_equal(parse_tensor("1 2\n  4   5\n"), [[4.0, 5.0]])


def test_tensor_text_errors():
    for bad in ("", "2\n1 2", "2 2\n1 2\n", "1 2\n1 2 3\n"):
        with pytest.raises(ValueError):
            parse_tensor(bad)


def test_quant_tensor_json_roundtrip():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((6, 4))
    w[2] *= 20
    q = quantize(w, "row", scale_axis=1)
    d = json.loads(dumps(q))
    for key in ("codes", "scale", "zero_point", "bit_width", "outlier_channels", "axis"):
        assert key in d
    assert d["bit_width"] == {"normal": 4, "outlier": 8}
    back = load_quant_tensor(dumps(q))
    assert np.array_equal(back.codes, q.codes) and np.array_equal(back.scale, q.scale)
    assert back.outlier_channels == q.outlier_channels and back.axis == "row"


def test_spike_train_and_trace_json():
    tr = encode_rate([3, -1, 0], T=4)
    assert np.array_equal(decode(load_spike_train(dumps(tr))), [3, -1, 0])
    rng = np.random.default_rng(1)
    a = quantize(rng.standard_normal((3, 4)))
    b = quantize(rng.standard_normal((4, 2)), "row", scale_axis=1)
    t = hybrid_matmul(a, b, debug=True).trace
    assert load_trace(dumps(t)) == t
    with pytest.raises(TypeError):
        dumps(object())


def test_cli_build_run_compare(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SPIKEHYBRID_OUT", str(tmp_path / "env"))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "weight_distribution": "gaussian_plus_outlier_channels", "gamma": 2}))
    assert main(["build", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "x_0.txt").exists()
    assert json.loads((tmp_path / "env" / "config.json").read_text())["seed"] == 5
    q = load_quant_tensor((tmp_path / "env" / "weights" / "q_proj.quant.json").read_text())
    assert q.gamma == 2
    assert main(["run", "--mode", "kirin", "--config", str(cfg)]) == 0
    rep = json.loads((tmp_path / "env" / "report.json").read_text())
    assert rep["ok"] and rep["config"]["seed"] == 5
    assert main(["compare", "--modes", "quant,snn,kirin", "--format", "csv", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "energy.csv").read_text().startswith("method,component,compute,read,move,total")
    out = capsys.readouterr().out
    assert "PASS kirin_equals_quant_ann" in out


def test_cli_run_is_byte_reproducible(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--mode", "snn", "--seed", "3", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert main(["compare", "--modes", "kirin,bogus", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"H": -1}))
    assert main(["run", "--mode", "quant", "--config", str(bad), "--out", str(tmp_path)]) == 2

    import spikehybrid.pipeline as pl
    real = pl.run_block

    def broken(block, mode):
        run = real(block, mode)
        if mode == "kirin":
            run.outputs["qk"][0] = run.outputs["qk"][0] + 1.0
        return run

    monkeypatch.setattr(pl, "run_block", broken)
    assert main(["run", "--mode", "kirin", "--out", str(tmp_path)]) == 1
    assert "FAIL kirin_equals_quant_ann" in capsys.readouterr().out


def test_cli_energy_and_constants(tmp_path, capsys):
    assert main(["energy", "--shape", "llama2-7b", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "energy.json").read_text())
    assert doc["calibration"]["preset"] == "opt-2.7b"
    assert abs(doc["calibration"]["relative_error"]) <= 0.10
    assert set(doc["micro_joules"]) == {"quant", "mixed_quant", "snn_baseline", "kirin"}
    assert main(["energy", "--shape", "custom", "--H-in", "64", "--H-out", "64", "--gamma", "2",
                 "--beta", "3/2", "--out", str(tmp_path)]) == 0
    assert main(["energy", "--shape", "custom", "--out", str(tmp_path)]) == 2
    c = tmp_path / "c.json"
    c.write_text(json.dumps({"mac_4_4_32": 9.5}))
    capsys.readouterr()
    assert main(["constants", "--file", str(c)]) == 0
    assert json.loads(capsys.readouterr().out)["mac_4_4_32"] == 9.5
    c.write_text(json.dumps({"widget": 1}))
    assert main(["constants", "--file", str(c)]) == 2


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "spikehybrid", "constants"], capture_output=True, text=True)
    assert r.returncode == 0 and '"acc_4": 1.0' in r.stdout
