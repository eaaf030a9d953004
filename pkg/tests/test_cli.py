import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from conftest import FAST_CONFIG, small_scene

from texmark import report
from texmark.cli import main
from texmark.pipeline import SectionResult, load_report, report_landmarks
from texmark.synthbench import DistortionSpec


@pytest.fixture(scope="module")
def detected(section_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    f = section_files
    for side in ("a", "b"):
        rc = main(["detect", str(f[side]), "--codebook", str(f["codebook"]),
                   "--config", str(f["config"]), "--out", str(out / f"{side}.json")])
        assert rc == 0
    return out


def test_codebook_command(section_files, tmp_path):
    out = tmp_path / "cb.json"
    rc = main(["codebook", str(section_files["a"]), "--config", str(section_files["config"]),
               "--out", str(out)])
    assert rc == 0
    assert json.loads(out.read_text())["version"] == 1


def test_detect_output_has_version(detected):
    doc = json.loads((detected / "a.json").read_text())
    assert doc["version"] == 1 and doc["closed"]


def test_match_command_and_determinism(detected, tmp_path):
    a, b = str(detected / "a.json"), str(detected / "b.json")
    outs = []
    for k in range(2):
        o = tmp_path / f"m{k}.json"
        assert main(["match", a, b, "--no-location", "--out", str(o)]) == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1]
    rep = json.loads(outs[0])
    assert rep["version"] == 1 and rep["no_location"] and rep["pairs"]


def test_self_match_via_cli(detected, tmp_path):
    a = str(detected / "a.json")
    o = tmp_path / "self.json"
    assert main(["match", a, a, "--out", str(o)]) == 0
    rep = json.loads(o.read_text())
    n = len(SectionResult.load(a).landmarks)
    assert [(p["a"], p["b"]) for p in rep["pairs"]] == [(k, k) for k in range(n)]
    assert all(p["D"] == 0 for p in rep["pairs"])


def test_input_errors_exit_2(section_files, tmp_path, capsys):
    f = section_files
    assert main(["detect", str(tmp_path / "missing.png"), "--codebook", str(f["codebook"]),
                 "--config", str(f["config"]), "--out", str(tmp_path / "r.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["match", str(bad), str(bad), "--out", str(tmp_path / "m.json")]) == 2
    assert main(["detect", str(f["a"]), "--codebook", str(bad), "--config", str(f["config"]),
                 "--out", str(tmp_path / "r.json")]) == 2
    assert "input error" in capsys.readouterr().err


def test_config_errors_exit_3(section_files, tmp_path):
    f = section_files
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"superpixel_area": -5}))
    assert main(["detect", str(f["a"]), "--codebook", str(f["codebook"]), "--config", str(cfg),
                 "--out", str(tmp_path / "r.json")]) == 3
    cfg.write_text(json.dumps({"no_such_key": 1}))
    assert main(["codebook", str(f["a"]), "--config", str(cfg), "--out",
                 str(tmp_path / "cb.json")]) == 3


def test_codebook_bank_mismatch_exit_2(section_files, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(dict(FAST_CONFIG, n_scales=3)))
    assert main(["detect", str(section_files["a"]), "--codebook", str(section_files["codebook"]),
                 "--config", str(cfg), "--out", str(tmp_path / "r.json")]) == 2


def test_overlay_result_and_matches(section_files, detected, tmp_path):
    a = str(detected / "a.json")
    assert main(["overlay", str(section_files["a"]), a, "--out", str(tmp_path / "ov")]) == 0
    assert (tmp_path / "ov.overlay.png").stat().st_size > 0
    m = tmp_path / "m.json"
    assert main(["match", a, str(detected / "b.json"), "--out", str(m)]) == 0
    assert main(["overlay", str(section_files["a"]), str(m), "--image-b",
                 str(section_files["b"]), "--out", str(tmp_path / "mm")]) == 0
    assert (tmp_path / "mm.a.png").exists() and (tmp_path / "mm.b.png").exists()


def test_overlay_empty_result_copies_image(section_files, detected, tmp_path):
    doc = json.loads((detected / "a.json").read_text())
    doc["closed"], doc["open"] = [], []
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps(doc))
    assert main(["overlay", str(section_files["a"]), str(empty), "--out",
                 str(tmp_path / "e")]) == 0
    assert (tmp_path / "e.overlay.png").read_bytes() == section_files["a"].read_bytes()


def test_overlay_labels_start_at_one(detected):
    res = SectionResult.load(detected / "a.json")
    one = SectionResult(res.section_id, res.closed[:1], [], res.config, res.provenance)
    ((lm, text, _),) = report.result_items(one)
    assert text == "1" and lm.id == res.closed[0].id
    rep = {"pairs": [{"a": res.closed[0].id, "b": res.closed[0].id}]}
    lms = {lm.id: lm for lm in res.landmarks}
    ia, ib = report.match_items(rep, lms, lms)
    assert ia[0][1] == ib[0][1] == "1" and ia[0][2] == ib[0][2]


def test_overlay_empty_match_report_copies_image(section_files, detected, tmp_path):
    m = tmp_path / "m.json"
    assert main(["match", str(detected / "a.json"), str(detected / "b.json"),
                 "--out", str(m)]) == 0
    rep = load_report(m)
    rep["pairs"] = []
    out = report.render_match_overlay(section_files["a"], np.zeros((2, 2)), rep, "a",
                                      report_landmarks(rep, "a"), tmp_path / "x.png")
    assert out.read_bytes() == section_files["a"].read_bytes()


def test_bench_command_writes_csv_and_figures(tmp_path):
    scene = tmp_path / "scene.json"
    dist = tmp_path / "dist.json"
    cfg = tmp_path / "cfg.json"
    scene.write_text(json.dumps(small_scene().to_json()))
    dist.write_text(json.dumps(DistortionSpec(rotation=4, translation=(5, 3)).to_json()))
    cfg.write_text(json.dumps(FAST_CONFIG))
    out = tmp_path / "bench"
    rc = main(["bench", str(scene), str(dist), "--config", str(cfg), "--out-dir", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(open(out / "bench.csv")))
    assert len(rows) == 1 and float(rows[0]["detection_recall"]) == 1.0
    for name in ("bench_summary.png", "pair_matches.png"):
        assert (out / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert json.loads((out / "summary.json").read_text())["version"] == 1


def test_bench_without_inputs_is_input_error(tmp_path):
    assert main(["bench", "--out-dir", str(tmp_path)]) == 2


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "texmark.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "texmark" in out.stdout
