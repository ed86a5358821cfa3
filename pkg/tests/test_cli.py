import json
import subprocess
import sys

import pytest

from hypsim import read_samples, write_samples
from hypsim.cli import main


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen") / "orig.jsonl"
    assert main(["generate", "--images", "2", "--seed", "3", "--out", str(out), "--test-time-out", str(out.with_name("tt.jsonl"))]) == 0
    return out


def test_generate_writes_sidecars(generated):
    assert len(read_samples(generated)) == 50
    scenes = json.loads(generated.with_name("orig.scenes.json").read_text())
    assert set(scenes) == {"0", "1"}
    stats = json.loads(generated.with_name("orig.stats.json").read_text())
    assert stats["original"]["n_questions"] == 50
    first = json.loads(generated.with_name("tt.jsonl").read_text().splitlines()[0])
    assert "scene" not in first and "question_program" not in first


def test_seed_from_environment(tmp_path, monkeypatch, generated):
    monkeypatch.setenv("HYPSIM_SEED", "3")
    out = tmp_path / "env.jsonl"
    assert main(["generate", "--images", "2", "--out", str(out)]) == 0
    assert out.read_bytes() == generated.read_bytes()
    monkeypatch.setenv("HYPSIM_SEED", "three")
    assert main(["generate", "--images", "1", "--out", str(out)]) == 2


def test_exec(generated, capsys):
    scenes = str(generated.with_name("orig.scenes.json"))
    sample = read_samples(generated)[0]
    assert main(["exec", "--scene", scenes, "--image", "0", "--program", "count(scene())"]) == 0
    assert capsys.readouterr().out.strip() == str(len(sample.scene))
    assert main(["exec", "--scene", scenes, "--image", "0", "--program", "remove(scene())"]) == 0
    assert json.loads(capsys.readouterr().out)["objects"] == []
    assert main(["exec", "--scene", scenes, "--image", "0", "--program", "count(scene()"]) == 4
    assert main(["exec", "--scene", scenes, "--image", "0", "--program", "query_color(unique(scene()))"]) == 5
    assert main(["exec", "--scene", scenes, "--program", "count(scene())"]) == 6
    assert main(["exec", "--scene", "nope.json", "--program", "count(scene())"]) == 2


def test_eval(generated, tmp_path, capsys):
    samples = read_samples(generated)
    pred = tmp_path / "pred.jsonl"
    pred.write_text("".join(json.dumps({"image_id": s.image_id, "pair_index": s.pair_index, "answer": s.answer}) + "\n"
                            for s in samples[:25]))
    report = tmp_path / "report.json"
    assert main(["eval", "--gold", str(generated), "--pred", str(pred), "--report", str(report)]) == 0
    assert json.loads(report.read_text())["overall"] == 0.5
    assert "missing predictions: 25" in capsys.readouterr().out
    pred.write_text('{"image_id": 0, "pair_index": 0, "answer": "banana"}\n')
    assert main(["eval", "--gold", str(generated), "--pred", str(pred)]) == 6


def test_validate_flags_tampering(generated, tmp_path, capsys):
    samples = read_samples(generated)
    assert main(["validate", "--input", str(generated)]) == 0
    bad = tmp_path / "bad.jsonl"
    lines = generated.read_text().splitlines()
    d = json.loads(lines[0])
    d["answer"] = "no" if d["answer"] == "yes" else "yes"
    bad.write_text("\n".join([json.dumps(d)] + lines[1:]) + "\n")
    capsys.readouterr()
    assert main(["validate", "--input", str(bad)]) == 1
    assert f"{len(samples)} samples checked, 1 failure(s)" in capsys.readouterr().out


def test_stats_and_balance(generated, tmp_path, capsys, balanced_split):
    js = tmp_path / "stats.json"
    assert main(["stats", "--input", str(generated), "--json", str(js)]) == 0
    assert "#Images" in capsys.readouterr().out
    assert json.loads(js.read_text())[str(generated)]["n_images"] == 2
    # the tiny split misses labels, so balancing it is infeasible
    assert main(["balance", "--input", str(generated), "--out", str(tmp_path / "b.jsonl")]) == 1
    full = tmp_path / "bal.jsonl"
    write_samples(balanced_split, full)
    assert main(["balance", "--input", str(full), "--out", str(tmp_path / "b.jsonl"), "--seed", "1"]) == 0
    assert len(read_samples(tmp_path / "b.jsonl")) == len(balanced_split)


def test_config_errors(tmp_path):
    assert main(["generate", "--images", "0", "--out", str(tmp_path / "x.jsonl")]) == 2
    assert main(["generate", "--images", "1", "--out", str(tmp_path / "missing" / "x.jsonl")]) == 2
    assert main(["generate", "--images", "1", "--out", str(tmp_path / "x.jsonl"), "--templates", "nope.json"]) == 2
    bad = tmp_path / "t.json"
    bad.write_text('[{"family": "count", "hop": 1, "surface": "How many <C> things?", "program": "count(scene())"}]')
    assert main(["generate", "--images", "1", "--out", str(tmp_path / "x.jsonl"), "--templates", str(bad)]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hypsim", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "generate" in proc.stdout
