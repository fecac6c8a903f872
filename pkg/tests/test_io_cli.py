import json

import numpy as np
import pytest

from scratchattack.attack import AttackRecord
from scratchattack.cli import main, toy_manifest_path
from scratchattack.exceptions import ManifestError
from scratchattack.io import load_manifest, load_png, read_records, save_mask, save_png, write_records


def make_manifest(tmp_path, entries):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(entries))
    return path


@pytest.fixture
def images(tmp_path):
    save_png(tmp_path / "a.png", np.full((6, 5, 3), 0.4))
    save_png(tmp_path / "b.png", np.zeros((6, 5, 3)))
    mask = np.zeros((6, 5), bool)
    mask[2:4, 1:3] = True
    save_mask(tmp_path / "a_mask.png", mask)
    save_mask(tmp_path / "bad_mask.png", np.ones((5, 5), bool))
    return tmp_path, mask


def test_two_entry_manifest(images):
    tmp, mask = images
    path = make_manifest(tmp, [
        {"image_id": "a", "image_path": "a.png", "label": 1, "mask_path": "a_mask.png"},
        {"image_id": "b", "image_path": "b.png", "label": 0},
    ])
    entries = load_manifest(path)
    assert [e.image_id for e in entries] == ["a", "b"]
    image, region = entries[0].load()
    assert image.shape == (6, 5, 3)
    np.testing.assert_array_equal(region, mask)
    assert entries[1].load_region().all()


def test_mask_of_wrong_shape_names_the_entry(images):
    tmp, _ = images
    path = make_manifest(tmp, [{"image_id": "odd", "image_path": "a.png", "label": 0, "mask_path": "bad_mask.png"}])
    with pytest.raises(ManifestError, match="odd"):
        load_manifest(path)


@pytest.mark.parametrize("entries,match", [
    ({"not": "a list"}, "array"),
    ([{"image_path": "a.png"}], "label"),
    ([{"image_path": "missing.png", "label": 0}], "not found"),
    ([{"image_path": "a.png", "label": -1}], "label"),
    ([{"image_path": "a.png", "label": 0, "colour": 1}], "unknown"),
    ([{"image_id": "x", "image_path": "a.png", "label": 0}, {"image_id": "x", "image_path": "b.png", "label": 0}],
     "duplicate"),
])
def test_manifest_errors(images, entries, match):
    tmp, _ = images
    with pytest.raises(ManifestError, match=match):
        load_manifest(make_manifest(tmp, entries))


def test_manifest_missing_or_malformed(tmp_path):
    with pytest.raises(ManifestError, match="not found"):
        load_manifest(tmp_path / "nope.json")
    (tmp_path / "m.json").write_text("[{")
    with pytest.raises(ManifestError, match="JSON"):
        load_manifest(tmp_path / "m.json")


def test_png_round_trip_is_exact_on_8bit_values(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (4, 4, 3)) / 255.0
    save_png(tmp_path / "x.png", img)
    np.testing.assert_array_equal(load_png(tmp_path / "x.png"), img)


def test_records_round_trip(tmp_path):
    recs = [AttackRecord(image_id="a", seed=0, success=True, queries=3, final_params=[[1.0] * 9]),
            AttackRecord(image_id="b", seed=1, status="skipped")]
    write_records(tmp_path / "r.jsonl", recs)
    assert read_records(tmp_path / "r.jsonl") == recs


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_attack_report_round_trip(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run_cli(["attack", "--seeds", "0", "--query-limit", "300", "--out-dir", out], capsys)
    assert code == 0 and "FR" in stdout
    records = read_records(out / "records.jsonl")
    assert len(records) == 20
    lines = (out / "records.jsonl").read_text().splitlines()
    assert [json.loads(x) for x in lines] == [r.to_dict() for r in records]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["attack"]["query_limit"] == 300 and "started" not in summary
    assert "started" in json.loads((out / "run_info.json").read_text())

    code, _, _ = run_cli(["report", "--records", out / "records.jsonl"], capsys)
    assert code == 0
    assert (out / "metrics.csv").exists() and "| seed |" in (out / "metrics.md").read_text()
    pngs = sorted((out / "adversarial").glob("*.png"))
    assert len(pngs) == sum(1 for r in records if r.final_params)
    # masked-out pixels are never modified in the emitted images
    entries = {e.image_id: e for e in load_manifest(toy_manifest_path())}
    for rec in records:
        entry = entries[rec.image_id]
        if entry.mask_path is None or not rec.final_params:
            continue
        image, region = entry.load()
        tag = "adv" if rec.success else "best"
        adv = load_png(out / "adversarial" / f"{rec.image_id}_seed{rec.seed}_{tag}.png")
        np.testing.assert_array_equal(adv[~region], image[~region])


def test_cli_summary_is_reproducible(tmp_path, capsys):
    args = ["attack", "--seeds", "3", "--query-limit", "50", "--scratch-count", "1"]
    run_cli(args + ["--out-dir", tmp_path / "a"], capsys)
    run_cli(args + ["--out-dir", tmp_path / "b"], capsys)
    assert (tmp_path / "a" / "summary.json").read_bytes().replace(b"/a/", b"/b/") == \
        (tmp_path / "b" / "summary.json").read_bytes()


def test_cli_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = {"attack": {"query_limit": 7, "scratch_count": 1}, "optimizer": {"strategy": "rs", "seeds": [1]}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    code, _, _ = run_cli(["attack", "--config", tmp_path / "cfg.json", "--query-limit", "9",
                          "--out-dir", tmp_path / "o"], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["config"]["attack"]["query_limit"] == 9
    assert summary["config"]["optimizer"]["strategy"] == "rs"
    assert summary["config"]["attack"]["scratch_count"] == 1


def test_cli_rejects_unknown_config_keys(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"attack": {"budget": 5}}))
    code, _, err = run_cli(["attack", "--config", tmp_path / "cfg.json"], capsys)
    assert code != 0
    doc = json.loads(err)
    assert doc["error"] == "ConfigError" and "budget" in doc["message"]


def test_cli_errors_are_machine_readable(tmp_path, capsys):
    code, _, err = run_cli(["attack", "--manifest", tmp_path / "none.json", "--out-dir", tmp_path], capsys)
    assert code == 2 and json.loads(err)["error"] == "ManifestError"


def test_cli_errored_records_give_nonzero_exit(tmp_path, capsys):
    code, _, _ = run_cli(["attack", "--oracle", "http://127.0.0.1:9/x", "--max-retries", "0",
                          "--seeds", "0", "--out-dir", tmp_path], capsys)
    assert code == 1
    assert all(r.status == "errored" for r in read_records(tmp_path / "records.jsonl"))


def test_cli_report_on_empty_records(tmp_path, capsys):
    (tmp_path / "records.jsonl").write_text("")
    code, _, _ = run_cli(["report", "--records", tmp_path / "records.jsonl"], capsys)
    assert code == 0
    assert (tmp_path / "metrics.md").read_text().count("\n") == 2


def test_cli_defend(tmp_path, capsys):
    out = tmp_path / "run"
    run_cli(["attack", "--seeds", "0", "--out-dir", out], capsys)
    code, _, _ = run_cli(["defend", "--records", out / "records.jsonl", "--defense", "median3x3",
                          "--defense", "jpeg:90"], capsys)
    assert code == 0
    rows = json.loads((out / "defense.json").read_text())
    assert [r["defense"] for r in rows] == ["median3x3", "jpeg(q=90)"]
    records = read_records(out / "records.jsonl")
    for r in rows:
        assert 0.0 <= r["recovery_rate"] <= 1.0
        assert r["n_successful_attacks"] == sum(rec.success for rec in records)
        assert r["accuracy_delta"] == pytest.approx(r["defended_accuracy"] - r["clean_accuracy"])
    assert "recovery rate" in (out / "defense.md").read_text()


def test_cli_rasterize(tmp_path, capsys):
    code, stdout, _ = run_cli(["rasterize", "--params", "0,0,3,0,1,1,1", "--order", "1", "--size", "4", "4",
                               "--out", tmp_path / "s.png"], capsys)
    assert code == 0 and stdout.startswith("4 pixels")
    img = load_png(tmp_path / "s.png")
    np.testing.assert_array_equal(img[0].sum(axis=-1), [3, 3, 3, 3])
    code, _, err = run_cli(["rasterize", "--params", "1,2", "--out", tmp_path / "t.png"], capsys)
    assert code == 2 and json.loads(err)["error"] == "DomainError"
