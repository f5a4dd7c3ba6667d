import json

import numpy as np
import pytest

from symorient.cli import DEFAULT_CONFIG, config_hash, load_config, main

SMALL = {
    "dataset": {"families": ["box", "bench", "mug", "chair"], "train_per_family": 2,
                "calibration_per_family": 3, "test_per_family": 2, "points": 64,
                "train_points": 64},
    "orienter": {"hidden": [8, 16], "head": [8], "steps": 12, "batch_size": 4, "points": 32},
    "flipper": {"hidden": [8, 16], "head": [8], "steps": 12, "batch_size": 4, "points": 32},
    "pipeline": {"orient_k": 3, "flip_k": 3},
    "sweep": {"points": 64},
    "orient": {"points": 64},
}


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    c = ["--config", str(cfg)]
    assert main(["gen", *c, "--out", str(root / "data")]) == 0
    for role in ("orienter", "flipper"):
        assert main(["train", *c, "--role", role, "--data", str(root / "data"),
                     "--out", str(root / f"{role}.json")]) == 0
    models = ["--orienter", str(root / "orienter.json"), "--flipper", str(root / "flipper.json")]
    assert main(["calibrate", *c, *models, "--data", str(root / "data"),
                 "--out", str(root / "cal.json")]) == 0
    return root, c, models


def test_config_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"orienter": {"stepz": 3}}))
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "d")]) == 3
    bad.write_text(json.dumps({"dataset": {"families": ["box", "sphere"]}}))
    with pytest.raises(Exception) as info:
        load_config(bad)
    assert "sphere" in str(info.value)
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "d")]) == 3
    bad.write_text("{not json")
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "d")]) == 3


def test_config_hash_stable():
    assert config_hash(DEFAULT_CONFIG) == config_hash(json.loads(json.dumps(DEFAULT_CONFIG)))
    assert load_config() == DEFAULT_CONFIG


def test_gen_manifest(run):
    root, _, _ = run
    manifest = json.loads((root / "data" / "manifest.json").read_text())
    assert manifest["verified"] and len(manifest["shapes"]) == 4 * 7
    bench = next(s for s in manifest["shapes"] if s["family"] == "bench")
    assert len(bench["symmetry"]) == 2
    for s in manifest["shapes"]:
        assert (root / "data" / s["file"]).is_file()


def test_gen_is_byte_identical(run, tmp_path):
    root, c, _ = run
    assert main(["gen", *c, "--out", str(tmp_path / "again")]) == 0
    for name in ("manifest.json", "clouds/test-mug-001.xyz"):
        assert (root / "data" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_train_outputs_and_determinism(run, tmp_path):
    root, c, _ = run
    assert main(["train", *c, "--role", "orienter", "--data", str(root / "data"),
                 "--out", str(tmp_path / "o.json")]) == 0
    assert (tmp_path / "o.json").read_bytes() == (root / "orienter.json").read_bytes()
    curve = (root / "orienter.curve.csv").read_text().splitlines()
    assert curve[0] == "step,loss" and len(curve) == 13


def test_resume_matches_uninterrupted(run, tmp_path):
    root, c, _ = run
    data = str(root / "data")
    assert main(["train", *c, "--role", "flipper", "--data", data, "--until", "5",
                 "--out", str(tmp_path / "half.json")]) == 0
    assert main(["train", *c, "--role", "flipper", "--data", data, "--resume",
                 str(tmp_path / "half.json"), "--out", str(tmp_path / "full.json")]) == 0
    a = json.loads((tmp_path / "full.json").read_text())
    b = json.loads((root / "flipper.json").read_text())
    assert a["params"] == b["params"] and a["digest"] == b["digest"]


def test_train_missing_dataset(tmp_path):
    assert main(["train", "--role", "orienter", "--data", str(tmp_path / "none"),
                 "--out", str(tmp_path / "o.json")]) == 2
    assert not (tmp_path / "o.json").exists()


def test_calibration_record(run):
    root, _, _ = run
    doc = json.loads((root / "cal.json").read_text())
    assert 0 <= doc["tau"] <= 1 and doc["alpha"] == 0.3 and doc["n_cal"] == 12


def test_calibrate_needs_ten_shapes(run, tmp_path):
    root, _, models = run
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**SMALL, "dataset": {**SMALL["dataset"],
                                                    "calibration_per_family": 2}}))
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    assert main(["calibrate", "--config", str(cfg), *models, "--data", str(tmp_path / "d"),
                 "--out", str(tmp_path / "cal.json")]) == 2


def test_eval_reports_are_reproducible(run, tmp_path):
    root, c, models = run
    outs = []
    for i in range(3):
        out = tmp_path / f"rep{i}"
        assert main(["eval", *c, *models, "--data", str(root / "data"), "--calibration",
                     str(root / "cal.json"), "--out", str(out)]) == 0
        outs.append(out)
    names = ["records.csv", "ecdf.csv", "records_no_tta.csv", "table.txt", "aggregates.json"]
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        assert (outs[0] / name).read_bytes() == (outs[2] / name).read_bytes()
    header = (outs[0] / "records.csv").read_text().splitlines()[0]
    assert header == "shape_id,angular_error_deg,chamfer,aps_size,min_aps_chamfer"
    assert len((outs[0] / "table.txt").read_text().splitlines()) == 3


def test_eval_empty_test_split(run, tmp_path):
    _, _, models = run
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**SMALL, "dataset": {**SMALL["dataset"], "test_per_family": 0}}))
    assert main(["gen", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    assert main(["eval", "--config", str(cfg), *models, "--data", str(tmp_path / "d"),
                 "--out", str(tmp_path / "rep")]) == 2


def test_orient_mesh_with_aps(run, tmp_path):
    root, c, models = run
    mesh = tmp_path / "box.obj"
    verts = [(x, y, z) for x in (-1, 1) for y in (-0.5, 0.5) for z in (-0.2, 0.2)]
    faces = [(1, 2, 4), (1, 4, 3), (5, 7, 8), (5, 8, 6), (1, 5, 6), (1, 6, 2),
             (3, 4, 8), (3, 8, 7), (1, 3, 7), (1, 7, 5), (2, 6, 8), (2, 8, 4)]
    mesh.write_text("".join(f"v {x} {y} {z}\n" for x, y, z in verts)
                    + "".join(f"f {a} {b} {c}\n" for a, b, c in faces))
    out = tmp_path / "out"
    assert main(["orient", *c, str(mesh), *models, "--calibration", str(root / "cal.json"),
                 "--aps", "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    assert (out / "oriented.obj").is_file() and (out / "oriented.xyz").is_file()
    probs = [cand["probability"] for cand in result["candidates"]]
    assert probs == sorted(probs, reverse=True) and len(probs) >= 1
    for cand in result["candidates"]:
        assert (out / cand["files"][0]).is_file()


def test_orient_without_aps_and_tta_off(run, tmp_path):
    root, c, models = run
    cloud = root / "data" / "clouds" / "test-box-000.xyz"
    assert main(["orient", *c, str(cloud), *models, "--tta-k", "0", "--out",
                 str(tmp_path / "o")]) == 0
    result = json.loads((tmp_path / "o" / "result.json").read_text())
    assert "candidates" not in result and len(result["estimate"]["composed"]) == 9


def test_orient_corrupt_obj(run, tmp_path):
    _, c, models = run
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 zz\n")
    assert main(["orient", *c, str(bad), *models, "--out", str(tmp_path / "o")]) == 2
    assert main(["orient", *c, str(tmp_path / "missing.obj"), *models,
                 "--out", str(tmp_path / "o")]) == 2


def test_orient_aps_needs_calibration(run, tmp_path):
    root, c, models = run
    cloud = root / "data" / "clouds" / "test-box-000.xyz"
    assert main(["orient", *c, str(cloud), *models, "--aps", "--out", str(tmp_path / "o")]) == 3


def test_calibration_tied_to_models(run, tmp_path):
    root, c, _ = run
    swapped = ["--orienter", str(root / "orienter.json"), "--flipper", str(root / "orienter.json")]
    cloud = root / "data" / "clouds" / "test-box-000.xyz"
    code = main(["orient", *c, str(cloud), *swapped, "--calibration", str(root / "cal.json"),
                 "--aps", "--out", str(tmp_path / "o")])
    assert code in (2, 3)


def test_sweep_rows(run, tmp_path):
    root, c, _ = run
    for step, rows in (("1", 360), ("90", 4)):
        out = tmp_path / f"s{step}.csv"
        assert main(["sweep", *c, "--orienter", str(root / "orienter.json"), "--step", step,
                     "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "angle_deg,quotient_loss,consecutive_chamfer"
        assert len(lines) == rows + 1
        assert np.all(np.isfinite(np.loadtxt(out, delimiter=",", skiprows=1)))
    assert main(["sweep", *c, "--orienter", str(root / "orienter.json"), "--step", "7",
                 "--out", str(tmp_path / "bad.csv")]) == 2


def test_flips_file(tmp_path):
    assert main(["flips", "--out", str(tmp_path / "flips.txt")]) == 0
    assert "7e571526ef1e254f" in (tmp_path / "flips.txt").read_text()
