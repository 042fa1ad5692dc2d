import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from dualfluoro import calibration as cal
from dualfluoro.cli import main, mm_to_pixels
from dualfluoro.geometry import load_system
from dualfluoro.landmarks import load_landmarks
from dualfluoro.registration import format_view_table, synthesize_predictions

from .helpers import PolyWarp, bead_grid

COMMANDS = ["render", "forge", "calib-distortion", "calib-pose", "register", "evaluate"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ph")
    assert main(["phantom", str(root), "--frames", "12", "--noise", "0.3"]) == 0
    return root


def config(ws, name):
    return str(ws / f"{name.replace('-', '_')}.json")


def out_files(path: Path):
    return {p.relative_to(path): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def edit_config(ws, name, new_name, **changes):
    cfg = json.loads((ws / f"{name}.json").read_text())
    cfg.update(changes)
    (ws / f"{new_name}.json").write_text(json.dumps(cfg))
    return str(ws / f"{new_name}.json")


def test_every_subcommand_runs(workspace):
    for name in COMMANDS:
        assert main([name, config(workspace, name)]) == 0, name
    for sub in ("out_render", "out_forge", "out_distortion", "out_calib", "out_register", "out_evaluate"):
        assert any((workspace / sub).iterdir())


def test_outputs_embed_hash_and_seed(workspace):
    for name in COMMANDS:
        main([name, config(workspace, name)])
    for sub in ("out_render", "out_forge", "out_distortion", "out_calib", "out_register", "out_evaluate"):
        for rel, data in out_files(workspace / sub).items():
            if rel.suffix == ".json":
                doc = json.loads(data)
                assert "config_sha256" in doc and "seed" in doc, rel
            else:
                assert b"config_sha256=" in data and b"seed=" in data, rel


def test_reruns_are_byte_identical(workspace):
    outs = {"render": "out_render", "forge": "out_forge", "calib-distortion": "out_distortion",
            "calib-pose": "out_calib",
            "register": "out_register", "evaluate": "out_evaluate"}
    for name, sub in outs.items():
        assert main([name, config(workspace, name)]) == 0
        first = out_files(workspace / sub)
        shutil.rmtree(workspace / sub)
        assert main([name, config(workspace, name)]) == 0
        assert out_files(workspace / sub) == first, name


def test_register_batch(workspace):
    assert main(["register", config(workspace, "register")]) == 0
    res = json.loads((workspace / "out_register" / "results.json").read_text())
    assert len(res["frames"]) == 12 and res["failures"] == []
    for rec in res["frames"]:
        assert rec["variant"] == "none" and rec["eps_theta_deg"] < 1 and rec["eps_tau_mm"] < 2
    summary = (workspace / "out_register" / "summary.txt").read_text()
    assert "synthetic 12 " in summary and "±" in summary
    assert len(list((workspace / "out_register" / "overlays").glob("*.png"))) == 24


def test_failed_frame_is_isolated(workspace):
    cfg = json.loads((workspace / "register.json").read_text())
    lines = (workspace / "pred" / "frame03_f1.txt").read_text().splitlines()
    kept = [ln for ln in lines if ln.startswith("#")] + [ln for ln in lines if not ln.startswith("#")][:2]
    (workspace / "pred" / "few_f1.txt").write_text("\n".join(kept) + "\n")
    cfg["frames"][3] = dict(cfg["frames"][3], f1="pred/few_f1.txt")
    cfg["frames"][5] = dict(cfg["frames"][5], f2="pred/missing.txt")
    cfg["output_dir"] = "out_register_fail"
    cfg["overlays"] = False
    (workspace / "register_fail.json").write_text(json.dumps(cfg))
    assert main(["register", str(workspace / "register_fail.json")]) == 2
    res = json.loads((workspace / "out_register_fail" / "results.json").read_text())
    assert res["failures"] == ["frame03", "frame05"]
    assert "TooFewLandmarks" in res["frames"][3]["error"]
    ok = json.loads((workspace / "out_register" / "results.json").read_text())
    for a, b in zip(res["frames"], ok["frames"]):
        if a["status"] == "ok":
            assert a["theta_deg"] == b["theta_deg"] and a["tau_mm"] == b["tau_mm"]
    assert "# failures: 2 frame03 frame05" in (workspace / "out_register_fail" / "summary.txt").read_text()


def test_frame_order_does_not_change_results(workspace):
    cfg = json.loads((workspace / "register.json").read_text())
    cfg["frames"] = cfg["frames"][::-1]
    cfg["output_dir"] = "out_register_rev"
    cfg["overlays"] = False
    (workspace / "register_rev.json").write_text(json.dumps(cfg))
    main(["register", config(workspace, "register")])
    assert main(["register", str(workspace / "register_rev.json")]) == 0
    fwd = {r["id"]: r for r in json.loads((workspace / "out_register" / "results.json").read_text())["frames"]}
    rev = {r["id"]: r for r in json.loads((workspace / "out_register_rev" / "results.json").read_text())["frames"]}
    assert fwd == rev


def test_pixel_predictions_with_distortion(workspace, tmp_path):
    system = load_system(workspace / "system.txt")
    lms = load_landmarks(workspace / "landmarks.txt")
    from dualfluoro.cli import load_pose_table
    truth = load_pose_table(workspace / "ground_truth.txt")["frame00"]
    warp = PolyWarp(seed=4, amplitude=3.0, scale=250.0)
    ideal = bead_grid(20, 23.5)
    model = cal.fit_distortion(cal.BeadGrid(ideal, warp.observe(ideal)))
    frame = {"id": "frame00", "units": "px"}
    for view, vp in zip(("f1", "f2"), synthesize_predictions(lms, truth, system).views):
        geom = getattr(system, view)
        px = mm_to_pixels(warp.observe(vp.uv), geom)
        (tmp_path / f"{view}.txt").write_text(format_view_table(px, vp.visible, columns="index x_px y_px visible"))
        cal.save_distortion_model(model, tmp_path / f"dist_{view}.txt")
        frame.update({view: f"{view}.txt", f"distortion_{view}": f"dist_{view}.txt"})
    shutil.copy(workspace / "system.txt", tmp_path)
    shutil.copy(workspace / "landmarks.txt", tmp_path)
    shutil.copy(workspace / "ground_truth.txt", tmp_path)
    (tmp_path / "reg.json").write_text(json.dumps({
        "system": "system.txt", "landmarks": "landmarks.txt", "ground_truth": "ground_truth.txt",
        "frames": [frame], "output_dir": "out"}))
    assert main(["register", str(tmp_path / "reg.json")]) == 0
    rec = json.loads((tmp_path / "out" / "results.json").read_text())["frames"][0]
    assert rec["eps_theta_deg"] < 1e-3 and rec["eps_tau_mm"] < 1e-3


def test_calib_distortion_from_image(tmp_path):
    pitch = 0.5
    ideal = bead_grid(8, 12.0)
    shape = (200, 200)
    px = ideal / pitch + (np.array(shape[::-1]) - 1) / 2
    img = cal.render_bead_image(shape, px + 0.2).round().clip(0, 255).astype(np.uint8)
    from dualfluoro.imageio import write_image
    write_image(tmp_path / "plate.pgm", img)
    (tmp_path / "ideal.txt").write_text(cal.format_bead_table(ideal))
    (tmp_path / "c.json").write_text(json.dumps({
        "ideal": "ideal.txt", "image": "plate.pgm", "pixel_pitch": pitch, "threshold": 60,
        "min_area": 3, "output_dir": "out"}))
    assert main(["calib-distortion", str(tmp_path / "c.json")]) == 0
    model = cal.load_distortion_model(tmp_path / "out" / "distortion.txt")
    observed = ideal + 0.2 * pitch
    assert np.sqrt(np.mean((model(observed) - ideal) ** 2)) < 0.02


def test_evaluate_with_similarity_audit(workspace, tmp_path):
    main(["register", config(workspace, "register")])
    from dualfluoro.imageio import write_image
    rng = np.random.default_rng(0)
    a = (rng.random((32, 32)) * 255).astype(np.uint8)
    for name in ("rx", "fd", "rd", "fx"):
        write_image(workspace / f"{name}.png", a)
    path = edit_config(workspace, "evaluate", "evaluate_sim", output_dir="out_eval_sim",
                       similarity=[{"id": "s0", "real_x": "rx.png", "fake_drr": "fd.png",
                                    "real_drr": "rd.png", "fake_x": "fx.png"}])
    assert main(["evaluate", path]) == 0
    doc = json.loads((workspace / "out_eval_sim" / "evaluate.json").read_text())
    assert doc["similarity"][0]["l_cp"] == pytest.approx(0, abs=1e-12)
    assert doc["scenarios"][0]["n"] == 12
    report = (workspace / "out_eval_sim" / "report.txt").read_text()
    assert report.count("frame") >= 12 and "±" in report


def test_missing_volume_writes_nothing(workspace):
    path = edit_config(workspace, "render", "render_missing", volume="nope.hdr", output_dir="out_missing")
    assert main(["render", path]) == 2
    assert not (workspace / "out_missing").exists()


def test_usage_errors(workspace, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    path = edit_config(workspace, "register", "register_nokey", output_dir="out_nokey")
    cfg = json.loads(Path(path).read_text())
    del cfg["frames"]
    Path(path).write_text(json.dumps(cfg))
    assert main(["register", path]) == 1
    (workspace / "broken.json").write_text("{not json")
    assert main(["render", str(workspace / "broken.json")]) == 1


def test_numerical_failure_exit_code(workspace):
    path = edit_config(workspace, "calib_pose", "calib_pose_short", max_iter=2, output_dir="out_short")
    assert main(["calib-pose", path]) == 3
    assert not (workspace / "out_short").exists()


def test_calib_pose_recovers_system(workspace):
    assert main(["calib-pose", config(workspace, "calib-pose")]) == 0
    truth = load_system(workspace / "system.txt")
    got = load_system(workspace / "out_calib" / "system.txt")
    np.testing.assert_allclose(got.f2.source, truth.f2.source, atol=1e-6)
    doc = json.loads((workspace / "out_calib" / "calib_pose.json").read_text())
    assert doc["rms_mm"] <= 1e-6
