"""Batch command-line front end.

Every subcommand takes one JSON config file (see README for the schema)::

    dualfluoro render config.json
    dualfluoro forge config.json
    dualfluoro calib-distortion config.json
    dualfluoro calib-pose config.json
    dualfluoro register config.json
    dualfluoro evaluate config.json
    dualfluoro phantom OUT_DIR        # writes a synthetic input set

Relative paths in a config resolve against the config file's directory.
Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import calibration as calib
from . import dataset, metrics, phantom
from .drr import CtVolume, RenderParams, centered_view, load_volume, render_drr, save_volume
from .errors import (DegenerateRay, DualFluoroError, NonConvergence, ParseError, RankDeficient)
from .geometry import (DualFluoroSystem, FluoroscopeGeometry, RigidPose, load_system,
                       project_points, save_system)
from .imageio import read_image, write_image
from .landmarks import LandmarkSet3D, load_landmarks, save_landmarks
from .registration import (PredictedLandmarks, ViewPrediction, format_view_table, mirror_landmarks,
                           parse_view_table,
                           register, synthesize_predictions)

log = logging.getLogger("dualfluoro")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (NonConvergence, RankDeficient, DegenerateRay)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config plumbing

class Config:
    """Loaded JSON config with path resolution and a content hash."""

    def __init__(self, path: Path):
        self.path = path
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise ParseError(f"cannot read config {path}: {exc}") from None
        try:
            self.data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(self.data, dict):
            raise UsageError("config must be a JSON object")
        self.sha256 = hashlib.sha256(json.dumps(self.data, sort_keys=True).encode()).hexdigest()
        self.seed = int(self.data.get("seed", 0))

    def get(self, key, default=None):
        return self.data.get(key, default)

    def require(self, key):
        if key not in self.data:
            raise UsageError(f"config is missing required key {key!r}")
        return self.data[key]

    def resolve(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.path.parent / p

    def input_path(self, key, required=True) -> Path | None:
        value = self.require(key) if required else self.data.get(key)
        if value is None:
            return None
        p = self.resolve(value)
        if not p.exists():
            raise ParseError(f"{key}: file {p} does not exist")
        return p

    def output_dir(self) -> Path:
        return self.resolve(self.data.get("output_dir", "out"))

    @property
    def header(self) -> list[str]:
        return [f"config_sha256={self.sha256} seed={self.seed}"]

    def stamp(self, record: dict) -> dict:
        return {"config_sha256": self.sha256, "seed": self.seed, **record}


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _pose_from(obj) -> RigidPose:
    return RigidPose(obj.get("theta_deg", (0, 0, 0)), obj.get("tau_mm", (0, 0, 0)))


def _render_params(cfg: Config, volume: CtVolume) -> RenderParams:
    out_dims = tuple(cfg.get("out_dims", (128, 128)))
    window = tuple(cfg.get("window", (0.0, 1.0)))
    scale = float(cfg.get("scale", 1.0))
    if "view" in cfg.data:
        view = _pose_from(cfg.get("view"))
    else:
        about = cfg.get("view_about_center", {})
        view = centered_view(about.get("theta_deg", (0, 0, 0)), about.get("shift_mm", (0, 0, 0)),
                             volume.center)
    return RenderParams(view=view, out_dims=out_dims, intensity_window=window, scale=scale)


# ---------------------------------------------------------------- pose tables

def load_pose_table(path: Path) -> dict[str, RigidPose]:
    """``frame_id θx θy θz τx τy τz`` per line."""
    poses = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) != 7:
                raise ValueError("expected 7 columns")
            vals = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise ParseError(f"{path} line {lineno}: {exc}") from None
        poses[parts[0]] = RigidPose(vals[:3], vals[3:])
    return poses


def format_pose_table(poses: dict[str, RigidPose], header=()) -> str:
    lines = [f"# {h}" for h in header] + ["# frame theta_x theta_y theta_z tau_x tau_y tau_z (deg, mm)"]
    for name, p in poses.items():
        lines.append(name + " " + " ".join(repr(v) for v in p.theta + p.tau))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- intensifier pixels

def pixels_to_mm(xy, geom: FluoroscopeGeometry) -> np.ndarray:
    """0-based intensifier image pixels (x=col, y=row) → intensifier mm about the center."""
    xy = np.asarray(xy, dtype=float)
    return np.column_stack([(xy[:, 0] + 0.5) * geom.pixel_pitch - geom.half_width,
                            (xy[:, 1] + 0.5) * geom.pixel_pitch - geom.half_height])


def mm_to_pixels(uv, geom: FluoroscopeGeometry) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    return np.column_stack([(uv[:, 0] + geom.half_width) / geom.pixel_pitch - 0.5,
                            (uv[:, 1] + geom.half_height) / geom.pixel_pitch - 0.5])


def image_pixels_to_mm(xy, shape, pitch: float) -> np.ndarray:
    h, w = shape
    xy = np.asarray(xy, dtype=float)
    return np.column_stack([(xy[:, 0] + 0.5) * pitch - 0.5 * w * pitch,
                            (xy[:, 1] + 0.5) * pitch - 0.5 * h * pitch])


# ---------------------------------------------------------------- subcommands

def cmd_render(cfg: Config) -> int:
    volume = load_volume(cfg.input_path("volume"))
    lms_path = cfg.input_path("landmarks", required=False)
    landmarks = load_landmarks(lms_path) if lms_path else None
    params = _render_params(cfg, volume)
    with_mask = bool(cfg.get("mask", volume.skull_label is not None))
    drr = render_drr(volume, params, landmarks, with_mask=with_mask)
    fmt = cfg.get("format", "pgm")
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    write_image(out / f"drr.{fmt}", np.rint(drr.image).astype(np.uint8), cfg.header)
    files = {"image": f"drr.{fmt}"}
    if drr.mask is not None:
        write_image(out / f"mask.{fmt}", drr.mask.astype(np.uint8) * 255, cfg.header)
        files["mask"] = f"mask.{fmt}"
    if landmarks is not None:
        (out / "landmarks.txt").write_text(format_view_table(
            drr.landmarks2d, drr.visible, cfg.header, columns="index u_px v_px visible"))
        files["landmarks"] = "landmarks.txt"
    _dump_json(out / "render.json", cfg.stamp({
        "files": files,
        "view": {"theta_deg": list(params.view.theta), "tau_mm": list(params.view.tau)},
        "out_dims": list(params.out_dims), "window": list(params.intensity_window),
        "scale": params.scale,
    }))
    return EXIT_OK


def cmd_forge(cfg: Config) -> int:
    volume = load_volume(cfg.input_path("volume"))
    landmarks = load_landmarks(cfg.input_path("landmarks"))
    defaults = dataset.SampleSpec()
    spec = dataset.SampleSpec(
        rotation_ranges=tuple(tuple(r) for r in cfg.get("rotation_ranges", defaults.rotation_ranges)),
        translation_ranges=tuple(tuple(r) for r in cfg.get("translation_ranges", defaults.translation_ranges)),
        scale_range=tuple(cfg.get("scale_range", defaults.scale_range)),
        segmented_fraction=float(cfg.get("segmented_fraction", 0.0)),
        seed=cfg.seed,
    )
    base = RenderParams(out_dims=tuple(cfg.get("out_dims", (128, 128))),
                        intensity_window=tuple(cfg.get("window", (0.0, 1.0))),
                        scale=float(cfg.get("scale", 1.0)))
    manifest = dataset.generate_dataset(
        volume, landmarks, spec, int(cfg.require("n")), cfg.output_dir(), base,
        test_count=int(cfg.get("test_count", 0)), image_format=cfg.get("format", "pgm"),
        config_sha256=cfg.sha256)
    log.info("forged %s", manifest.counts)
    return EXIT_OK


def cmd_calib_distortion(cfg: Config) -> int:
    ideal = calib.parse_bead_table(cfg.input_path("ideal").read_text())
    if "observed" in cfg.data:
        observed = calib.parse_bead_table(cfg.input_path("observed").read_text())
    else:
        img = read_image(cfg.input_path("image"))
        pitch = float(cfg.require("pixel_pitch"))
        h, w = img.shape
        ideal_px = np.column_stack([(ideal[:, 0] + 0.5 * w * pitch) / pitch - 0.5,
                                    (ideal[:, 1] + 0.5 * h * pitch) / pitch - 0.5])
        xy = calib.detect_beads(img, float(cfg.require("threshold")), int(cfg.get("min_area", 1)),
                                cfg.get("max_area"), expected=len(ideal), ideal=ideal_px)
        observed = image_pixels_to_mm(xy, img.shape, pitch)
    model = calib.fit_distortion(calib.BeadGrid(ideal, observed))
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    calib.save_distortion_model(model, out / cfg.get("model_name", "distortion.txt"), cfg.header)
    _dump_json(out / "calib_distortion.json", cfg.stamp({"rms_mm": model.rms, "n_beads": len(ideal)}))
    return EXIT_OK


def cmd_calib_pose(cfg: Config) -> int:
    initial = load_system(cfg.input_path("system"))
    tool = calib.parse_tool(cfg.input_path("tool").read_text())
    tool_init = _pose_from(cfg.get("tool_init")) if cfg.get("tool_init") else None
    res = calib.calibrate_dual_pose(tool, initial, tool_init=tool_init,
                                    max_iter=int(cfg.get("max_iter", 500)))
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    save_system(res.system, out / "system.txt", cfg.header)
    _dump_json(out / "calib_pose.json", cfg.stamp({
        "rms_mm": res.rms,
        "bead_errors_mm": {"f1": res.bead_errors[0].tolist(), "f2": res.bead_errors[1].tolist()},
        "f2_pose": {"theta_deg": list(res.f2_pose.theta), "tau_mm": list(res.f2_pose.tau)},
        "tool_pose": {"theta_deg": list(res.tool_pose.theta), "tau_mm": list(res.tool_pose.tau)},
        "iterations": res.iterations,
    }))
    return EXIT_OK


def _load_view(cfg: Config, frame: dict, view: str, geom: FluoroscopeGeometry,
               n_landmarks: int) -> ViewPrediction:
    path = cfg.resolve(frame[view])
    if not path.exists():
        raise ParseError(f"prediction file {path} does not exist")
    uv, vis = parse_view_table(path.read_text(), n_landmarks)
    if frame.get("units", "mm") == "px":
        uv = pixels_to_mm(uv, geom)
    model_key = f"distortion_{view}"
    if frame.get(model_key):
        model = calib.load_distortion_model(cfg.resolve(frame[model_key]))
        ok = np.all(np.isfinite(uv), axis=1)
        corrected = uv.copy()
        corrected[ok] = model(uv[ok])
        uv = corrected
    return ViewPrediction(uv, vis)


def draw_overlay(geom: FluoroscopeGeometry, background: np.ndarray | None,
                 projected: np.ndarray, predicted: ViewPrediction,
                 manual: np.ndarray | None) -> np.ndarray:
    """RGB overlay: projected model (green circles), predictions (red crosses), manual (blue squares)."""
    w = int(round(2 * geom.half_width / geom.pixel_pitch))
    h = int(round(2 * geom.half_height / geom.pixel_pitch))
    if background is None:
        base = Image.new("RGB", (w, h), (0, 0, 0))
    else:
        base = Image.fromarray(np.clip(background, 0, 255).astype(np.uint8)).convert("RGB")
    draw = ImageDraw.Draw(base)
    r = max(3, min(w, h) // 150)
    for x, y in mm_to_pixels(projected, geom):
        draw.ellipse((x - r, y - r, x + r, y + r), outline=(0, 255, 0))
    pts = mm_to_pixels(predicted.uv[predicted.visible], geom)
    for x, y in pts:
        draw.line((x - r, y - r, x + r, y + r), fill=(255, 0, 0))
        draw.line((x - r, y + r, x + r, y - r), fill=(255, 0, 0))
    if manual is not None:
        for x, y in mm_to_pixels(manual, geom):
            draw.rectangle((x - r, y - r, x + r, y + r), outline=(0, 128, 255))
    return np.asarray(base)


def _project_all(geom, pose: RigidPose, landmarks: LandmarkSet3D) -> np.ndarray:
    return project_points(geom, pose.apply(landmarks.points))[0]


def cmd_register(cfg: Config) -> int:
    system = load_system(cfg.input_path("system"))
    landmarks = load_landmarks(cfg.input_path("landmarks"))
    gt_path = cfg.input_path("ground_truth", required=False)
    truth = load_pose_table(gt_path) if gt_path else {}
    frames = cfg.require("frames")
    if not isinstance(frames, list) or not frames:
        raise UsageError("frames must be a non-empty list")
    method = cfg.get("method", "simplex")
    overlays = bool(cfg.get("overlays", False))

    records, failures, overlay_images = [], [], {}
    for frame in frames:
        fid = str(frame.get("id", f"frame{len(records):03d}"))
        scenario = str(frame.get("scenario", "default"))
        rec = {"id": fid, "scenario": scenario}
        try:
            pred = PredictedLandmarks(_load_view(cfg, frame, "f1", system.f1, len(landmarks)),
                                      _load_view(cfg, frame, "f2", system.f2, len(landmarks)))
            res = register(landmarks, pred, system, method=method)
        except (DualFluoroError, ValueError) as exc:
            rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            failures.append(fid)
            records.append(rec)
            continue
        rec.update(status="ok", n_vis=pred.n_vis, **res.to_record())
        if fid in truth:
            e = metrics.dof_errors(truth[fid], res.pose)
            rec.update(eps_theta_deg=e.eps_theta, eps_tau_mm=e.eps_tau)
        records.append(rec)
        if overlays:
            for k, (view, geom) in enumerate(zip(("f1", "f2"), system.views)):
                bg_key = f"image_{view}"
                bg = read_image(cfg.resolve(frame[bg_key])) if frame.get(bg_key) else None
                manual = _project_all(geom, truth[fid], landmarks) if fid in truth else None
                mirrored = res.variant.mirrors[k]
                shown = pred.views[k]
                if mirrored:
                    shown = mirror_landmarks(pred, landmarks.symmetric_pairs, res.variant).views[k]
                overlay_images[f"{fid}_{view}.png"] = draw_overlay(
                    geom, bg, _project_all(geom, res.pose, landmarks), shown, manual)

    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "results.json", cfg.stamp({"frames": records, "failures": failures}))
    lines = [f"# {cfg.header[0]}", "# frame scenario status variant objective_mm n_vis"]
    for rec in records:
        if rec["status"] == "ok":
            lines.append(f"{rec['id']} {rec['scenario']} ok {rec['variant']} "
                         f"{rec['objective_mm']:.6g} {rec['n_vis']}")
        else:
            lines.append(f"{rec['id']} {rec['scenario']} failed - - -")
    if truth:
        groups: dict[str, list] = {}
        for rec in records:
            if "eps_theta_deg" in rec:
                groups.setdefault(rec["scenario"], []).append(
                    metrics.DofErrors(rec["eps_theta_deg"], rec["eps_tau_mm"]))
        lines.append("# scenario n eps_theta_deg(mean±sd) eps_tau_mm(mean±sd)")
        for s in metrics.summarize(groups):
            lines.append(f"{s.scenario} {s.n} {s.eps_theta_mean:.4f}±{s.eps_theta_sd:.4f} "
                         f"{s.eps_tau_mean:.4f}±{s.eps_tau_sd:.4f}")
    lines.append(f"# failures: {len(failures)}" + (" " + " ".join(failures) if failures else ""))
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    if overlay_images:
        (out / "overlays").mkdir(exist_ok=True)
        for name, img in overlay_images.items():
            write_image(out / "overlays" / name, img, cfg.header)
    return EXIT_DATA if failures else EXIT_OK


def cmd_evaluate(cfg: Config) -> int:
    results = json.loads(cfg.input_path("results").read_text())
    truth = load_pose_table(cfg.input_path("ground_truth"))
    rows, groups = [], {}
    for rec in results.get("frames", []):
        if rec.get("status") != "ok" or rec["id"] not in truth:
            continue
        e = metrics.dof_errors(truth[rec["id"]], RigidPose(rec["theta_deg"], rec["tau_mm"]))
        rows.append((rec["id"], rec["scenario"], e))
        groups.setdefault(rec["scenario"], []).append(e)
    summaries = metrics.summarize(groups)
    similarity = []
    for item in cfg.get("similarity", []):
        imgs = [read_image(cfg.resolve(item[k])) for k in ("real_x", "fake_drr", "real_drr", "fake_x")]
        rep = metrics.similarity_report(*imgs)
        similarity.append({"id": item.get("id", str(len(similarity))), "phi_raw": list(rep.phi_raw),
                           "phi": list(rep.phi), "l_cp": rep.l_cp})
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(f"# {cfg.header[0]}\n" + metrics.format_report(rows, summaries))
    _dump_json(out / "evaluate.json", cfg.stamp({
        "frames": [{"id": f, "scenario": s, "eps_theta_deg": e.eps_theta, "eps_tau_mm": e.eps_tau}
                   for f, s, e in rows],
        "scenarios": [asdict(s) for s in summaries],
        "similarity": similarity,
    }))
    return EXIT_OK


def cmd_phantom(out: Path, seed: int, frames: int, noise: float) -> int:
    """Write a synthetic input set and ready-to-run configs for every subcommand."""
    out.mkdir(parents=True, exist_ok=True)
    header = [f"synthetic phantom seed={seed}"]
    volume = phantom.skull_volume(64)
    save_volume(volume, out / "volume.hdr", slope=1e-3)
    lms = phantom.skull_landmarks()
    save_landmarks(lms, out / "landmarks.txt", header)
    system = phantom.dual_system()
    save_system(system, out / "system.txt", header)
    rng = np.random.default_rng(seed)

    truth = {}
    frame_cfg = []
    (out / "pred").mkdir(exist_ok=True)
    for i in range(frames):
        fid = f"frame{i:02d}"
        pose = phantom.random_pose(rng, system, lms)
        truth[fid] = pose
        pred = synthesize_predictions(lms, pose, system)
        for view, vp in zip(("f1", "f2"), pred.views):
            uv = vp.uv + rng.normal(0.0, noise, vp.uv.shape) if noise > 0 else vp.uv
            (out / "pred" / f"{fid}_{view}.txt").write_text(format_view_table(uv, vp.visible, header))
        frame_cfg.append({"id": fid, "scenario": "synthetic",
                          "f1": f"pred/{fid}_f1.txt", "f2": f"pred/{fid}_f2.txt"})
    (out / "ground_truth.txt").write_text(format_pose_table(truth, header))

    beads = np.array([[0.0, 0.0, 0.0], [60.0, 0.0, 0.0], [0.0, 45.0, 0.0], [10.0, 15.0, 70.0]])
    tool = calib.synthesize_tool(beads, RigidPose((15, -10, 25), (5, -8, 505)), system)
    (out / "tool.txt").write_text(calib.format_tool(tool, header))
    p2 = system.f2.pose()
    guess = DualFluoroSystem(system.f1, system.f2.with_pose(
        RigidPose(np.add(p2.theta, (6.0, 8.0, 0.0)), np.add(p2.tau, (30.0, 40.0, 0.0)))))
    save_system(guess, out / "system_guess.txt", header)

    xs = (np.arange(20) - 9.5) * 10.0
    ideal = np.array([(x, y) for y in xs for x in xs])
    r2 = (ideal ** 2).sum(axis=1, keepdims=True) / 100.0 ** 2
    observed = ideal * (1 + 0.02 * r2)
    (out / "beads_ideal.txt").write_text(calib.format_bead_table(ideal, header))
    (out / "beads_observed.txt").write_text(calib.format_bead_table(observed, header))

    configs = {
        "render.json": {"seed": seed, "volume": "volume.hdr", "landmarks": "landmarks.txt",
                        "view_about_center": {"theta_deg": [10, -20, 30], "shift_mm": [0, 0, 0]},
                        "out_dims": [128, 128], "window": [0, 60], "scale": 1.6,
                        "output_dir": "out_render"},
        "forge.json": {"seed": seed, "volume": "volume.hdr", "landmarks": "landmarks.txt", "n": 8,
                       "test_count": 2, "segmented_fraction": 0.25, "window": [0, 60], "scale": 1.6,
                       "output_dir": "out_forge"},
        "calib_distortion.json": {"seed": seed, "ideal": "beads_ideal.txt",
                                  "observed": "beads_observed.txt", "output_dir": "out_distortion"},
        "calib_pose.json": {"seed": seed, "system": "system_guess.txt", "tool": "tool.txt",
                            "output_dir": "out_calib"},
        "register.json": {"seed": seed, "system": "system.txt", "landmarks": "landmarks.txt",
                          "ground_truth": "ground_truth.txt", "frames": frame_cfg, "overlays": True,
                          "output_dir": "out_register"},
        "evaluate.json": {"seed": seed, "results": "out_register/results.json",
                          "ground_truth": "ground_truth.txt", "output_dir": "out_evaluate"},
    }
    for name, obj in configs.items():
        _dump_json(out / name, obj)
    return EXIT_OK


COMMANDS = {
    "render": cmd_render,
    "forge": cmd_forge,
    "calib-distortion": cmd_calib_distortion,
    "calib-pose": cmd_calib_pose,
    "register": cmd_register,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dualfluoro", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", type=Path, help="JSON config file")
    p = sub.add_parser("phantom", help="write a synthetic phantom input set")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.0, help="prediction noise SD (mm)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "phantom":
            return cmd_phantom(args.out_dir, args.seed, args.frames, args.noise)
        cfg = Config(args.config)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"dualfluoro: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"dualfluoro: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DualFluoroError, ValueError, KeyError, TypeError) as exc:
        print(f"dualfluoro: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
