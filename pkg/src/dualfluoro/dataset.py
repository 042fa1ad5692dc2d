"""Randomised DRR / landmark / mask datasets for external landmark detectors.

Label contract
--------------
* images are 8-bit, intensities normalised for learning by ``x / 127.5 - 1``
  (evaluated as ``(x - 127.5) / 127.5`` so every 8-bit value round-trips exactly);
* landmark pixel coordinates (1-based, pixel centers) are normalised per axis
  so that 1 maps to -1 and the image size maps to +1;
* labels flatten to ``[u0, v0, u1, v1, ...]`` (66 values for 33 landmarks),
  with a separate per-landmark visibility flag.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .drr import CtVolume, RenderParams, centered_view, render_drr
from .errors import OutOfRange, WrongCount
from .geometry import RigidPose
from .imageio import write_image
from .landmarks import N_SKULL_LANDMARKS, LandmarkSet3D

Range = tuple[float, float]


@dataclass(frozen=True)
class SampleSpec:
    """Uniform sampling ranges for the random view of each sample.

    Rotations (deg) are about the volume center; translations (mm) move the
    rotated volume on the rendering plane (the third component only shifts
    along the beam and has no visible effect); ``scale`` > 1 magnifies.
    """

    rotation_ranges: tuple[Range, Range, Range] = ((-30.0, 30.0),) * 3
    translation_ranges: tuple[Range, Range, Range] = ((-20.0, 20.0), (-20.0, 20.0), (0.0, 0.0))
    scale_range: Range = (0.8, 1.2)
    segmented_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for lo, hi in (*self.rotation_ranges, *self.translation_ranges, self.scale_range):
            if lo > hi:
                raise ValueError(f"range ({lo}, {hi}) has lo > hi")
        if self.scale_range[0] <= 0:
            raise ValueError("scale must be positive")
        if not 0.0 <= self.segmented_fraction <= 1.0:
            raise ValueError("segmented_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class SampleRecord:
    index: int
    theta_deg: tuple[float, float, float]
    shift_mm: tuple[float, float, float]
    scale: float
    segmented: bool
    split: str
    files: dict = field(default_factory=dict)


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    seed: int
    config_sha256: str = ""

    @property
    def counts(self) -> dict[str, int]:
        return {
            "total": len(self.records),
            "train": sum(r.split == "train" for r in self.records),
            "test": sum(r.split == "test" for r in self.records),
            "segmented": sum(r.segmented for r in self.records),
        }

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "config_sha256": self.config_sha256,
            "counts": self.counts,
            "samples": [asdict(r) for r in self.records],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def sample_transform(spec: SampleSpec, rng: np.random.Generator) -> tuple[RigidPose, float]:
    """Draw rotation, translation and scale; a degenerate range returns its bound exactly."""
    theta = [rng.uniform(lo, hi) for lo, hi in spec.rotation_ranges]
    shift = [rng.uniform(lo, hi) for lo, hi in spec.translation_ranges]
    scale = rng.uniform(*spec.scale_range)
    return RigidPose(theta, shift), float(scale)


def _streams(seed: int, n: int) -> tuple[np.random.Generator, list[np.random.Generator]]:
    children = np.random.SeedSequence(seed).spawn(n + 1)
    return np.random.default_rng(children[0]), [np.random.default_rng(c) for c in children[1:]]


def plan_dataset(n: int, spec: SampleSpec, test_count: int = 0) -> list[SampleRecord]:
    """Decide every sample's transform, segmentation flag and split without rendering.

    Exactly ``round(n * segmented_fraction)`` samples are segmented and exactly
    ``test_count`` go to the test split; both subsets are drawn at random.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= test_count <= n:
        raise ValueError("test_count must lie in [0, n]")
    book, per_sample = _streams(spec.seed, n)
    n_seg = int(round(n * spec.segmented_fraction))
    segmented = np.zeros(n, dtype=bool)
    segmented[book.permutation(n)[:n_seg]] = True
    test = np.zeros(n, dtype=bool)
    test[book.permutation(n)[:test_count]] = True
    records = []
    for i, rng in enumerate(per_sample):
        pose, scale = sample_transform(spec, rng)
        records.append(SampleRecord(i, pose.theta, pose.tau, scale, bool(segmented[i]),
                                    "test" if test[i] else "train"))
    return records


def sample_params(volume: CtVolume, base: RenderParams, record: SampleRecord) -> RenderParams:
    view = centered_view(record.theta_deg, record.shift_mm, volume.center)
    return replace(base, view=view, scale=base.scale / record.scale)


# ---------------------------------------------------------------- normalisation

def normalize_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if img.size and (img.min() < 0 or img.max() > 255):
        raise OutOfRange("image intensities must lie in [0, 255]")
    return (img - 127.5) / 127.5


def denormalize_image(norm) -> np.ndarray:
    return np.asarray(norm, dtype=float) * 127.5 + 127.5


def normalize_landmarks(coords, w: int, h: int, check: bool = True) -> np.ndarray:
    """Map pixel coordinates in ``[1, w] x [1, h]`` to ``[-1, 1]²``."""
    c = np.asarray(coords, dtype=float)
    if check and c.size and (c[..., 0].min() < 1 or c[..., 0].max() > w
                             or c[..., 1].min() < 1 or c[..., 1].max() > h):
        raise OutOfRange(f"landmark coordinates must lie in [1, {w}] x [1, {h}]")
    mid, half = _landmark_affine(w, h)
    return (c - mid) / half


def denormalize_landmarks(norm, w: int, h: int) -> np.ndarray:
    mid, half = _landmark_affine(w, h)
    return np.asarray(norm, dtype=float) * half + mid


def _landmark_affine(w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    # 2 (x - 1) / (n - 1) - 1 written about the midpoint; integer pixels round-trip exactly
    size = np.array([w, h], dtype=float)
    return (size + 1.0) / 2.0, (size - 1.0) / 2.0


def flatten_labels(landmarks2d, n_expected: int = N_SKULL_LANDMARKS) -> np.ndarray:
    """``(n, 2)`` → ``[u0, v0, u1, v1, ...]``."""
    arr = np.asarray(landmarks2d, dtype=float)
    if arr.shape != (n_expected, 2):
        raise WrongCount(f"expected {n_expected} landmarks of 2 coordinates, got shape {arr.shape}")
    return arr.reshape(-1).copy()


def unflatten_labels(vector, n_expected: int = N_SKULL_LANDMARKS) -> np.ndarray:
    vec = np.asarray(vector, dtype=float)
    if vec.shape != (2 * n_expected,):
        raise WrongCount(f"expected {2 * n_expected} values, got shape {vec.shape}")
    return vec.reshape(n_expected, 2).copy()


# ---------------------------------------------------------------- generation

def _label_table(uv: np.ndarray, visible: np.ndarray, header: Sequence[str], columns: str) -> str:
    lines = [f"# {h}" for h in header] + [f"# {columns}"]
    lines += [f"{i} {u!r} {v!r} {int(f)}" for i, ((u, v), f) in enumerate(zip(uv.tolist(), visible))]
    return "\n".join(lines) + "\n"


def config_digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def generate_dataset(volume: CtVolume, landmarks: LandmarkSet3D, spec: SampleSpec, n: int,
                     out_dir: str | Path, base: RenderParams | None = None, test_count: int = 0,
                     image_format: str = "pgm", config_sha256: str | None = None) -> DatasetManifest:
    """Render ``n`` samples into ``out_dir`` and write ``manifest.json``.

    Layout: ``images/``, ``masks/`` (when the volume is labelled),
    ``labels_px/`` and ``labels_norm/`` per sample, plus
    ``train_labels.txt`` / ``test_labels.txt`` holding one flattened,
    normalised label vector and its visibility flags per line.
    """
    base = base or RenderParams()
    out = Path(out_dir)
    if config_sha256 is None:
        config_sha256 = config_digest({"spec": asdict(spec), "n": n, "test_count": test_count,
                                       "base": repr(base), "dims": volume.dims})
    header = [f"config_sha256={config_sha256} seed={spec.seed}"]
    for sub in ("images", "labels_px", "labels_norm") + (("masks",) if volume.skull_label is not None else ()):
        (out / sub).mkdir(parents=True, exist_ok=True)
    w, h = base.out_dims
    records = []
    flat_rows: dict[str, list[str]] = {"train": [], "test": []}
    for rec in plan_dataset(n, spec, test_count):
        params = sample_params(volume, base, rec)
        drr = render_drr(volume, params, landmarks, with_mask=volume.skull_label is not None)
        image = drr.image
        if rec.segmented:
            if drr.mask is None:
                raise ValueError("segmented samples need a skull-labelled volume")
            image = np.where(drr.mask, image, 0.0)
        stem = f"{rec.index:05d}"
        files = {"image": f"images/{stem}.{image_format}",
                 "labels_px": f"labels_px/{stem}.txt", "labels_norm": f"labels_norm/{stem}.txt"}
        write_image(out / files["image"], np.rint(image).astype(np.uint8), header)
        if drr.mask is not None:
            files["mask"] = f"masks/{stem}.{image_format}"
            write_image(out / files["mask"], drr.mask.astype(np.uint8) * 255, header)
        norm = normalize_landmarks(drr.landmarks2d, w, h, check=False)
        (out / files["labels_px"]).write_text(
            _label_table(drr.landmarks2d, drr.visible, header, "index u_px v_px visible"))
        (out / files["labels_norm"]).write_text(
            _label_table(norm, drr.visible, header, "index u_norm v_norm visible"))
        flat = flatten_labels(norm, len(landmarks))
        flat_rows[rec.split].append(
            stem + " " + " ".join(repr(v) for v in flat.tolist()) + " "
            + " ".join(str(int(f)) for f in drr.visible))
        records.append(replace(rec, files=files))
    for split, rows in flat_rows.items():
        cols = f"# sample u0 v0 ... u{len(landmarks) - 1} v{len(landmarks) - 1} visible0 ..."
        (out / f"{split}_labels.txt").write_text("\n".join([f"# {header[0]}", cols] + rows) + "\n")
    manifest = DatasetManifest(records, spec.seed, config_sha256)
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest

