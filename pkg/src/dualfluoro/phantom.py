"""Synthetic skull-like phantom used by tests, demos and the CLI ``--phantom`` mode.

The phantom is an ellipsoidal shell with a solid lump on one side (so the
volume is not left/right symmetric), 33 landmarks on the shell of which 26
form 13 mirror pairs across the model's x = 0 plane, and a dual fluoroscope
pair with a 60 degree (non-orthogonal) angle between beam axes.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .drr import CtVolume
from .geometry import DualFluoroSystem, FluoroscopeGeometry, RigidPose, rotation_matrix
from .landmarks import LandmarkSet3D

SHELL_RADII = (70.0, 85.0, 60.0)  # mm, model x (left-right), y, z

# (azimuth, elevation) in degrees for the right-hand member of each pair; the
# left member is the mirror image across x = 0.
_PAIR_DIRECTIONS = [
    (20, 35), (35, 10), (50, -20), (65, 40), (80, -5), (95, 25), (110, -35),
    (125, 15), (140, -10), (155, 45), (30, -50), (70, 60), (130, 55),
]
# Midline landmarks (x = 0): (angle in the y-z plane, radial scale).
_MIDLINE = [(0, 1.0), (50, 1.0), (100, 0.97), (150, 1.0), (200, 0.95), (250, 1.0), (310, 1.03)]
# Radial scale per pair so the point cloud is not a single ellipsoid surface.
_PAIR_SCALE = [1.0, 0.96, 1.02, 0.98, 1.0, 1.04, 0.95, 1.0, 0.97, 1.03, 0.99, 1.01, 0.96]


def skull_landmarks() -> LandmarkSet3D:
    """33 landmarks: indices 0-6 on the midline, then 13 (right, left) pairs."""
    ax, ay, az = SHELL_RADII
    pts = []
    names = []
    for k, (ang, s) in enumerate(_MIDLINE):
        a = np.radians(ang)
        pts.append((0.0, s * ay * np.cos(a), s * az * np.sin(a)))
        names.append(f"mid{k:02d}")
    pairs = []
    for k, ((azim, elev), s) in enumerate(zip(_PAIR_DIRECTIONS, _PAIR_SCALE)):
        a, e = np.radians(azim), np.radians(elev)
        p = s * np.array([ax * np.sin(a) * np.cos(e), ay * np.cos(a) * np.cos(e), az * np.sin(e)])
        i = len(pts)
        pts.append(tuple(p))
        pts.append((-p[0], p[1], p[2]))
        names += [f"r{k:02d}", f"l{k:02d}"]
        pairs.append((i, i + 1))
    return LandmarkSet3D(np.array(pts), tuple(pairs), tuple(names))


def skull_volume(n: int = 64, spacing: float | None = None, thickness: float = 6.0,
                 density: float = 1.0) -> CtVolume:
    """Ellipsoidal shell volume centered on the model origin, with a lump at +x.

    Voxels inside the shell or lump get ``density`` and are skull-labelled;
    the soft interior gets a fifth of that and no label.
    """
    if spacing is None:
        spacing = 2.0 * (max(SHELL_RADII) + 12.0) / n
    idx = (np.arange(n) - (n - 1) / 2.0) * spacing
    x, y, z = np.meshgrid(idx, idx, idx, indexing="ij")
    ax, ay, az = SHELL_RADII
    r = np.sqrt((x / ax) ** 2 + (y / ay) ** 2 + (z / az) ** 2)
    mean_radius = (ax + ay + az) / 3.0
    half = 0.5 * thickness / mean_radius
    shell = np.abs(r - 1.0) <= half
    lump = (x - 0.75 * ax) ** 2 + (y - 0.3 * ay) ** 2 + (z + 0.45 * az) ** 2 <= 14.0 ** 2
    inside = r < 1.0 - half
    label = shell | lump
    values = np.where(label, density, np.where(inside, 0.2 * density, 0.0))
    origin = (idx[0], idx[0], idx[0])
    return CtVolume(values, spacing=(spacing,) * 3, origin=origin, skull_label=label)


def smooth_random_volume(n: int = 64, seed: int = 0, spacing: float = 1.0,
                         sigma: float = 3.0) -> CtVolume:
    """Gaussian-smoothed random field in [0, 1] under a raised-cosine radial taper.

    The taper brings the field to zero smoothly two voxels inside the grid,
    so the volume has no hard edges anywhere.
    """
    rng = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(rng.random((n, n, n)), sigma)
    field = (field - field.min()) / (field.max() - field.min())
    c = (np.arange(n) - (n - 1) / 2.0) / (n / 2.0 - 2.0)
    x, y, z = np.meshgrid(c, c, c, indexing="ij")
    rad = np.sqrt(x ** 2 + y ** 2 + z ** 2)
    taper = 0.5 * (1.0 + np.cos(np.pi * np.clip(rad, 0.0, 1.0)))
    return CtVolume(field * taper, (spacing,) * 3, (0.0, 0.0, 0.0))


def dual_system(angle_deg: float = 60.0, sid: float = 1000.0, half_extent: float = 220.0,
                pixel_pitch: float = 0.4) -> DualFluoroSystem:
    """Two identical fluoroscopes whose beams cross at mid-distance.

    F1 looks along -z from a source at (0, 0, sid); F2 is F1 rotated by
    ``angle_deg`` about the y axis through the beam crossing point.
    """
    iso = np.array([0.0, 0.0, sid / 2.0])
    f1 = FluoroscopeGeometry(source=(0.0, 0.0, sid), intensifier_center=(0.0, 0.0, 0.0),
                             half_width=half_extent, half_height=half_extent, pixel_pitch=pixel_pitch)
    rot = rotation_matrix((0.0, angle_deg, 0.0))
    f2 = f1.transformed(rot, iso - rot @ iso)
    return DualFluoroSystem(f1, f2)


def random_pose(rng: np.random.Generator, system: DualFluoroSystem, landmarks: LandmarkSet3D,
                max_angle: float = 30.0, max_shift: float = 15.0, max_tries: int = 1000) -> RigidPose:
    """Random pose around the system center with every landmark in both fields of view."""
    from .geometry import project_points, system_center

    center = system_center(system)
    for _ in range(max_tries):
        pose = RigidPose(rng.uniform(-max_angle, max_angle, 3),
                         center + rng.uniform(-max_shift, max_shift, 3))
        posed = pose.apply(landmarks.points)
        ok = True
        for geom in system.views:
            uv, _ = project_points(geom, posed)
            if np.any(np.abs(uv[:, 0]) > geom.half_width) or np.any(np.abs(uv[:, 1]) > geom.half_height):
                ok = False
                break
        if ok:
            return pose
    raise RuntimeError("could not place the model inside both fields of view")
