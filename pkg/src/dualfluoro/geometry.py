"""Rigid poses, the virtual dual-fluoroscope model and point-source projection.

Conventions
-----------
* Angles are degrees at every public boundary and radians only inside
  ``rotation_matrix``.
* Euler angles are extrinsic z, then y, then x: ``R = Rx @ Ry @ Rz`` acting on
  column vectors.
* The global frame sits at the F1 intensifier center with the F1 image axes
  along global x and y; the F1 beam axis is global z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateRay, ParseError

_ORTHO_TOL = 1e-9


def wrap_degrees(angle):
    """Map angles (scalar or array) into (-180, 180]."""
    a = np.asarray(angle, dtype=float)
    out = a - 360.0 * np.ceil((a - 180.0) / 360.0)
    return float(out) if out.ndim == 0 else out


def _vec3(values, name: str) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be three finite numbers, got {values!r}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


def rotation_matrix(theta_deg: Sequence[float]) -> np.ndarray:
    """Rotation matrix ``Rx @ Ry @ Rz`` for angles ``(θx, θy, θz)`` in degrees."""
    ax, ay, az = np.radians(np.asarray(theta_deg, dtype=float))
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    # Expanded product of Rx(ax) Ry(ay) Rz(az).
    return np.array(
        [
            [cy * cz, -cy * sz, sy],
            [sx * sy * cz + cx * sz, -sx * sy * sz + cx * cz, -sx * cy],
            [-cx * sy * cz + sx * sz, cx * sy * sz + sx * cz, cx * cy],
        ]
    )


def rotation_to_angles(rot: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`rotation_matrix` (degrees, each in (-180, 180]).

    At gimbal lock (``|θy| = 90°``) only the sum/difference of θx and θz is
    determined; θz is then reported as 0.
    """
    r = np.asarray(rot, dtype=float)
    cy = math.hypot(r[0, 0], r[0, 1])
    ay = math.atan2(r[0, 2], cy)
    if cy > 1e-12:
        ax = math.atan2(-r[1, 2], r[2, 2])
        az = math.atan2(-r[0, 1], r[0, 0])
    else:
        az = 0.0
        ax = math.atan2(r[2, 1], r[1, 1])
    return tuple(wrap_degrees(math.degrees(a)) for a in (ax, ay, az))


@dataclass(frozen=True)
class RigidPose:
    """Six-DOF pose: Euler angles ``theta`` (deg) and translation ``tau`` (mm)."""

    theta: tuple[float, float, float] = (0.0, 0.0, 0.0)
    tau: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        theta = _vec3(self.theta, "theta")
        object.__setattr__(self, "theta", tuple(wrap_degrees(a) for a in theta))
        object.__setattr__(self, "tau", _vec3(self.tau, "tau"))

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> "RigidPose":
        """Build from the optimizer layout ``[θx, θy, θz, τx, τy, τz]``."""
        return cls(tuple(x[:3]), tuple(x[3:6]))

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "RigidPose":
        mat = np.asarray(mat, dtype=float)
        return cls(rotation_to_angles(mat[:3, :3]), tuple(mat[:3, 3]))

    def as_vector(self) -> np.ndarray:
        return np.array(self.theta + self.tau)

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.theta)

    def matrix(self) -> np.ndarray:
        return pose_to_matrix(self)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform ``(..., 3)`` points from the model frame to the global frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + np.asarray(self.tau)

    def inverse(self) -> "RigidPose":
        return RigidPose.from_matrix(np.linalg.inv(self.matrix()))

    def compose(self, other: "RigidPose") -> "RigidPose":
        """Pose equivalent to applying ``other`` first, then ``self``."""
        return RigidPose.from_matrix(self.matrix() @ other.matrix())


def pose_to_matrix(pose: RigidPose) -> np.ndarray:
    """4×4 homogeneous transform ``T(τ) · Rx(θx) · Ry(θy) · Rz(θz)``."""
    mat = np.eye(4)
    mat[:3, :3] = rotation_matrix(pose.theta)
    mat[:3, 3] = pose.tau
    return mat


def matrix_to_pose(mat: np.ndarray) -> RigidPose:
    return RigidPose.from_matrix(mat)


@dataclass(frozen=True)
class FluoroscopeGeometry:
    """One point-source / image-intensifier pair.

    ``axis_u`` and ``axis_v`` span the intensifier plane; intensifier
    coordinates ``(u, v)`` are millimetres along these axes from
    ``intensifier_center``.
    """

    source: tuple[float, float, float]
    intensifier_center: tuple[float, float, float]
    axis_u: tuple[float, float, float] = (1.0, 0.0, 0.0)
    axis_v: tuple[float, float, float] = (0.0, 1.0, 0.0)
    half_width: float = 150.0
    half_height: float = 150.0
    pixel_pitch: float = 0.3

    def __post_init__(self):
        for name in ("source", "intensifier_center", "axis_u", "axis_v"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))
        u, v = np.array(self.axis_u), np.array(self.axis_v)
        if abs(np.linalg.norm(u) - 1) > _ORTHO_TOL or abs(np.linalg.norm(v) - 1) > _ORTHO_TOL:
            raise ValueError("intensifier axes must be unit vectors")
        if abs(u @ v) > _ORTHO_TOL:
            raise ValueError("intensifier axes must be orthogonal")
        if not (self.half_width > 0 and self.half_height > 0 and self.pixel_pitch > 0):
            raise ValueError("intensifier extents and pixel pitch must be positive")
        if abs(self.source_distance) <= 0:
            raise ValueError("source lies on the intensifier plane")

    @cached_property
    def normal(self) -> np.ndarray:
        return np.cross(self.axis_u, self.axis_v)

    @cached_property
    def frame(self) -> np.ndarray:
        """Rotation whose columns are ``axis_u, axis_v, normal``."""
        return np.column_stack([self.axis_u, self.axis_v, self.normal])

    @property
    def source_distance(self) -> float:
        """Signed distance of the source from the intensifier plane along the normal."""
        return float(np.dot(np.subtract(self.source, self.intensifier_center), self.normal))

    def plane_point(self, uv: np.ndarray) -> np.ndarray:
        """3D location of intensifier coordinates ``(..., 2)``."""
        uv = np.asarray(uv, dtype=float)
        return (np.asarray(self.intensifier_center)
                + uv[..., :1] * np.asarray(self.axis_u)
                + uv[..., 1:2] * np.asarray(self.axis_v))

    def transformed(self, rot: np.ndarray, shift: np.ndarray) -> "FluoroscopeGeometry":
        """Geometry after the rigid map ``x -> rot @ x + shift``."""
        rot = np.asarray(rot, dtype=float)
        return FluoroscopeGeometry(
            source=rot @ self.source + shift,
            intensifier_center=rot @ self.intensifier_center + shift,
            axis_u=rot @ self.axis_u,
            axis_v=rot @ self.axis_v,
            half_width=self.half_width,
            half_height=self.half_height,
            pixel_pitch=self.pixel_pitch,
        )

    def local_source(self) -> np.ndarray:
        """Source position in the intensifier's own (u, v, normal) frame."""
        return self.frame.T @ np.subtract(self.source, self.intensifier_center)

    def pose(self) -> RigidPose:
        """Pose mapping the intensifier's local frame into the current frame."""
        mat = np.eye(4)
        mat[:3, :3] = self.frame
        mat[:3, 3] = self.intensifier_center
        return RigidPose.from_matrix(mat)

    def with_pose(self, pose: RigidPose) -> "FluoroscopeGeometry":
        """Same intensifier (fixed source offset) placed at ``pose``."""
        rot = pose.rotation
        center = np.asarray(pose.tau)
        return FluoroscopeGeometry(
            source=rot @ self.local_source() + center,
            intensifier_center=center,
            axis_u=rot[:, 0],
            axis_v=rot[:, 1],
            half_width=self.half_width,
            half_height=self.half_height,
            pixel_pitch=self.pixel_pitch,
        )


def project_points(geom: FluoroscopeGeometry, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centrally project ``(n, 3)`` points from the source onto the intensifier.

    Returns ``(uv, landing)`` with ``uv`` of shape ``(n, 2)`` in millimetres and
    ``landing`` the 3D intersection points. Raises :class:`DegenerateRay` when a
    point coincides with the source, its ray is parallel to the plane, or it
    lies behind the source.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    src = np.asarray(geom.source)
    center = np.asarray(geom.intensifier_center)
    n = geom.normal
    d = pts - src
    length = np.linalg.norm(d, axis=1)
    scale = max(float(np.linalg.norm(src - center)), 1.0)
    if np.any(length <= 1e-12 * scale):
        raise DegenerateRay("point coincides with the X-ray source")
    denom = d @ n
    if np.any(np.abs(denom) <= 1e-12 * length):
        raise DegenerateRay("ray is parallel to the intensifier plane")
    t = ((center - src) @ n) / denom
    if np.any(t <= 0):
        raise DegenerateRay("point lies behind the X-ray source")
    landing = src + t[:, None] * d
    rel = landing - center
    uv = np.column_stack([rel @ np.asarray(geom.axis_u), rel @ np.asarray(geom.axis_v)])
    return uv, landing


def project_point(geom: FluoroscopeGeometry, p: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Single-point form of :func:`project_points`."""
    uv, landing = project_points(geom, np.asarray(p, dtype=float).reshape(1, 3))
    return uv[0], landing[0]


def is_visible(geom: FluoroscopeGeometry, uv) -> bool | np.ndarray:
    """Closed field-of-view test ``|u| <= half_width and |v| <= half_height``."""
    uv = np.asarray(uv, dtype=float)
    inside = (np.abs(uv[..., 0]) <= geom.half_width) & (np.abs(uv[..., 1]) <= geom.half_height)
    return bool(inside) if inside.ndim == 0 else inside


@dataclass(frozen=True)
class DualFluoroSystem:
    """Two fluoroscopes expressed in the F1-intensifier-centered global frame.

    Geometries given in any other frame are re-expressed at construction so
    that ``f1.intensifier_center`` is the origin and the F1 axes are global
    x and y.
    """

    f1: FluoroscopeGeometry
    f2: FluoroscopeGeometry

    def __post_init__(self):
        rot1 = self.f1.frame
        c1 = np.asarray(self.f1.intensifier_center)
        if np.array_equal(rot1, np.eye(3)) and not np.any(c1):
            return
        rot = rot1.T
        shift = -rot @ c1
        f1 = self.f1.transformed(rot, shift)
        # snap center and axes to exact values; rounding noise would fail the frame check
        f1 = FluoroscopeGeometry(
            source=f1.source,
            intensifier_center=(0.0, 0.0, 0.0),
            half_width=f1.half_width,
            half_height=f1.half_height,
            pixel_pitch=f1.pixel_pitch,
        )
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "f2", self.f2.transformed(rot, shift))

    @property
    def views(self) -> tuple[FluoroscopeGeometry, FluoroscopeGeometry]:
        return (self.f1, self.f2)


def system_center(system: DualFluoroSystem) -> np.ndarray:
    """Mean of both sources and both intensifier centers (the registration start τ⁰)."""
    pts = np.array(
        [system.f1.source, system.f1.intensifier_center,
         system.f2.source, system.f2.intensifier_center]
    )
    return pts.mean(axis=0)


# --------------------------------------------------------------------------
# System definition file
# --------------------------------------------------------------------------
#
#   # comment
#   f1 source      x y z
#   f1 center      x y z
#   f1 axis_u      x y z
#   f1 axis_v      x y z
#   f1 half_extent half_width half_height
#   f1 pixel_pitch pitch
#   f2 ... (same six keys)
#
# All lengths in millimetres.

_SYSTEM_KEYS = {
    "source": 3, "center": 3, "axis_u": 3, "axis_v": 3, "half_extent": 2, "pixel_pitch": 1,
}


def format_system(system: DualFluoroSystem, header: Iterable[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines.append("# dual fluoroscope system, global frame at the F1 intensifier center, mm")
    for name, g in (("f1", system.f1), ("f2", system.f2)):
        rows = {
            "source": g.source,
            "center": g.intensifier_center,
            "axis_u": g.axis_u,
            "axis_v": g.axis_v,
            "half_extent": (g.half_width, g.half_height),
            "pixel_pitch": (g.pixel_pitch,),
        }
        for key, vals in rows.items():
            lines.append(f"{name} {key} " + " ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def parse_system(text: str) -> DualFluoroSystem:
    values: dict[tuple[str, str], list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3 or parts[0] not in ("f1", "f2") or parts[1] not in _SYSTEM_KEYS:
            raise ParseError(f"system file line {lineno}: cannot parse {raw!r}")
        try:
            nums = [float(x) for x in parts[2:]]
        except ValueError as exc:
            raise ParseError(f"system file line {lineno}: {exc}") from None
        if len(nums) != _SYSTEM_KEYS[parts[1]]:
            raise ParseError(f"system file line {lineno}: wrong number of values for {parts[1]}")
        values[(parts[0], parts[1])] = nums
    geoms = []
    for name in ("f1", "f2"):
        missing = [k for k in _SYSTEM_KEYS if (name, k) not in values]
        if missing:
            raise ParseError(f"system file: {name} is missing {', '.join(missing)}")
        try:
            geoms.append(FluoroscopeGeometry(
                source=values[name, "source"],
                intensifier_center=values[name, "center"],
                axis_u=values[name, "axis_u"],
                axis_v=values[name, "axis_v"],
                half_width=values[name, "half_extent"][0],
                half_height=values[name, "half_extent"][1],
                pixel_pitch=values[name, "pixel_pitch"][0],
            ))
        except ValueError as exc:
            raise ParseError(f"system file: invalid {name} geometry: {exc}") from None
    return DualFluoroSystem(*geoms)


def load_system(path: str | Path) -> DualFluoroSystem:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read system file {path}: {exc}") from None
    return parse_system(text)


def save_system(system: DualFluoroSystem, path: str | Path, header: Iterable[str] = ()) -> None:
    Path(path).write_text(format_system(system, header))
