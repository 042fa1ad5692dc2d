"""Parallel-beam digitally reconstructed radiographs.

Rendering plane frame: the view pose maps model (volume) coordinates into a
frame whose x/y axes are the image u/v axes and whose z axis is the beam
direction. Output pixel ``(row r, col c)`` has 1-based coordinates
``u_px = c + 1``, ``v_px = r + 1`` and sits at plane position
``((u_px - (w + 1) / 2) * scale, (v_px - (h + 1) / 2) * scale)``.

The CT field between voxel centers is trilinear and falls linearly to zero
over one voxel outside the grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EmptyVolume, MissingLabel, ParseError
from .geometry import RigidPose
from .landmarks import LandmarkSet3D

DEFAULT_OUT_DIMS = (128, 128)


@dataclass(frozen=True, eq=False)
class CtVolume:
    """Voxel grid indexed ``[i, j, k]`` along x, y, z.

    Voxel ``(i, j, k)`` is centered at ``origin + (i, j, k) * spacing`` (mm)
    in the model frame.
    """

    intensities: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    skull_label: np.ndarray | None = None

    def __post_init__(self):
        vol = np.asarray(self.intensities, dtype=float)
        if vol.ndim != 3:
            raise ValueError("intensities must be a 3D array")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ValueError("spacing must be three positive numbers")
        object.__setattr__(self, "intensities", vol)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if self.skull_label is not None:
            label = np.asarray(self.skull_label).astype(bool)
            if label.shape != vol.shape:
                raise ValueError("skull_label must match the intensity grid")
            object.__setattr__(self, "skull_label", label)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.intensities.shape)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + 0.5 * (np.asarray(self.dims) - 1) * np.asarray(self.spacing)


@dataclass(frozen=True)
class RenderParams:
    """``view`` is the pose of the volume's model frame in the rendering-plane frame."""

    view: RigidPose = field(default_factory=RigidPose)
    out_dims: tuple[int, int] = DEFAULT_OUT_DIMS
    intensity_window: tuple[float, float] = (0.0, 1.0)
    scale: float = 1.0

    def __post_init__(self):
        w, h = (int(v) for v in self.out_dims)
        if w <= 0 or h <= 0:
            raise ValueError("out_dims must be positive")
        lo, hi = (float(v) for v in self.intensity_window)
        if not lo < hi:
            raise ValueError("intensity window needs lo < hi")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "out_dims", (w, h))
        object.__setattr__(self, "intensity_window", (lo, hi))
        object.__setattr__(self, "scale", float(self.scale))


@dataclass(eq=False)
class Drr:
    """Rendered image ``(h, w)`` in [0, 255], landmark pixels and optional mask."""

    image: np.ndarray
    landmarks2d: np.ndarray
    visible: np.ndarray
    mask: np.ndarray | None = None


def centered_view(theta, shift, center) -> RigidPose:
    """View pose rotating the model about ``center`` and placing it at ``shift``."""
    rot = RigidPose(theta).rotation
    return RigidPose(theta, np.asarray(shift, dtype=float) - rot @ np.asarray(center, dtype=float))


def _check(volume: CtVolume) -> None:
    if min(volume.dims) == 0:
        raise EmptyVolume(f"volume has an empty axis: dims={volume.dims}")


def _plane_to_index(volume: CtVolume, view: RigidPose) -> tuple[np.ndarray, np.ndarray]:
    """Affine map ``index = A @ q + b`` from plane coordinates to voxel indices."""
    rot_t = view.rotation.T
    spacing = np.asarray(volume.spacing)
    a = rot_t / spacing[:, None]
    b = (-rot_t @ np.asarray(view.tau) - np.asarray(volume.origin)) / spacing
    return a, b


def _pixel_plane_coords(params: RenderParams) -> tuple[np.ndarray, np.ndarray]:
    w, h = params.out_dims
    qx = (np.arange(1, w + 1) - (w + 1) / 2.0) * params.scale
    qy = (np.arange(1, h + 1) - (h + 1) / 2.0) * params.scale
    return np.meshgrid(qx, qy, indexing="xy")  # each (h, w)


def _window(integral: np.ndarray, params: RenderParams) -> np.ndarray:
    lo, hi = params.intensity_window
    return np.clip((integral - lo) * (255.0 / (hi - lo)), 0.0, 255.0)


def _shear_warp(field3d: np.ndarray, volume: CtVolume, params: RenderParams,
                reduce: str = "sum") -> np.ndarray:
    """Project ``field3d`` along the beam by shear-warp factorization.

    1. Choose the principal axis: the index axis most parallel to the beam.
    2. Treat the volume as slices along that axis; shift every slice by its
       (fractional) shear offset with bilinear weights and accumulate into an
       intermediate image whose pixels are rays through slice 0.
    3. Warp the intermediate image onto the output grid with the 2D affine
       map from output pixel to ray, bilinearly.

    ``reduce='sum'`` returns line integrals (field units x mm);
    ``reduce='max'`` returns the maximum along each ray.
    """
    a_mat, b_vec = _plane_to_index(volume, params.view)
    d = a_mat[:, 2]
    k = int(np.argmax(np.abs(d)))
    ax_a, ax_b = [i for i in range(3) if i != k]
    slices = np.transpose(field3d, (k, ax_a, ax_b))
    nk, na, nb = slices.shape
    sa, sb = d[ax_a] / d[k], d[ax_b] / d[k]

    c = np.arange(nk)
    ka = np.floor(c * sa).astype(int)
    kb = np.floor(c * sb).astype(int)
    fa = c * sa - ka
    fb = c * sb - kb
    a_min, b_min = int(np.min(-1 - ka)), int(np.min(-1 - kb))
    a_size = int(np.max(na - 1 - ka)) - a_min + 1
    b_size = int(np.max(nb - 1 - kb)) - b_min + 1

    inter = np.zeros((a_size, b_size))
    padded = np.zeros((na + 2, nb + 2))
    for ci in range(nk):
        sl = slices[ci]
        if not sl.any():
            continue
        padded[1:-1, 1:-1] = sl
        wa, wb = fa[ci], fb[ci]
        g = ((1 - wa) * (1 - wb)) * padded[:-1, :-1] + (wa * (1 - wb)) * padded[1:, :-1] \
            + ((1 - wa) * wb) * padded[:-1, 1:] + (wa * wb) * padded[1:, 1:]
        a0 = -1 - ka[ci] - a_min
        b0 = -1 - kb[ci] - b_min
        target = inter[a0:a0 + na + 1, b0:b0 + nb + 1]
        if reduce == "sum":
            target += g
        else:
            np.maximum(target, g, out=target)
    if reduce == "sum":
        inter *= 1.0 / abs(d[k])  # mm of beam path per slice

    qx, qy = _pixel_plane_coords(params)
    p0 = [a_mat[i, 0] * qx + a_mat[i, 1] * qy + b_vec[i] for i in range(3)]
    ia = p0[ax_a] - p0[k] * sa - a_min
    ib = p0[ax_b] - p0[k] * sb - b_min
    return ndimage.map_coordinates(inter, [ia, ib], order=1, mode="grid-constant", cval=0.0)


def line_integrals(volume: CtVolume, params: RenderParams) -> np.ndarray:
    """Unwindowed shear-warp line integrals, shape ``(h, w)``."""
    _check(volume)
    return _shear_warp(volume.intensities, volume, params, "sum")


def render_drr(volume: CtVolume, params: RenderParams,
               landmarks: LandmarkSet3D | None = None, with_mask: bool = False) -> Drr:
    """Render a windowed parallel-beam DRR by shear-warp.

    Landmarks, when given, are projected with the same view; ``with_mask``
    also renders the skull mask (requires ``volume.skull_label``).
    """
    image = _window(line_integrals(volume, params), params)
    if landmarks is not None:
        uv, vis = project_landmarks_parallel(landmarks, params)
    else:
        uv, vis = np.zeros((0, 2)), np.zeros(0, dtype=bool)
    mask = render_mask(volume, params) if with_mask else None
    return Drr(image=image, landmarks2d=uv, visible=vis, mask=mask)


def brute_force_raycast(volume: CtVolume, params: RenderParams, step_fraction: float = 0.25) -> np.ndarray:
    """Reference renderer: trilinear samples every ``step_fraction`` voxel along each ray."""
    return _window(brute_force_integrals(volume, params, step_fraction), params)


def brute_force_integrals(volume: CtVolume, params: RenderParams, step_fraction: float = 0.25) -> np.ndarray:
    """Unwindowed line integrals of :func:`brute_force_raycast`."""
    _check(volume)
    a_mat, b_vec = _plane_to_index(volume, params.view)
    qx, qy = _pixel_plane_coords(params)
    # beam-depth range covering the volume plus its one-voxel fade margin
    spacing = np.asarray(volume.spacing)
    dims = np.asarray(volume.dims)
    corners = np.array([[i, j, k] for i in (-1, dims[0]) for j in (-1, dims[1]) for k in (-1, dims[2])])
    model = np.asarray(volume.origin) + corners * spacing
    depth = model @ params.view.rotation[2] + params.view.tau[2]
    ds = step_fraction * float(spacing.min())
    s_values = np.arange(depth.min(), depth.max() + ds, ds)
    base = [a_mat[i, 0] * qx + a_mat[i, 1] * qy + b_vec[i] for i in range(3)]
    total = np.zeros(qx.shape)
    for s in s_values:
        coords = [base[i] + a_mat[i, 2] * s for i in range(3)]
        total += ndimage.map_coordinates(volume.intensities, coords, order=1,
                                         mode="grid-constant", cval=0.0)
    return total * ds


def project_landmarks_parallel(landmarks: LandmarkSet3D | np.ndarray,
                               params: RenderParams) -> tuple[np.ndarray, np.ndarray]:
    """Orthographic landmark projection in 1-based pixel coordinates.

    Returns ``(uv_px, visible)``; a landmark is visible when it lands inside
    ``[1, w] x [1, h]``.
    """
    pts = landmarks.points if isinstance(landmarks, LandmarkSet3D) else np.asarray(landmarks, float)
    q = params.view.apply(pts)
    w, h = params.out_dims
    u = q[:, 0] / params.scale + (w + 1) / 2.0
    v = q[:, 1] / params.scale + (h + 1) / 2.0
    uv = np.column_stack([u, v])
    visible = (u >= 1) & (u <= w) & (v >= 1) & (v <= h)
    return uv, visible


def _box_silhouette(label: np.ndarray, volume: CtVolume, params: RenderParams) -> np.ndarray:
    """Pixels whose ray passes through at least one labelled voxel box.

    Uses the same sheared slice frame as :func:`_shear_warp`. Within slice
    ``c`` a ray covers ``c - 1/2 .. c + 1/2`` along the principal axis and
    moves at most one voxel in each in-slice direction, so it crosses at
    most one cell boundary per direction; the cell is tested at the
    midpoint of every sub-segment between crossings.
    """
    a_mat, b_vec = _plane_to_index(volume, params.view)
    d = a_mat[:, 2]
    k = int(np.argmax(np.abs(d)))
    ax_a, ax_b = [i for i in range(3) if i != k]
    slices = np.transpose(label, (k, ax_a, ax_b))
    nk, na, nb = slices.shape
    sa, sb = d[ax_a] / d[k], d[ax_b] / d[k]
    qx, qy = _pixel_plane_coords(params)
    p0 = [a_mat[i, 0] * qx + a_mat[i, 1] * qy + b_vec[i] for i in range(3)]
    a0 = p0[ax_a] - p0[k] * sa
    b0 = p0[ax_b] - p0[k] * sb

    def crossing(start, slope):
        c0, c1 = np.floor(start + 0.5), np.floor(start + slope + 0.5)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (np.maximum(c0, c1) - 0.5 - start) / slope
        return np.where(c0 != c1, t, 1.0)

    mask = np.zeros(qx.shape, dtype=bool)
    for c in np.flatnonzero(slices.reshape(nk, -1).any(axis=1)):
        a_lo = a0 + (c - 0.5) * sa
        b_lo = b0 + (c - 0.5) * sb
        ta, tb = crossing(a_lo, sa), crossing(b_lo, sb)
        t1, t2 = np.minimum(ta, tb), np.maximum(ta, tb)
        for tm in (0.5 * t1, 0.5 * (t1 + t2), 0.5 * (t2 + 1.0)):
            ia = np.floor(a_lo + tm * sa + 0.5).astype(int)
            ib = np.floor(b_lo + tm * sb + 0.5).astype(int)
            ok = (ia >= 0) & (ia < na) & (ib >= 0) & (ib < nb)
            mask[ok] |= slices[c, ia[ok], ib[ok]]
    return mask


def render_mask(volume: CtVolume, params: RenderParams) -> np.ndarray:
    """Binary skull mask: the silhouette of the labelled voxels, taken as boxes.

    A pixel is set when its ray has a positive path length through any
    skull-labelled voxel.
    """
    _check(volume)
    if volume.skull_label is None:
        raise MissingLabel("volume has no skull label")
    return _box_silhouette(volume.skull_label, volume, params)


# --------------------------------------------------------------------------
# Raw volume + text header
# --------------------------------------------------------------------------
#
#   dims nx ny nz
#   spacing sx sy sz          (mm)
#   origin ox oy oz           (mm, center of voxel 0,0,0)
#   data volume.raw           (path relative to the header)
#   dtype int16               (optional: int16 | uint16; little-endian)
#   rescale slope intercept   (optional, applied to raw values)
#   label label.raw           (optional, uint8, nonzero = skull)
#
# Raw files store x fastest, then y, then z.

_RAW_DTYPES = {"int16": "<i2", "uint16": "<u2"}


def _read_raw(path: Path, dtype: str, dims) -> np.ndarray:
    try:
        data = np.fromfile(path, dtype=dtype)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    n = int(np.prod(dims))
    if data.size != n:
        raise ParseError(f"{path}: expected {n} voxels, found {data.size}")
    return data.reshape(dims[2], dims[1], dims[0]).transpose(2, 1, 0)


def load_volume(header_path: str | Path) -> CtVolume:
    header_path = Path(header_path)
    try:
        text = header_path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read volume header {header_path}: {exc}") from None
    fields: dict[str, list[str]] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            key, *rest = line.split()
            fields[key] = rest
    try:
        dims = [int(v) for v in fields["dims"]]
        spacing = [float(v) for v in fields["spacing"]]
        origin = [float(v) for v in fields.get("origin", ["0", "0", "0"])]
        data_name = fields["data"][0]
        dtype = _RAW_DTYPES[fields.get("dtype", ["int16"])[0]]
        slope, intercept = (float(v) for v in fields.get("rescale", ["1", "0"]))
    except (KeyError, IndexError, ValueError) as exc:
        raise ParseError(f"{header_path}: malformed header ({exc})") from None
    if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
        raise ParseError(f"{header_path}: dims, spacing and origin need three values each")
    values = _read_raw(header_path.parent / data_name, dtype, dims).astype(float) * slope + intercept
    label = None
    if "label" in fields:
        label = _read_raw(header_path.parent / fields["label"][0], "u1", dims) != 0
    try:
        return CtVolume(values, tuple(spacing), tuple(origin), label)
    except ValueError as exc:
        raise ParseError(f"{header_path}: {exc}") from None


def save_volume(volume: CtVolume, header_path: str | Path, slope: float = 1.0,
                intercept: float = 0.0) -> None:
    """Write ``volume`` as int16 raw (+ uint8 label) with a header; values are quantised."""
    header_path = Path(header_path)
    stem = header_path.with_suffix("")
    raw = np.rint((volume.intensities - intercept) / slope)
    if raw.min() < -32768 or raw.max() > 32767:
        raise ValueError("intensities do not fit int16 with the given rescale")
    raw.astype("<i2").transpose(2, 1, 0).tofile(stem.with_suffix(".raw"))
    lines = [
        "dims " + " ".join(str(d) for d in volume.dims),
        "spacing " + " ".join(repr(s) for s in volume.spacing),
        "origin " + " ".join(repr(o) for o in volume.origin),
        f"data {stem.name}.raw",
        "dtype int16",
        f"rescale {slope!r} {intercept!r}",
    ]
    if volume.skull_label is not None:
        volume.skull_label.astype("u1").transpose(2, 1, 0).tofile(stem.with_suffix(".label.raw"))
        lines.append(f"label {stem.name}.label.raw")
    header_path.write_text("\n".join(lines) + "\n")
