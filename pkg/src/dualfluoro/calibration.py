"""Intensifier distortion correction and dual-fluoroscope pose calibration."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment
from scipy.spatial import ConvexHull

from .errors import (DegenerateRay, ExtrapolationWarning, NonConvergence, ParseError,
                     RankDeficient, TooFewBeads)
from .geometry import DualFluoroSystem, RigidPose, project_points, system_center
from .optim import levenberg_marquardt

POLY_DEGREE = 5
N_TERMS = (POLY_DEGREE + 1) * (POLY_DEGREE + 2) // 2  # 21
HULL_MARGIN = 0.05
MODEL_MAGIC = "dualfluoro-distortion"
MODEL_VERSION = 1


def monomial_exponents(degree: int = POLY_DEGREE) -> list[tuple[int, int]]:
    """``(i, j)`` for ``x**i * y**j`` with ``i + j <= degree``, by total degree."""
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def design_matrix(xy: np.ndarray, degree: int = POLY_DEGREE) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    return np.column_stack([x ** i * y ** j for i, j in monomial_exponents(degree)])


# ---------------------------------------------------------------- bead detection

def detect_beads(image, threshold: float, min_area: int = 1, max_area: int | None = None,
                 expected: int | None = None, ideal=None) -> np.ndarray:
    """Centroids ``(x=col, y=row)`` of bright blobs, weighted by intensity above ``threshold``.

    Components of ``image > threshold`` with an area in
    ``[min_area, max_area]`` are kept. When ``ideal`` positions (pixels) are
    given, detections are matched one-to-one to the nearest ideal and
    returned in ideal order; otherwise they are sorted by row, then column.
    """
    img = np.asarray(image, dtype=float)
    labels, n = ndimage.label(img > threshold)
    ids = np.arange(1, n + 1)
    if n:
        areas = ndimage.sum_labels(np.ones_like(img), labels, ids)
        keep = areas >= min_area
        if max_area is not None:
            keep &= areas <= max_area
        ids = ids[keep]
    need = expected if expected is not None else (len(ideal) if ideal is not None else 1)
    if len(ids) < max(need, 1):
        raise TooFewBeads(f"found {len(ids)} beads, expected {max(need, 1)}")
    # weight by the excess over the threshold so the flat background does not bias centroids
    rc = np.array(ndimage.center_of_mass(np.clip(img - threshold, 0.0, None), labels, ids)).reshape(-1, 2)
    xy = rc[:, ::-1]
    if ideal is None:
        order = np.lexsort((xy[:, 0], xy[:, 1]))
        return xy[order]
    ideal = np.asarray(ideal, dtype=float)
    cost = np.linalg.norm(ideal[:, None, :] - xy[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    out = np.empty_like(ideal)
    out[rows] = xy[cols]
    return out


def render_bead_image(shape, centers_xy, sigma: float = 1.5, amplitude: float = 200.0,
                      background: float = 10.0) -> np.ndarray:
    """Synthetic plate image: Gaussian blobs at ``(x, y)`` pixel positions."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.full((h, w), float(background))
    for cx, cy in np.asarray(centers_xy, dtype=float):
        img += amplitude * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2))
    return img


# ---------------------------------------------------------------- distortion fit

@dataclass(frozen=True)
class BeadGrid:
    ideal: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        ideal = np.asarray(self.ideal, dtype=float).reshape(-1, 2)
        obs = np.asarray(self.observed, dtype=float).reshape(-1, 2)
        if len(ideal) != len(obs):
            raise ValueError("ideal and observed bead counts differ")
        if len(ideal) < N_TERMS:
            raise ValueError(f"need at least {N_TERMS} bead correspondences, got {len(ideal)}")
        object.__setattr__(self, "ideal", ideal)
        object.__setattr__(self, "observed", obs)


@dataclass(frozen=True, eq=False)
class DistortionModel:
    """Observed → ideal mapping as two degree-5 bivariate polynomials.

    Inputs are normalised by ``(p - center) / half_range`` before evaluation.
    ``hull`` holds the calibrated-region polygon (bead hull grown by 5%).
    ``rms`` is the root mean square of the fit residual coordinates (mm).
    """

    coef_u: np.ndarray
    coef_v: np.ndarray
    center: np.ndarray
    half_range: np.ndarray
    hull: np.ndarray
    rms: float = 0.0

    def __post_init__(self):
        for name in ("coef_u", "coef_v"):
            c = np.asarray(getattr(self, name), dtype=float)
            if c.shape != (N_TERMS,):
                raise ValueError(f"{name} must have {N_TERMS} coefficients")
            object.__setattr__(self, name, c)
        for name in ("center", "half_range", "hull"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def identity(cls, half_extent: float = 1e6) -> "DistortionModel":
        cu = np.zeros(N_TERMS)
        cv = np.zeros(N_TERMS)
        exps = monomial_exponents()
        cu[exps.index((1, 0))] = 1.0
        cv[exps.index((0, 1))] = 1.0
        e = half_extent
        return cls(cu, cv, np.zeros(2), np.ones(2), np.array([[-e, -e], [e, -e], [e, e], [-e, e]]))

    def __call__(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        a = design_matrix((p - self.center) / self.half_range)
        return np.column_stack([a @ self.coef_u, a @ self.coef_v])

    def inside(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        eq = ConvexHull(self.hull).equations
        return np.all(p @ eq[:, :2].T + eq[:, 2] <= 1e-9 * np.max(np.abs(self.hull)), axis=1)


def fit_distortion(grid: BeadGrid) -> DistortionModel:
    """Least-squares degree-5 fit mapping observed bead positions to ideal ones."""
    obs = grid.observed
    lo, hi = obs.min(axis=0), obs.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    if np.any(half <= 0):
        raise RankDeficient("observed beads are collinear along an axis")
    a = design_matrix((obs - center) / half)
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RankDeficient(f"design matrix is rank deficient (condition {sv[0] / max(sv[-1], 1e-300):.3g})")
    coef, *_ = np.linalg.lstsq(a, grid.ideal, rcond=None)
    resid = a @ coef - grid.ideal
    rms = float(np.sqrt(np.mean(resid ** 2)))
    verts = obs[ConvexHull(obs).vertices]
    centroid = verts.mean(axis=0)
    hull = centroid + (1.0 + HULL_MARGIN) * (verts - centroid)
    return DistortionModel(coef[:, 0], coef[:, 1], center, half, hull, rms)


def undistort_points(model: DistortionModel, pts) -> tuple[np.ndarray, np.ndarray]:
    """Apply the correction; also returns a per-point extrapolation flag.

    Points outside the calibrated region are still corrected, but flagged and
    reported with an :class:`ExtrapolationWarning`.
    """
    p = np.atleast_2d(np.asarray(pts, dtype=float))
    outside = ~model.inside(p)
    if np.any(outside):
        warnings.warn(f"{int(outside.sum())} point(s) outside the calibrated region",
                      ExtrapolationWarning, stacklevel=2)
    return model(p), outside


def format_distortion_model(model: DistortionModel, header: Iterable[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    lines.append(f"{MODEL_MAGIC} {MODEL_VERSION}")
    lines.append("center " + " ".join(repr(float(v)) for v in model.center))
    lines.append("half_range " + " ".join(repr(float(v)) for v in model.half_range))
    lines.append(f"rms {float(model.rms)!r}")
    lines.append("coef_u " + " ".join(repr(float(v)) for v in model.coef_u))
    lines.append("coef_v " + " ".join(repr(float(v)) for v in model.coef_v))
    lines.append("hull " + " ".join(repr(float(v)) for v in model.hull.ravel()))
    return "\n".join(lines) + "\n"


def parse_distortion_model(text: str) -> DistortionModel:
    rows = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows or rows[0][0] != MODEL_MAGIC:
        raise ParseError("not a distortion model file")
    if rows[0][1:] != [str(MODEL_VERSION)]:
        raise ParseError(f"unsupported distortion model version {' '.join(rows[0][1:])}")
    fields = {r[0]: r[1:] for r in rows[1:]}
    try:
        vals = {k: np.array([float(x) for x in v]) for k, v in fields.items()}
        return DistortionModel(vals["coef_u"], vals["coef_v"], vals["center"], vals["half_range"],
                               vals["hull"].reshape(-1, 2), float(vals["rms"][0]))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed distortion model: {exc}") from None


def load_distortion_model(path: str | Path) -> DistortionModel:
    try:
        return parse_distortion_model(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read distortion model {path}: {exc}") from None


def save_distortion_model(model: DistortionModel, path: str | Path, header: Iterable[str] = ()) -> None:
    Path(path).write_text(format_distortion_model(model, header))


def parse_bead_table(text: str) -> np.ndarray:
    """``index u v`` rows → ``(n, 2)`` array ordered by index."""
    rows = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) != 3:
                raise ValueError("expected 3 columns")
            rows[int(parts[0])] = (float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ParseError(f"bead table line {lineno}: {exc}") from None
    if sorted(rows) != list(range(len(rows))):
        raise ParseError("bead indices must run 0..n-1")
    return np.array([rows[i] for i in range(len(rows))]).reshape(-1, 2)


def format_bead_table(xy: np.ndarray, header: Iterable[str] = ()) -> str:
    lines = [f"# {h}" for h in header] + ["# index u v"]
    lines += [f"{i} {u!r} {v!r}" for i, (u, v) in enumerate(np.asarray(xy, dtype=float).tolist())]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- dual pose

@dataclass(frozen=True, eq=False)
class AlignmentTool:
    """Four beads in the tool frame (mm) and their projections on each intensifier (mm)."""

    beads: np.ndarray
    obs_f1: np.ndarray
    obs_f2: np.ndarray

    def __post_init__(self):
        beads = np.asarray(self.beads, dtype=float)
        o1 = np.asarray(self.obs_f1, dtype=float)
        o2 = np.asarray(self.obs_f2, dtype=float)
        if beads.shape != (4, 3) or o1.shape != (4, 2) or o2.shape != (4, 2):
            raise ValueError("alignment tool needs 4 beads and 4 observations per view")
        edges = beads[1:] - beads[0]
        size = np.max(np.linalg.norm(edges, axis=1))
        if size == 0 or abs(np.linalg.det(edges)) <= 1e-6 * size ** 3:
            raise ValueError("alignment tool beads are coplanar")
        object.__setattr__(self, "beads", beads)
        object.__setattr__(self, "obs_f1", o1)
        object.__setattr__(self, "obs_f2", o2)


@dataclass
class CalibrationResult:
    system: DualFluoroSystem
    f2_pose: RigidPose
    tool_pose: RigidPose
    rms: float  # root mean square of the eight reprojection distances (mm)
    bead_errors: np.ndarray  # (2, 4): per view, per bead reprojection distance (mm)
    iterations: int
    cost_history: list[float] = field(default_factory=list)


def _tool_residuals(x, tool: AlignmentTool, initial: DualFluoroSystem) -> np.ndarray:
    f2 = initial.f2.with_pose(RigidPose.from_vector(x[:6]))
    posed = RigidPose.from_vector(x[6:12]).apply(tool.beads)
    out = []
    for geom, obs in ((initial.f1, tool.obs_f1), (f2, tool.obs_f2)):
        try:
            uv, _ = project_points(geom, posed)
        except DegenerateRay:
            return np.full(16, 1e6)
        out.append((uv - obs).ravel())
    return np.concatenate(out)


def calibrate_dual_pose(tool: AlignmentTool, initial: DualFluoroSystem,
                        tool_init: RigidPose | None = None, max_iter: int = 500) -> CalibrationResult:
    """Fit the F2 pose and the tool pose to the four-bead projections in both views.

    F1 anchors the global frame; F2 keeps its source-to-intensifier offset
    from ``initial`` and only its rigid pose moves. The tool starts at
    ``tool_init`` (default: unrotated, at the system center) and is first
    fitted alone with F2 held at its initial pose.
    """
    f2_x0 = initial.f2.pose().as_vector()
    if tool_init is None:
        tool_init = RigidPose((0.0, 0.0, 0.0), tuple(system_center(initial)))

    def tool_only(t):
        return _tool_residuals(np.concatenate([f2_x0, t]), tool, initial)

    stage1 = levenberg_marquardt(tool_only, tool_init.as_vector(), max_iter=max_iter)
    x0 = np.concatenate([f2_x0, stage1.x])
    res = levenberg_marquardt(lambda x: _tool_residuals(x, tool, initial), x0, max_iter=max_iter)
    if not res.converged:
        raise NonConvergence(f"dual-pose calibration did not converge in {max_iter} iterations "
                             f"(cost {res.fun:.3g})")
    f2_pose = RigidPose.from_vector(res.x[:6])
    r = _tool_residuals(res.x, tool, initial).reshape(2, 4, 2)
    errs = np.linalg.norm(r, axis=2)
    return CalibrationResult(
        system=DualFluoroSystem(initial.f1, initial.f2.with_pose(f2_pose)),
        f2_pose=f2_pose,
        tool_pose=RigidPose.from_vector(res.x[6:12]),
        rms=float(np.sqrt(np.mean(errs ** 2))),
        bead_errors=errs,
        iterations=stage1.nit + res.nit,
        cost_history=res.history,
    )


def synthesize_tool(beads, tool_pose: RigidPose, system: DualFluoroSystem) -> AlignmentTool:
    """Exact bead projections for a tool at ``tool_pose``."""
    posed = tool_pose.apply(np.asarray(beads, dtype=float))
    return AlignmentTool(beads, project_points(system.f1, posed)[0], project_points(system.f2, posed)[0])


def format_tool(tool: AlignmentTool, header: Iterable[str] = ()) -> str:
    """``bead i x y z`` / ``f1 i u v`` / ``f2 i u v`` records."""
    lines = [f"# {h}" for h in header]
    lines.append("# bead <i> <x> <y> <z> (tool frame, mm); f1|f2 <i> <u> <v> (intensifier, mm)")
    for i, b in enumerate(tool.beads.tolist()):
        lines.append(f"bead {i} " + " ".join(repr(v) for v in b))
    for name, obs in (("f1", tool.obs_f1), ("f2", tool.obs_f2)):
        for i, (u, v) in enumerate(obs.tolist()):
            lines.append(f"{name} {i} {u!r} {v!r}")
    return "\n".join(lines) + "\n"


def parse_tool(text: str) -> AlignmentTool:
    data = {"bead": {}, "f1": {}, "f2": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            kind = parts[0]
            width = 3 if kind == "bead" else 2
            if kind not in data or len(parts) != 2 + width:
                raise ValueError(f"unrecognised record {raw!r}")
            data[kind][int(parts[1])] = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise ParseError(f"tool file line {lineno}: {exc}") from None
    try:
        arrays = [np.array([data[k][i] for i in range(4)]) for k in ("bead", "f1", "f2")]
        return AlignmentTool(*arrays)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"tool file needs beads and observations 0..3: {exc}") from None
