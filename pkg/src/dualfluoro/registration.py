"""Point-based 3D-to-2D registration against two fluoroscopic views.

The objective is the sum, over both views, of the Frobenius norm of the
difference between predicted and projected landmark positions on the
intensifier planes (3D coordinates, mm). Only landmarks predicted visible in
*both* views enter. Symmetric landmarks can be predicted left/right swapped,
so registration runs once per mirror variant and keeps the lowest optimum.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ParseError, TooFewLandmarks
from .geometry import (DualFluoroSystem, RigidPose, project_points,
                       rotation_matrix, system_center)
from .landmarks import LandmarkSet3D
from .optim import OptimizeResult, levenberg_marquardt, nelder_mead

MIN_COMMON_LANDMARKS = 3
DEGENERATE_PENALTY = 1e6
# initial simplex edge per coordinate: 5 degrees for angles, 20 mm for translations
SIMPLEX_STEP = np.array([5.0, 5.0, 5.0, 20.0, 20.0, 20.0])
SIMPLEX_XTOL = 1e-6
SIMPLEX_FTOL = 1e-9
SIMPLEX_MAX_ITER = 50_000


class MirrorVariant(enum.Enum):
    """The four swap combinations, in evaluation order."""

    NONE = "none"
    F1 = "f1-mirrored"
    F2 = "f2-mirrored"
    BOTH = "both-mirrored"

    @property
    def mirrors(self) -> tuple[bool, bool]:
        return {
            MirrorVariant.NONE: (False, False),
            MirrorVariant.F1: (True, False),
            MirrorVariant.F2: (False, True),
            MirrorVariant.BOTH: (True, True),
        }[self]


@dataclass(frozen=True, eq=False)
class ViewPrediction:
    """Per-landmark intensifier coordinates (mm) for one view.

    Row ``i`` belongs to landmark ``i``; rows flagged invisible are ignored.
    """

    uv: np.ndarray
    visible: np.ndarray

    def __post_init__(self):
        uv = np.array(self.uv, dtype=float).reshape(-1, 2)
        vis = np.array(self.visible, dtype=bool).reshape(-1)
        if len(uv) != len(vis):
            raise ValueError("uv and visible lengths differ")
        vis = vis & np.all(np.isfinite(uv), axis=1)
        uv.setflags(write=False)
        vis.setflags(write=False)
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "visible", vis)

    def __len__(self) -> int:
        return len(self.uv)


@dataclass(frozen=True, eq=False)
class PredictedLandmarks:
    f1: ViewPrediction
    f2: ViewPrediction

    def __post_init__(self):
        if len(self.f1) != len(self.f2):
            raise ValueError("both views must cover the same landmark indices")

    @property
    def common(self) -> np.ndarray:
        """Indices predicted visible in both views."""
        return np.flatnonzero(self.f1.visible & self.f2.visible)

    @property
    def n_vis(self) -> int:
        return int(np.count_nonzero(self.f1.visible & self.f2.visible))

    @property
    def views(self) -> tuple[ViewPrediction, ViewPrediction]:
        return (self.f1, self.f2)


@dataclass
class VariantOutcome:
    variant: MirrorVariant
    pose: RigidPose
    objective_value: float
    iterations: int
    converged: bool


@dataclass
class RegistrationResult:
    pose: RigidPose
    objective_value: float
    variant: MirrorVariant
    residuals_f1: np.ndarray
    residuals_f2: np.ndarray
    iterations: int
    converged: bool
    outcomes: list[VariantOutcome] = field(default_factory=list)

    def to_record(self) -> dict:
        def clean(arr):
            return [None if not np.isfinite(v) else float(v) for v in arr]

        return {
            "theta_deg": list(self.pose.theta),
            "tau_mm": list(self.pose.tau),
            "objective_mm": float(self.objective_value),
            "variant": self.variant.value,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "residuals_f1_mm": clean(self.residuals_f1),
            "residuals_f2_mm": clean(self.residuals_f2),
            "variants": [
                {
                    "variant": o.variant.value,
                    "objective_mm": float(o.objective_value),
                    "theta_deg": list(o.pose.theta),
                    "tau_mm": list(o.pose.tau),
                    "iterations": int(o.iterations),
                    "converged": bool(o.converged),
                }
                for o in self.outcomes
            ],
        }


def synthesize_predictions(landmarks: LandmarkSet3D, pose: RigidPose, system: DualFluoroSystem,
                           clip_to_fov: bool = True) -> PredictedLandmarks:
    """Exact projections of the posed model, flagged by field-of-view visibility."""
    posed = pose.apply(landmarks.points)
    views = []
    for geom in system.views:
        uv, _ = project_points(geom, posed)
        if clip_to_fov:
            vis = (np.abs(uv[:, 0]) <= geom.half_width) & (np.abs(uv[:, 1]) <= geom.half_height)
        else:
            vis = np.ones(len(uv), dtype=bool)
        views.append(ViewPrediction(uv, vis))
    return PredictedLandmarks(*views)


def mirror_landmarks(pred: PredictedLandmarks, pairs: Iterable[tuple[int, int]],
                     variant: MirrorVariant) -> PredictedLandmarks:
    """Swap symmetric-pair rows (coordinates with their flags) in the selected views."""
    pairs = list(pairs)
    out = []
    for view, flip in zip(pred.views, variant.mirrors):
        if not flip or not pairs:
            out.append(view)
            continue
        idx = np.arange(len(view))
        for a, b in pairs:
            idx[a], idx[b] = b, a
        out.append(ViewPrediction(view.uv[idx], view.visible[idx]))
    return PredictedLandmarks(*out)


class _Objective:
    """Vectorised registration objective over a fixed landmark subset."""

    def __init__(self, landmarks: LandmarkSet3D, pred: PredictedLandmarks, system: DualFluoroSystem):
        common = pred.common
        if len(common) < MIN_COMMON_LANDMARKS:
            raise TooFewLandmarks(
                f"{len(common)} landmarks visible in both views; need at least {MIN_COMMON_LANDMARKS}")
        self.common = common
        self.model = np.ascontiguousarray(landmarks.points[common])
        self.views = []
        for geom, view in zip(system.views, pred.views):
            src = np.asarray(geom.source)
            n = geom.normal
            target = geom.plane_point(view.uv[common])
            self.views.append((src, n, float((np.asarray(geom.intensifier_center) - src) @ n), target))

    def landing(self, x: np.ndarray) -> list[np.ndarray] | None:
        rot = rotation_matrix(x[:3])
        posed = self.model @ rot.T + x[3:6]
        out = []
        for src, n, depth, _ in self.views:
            d = posed - src
            denom = d @ n
            if np.any(denom * depth <= 1e-12 * np.abs(depth) * np.linalg.norm(d, axis=1)):
                return None
            out.append(src + (depth / denom)[:, None] * d)
        return out

    def residual_vectors(self, x: np.ndarray) -> list[np.ndarray] | None:
        land = self.landing(x)
        if land is None:
            return None
        return [t - v for (_, _, _, t), v in zip(self.views, land)]

    def __call__(self, x: np.ndarray) -> float:
        res = self.residual_vectors(x)
        if res is None:
            return DEGENERATE_PENALTY
        return float(np.sqrt(np.sum(res[0] * res[0])) + np.sqrt(np.sum(res[1] * res[1])))

    def stacked_residuals(self, x: np.ndarray) -> np.ndarray:
        res = self.residual_vectors(x)
        if res is None:
            return np.full(6 * len(self.common), DEGENERATE_PENALTY)
        return np.concatenate([res[0].ravel(), res[1].ravel()])


def objective_mu(pose: RigidPose, landmarks: LandmarkSet3D, pred: PredictedLandmarks,
                 system: DualFluoroSystem) -> float:
    """Sum of per-view Frobenius distances (mm) between predicted and projected landmarks.

    Poses that put a used landmark on or behind a source return
    ``DEGENERATE_PENALTY`` instead of raising.
    """
    return _Objective(landmarks, pred, system)(pose.as_vector())


def landmark_residuals(pose: RigidPose, landmarks: LandmarkSet3D, pred: PredictedLandmarks,
                       system: DualFluoroSystem) -> tuple[np.ndarray, np.ndarray]:
    """Per-landmark distances (mm) in each view; NaN for landmarks not used."""
    obj = _Objective(landmarks, pred, system)
    res = obj.residual_vectors(pose.as_vector())
    out = []
    for k in range(2):
        full = np.full(len(landmarks), np.nan)
        if res is None:
            full[obj.common] = np.inf
        else:
            full[obj.common] = np.linalg.norm(res[k], axis=1)
        out.append(full)
    return out[0], out[1]


def optimize_pose(objective: Callable[[np.ndarray], float], init: RigidPose,
                  step=SIMPLEX_STEP, xtol: float = SIMPLEX_XTOL, ftol: float = SIMPLEX_FTOL,
                  max_iter: int = SIMPLEX_MAX_ITER) -> tuple[RigidPose, float, int, bool]:
    """Nelder–Mead over ``[θx, θy, θz, τx, τy, τz]`` starting at ``init``.

    ``objective`` takes the 6-vector. Returns ``(pose, value, iterations,
    converged)``; a run that hits ``max_iter`` is returned with
    ``converged=False`` rather than raising.
    """
    x0 = init.as_vector()
    if not np.isfinite(objective(x0)):
        raise ValueError("objective is not finite at the initial pose")
    res = nelder_mead(objective, x0, step, xtol=xtol, ftol=ftol, max_iter=max_iter)
    return RigidPose.from_vector(res.x), res.fun, res.nit, res.converged


def optimize_pose_lm(landmarks: LandmarkSet3D, pred: PredictedLandmarks, system: DualFluoroSystem,
                     init: RigidPose, max_iter: int = 200) -> tuple[RigidPose, float, int, bool]:
    """Least-squares alternative: minimise the summed *squared* landing distances.

    Returned value is still the unsquared objective at the solution.
    """
    obj = _Objective(landmarks, pred, system)
    res: OptimizeResult = levenberg_marquardt(obj.stacked_residuals, init.as_vector(), max_iter=max_iter)
    return RigidPose.from_vector(res.x), obj(res.x), res.nit, res.converged


def initial_pose(system: DualFluoroSystem) -> RigidPose:
    """Zero rotation at the system center."""
    return RigidPose((0.0, 0.0, 0.0), tuple(system_center(system)))


def register(landmarks: LandmarkSet3D, pred: PredictedLandmarks, system: DualFluoroSystem,
             variants: Sequence[MirrorVariant] = tuple(MirrorVariant),
             method: str = "simplex") -> RegistrationResult:
    """Register the model once per mirror variant and keep the lowest objective.

    Every run starts from θ = 0 and τ at the system center. Ties go to the
    variant listed first in ``MirrorVariant``.
    """
    if pred.n_vis < MIN_COMMON_LANDMARKS:
        raise TooFewLandmarks(
            f"{pred.n_vis} landmarks visible in both views; need at least {MIN_COMMON_LANDMARKS}")
    init = initial_pose(system)
    outcomes = []
    for variant in variants:
        mirrored = mirror_landmarks(pred, landmarks.symmetric_pairs, variant)
        if mirrored.n_vis < MIN_COMMON_LANDMARKS:
            continue
        if method == "simplex":
            pose, value, nit, conv = optimize_pose(_Objective(landmarks, mirrored, system), init)
        elif method == "lm":
            pose, value, nit, conv = optimize_pose_lm(landmarks, mirrored, system, init)
        else:
            raise ValueError(f"unknown method {method!r}")
        outcomes.append(VariantOutcome(variant, pose, value, nit, conv))
    rank = {v: i for i, v in enumerate(MirrorVariant)}
    best = min(outcomes, key=lambda o: (o.objective_value, rank[o.variant]))
    outcomes.sort(key=lambda o: rank[o.variant])
    mirrored = mirror_landmarks(pred, landmarks.symmetric_pairs, best.variant)
    r1, r2 = landmark_residuals(best.pose, landmarks, mirrored, system)
    return RegistrationResult(
        pose=best.pose,
        objective_value=best.objective_value,
        variant=best.variant,
        residuals_f1=r1,
        residuals_f2=r2,
        iterations=best.iterations,
        converged=best.converged,
        outcomes=outcomes,
    )


# --------------------------------------------------------------------------
# Prediction tables: "index u_mm v_mm visible" per line, one file per view.
# --------------------------------------------------------------------------

def parse_view_table(text: str, n_landmarks: int) -> tuple[np.ndarray, np.ndarray]:
    """Parse an ``index u v visible`` table into dense ``(uv, visible)`` arrays."""
    uv = np.full((n_landmarks, 2), np.nan)
    vis = np.zeros(n_landmarks, dtype=bool)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) != 4:
                raise ValueError("expected 4 columns")
            i = int(parts[0])
            if not 0 <= i < n_landmarks:
                raise ValueError(f"landmark index {i} out of range")
            uv[i] = float(parts[1]), float(parts[2])
            vis[i] = bool(int(parts[3]))
        except ValueError as exc:
            raise ParseError(f"prediction table line {lineno}: {exc}") from None
    return uv, vis


def format_view_table(uv: np.ndarray, visible: np.ndarray, header: Iterable[str] = (),
                      columns: str = "index u_mm v_mm visible") -> str:
    lines = [f"# {h}" for h in header]
    lines.append(f"# {columns}")
    for i, ((u, v), f) in enumerate(zip(uv, visible)):
        if np.isfinite(u) and np.isfinite(v):
            lines.append(f"{i} {float(u)!r} {float(v)!r} {int(bool(f))}")
    return "\n".join(lines) + "\n"


def load_view_prediction(path: str | Path, n_landmarks: int) -> ViewPrediction:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read prediction file {path}: {exc}") from None
    return ViewPrediction(*parse_view_table(text, n_landmarks))


def save_view_prediction(view: ViewPrediction, path: str | Path, header: Iterable[str] = ()) -> None:
    Path(path).write_text(format_view_table(np.asarray(view.uv), view.visible, header))
