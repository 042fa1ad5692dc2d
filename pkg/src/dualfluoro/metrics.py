"""Registration error norms, landmark MSE and gradient-correlation image similarity."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimMismatch, LengthMismatch
from .geometry import RigidPose, wrap_degrees


@dataclass(frozen=True)
class DofErrors:
    eps_theta: float  # degrees
    eps_tau: float  # mm


def angle_difference(a, b):
    """Shortest signed difference ``a - b`` on the circle, degrees in (-180, 180]."""
    return wrap_degrees(np.subtract(a, b, dtype=float))


def dof_errors(manual: RigidPose, predicted: RigidPose) -> DofErrors:
    """Max-abs angular and positional differences between two poses."""
    d_theta = np.abs(angle_difference(manual.theta, predicted.theta))
    d_tau = np.abs(np.subtract(manual.tau, predicted.tau))
    return DofErrors(float(np.max(d_theta)), float(np.max(d_tau)))


def landmark_mse(pred, label) -> float:
    """Mean squared difference of normalized landmark coordinates."""
    p = np.asarray(pred, dtype=float).ravel()
    q = np.asarray(label, dtype=float).ravel()
    if p.shape != q.shape:
        raise LengthMismatch(f"prediction has {p.size} values, label has {q.size}")
    return float(np.mean((p - q) ** 2))


def log10_mse(pred, label) -> tuple[float, float]:
    """``(mse, log10(mse))``; the log is ``-inf`` for a perfect prediction."""
    mse = landmark_mse(pred, label)
    return mse, (math.log10(mse) if mse > 0 else -math.inf)


def _central_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = 0.5 * (img[1:-1, 2:] - img[1:-1, :-2])
    gy = 0.5 * (img[2:, 1:-1] - img[:-2, 1:-1])
    return gx, gy


def _zncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    saa = float(np.sum(a * a))
    sbb = float(np.sum(b * b))
    # relative floor so rounding noise in a flat gradient field counts as degenerate
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), 1.0)
    tiny = (1e-12 * scale) ** 2 * a.size
    if saa <= tiny or sbb <= tiny:
        return 0.0
    return float(np.sum(a * b) / math.sqrt(saa * sbb))


def grad_zncc_phi(a, b) -> float:
    """Zero-normalized cross correlation of image gradients, averaged over x and y.

    Gradients are central differences over the interior pixels. A direction
    in which either gradient field has zero variance contributes 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise DimMismatch(f"image shapes differ or are not 2D: {a.shape} vs {b.shape}")
    if min(a.shape) < 3:
        raise DimMismatch("images must be at least 3x3")
    ax, ay = _central_gradients(a)
    bx, by = _central_gradients(b)
    return 0.5 * (_zncc(ax, bx) + _zncc(ay, by))


@dataclass(frozen=True)
class SimilarityReport:
    phi_raw: tuple[float, float]
    phi: tuple[float, float]  # clamped to [0, 1]
    l_cp: float


def similarity_report(real_x, fake_drr, real_drr, fake_x) -> SimilarityReport:
    raw = (grad_zncc_phi(real_x, fake_drr), grad_zncc_phi(real_drr, fake_x))
    clamped = tuple(min(max(p, 0.0), 1.0) for p in raw)
    return SimilarityReport(raw, clamped, 1.0 - 0.5 * (clamped[0] + clamped[1]))


def content_preserving_loss(real_x, fake_drr, real_drr, fake_x) -> float:
    """``1 - (φ(real X-ray, fake DRR) + φ(real DRR, fake X-ray)) / 2`` with φ clamped to [0, 1]."""
    return similarity_report(real_x, fake_drr, real_drr, fake_x).l_cp


@dataclass(frozen=True)
class ScenarioSummary:
    scenario: str
    n: int
    eps_theta_mean: float
    eps_theta_sd: float
    eps_tau_mean: float
    eps_tau_sd: float


def summarize(errors: Mapping[str, Sequence[DofErrors]]) -> list[ScenarioSummary]:
    """Mean and sample SD of ε_θ / ε_τ per scenario."""
    out = []
    for name, errs in errors.items():
        th = np.array([e.eps_theta for e in errs])
        tau = np.array([e.eps_tau for e in errs])
        ddof = 1 if len(errs) > 1 else 0
        out.append(ScenarioSummary(
            name, len(errs),
            float(th.mean()) if len(th) else math.nan, float(th.std(ddof=ddof)) if len(th) else math.nan,
            float(tau.mean()) if len(tau) else math.nan, float(tau.std(ddof=ddof)) if len(tau) else math.nan,
        ))
    return out


def format_report(rows: Iterable[tuple[str, str, DofErrors]],
                  summaries: Iterable[ScenarioSummary]) -> str:
    """Per-frame table followed by mean ± SD per scenario."""
    lines = ["# frame scenario eps_theta_deg eps_tau_mm"]
    for frame, scenario, e in rows:
        lines.append(f"{frame} {scenario} {e.eps_theta:.6f} {e.eps_tau:.6f}")
    lines.append("# scenario n eps_theta_deg(mean±sd) eps_tau_mm(mean±sd)")
    for s in summaries:
        lines.append(f"{s.scenario} {s.n} {s.eps_theta_mean:.3f}±{s.eps_theta_sd:.3f} "
                     f"{s.eps_tau_mean:.3f}±{s.eps_tau_sd:.3f}")
    return "\n".join(lines) + "\n"
