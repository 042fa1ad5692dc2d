import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualfluoro.errors import ParseError, TooFewLandmarks
from dualfluoro.geometry import FluoroscopeGeometry, DualFluoroSystem, RigidPose, project_points
from dualfluoro.landmarks import LandmarkSet3D
from dualfluoro.metrics import dof_errors
from dualfluoro.optim import levenberg_marquardt, nelder_mead
from dualfluoro.phantom import random_pose
from dualfluoro.registration import (DEGENERATE_PENALTY, MirrorVariant, PredictedLandmarks,
                                     ViewPrediction, format_view_table, initial_pose, landmark_residuals,
                                     mirror_landmarks, objective_mu, optimize_pose, parse_view_table,
                                     register, synthesize_predictions)


def oracle_mu(pose, landmarks, pred, system):
    common = [i for i in range(len(landmarks)) if pred.f1.visible[i] and pred.f2.visible[i]]
    total = 0.0
    for geom, view in zip(system.views, pred.views):
        src = np.array(geom.source)
        diffs = []
        for i in common:
            p = pose.rotation @ landmarks.points[i] + np.array(pose.tau)
            n = np.cross(geom.axis_u, geom.axis_v)
            t = np.dot(np.array(geom.intensifier_center) - src, n) / np.dot(p - src, n)
            v = src + t * (p - src)
            u = (np.array(geom.intensifier_center) + view.uv[i, 0] * np.array(geom.axis_u)
                 + view.uv[i, 1] * np.array(geom.axis_v))
            diffs.append(u - v)
        total += np.sqrt(np.sum(np.square(diffs)))
    return total


def test_mu_zero_at_truth(system, landmarks, rng):
    pose = random_pose(rng, system, landmarks)
    pred = synthesize_predictions(landmarks, pose, system)
    assert objective_mu(pose, landmarks, pred, system) <= 1e-9


def test_mu_positive_off_truth():
    geom = FluoroscopeGeometry(source=(0, 0, 1000), intensifier_center=(0, 0, 0))
    system = DualFluoroSystem(geom, geom)
    lms = LandmarkSet3D(np.array([[0, 0, 0], [30, 0, 0], [0, 40, 10.0]]))
    pose = RigidPose((0, 0, 0), (0, 0, 500))
    pred = synthesize_predictions(lms, pose, system)
    moved = RigidPose((0, 0, 0), (1, 0, 500))
    assert objective_mu(moved, lms, pred, system) > 0


def test_mu_matches_oracle(system, landmarks, rng):
    for _ in range(10):
        truth = random_pose(rng, system, landmarks)
        pred = synthesize_predictions(landmarks, truth, system)
        noisy = PredictedLandmarks(*(ViewPrediction(v.uv + rng.normal(0, 3, v.uv.shape),
                                                    v.visible & (rng.random(len(v)) > 0.2))
                                     for v in pred.views))
        pose = RigidPose(np.add(truth.theta, rng.normal(0, 3, 3)), np.add(truth.tau, rng.normal(0, 5, 3)))
        assert objective_mu(pose, landmarks, noisy, system) == pytest.approx(
            oracle_mu(pose, landmarks, noisy, system), abs=1e-12, rel=1e-12)


def test_mu_non_negative_and_penalised(system, landmarks):
    pred = synthesize_predictions(landmarks, initial_pose(system), system)
    behind = RigidPose((0, 0, 0), (0, 0, 2000))
    assert objective_mu(behind, landmarks, pred, system) == DEGENERATE_PENALTY


def test_too_few_landmarks(system, landmarks):
    pred = synthesize_predictions(landmarks, initial_pose(system), system)
    vis = np.zeros(len(landmarks), dtype=bool)
    vis[:2] = True
    few = PredictedLandmarks(ViewPrediction(pred.f1.uv, vis), pred.f2)
    assert few.n_vis == 2
    with pytest.raises(TooFewLandmarks):
        objective_mu(initial_pose(system), landmarks, few, system)
    with pytest.raises(TooFewLandmarks):
        register(landmarks, few, system)


def test_mirror_variants(system, landmarks):
    pred = synthesize_predictions(landmarks, initial_pose(system), system)
    same = mirror_landmarks(pred, landmarks.symmetric_pairs, MirrorVariant.NONE)
    np.testing.assert_array_equal(same.f1.uv, pred.f1.uv)
    twice = mirror_landmarks(mirror_landmarks(pred, landmarks.symmetric_pairs, MirrorVariant.F1),
                             landmarks.symmetric_pairs, MirrorVariant.F1)
    np.testing.assert_array_equal(twice.f1.uv, pred.f1.uv)
    both = mirror_landmarks(pred, landmarks.symmetric_pairs, MirrorVariant.BOTH)
    for a, b in zip(both.views, pred.views):
        assert np.sum(np.any(a.uv != b.uv, axis=1)) == 26
    f2 = mirror_landmarks(pred, landmarks.symmetric_pairs, MirrorVariant.F2)
    np.testing.assert_array_equal(f2.f1.uv, pred.f1.uv)
    assert [v.value for v in MirrorVariant] == ["none", "f1-mirrored", "f2-mirrored", "both-mirrored"]


def test_mirror_swaps_flags_with_coordinates(landmarks):
    n = len(landmarks)
    uv = np.arange(2 * n, dtype=float).reshape(n, 2)
    vis = np.ones(n, dtype=bool)
    i, j = landmarks.symmetric_pairs[0]
    vis[i] = False
    pred = PredictedLandmarks(ViewPrediction(uv, vis), ViewPrediction(uv, vis))
    out = mirror_landmarks(pred, landmarks.symmetric_pairs, MirrorVariant.F2)
    assert out.f2.visible[j] == False and out.f2.visible[i] == True  # noqa: E712
    np.testing.assert_array_equal(out.f2.uv[i], uv[j])


def test_optimizer_at_minimum_returns_init():
    pose, value, nit, conv = optimize_pose(lambda x: float(np.sum(np.abs(x))), RigidPose())
    np.testing.assert_allclose(pose.as_vector(), 0, atol=1e-6)
    assert value <= 1e-6 and conv


def test_nelder_mead_quadratic_bowl():
    target = np.array([1.0, -2.0, 3.0, 0.5])
    res = nelder_mead(lambda x: float(np.sum((x - target) ** 2 * [1, 2, 3, 4])), np.zeros(4), 1.0)
    assert res.converged
    np.testing.assert_allclose(res.x, target, atol=1e-5)


def test_levenberg_marquardt_history_non_increasing():
    t = np.linspace(0, 1, 20)
    y = 2.0 * np.exp(-1.3 * t) + 0.5
    res = levenberg_marquardt(lambda p: p[0] * np.exp(-p[1] * t) + p[2] - y, np.array([1.0, 0.1, 0.0]))
    assert res.converged
    np.testing.assert_allclose(res.x, [2.0, 1.3, 0.5], atol=1e-7)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


@pytest.mark.parametrize("variant", list(MirrorVariant))
def test_register_selects_variant(system, landmarks, variant):
    truth = RigidPose((12, -8, 20), (-20, 5, 510))
    pred = mirror_landmarks(synthesize_predictions(landmarks, truth, system), landmarks.symmetric_pairs, variant)
    res = register(landmarks, pred, system)
    assert res.variant is variant
    e = dof_errors(truth, res.pose)
    assert e.eps_theta <= 1e-3 and e.eps_tau <= 1e-3
    assert res.objective_value <= 1e-6
    assert [o.variant for o in res.outcomes] == list(MirrorVariant)


def test_register_order_invariant(system, landmarks):
    truth = RigidPose((-5, 10, 3), (10, -10, 500))
    pred = synthesize_predictions(landmarks, truth, system)
    a = register(landmarks, pred, system)
    b = register(landmarks, pred, system, variants=list(reversed(MirrorVariant)))
    assert a.variant is b.variant
    assert a.pose == b.pose


def test_lm_path_agrees(system, landmarks):
    truth = RigidPose((20, 5, -15), (5, 0, 500))
    pred = synthesize_predictions(landmarks, truth, system)
    res = register(landmarks, pred, system, method="lm")
    e = dof_errors(truth, res.pose)
    assert res.variant is MirrorVariant.NONE and e.eps_theta <= 1e-6 and e.eps_tau <= 1e-6


def test_dropping_one_landmark_is_not_decisive(system, landmarks, rng):
    keep = rng.choice(len(landmarks), 10, replace=False)
    sub = LandmarkSet3D(landmarks.points[keep])
    truth = random_pose(rng, system, landmarks)
    pred = synthesize_predictions(sub, truth, system)
    full = register(sub, pred, system, variants=[MirrorVariant.NONE]).pose
    for drop in range(10):
        vis = np.ones(10, dtype=bool)
        vis[drop] = False
        reduced = PredictedLandmarks(ViewPrediction(pred.f1.uv, vis), pred.f2)
        e = dof_errors(full, register(sub, reduced, system, variants=[MirrorVariant.NONE]).pose)
        assert e.eps_theta < 1e-3 and e.eps_tau < 1e-3


def test_residual_report(system, landmarks):
    truth = RigidPose((3, 4, 5), (0, 0, 500))
    pred = synthesize_predictions(landmarks, truth, system)
    vis = pred.f1.visible.copy()
    vis[5] = False
    pred = PredictedLandmarks(ViewPrediction(pred.f1.uv, vis), pred.f2)
    r1, r2 = landmark_residuals(truth, landmarks, pred, system)
    assert np.isnan(r1[5]) and np.isnan(r2[5])
    assert np.nanmax(r1) <= 1e-9
    rec = register(landmarks, pred, system, variants=[MirrorVariant.NONE]).to_record()
    assert rec["residuals_f1_mm"][5] is None and rec["variant"] == "none"


def test_view_table_round_trip(rng):
    uv = rng.normal(0, 50, (33, 2))
    vis = rng.random(33) > 0.3
    back_uv, back_vis = parse_view_table(format_view_table(uv, vis, ["h"]), 33)
    np.testing.assert_array_equal(back_uv, uv)
    np.testing.assert_array_equal(back_vis, vis)
    with pytest.raises(ParseError):
        parse_view_table("0 1.0 2.0\n", 33)
    with pytest.raises(ParseError):
        parse_view_table("40 1.0 2.0 1\n", 33)
    uv2, vis2 = parse_view_table("3 1.5 2.5 1\n", 33)
    assert vis2.sum() == 1 and np.isnan(uv2[0, 0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=6, max_size=6))
def test_mu_is_non_negative(x):
    from dualfluoro.phantom import dual_system, skull_landmarks

    system, lms = dual_system(), skull_landmarks()
    pred = synthesize_predictions(lms, RigidPose((1, 2, 3), (0, 0, 500)), system)
    pose = RigidPose(x[:3], (x[3], x[4], 500 + x[5]))
    mu = objective_mu(pose, lms, pred, system)
    assert mu >= 0
    posed = pose.apply(lms.points)
    if np.allclose(project_points(system.f1, posed)[0], pred.f1.uv, atol=1e-12) and \
            np.allclose(project_points(system.f2, posed)[0], pred.f2.uv, atol=1e-12):
        assert mu <= 1e-9
