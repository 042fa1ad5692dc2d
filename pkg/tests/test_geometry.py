import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualfluoro.errors import DegenerateRay, ParseError
from dualfluoro.geometry import (DualFluoroSystem, FluoroscopeGeometry, RigidPose, format_system,
                                 is_visible, matrix_to_pose, parse_system, pose_to_matrix,
                                 project_point, project_points, system_center,
                                 wrap_degrees)

angle = st.floats(-179.0, 179.0, allow_nan=False)
coord = st.floats(-500.0, 500.0, allow_nan=False)
vec3 = st.tuples(coord, coord, coord)


def oracle_rotation(theta):
    tx, ty, tz = np.radians(theta)
    rx = np.array([[1, 0, 0], [0, np.cos(tx), -np.sin(tx)], [0, np.sin(tx), np.cos(tx)]])
    ry = np.array([[np.cos(ty), 0, np.sin(ty)], [0, 1, 0], [-np.sin(ty), 0, np.cos(ty)]])
    rz = np.array([[np.cos(tz), -np.sin(tz), 0], [np.sin(tz), np.cos(tz), 0], [0, 0, 1]])
    return rx @ ry @ rz


def test_identity_pose_matrix():
    np.testing.assert_array_equal(pose_to_matrix(RigidPose((0, 0, 0), (0, 0, 0))), np.eye(4))


def test_quarter_turn_about_z():
    out = RigidPose((0, 0, 90)).apply(np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out[0], [0, 1, 0], atol=1e-15)


def test_pose_matches_composed_oracle():
    pose = RigidPose((10, 20, 30), (1, 2, 3))
    expected = oracle_rotation((10, 20, 30)) @ np.ones(3) + [1, 2, 3]
    np.testing.assert_allclose(pose.apply(np.ones((1, 3)))[0], expected, rtol=1e-14)


@settings(max_examples=200)
@given(st.tuples(angle, st.floats(-89.0, 89.0), angle), vec3)
def test_pose_matrix_round_trip(theta, tau):
    back = matrix_to_pose(pose_to_matrix(RigidPose(theta, tau)))
    np.testing.assert_allclose(wrap_degrees(np.subtract(back.theta, theta)), 0, atol=1e-9)
    np.testing.assert_allclose(back.tau, tau, atol=1e-9)


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_degrees_range(a):
    w = wrap_degrees(a)
    assert -180 < w <= 180
    assert np.isclose(np.cos(np.radians(w)), np.cos(np.radians(a)), atol=1e-9)


def test_wrap_degrees_boundary():
    assert wrap_degrees(-180.0) == 180.0
    assert wrap_degrees(540.0) == 180.0


@settings(max_examples=100)
@given(st.tuples(angle, angle, angle), vec3, st.lists(vec3, min_size=2, max_size=6))
def test_rigid_transform_preserves_distances(theta, tau, pts):
    pts = np.array(pts)
    moved = RigidPose(theta, tau).apply(pts)
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d1 = np.linalg.norm(moved[:, None] - moved[None], axis=2)
    np.testing.assert_allclose(d1, d0, rtol=1e-9, atol=1e-9)


@given(st.tuples(angle, angle, angle), vec3)
def test_compose_with_inverse_is_identity(theta, tau):
    p = RigidPose(theta, tau)
    ident = p.compose(p.inverse())
    np.testing.assert_allclose(ident.matrix(), np.eye(4), atol=1e-9)
    pts = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_allclose(RigidPose().compose(p).apply(pts), p.apply(pts), atol=1e-12)


def test_angles_stored_wrapped():
    assert RigidPose((190, -190, 360)).theta == (-170.0, 170.0, 0.0)


def simple_geom():
    return FluoroscopeGeometry(source=(0, 0, 1000), intensifier_center=(0, 0, 0))


def test_similar_triangles_projection():
    uv, landing = project_point(simple_geom(), (10, 0, 500))
    np.testing.assert_allclose(uv, [20, 0], atol=1e-12)
    np.testing.assert_allclose(landing, [20, 0, 0], atol=1e-12)


def test_point_on_plane_is_fixed():
    uv, landing = project_point(simple_geom(), (12.5, -3.0, 0.0))
    np.testing.assert_allclose(landing, [12.5, -3.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(uv, [12.5, -3.0], atol=1e-12)


@pytest.mark.parametrize("p", [(0, 0, 1000), (5, 0, 1000), (0, 0, 1500)])
def test_degenerate_rays(p):
    with pytest.raises(DegenerateRay):
        project_point(simple_geom(), p)


def random_geometry(rng):
    rot = RigidPose(rng.uniform(-180, 180, 3)).rotation
    center = rng.uniform(-200, 200, 3)
    src = center + rot[:, 2] * rng.uniform(500, 1500) + rot[:, :2] @ rng.uniform(-50, 50, 2)
    return FluoroscopeGeometry(source=src, intensifier_center=center, axis_u=rot[:, 0], axis_v=rot[:, 1])


def line_plane_oracle(src, p, center, normal):
    d = p - src
    t = np.dot(center - src, normal) / np.dot(d, normal)
    return src + t * d


def test_projection_collinear_and_matches_oracle(rng):
    for _ in range(200):
        g = random_geometry(rng)
        src = np.array(g.source)
        p = src + (np.array(g.intensifier_center) - src) * rng.uniform(0.2, 0.9) + rng.uniform(-40, 40, 3)
        uv, landing = project_point(g, p)
        np.testing.assert_allclose(landing, line_plane_oracle(src, p, np.array(g.intensifier_center), g.normal),
                                   rtol=1e-9, atol=1e-9)
        a, b = p - src, landing - src
        assert np.linalg.norm(np.cross(a, b)) <= 1e-9 * np.linalg.norm(a) * np.linalg.norm(b)
        # idempotence
        uv2, _ = project_point(g, landing)
        np.testing.assert_allclose(uv2, uv, atol=1e-9)
        np.testing.assert_allclose(g.plane_point(uv), landing, atol=1e-9)


def test_system_center_examples():
    f1 = FluoroscopeGeometry(source=(0, 0, 1000), intensifier_center=(0, 0, 0))
    f2 = FluoroscopeGeometry(source=(1000, 0, 0), intensifier_center=(0, 0, 0),
                             axis_u=(0, 1, 0), axis_v=(0, 0, 1))
    np.testing.assert_allclose(system_center(DualFluoroSystem(f1, f2)), [250, 0, 250])
    f3 = FluoroscopeGeometry(source=(0, 0, 1000), intensifier_center=(0, 0, 0))
    f4 = FluoroscopeGeometry(source=(0, 0, -1000), intensifier_center=(0, 0, 0))
    np.testing.assert_allclose(system_center(DualFluoroSystem(f3, f4)), [0, 0, 0])


def test_system_center_is_mean(system):
    pts = [system.f1.source, system.f1.intensifier_center, system.f2.source, system.f2.intensifier_center]
    np.testing.assert_allclose(system_center(system), np.mean(pts, axis=0), atol=1e-12)


def test_visibility_closed_region():
    g = FluoroscopeGeometry(source=(0, 0, 1000), intensifier_center=(0, 0, 0), half_width=100, half_height=100)
    assert is_visible(g, (0, 0))
    assert not is_visible(g, (100.0001, 0))
    assert is_visible(g, (100, 100))


def test_reexpression_into_f1_frame(rng):
    for _ in range(20):
        f1, f2 = random_geometry(rng), random_geometry(rng)
        sys_ = DualFluoroSystem(f1, f2)
        assert sys_.f1.intensifier_center == (0.0, 0.0, 0.0)
        assert sys_.f1.axis_u == (1.0, 0.0, 0.0) and sys_.f1.axis_v == (0.0, 1.0, 0.0)
        for before, after in ((f1, sys_.f1), (f2, sys_.f2)):
            d0 = np.linalg.norm(np.subtract(before.source, before.intensifier_center))
            d1 = np.linalg.norm(np.subtract(after.source, after.intensifier_center))
            assert abs(d1 - d0) <= 1e-9 * d0
        # relative geometry preserved
        d0 = np.linalg.norm(np.subtract(f1.source, f2.source))
        d1 = np.linalg.norm(np.subtract(sys_.f1.source, sys_.f2.source))
        assert abs(d1 - d0) <= 1e-9 * d0


def test_geometry_validation():
    with pytest.raises(ValueError):
        FluoroscopeGeometry(source=(0, 0, 1), intensifier_center=(0, 0, 0), axis_u=(1, 0, 0), axis_v=(1, 0, 0))
    with pytest.raises(ValueError):
        FluoroscopeGeometry(source=(5, 5, 0), intensifier_center=(0, 0, 0))


def test_with_pose_round_trip(system):
    g = system.f2
    again = g.with_pose(g.pose())
    np.testing.assert_allclose(again.source, g.source, atol=1e-9)
    np.testing.assert_allclose(again.axis_u, g.axis_u, atol=1e-12)


def test_system_file_round_trip(system):
    text = format_system(system, ["hdr"])
    back = parse_system(text)
    for a, b in zip(system.views, back.views):
        np.testing.assert_array_equal(a.source, b.source)
        np.testing.assert_array_equal(a.axis_u, b.axis_u)
        assert a.half_width == b.half_width and a.pixel_pitch == b.pixel_pitch


def test_system_file_errors():
    with pytest.raises(ParseError):
        parse_system("f1 source 0 0\n")
    with pytest.raises(ParseError):
        parse_system("f1 source 0 0 1000\n")


def test_project_points_vectorized(system, landmarks):
    pose = RigidPose((5, -10, 15), tuple(system_center(system)))
    pts = pose.apply(landmarks.points)
    uv, _ = project_points(system.f2, pts)
    for i in (0, 10, 32):
        np.testing.assert_allclose(project_point(system.f2, pts[i])[0], uv[i], atol=1e-12)
