import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import elements, unit_vectors
from reparam import mobius
from reparam.functionals import c0_distance
from reparam.mapspace import (
    FLAT_TORUS,
    UNIT_SPHERE,
    BadProfile,
    DiscreteMap,
    MeshMismatch,
    SobolevParams,
    TargetManifold,
    antipodal_map,
    axis_map,
    bump_perturb,
    constant_map,
    identity_map,
    map_difference,
    meridian_profile,
    power_map,
    pullback,
    radial_map,
    stock_map,
)
from reparam.sphere import build_icosphere, sphere_to_stereo, stereo_to_sphere


def test_sobolev_params_constraint():
    assert SobolevParams().m0 == 1.5
    with pytest.raises(ValueError):
        SobolevParams(1, 4.0)
    with pytest.raises(ValueError):
        SobolevParams(2, 1.0)
    assert SobolevParams(1, 4.0, strict=False).m0 == 0.5
    assert SobolevParams(2, 4.0) == SobolevParams(2, 4.0, strict=False)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4).filter(lambda v: min(np.hypot(v[0], v[1]), np.hypot(v[2], v[3])) > 1e-3))
def test_torus_projection_nearest_point(x):
    x = np.array(x)
    y = FLAT_TORUS.project(x)
    assert np.allclose(FLAT_TORUS.project(y), y, atol=1e-15)
    assert FLAT_TORUS.distance_to(y) < 1e-12
    # any other torus point is at least as far
    rng = np.random.default_rng(0)
    ang = rng.uniform(0, 2 * math.pi, size=(200, 2))
    pts = np.stack([np.cos(ang[:, 0]), np.sin(ang[:, 0]), np.cos(ang[:, 1]), np.sin(ang[:, 1])], axis=1)
    assert np.linalg.norm(x - y) <= np.linalg.norm(pts - x, axis=1).min() + 1e-12


@given(unit_vectors, st.floats(0.1, 3))
def test_sphere_projection(p, s):
    assert np.allclose(UNIT_SPHERE.project(s * p), p, atol=1e-14)


def test_target_parse():
    assert TargetManifold.parse("ambient_R5").dim == 5
    assert TargetManifold.parse("flat_torus_in_R4") == FLAT_TORUS
    with pytest.raises(ValueError):
        TargetManifold("klein_bottle")


def test_map_validation(mesh3):
    with pytest.raises(ValueError):
        DiscreteMap(mesh3, np.zeros((5, 3)))
    bad = mesh3.vertices.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        DiscreteMap(mesh3, bad)
    f = DiscreteMap(mesh3, 2 * mesh3.vertices)
    assert np.abs(np.linalg.norm(f.values, axis=1) - 1).max() < 1e-12
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_json_round_trip(mesh3):
    f = power_map(mesh3, 2)
    g = DiscreteMap.from_json(f.to_json())
    assert np.array_equal(g.values, f.values)
    assert g.target == f.target
    t = DiscreteMap(mesh3, np.tile([1.0, 0, 0, 1], (mesh3.n_vertices, 1)), FLAT_TORUS)
    assert DiscreteMap.from_dict(t.to_dict()).target == FLAT_TORUS


def test_pullback_examples(mesh3):
    f = identity_map(mesh3)
    assert pullback(f, mobius.identity()) is f
    c = constant_map(mesh3, (0.6, 0.8, 0))
    assert np.array_equal(pullback(c, mobius.random_element(9, seed=1)).values, c.values)
    u = mobius.random_rotation(5)
    assert np.abs(pullback(f, u).values - mobius.apply(u, mesh3.vertices)).max() < 1e-9


@given(elements)
def test_constants_fixed_exactly(g):
    c = constant_map(build_icosphere(2), (0, 0, 1))
    assert np.array_equal(pullback(c, g).values, c.values)


def test_action_property(mesh4):
    rng = np.random.default_rng(3)
    names = ("identity", "power2", "axis", "radial")
    for i in range(50):
        f = stock_map(mesh4, names[i % 4])
        g1 = mobius.random_element(2, seed=rng)
        g2 = mobius.random_element(2, seed=rng)
        lhs = pullback(pullback(f, g2), g1)
        rhs = pullback(f, mobius.compose(g2, g1))
        assert c0_distance(lhs, rhs) <= 5 * f.resampling_bound()


def test_values_stay_on_target(mesh3):
    f = power_map(mesh3, 3)
    t = DiscreteMap(mesh3, np.tile([1.0, 0, 0, 1], (mesh3.n_vertices, 1)) + 0.1 * mesh3.vertices[:, [0, 1, 2, 0]], FLAT_TORUS)
    for i in range(10):
        g = mobius.random_element(3, seed=i)
        f = pullback(f, g)
        t = pullback(t, g)
    assert UNIT_SPHERE.distance_to(f.values).max() < 1e-8
    assert FLAT_TORUS.distance_to(t.values).max() < 1e-8


def test_map_difference(mesh3):
    f = identity_map(mesh3)
    assert np.array_equal(map_difference(f, f), np.zeros_like(f.values))
    d = np.linalg.norm(map_difference(f, antipodal_map(mesh3)), axis=1)
    assert np.allclose(d, 2)
    with pytest.raises(MeshMismatch):
        map_difference(f, identity_map(build_icosphere(2)))


def test_c0_consistent_with_difference(mesh3):
    rng = np.random.default_rng(0)
    for _ in range(10):
        f = pullback(identity_map(mesh3), mobius.random_element(3, seed=rng))
        h = bump_perturb(f, rng.normal(size=3), 0.5, 0.3, seed=rng)
        assert c0_distance(f, h) == pytest.approx(np.linalg.norm(map_difference(f, h), axis=1).max())


def test_power_map(mesh3):
    assert np.allclose(power_map(mesh3, 1).values, identity_map(mesh3).values, atol=1e-14)
    f = power_map(mesh3, 2)
    v = mesh3.vertices
    z = sphere_to_stereo(v)
    fin = np.isfinite(z)
    expect = stereo_to_sphere(z[fin] ** 2)
    assert np.abs(f.values[fin] - expect).max() < 1e-12
    assert np.allclose(f.values[v[:, 2] == 1], [0, 0, 1])
    assert np.allclose(f.values[v[:, 2] == -1], [0, 0, -1])
    with pytest.raises(ValueError):
        power_map(mesh3, 0)


def test_power_map_chart_examples():
    # evaluate the chart formula directly at chart points 1 and i
    z, w = mobius.sphere_to_homogeneous(np.array([stereo_to_sphere(1), stereo_to_sphere(1j)]))
    pts = mobius.homogeneous_to_sphere(z**2, w**2)
    assert np.allclose(pts[0], stereo_to_sphere(1), atol=1e-14)
    assert np.allclose(pts[1], stereo_to_sphere(-1), atol=1e-14)


def test_axis_map(mesh3):
    c = axis_map(mesh3, lambda t: np.tile([0.0, 1.0, 0.0], (len(t), 1)))
    assert np.allclose(c.values, constant_map(mesh3, (0, 1, 0)).values)
    f = axis_map(mesh3, meridian_profile)
    assert np.allclose(f.values[:, 2], np.sin(math.pi * mesh3.vertices[:, 2] / 2), atol=1e-12)
    assert np.allclose(f.values[:, 1], 0)
    samples = meridian_profile(np.linspace(-1, 1, 33))
    g = axis_map(mesh3, samples)
    assert c0_distance(f, g) < 0.01
    with pytest.raises(BadProfile):
        axis_map(mesh3, np.zeros((3, 2)))
    with pytest.raises(BadProfile):
        axis_map(mesh3, lambda t: np.stack([t, t, t], axis=-1) * 3)


def test_radial_map_equivariant(mesh4):
    f = radial_map(mesh4, lambda t: t)
    assert np.allclose(f.values, mesh4.vertices, atol=1e-12)
    with pytest.raises(BadProfile):
        radial_map(mesh4, lambda t: 2 * t)


def test_bump_perturb(mesh3):
    f = identity_map(mesh3)
    h = bump_perturb(f, (0, 0, 1), 0.4, 0.2, seed=1)
    far = mesh3.vertices[:, 2] < math.cos(0.4) - 1e-9
    assert np.array_equal(h.values[far], f.values[far])
    assert c0_distance(f, h) > 0.05
    assert np.array_equal(bump_perturb(f, (0, 0, 1), 0.4, 0.2, seed=1).values, h.values)
    with pytest.raises(ValueError):
        bump_perturb(f, (0, 0, 1), 0.4, 0.7)


def test_stock_maps(mesh3):
    for name in ("identity", "antipodal", "constant", "power2", "power3", "axis", "radial"):
        assert stock_map(mesh3, name).values.shape == (642, 3)
    with pytest.raises(ValueError):
        stock_map(mesh3, "nope")
