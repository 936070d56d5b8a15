from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from vortexmf import domain
from vortexmf.errors import ConfigurationError, DomainError

PI = math.pi


@pytest.mark.parametrize("grading", ["uniform", "log"])
def test_disk_area_and_poisson(grading):
    mesh = domain.build_disk_mesh(512, grading)
    assert mesh.weights.sum() == pytest.approx(PI, rel=1e-12)
    assert mesh.boundary[-1] and not mesh.boundary[:-1].any()
    psi = domain.poisson_solve(mesh, np.ones(mesh.n_nodes))
    exact = (1 - mesh.radii ** 2) / 4
    assert np.max(np.abs(psi - exact)) < 1e-5


def test_grid_poisson_of_constant_matches_series():
    mesh = domain.build_grid_mesh(1.0, 1.0, 1 / 64)
    assert mesh.weights.sum() == pytest.approx(1.0, rel=1e-12)
    psi = domain.poisson_solve(mesh, np.ones(mesh.n_nodes))
    # torsion function of the unit square at its centre
    centre = 0.0
    for m in range(1, 80, 2):
        for n in range(1, 80, 2):
            sign = (-1) ** ((m - 1) // 2 + (n - 1) // 2)
            centre += 16 / (PI ** 4 * m * n * (m * m + n * n)) * sign
    assert psi[mesh.origin_index] == pytest.approx(centre, rel=1e-3)


def test_grid_requires_origin_node():
    with pytest.raises(ConfigurationError):
        domain.build_grid_mesh(1.0, 1.0, 0.1, origin_offset=(0.013, 0.0))
    with pytest.raises(ConfigurationError):
        domain.build_grid_mesh(1.0, 1.0, -0.1)


def test_disk_mesh_validation():
    with pytest.raises(ConfigurationError):
        domain.build_disk_mesh(8)
    with pytest.raises(ConfigurationError):
        domain.build_disk_mesh(64, "cubic")


def test_polar_mesh_integrates_a_peak():
    mesh = domain.build_polar_mesh((0.3, 0.0), n_rings=400, n_angles=32)
    assert mesh.weights.sum() == pytest.approx(PI, rel=1e-6)
    # a narrow bubble centred at the pole of the mesh
    d = 1e-3
    rx, ry = mesh.x - 0.3, mesh.y
    f = 8 * d * d / (d * d + rx ** 2 + ry ** 2) ** 2
    exact = 8 * PI * (1 - d * d / (d * d + 0.7 ** 2))  # mass of the disk of radius 0.7 about the pole
    inside = np.hypot(rx, ry) <= 0.7 + 1e-12
    assert np.sum(mesh.weights[inside] * f[inside]) == pytest.approx(exact, rel=1e-3)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-0.9, 2.0), eps=st.sampled_from([0.0, 1e-3, 0.1]), r_max=st.floats(0.05, 1.0))
def test_radial_quadrature_integrates_the_weight(a, eps, r_max):
    mesh = domain.build_disk_mesh(256, "log")
    t, w = domain.radial_quadrature(mesh.radii, a, eps, r_max)
    exact = quad(lambda r: 2 * PI * r * (eps * eps + r * r) ** a, 0, r_max, limit=200,
                 points=[eps] if 0 < eps < r_max else None)[0]
    assert w.sum() == pytest.approx(exact, rel=1e-8)
    assert np.all(t <= r_max + 1e-15)


def test_radial_quadrature_rejects_nonintegrable():
    radii = np.linspace(0, 1, 32)
    with pytest.raises(DomainError):
        domain.radial_quadrature(radii, -1.0, 0.0)
    with pytest.raises(ConfigurationError):
        domain.radial_quadrature(radii, 0.0, 0.0, r_max=2.0)


def test_weight_spec_and_green():
    spec = domain.WeightSpec(sigma=-0.5, lam=2 * PI, eps=0.0)
    assert spec.a == pytest.approx(-0.25)
    mesh = domain.build_disk_mesh(64)
    h = domain.weight_field(mesh, spec)
    assert np.isinf(h[0]) and h[-1] == pytest.approx(1.0)
    g = domain.regularized_green(mesh, 0.1)
    assert g[-1] == pytest.approx(0.0, abs=1e-15)
    assert g[0] == pytest.approx(math.log((1 + 0.01) / 0.01) / (4 * PI))
    with pytest.raises(ConfigurationError):
        domain.regularized_green(mesh, 0.0)


def test_grid_green_vanishes_on_boundary():
    mesh = domain.build_grid_mesh(2.0, 2.0, 1 / 16, origin_offset=(0.25, 0.0))
    g = domain.regularized_green(mesh, 0.05)
    assert np.all(g[mesh.boundary] == 0)
    assert np.all(g[~mesh.boundary] > 0)


def test_weighted_measure_total_matches_quadrature():
    mesh = domain.build_disk_mesh(400, "log")
    meas = domain.weighted_measure(mesh, k=-2 * PI, eps=0.0)
    exact = quad(lambda r: 2 * PI * r * r ** (2 * -0.5), 0, 1)[0]
    assert meas.total(np.ones(mesh.n_nodes)) == pytest.approx(exact, rel=1e-10)


def test_field_csv_round_trip(tmp_path):
    mesh = domain.build_disk_mesh(32)
    vals = np.sin(mesh.radii)
    path = tmp_path / "sub" / "field.csv"
    domain.write_field_csv(path, mesh, vals)
    cols = domain.read_field_csv(path)
    assert np.array_equal(cols["value"], vals)
    assert np.array_equal(cols["weight"], mesh.weights)
    empty = tmp_path / "empty.csv"
    empty.write_text("node_id,x,y,weight,value\n")
    with pytest.raises(ConfigurationError):
        domain.read_field_csv(empty)
