from __future__ import annotations

import math

import numpy as np
import pytest

from vortexmf import analytic, domain, mvp
from vortexmf.errors import ConfigurationError

PI = math.pi
MESH = domain.build_disk_mesh(1024, "log")


def constraint_energy(sigma, lam):
    return analytic.disk_energy(sigma, lam) - sigma * analytic.disk_vortex_moment(sigma, lam)


@pytest.mark.parametrize("sigma,lam", [(-0.5, 2 * PI), (0.0, 4 * PI), (0.2, 3.0)])
def test_inversion_recovers_the_multiplier(sigma, lam):
    res = mvp.solve_mvp(MESH, sigma, 0.0, constraint_energy(sigma, lam))
    assert res.status in ("ok", "energy_tolerance")
    assert res.lam == pytest.approx(lam, rel=1e-4)
    assert res.entropy == pytest.approx(analytic.disk_entropy(sigma, lam), abs=1e-4)
    assert res.roots[0] == res.lam


def test_uniform_energy_and_below_e0():
    e0 = mvp.e0_uniform(MESH, 0.0, 0.0)
    assert e0 == pytest.approx(1 / (16 * PI), rel=1e-6)
    res = mvp.solve_mvp(MESH, 0.0, 0.0, 0.5 * e0)
    assert res.status == "below_e0"
    assert res.solution is None


def test_regularized_energy_of_uniform_density_with_vortex():
    e_reg = mvp.e0_uniform(MESH, -0.5, 0.0)
    # int (1/pi) (-log r / 2 pi) over the unit disk = 1 / (4 pi)
    assert e_reg == pytest.approx(1 / (16 * PI) + 0.5 / (4 * PI), rel=1e-6)


def test_default_bracket():
    assert mvp.default_bracket(-0.5)[1] == pytest.approx(min(6 * PI, 8 * PI * 0.999))
    assert mvp.default_bracket(0.0)[1] == pytest.approx(8 * PI * 0.999)
    lo, hi, capped = mvp.default_bracket(0.45)
    assert not capped and hi == pytest.approx(4 * PI / 0.45 * 0.999)
    lo, hi, capped = mvp.default_bracket(0.6)
    assert capped and hi == pytest.approx(16 * PI)


def test_eps_must_be_resolved():
    mesh = domain.build_disk_mesh(64)
    with pytest.raises(ConfigurationError):
        mvp.solve_mvp(mesh, -0.5, 1e-3, 0.05)
    with pytest.raises(ConfigurationError):
        mvp.solve_mvp(mesh, -0.5, -1.0, 0.05)


def test_disk_is_type_one():
    grid = [constraint_energy(-0.5, lam) for lam in (1.0, 4.0, 8.0)]
    report = mvp.classify_domain_type(MESH, -0.5, 0.0, grid)
    assert report.verdict == "TypeI"
    assert [row["label"] for row in report.rows] == ["I", "I", "I"]
    with pytest.raises(ConfigurationError):
        mvp.classify_domain_type(MESH, -0.5, 0.0, grid[::-1])


def test_regularization_limit_is_cauchy():
    mesh = domain.build_disk_mesh(2048)
    target = constraint_energy(-0.5, 2 * PI)
    rep = mvp.mvp_regularization_limit(mesh, -0.5, target, [0.1, 0.05, 0.025])
    assert rep.status == "ok"
    assert rep.cauchy
    assert np.all(np.diff(rep.lam_differences) <= 1e-9)
    with pytest.raises(ConfigurationError):
        mvp.mvp_regularization_limit(mesh, -0.5, target, [0.05, 0.1])
