from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexmf import analytic, cvp, domain
from vortexmf.domain import WeightSpec
from vortexmf.errors import ConfigurationError

PI = math.pi


@lru_cache(maxsize=None)
def disk(n=1024, grading="log"):
    return domain.build_disk_mesh(n, grading)


@pytest.mark.parametrize("sigma,frac", [(-0.5, 0.5), (0.0, 0.5), (0.0, 0.9), (0.2, 0.3)])
def test_solver_matches_closed_form(sigma, frac):
    lam = frac * analytic.lambda_sigma(sigma)
    sol = cvp.solve_cvp(disk(), WeightSpec(sigma, lam, 0.0), method="newton")
    assert sol.converged
    exact = analytic.disk_solution(sigma, lam)
    assert np.max(np.abs(sol.psi - exact.psi(disk().radii))) < 1e-5 * max(1.0, exact.psi(0.0))
    assert sol.energy == pytest.approx(analytic.disk_energy(sigma, lam), rel=1e-5)
    assert sol.entropy == pytest.approx(analytic.disk_entropy(sigma, lam), abs=1e-5)
    assert sol.mass == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("sigma,lam,eps", [(-0.5, 2 * PI, 0.05), (0.2, 5.0, 0.05), (0.0, 4 * PI, 0.0)])
def test_multiplier_identity(sigma, lam, eps):
    # log rho - lam psi + sigma lam G_eps is the constant -log Z
    mesh = disk(512)
    sol = cvp.solve_cvp(mesh, WeightSpec(sigma, lam, eps), method="newton")
    g = domain.regularized_green(mesh, eps) if eps > 0 else np.zeros(mesh.n_nodes)
    combo = np.log(sol.rho) - lam * sol.psi + sigma * lam * g
    inner = slice(1, None)
    assert np.std(combo[inner]) <= 1e-6 * max(1.0, abs(np.mean(combo[inner])))


def test_picard_and_newton_agree():
    spec = WeightSpec(-0.25, 6.0, 0.0)
    a = cvp.solve_cvp(disk(256), spec, method="picard")
    b = cvp.solve_cvp(disk(256), spec, method="newton")
    assert a.converged and b.converged
    assert np.max(np.abs(a.psi - b.psi)) < 1e-8


def test_zero_lambda_is_uniform():
    sol = cvp.solve_cvp(disk(), WeightSpec(0.0, 0.0, 0.0))
    assert np.allclose(sol.rho, 1 / PI, rtol=1e-10)
    assert sol.entropy == pytest.approx(math.log(PI), abs=1e-10)


def test_v_solves_unnormalized_equation():
    sol = cvp.solve_cvp(disk(), WeightSpec(0.0, 4 * PI, 0.0), method="newton")
    # with H = 1 the nodal v satisfies int e^v = lam
    assert float(np.dot(disk().weights, np.exp(sol.v))) == pytest.approx(4 * PI, rel=1e-6)


@lru_cache(maxsize=None)
def reference_solution(sigma, lam):
    return cvp.solve_cvp(disk(512), WeightSpec(sigma, lam, 0.0), method="newton")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), case=st.sampled_from([(-0.5, 2 * PI), (0.0, 4 * PI), (0.2, 5.0)]))
def test_free_energy_is_minimized_at_the_solution(seed, case):
    sigma, lam = case
    spec = WeightSpec(sigma, lam, 0.0)
    ref = reference_solution(sigma, lam)
    rng = np.random.default_rng(seed)
    rho = cvp.random_density(disk(512), rng, spec, spread=1.0)
    f_rho = cvp.free_energy(disk(512), rho, spec)
    assert f_rho >= ref.free_energy - 1e-10
    assert cvp.duality_gap(disk(512), rho, spec) >= -1e-12
    # weak duality: J(psi) <= F(rho)
    assert cvp.j_functional(disk(512), ref.psi, spec) <= f_rho + 1e-10


def test_duality_gap_vanishes_at_solution():
    ref = reference_solution(0.0, 4 * PI)
    assert cvp.duality_gap(disk(512), ref.rho, ref.spec) < 1e-10
    assert ref.j_value == pytest.approx(ref.free_energy, abs=1e-9)


def test_solve_at_energy_recovers_lambda():
    lam = 0.9 * 8 * PI
    target = analytic.disk_energy(0.0, lam)
    sol = cvp.solve_at_energy(disk(), 0.0, 0.0, target)
    assert sol.converged
    assert sol.lam == pytest.approx(lam, rel=1e-4)
    with pytest.raises(ConfigurationError):
        cvp.solve_at_energy(disk(), 0.0, 0.0, -1.0)


def test_sweep_curve(tmp_path):
    curve = cvp.sweep_lambda(disk(256), -0.5, 0.0, np.linspace(0.5, 12.0, 6), method="newton")
    assert curve.converged.all() and curve.branch_end is None
    assert np.all(np.diff(curve.E) > 0)
    assert np.all(np.diff(curve.S) < 0)
    path = tmp_path / "curve.csv"
    curve.to_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(cvp.CURVE_COLUMNS)


def test_sweep_rejects_bad_grids():
    with pytest.raises(ConfigurationError):
        cvp.sweep_lambda(disk(64), 0.0, 0.0, [2.0, 1.0])
    with pytest.raises(ConfigurationError):
        cvp.sweep_lambda(disk(64), 0.0, 0.0, [])
    with pytest.raises(ConfigurationError):
        cvp.solve_cvp(disk(64), WeightSpec(0.0, 1.0, 0.0), method="bisection")


def test_grid_solution_is_symmetric():
    mesh = domain.build_grid_mesh(2.0, 2.0, 1 / 16)
    sol = cvp.solve_cvp(mesh, WeightSpec(-0.5, 6.0, 0.1), method="newton")
    assert sol.converged
    ny, nx = mesh.shape
    psi = sol.psi.reshape(ny, nx)
    assert np.allclose(psi, psi.T, atol=1e-10)
    assert np.allclose(psi, psi[::-1], atol=1e-10)
    assert sol.mass == pytest.approx(1.0, abs=1e-12)
