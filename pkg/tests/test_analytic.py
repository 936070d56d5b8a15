from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from vortexmf import analytic
from vortexmf.errors import ConfigurationError, DomainError

PI = math.pi


def quad_functionals(sigma, lam):
    """Energy, entropy and vortex moment of the explicit disk density by adaptive quadrature."""
    sol = analytic.disk_solution(sigma, lam)
    a = sol.a

    def rho(r):
        return r ** (2 * a) * sol.reduced_density(r) if r > 0 else 0.0

    def psi(r):
        return sol.psi(r)

    opts = dict(limit=400, epsabs=1e-14, epsrel=1e-12)
    mass = quad(lambda r: 2 * PI * r * rho(r), 0, 1, **opts)[0]
    energy = 0.5 * quad(lambda r: 2 * PI * r * rho(r) * psi(r), 0, 1, **opts)[0]
    ent = -quad(lambda r: 2 * PI * r * rho(r) * math.log(rho(r)) if r > 0 else 0.0, 0, 1, **opts)[0]
    moment = quad(lambda r: -2 * PI * r * rho(r) * math.log(r) / (2 * PI) if r > 0 else 0.0, 0, 1, **opts)[0]
    return mass, energy, ent, moment


@pytest.mark.parametrize("sigma", [-0.5, -0.25, 0.0, 0.2])
@pytest.mark.parametrize("frac", [0.1, 0.5, 0.9])
def test_disk_closed_forms_match_quadrature(sigma, frac):
    lam = frac * analytic.lambda_sigma(sigma)
    mass, energy, ent, moment = quad_functionals(sigma, lam)
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert analytic.disk_energy(sigma, lam) == pytest.approx(energy, abs=1e-9)
    assert analytic.disk_entropy(sigma, lam) == pytest.approx(ent, abs=1e-8)
    assert analytic.disk_vortex_moment(sigma, lam) == pytest.approx(moment, abs=1e-9)


def test_disk_solution_solves_the_ode():
    sol = analytic.disk_solution(-0.5, 2 * PI)
    r = np.linspace(0.05, 0.95, 7)
    h = 1e-4
    u = sol.lam_psi
    lap = (u(r + h) - 2 * u(r) + u(r - h)) / h ** 2 + (u(r + h) - u(r - h)) / (2 * h) / r
    rhs = sol.lam * sol.rho(r)
    assert np.allclose(-lap, rhs, rtol=1e-6)
    assert float(u(1.0)) == pytest.approx(0.0, abs=1e-15)


def test_pinned_values():
    assert analytic.disk_energy(0.0, 4 * PI) == pytest.approx((2 * math.log(2) - 1) / (4 * PI), rel=1e-14)
    assert analytic.disk_entropy(0.0, 4 * PI) == pytest.approx(2 + math.log(PI) - 3 * math.log(2), rel=1e-14)
    assert round(analytic.disk_energy(0.0, 4 * PI), 7) == 0.0307403
    assert round(analytic.disk_entropy(0.0, 4 * PI), 7) == 1.0652883


def test_uniform_limits_and_series_continuity():
    assert analytic.disk_energy(0.0, 0.0) == pytest.approx(1 / (16 * PI), rel=1e-15)
    assert analytic.disk_entropy(0.0, 0.0) == pytest.approx(math.log(PI), rel=1e-15)
    # the series branch and the closed form agree across the switch
    for sigma in (-0.5, 0.0, 0.3):
        b_lam = analytic.lambda_sigma(sigma) * 1e-3
        lo, hi = b_lam * (1 - 1e-9), b_lam * (1 + 1e-9)
        assert analytic.disk_energy(sigma, lo) == pytest.approx(analytic.disk_energy(sigma, hi), rel=1e-7)
        assert analytic.disk_entropy(sigma, lo) == pytest.approx(analytic.disk_entropy(sigma, hi), rel=1e-7)


def test_lambda_sigma():
    assert analytic.lambda_sigma(-0.5) == pytest.approx(4 * PI)
    assert analytic.lambda_sigma(0.0) == pytest.approx(8 * PI)
    assert analytic.lambda_sigma(0.3) == pytest.approx(8 * PI)


def test_disk_rejects_supercritical():
    with pytest.raises(DomainError):
        analytic.disk_solution(-0.5, 4 * PI)
    with pytest.raises(ConfigurationError):
        analytic.disk_energy(0.0, -1.0)


@settings(max_examples=40, deadline=None)
@given(sigma=st.floats(-1.0, 0.0), log_g=st.floats(-8.0, 30.0))
def test_gamma_parametrization_round_trip(sigma, log_g):
    g = math.exp(log_g)
    try:
        lam, energy, ent = analytic.disk_state(sigma, g)
    except DomainError:
        return
    assert analytic.disk_entropy_for_energy(sigma, energy) == pytest.approx(ent, rel=1e-9, abs=1e-9)
    if g < 1e6:
        assert analytic.disk_energy(sigma, lam) == pytest.approx(energy, rel=1e-8)


def test_energy_inversion_rejects_energies_below_uniform():
    with pytest.raises(DomainError):
        analytic.disk_entropy_for_energy(0.0, 0.5 / (16 * PI))


@pytest.mark.parametrize("sigma", [0.0, -0.5])
def test_entropy_asymptote(sigma):
    b = 1 / (1 + 2 * abs(sigma))
    for g in (1e6, 1e10):
        _, energy, ent = analytic.disk_state(sigma, g)
        assert ent == pytest.approx(analytic.disk_entropy_asymptote(sigma, energy), abs=1e-4)
    assert analytic.disk_entropy_asymptote_constant(sigma) == pytest.approx(2 - 1 / b + math.log(PI / b))


def test_mass_within_closed_form():
    sol = analytic.disk_solution(-0.25, 5.0)
    r = 0.37
    num = quad(lambda t: 2 * PI * t * float(sol.rho(t)), 0, r, epsabs=1e-13)[0]
    assert float(sol.mass_within(r)) == pytest.approx(num, rel=1e-9)
    assert float(sol.mass_within(1.0)) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# bubbles


@pytest.mark.parametrize("alpha", [-0.5, 0.0, 0.5, 1.0])
def test_singular_bubble_mass_is_exact(alpha):
    b = analytic.bubble_solve(alpha, 0.0)
    assert b.mass == pytest.approx(8 * PI * (1 + alpha), rel=1e-7)
    # closed form of the singular bubble
    exact = b.c - 2 * np.log1p(b.r ** (2 * alpha + 2))
    assert np.allclose(b.phi, exact, atol=1e-7)
    # interpolation between samples
    r = np.array([0.1, 1.0, 3.0])
    assert np.allclose(b.evaluate(r), b.c - 2 * np.log1p(r ** (2 * alpha + 2)), atol=2e-4)


@pytest.mark.parametrize("alpha,t0", [(-0.5, 0.5), (-0.25, 1.0), (0.25, 0.5), (0.5, 1.0), (1.0, 0.5)])
def test_bubble_identity_and_bounds(alpha, t0):
    b = analytic.bubble_solve(alpha, t0)
    assert analytic.bubble_identity_residual(b) < 1e-6
    check = analytic.check_bubble_mass(b)
    assert check["ok"]
    lo, hi = analytic.bubble_mass_bounds(alpha)
    assert lo < b.mass < hi


def test_bubble_input_validation():
    with pytest.raises(ConfigurationError):
        analytic.bubble_solve(-1.0)
    with pytest.raises(ConfigurationError):
        analytic.bubble_solve(0.5, -0.1)


def test_shooting_matches_closed_form():
    sh = analytic.shooting_disk_solution(-0.5, 2 * PI, 0.0)
    assert sh.energy == pytest.approx(analytic.disk_energy(-0.5, 2 * PI), rel=1e-8)
    assert sh.entropy == pytest.approx(analytic.disk_entropy(-0.5, 2 * PI), rel=1e-8)
    assert sh.vortex_moment == pytest.approx(analytic.disk_vortex_moment(-0.5, 2 * PI), rel=1e-8)


def test_oracle_tables(tmp_path):
    rows = analytic.disk_oracle_rows([0.0], [0.5])
    path = tmp_path / "rows.csv"
    analytic.write_rows_csv(path, rows, ["sigma", "lambda", "gamma2", "E", "S"])
    text = path.read_text().splitlines()
    assert text[0] == "sigma,lambda,gamma2,E,S"
    assert len(text) == 2
