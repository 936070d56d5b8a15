from __future__ import annotations

import json
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexmf import blowup, domain
from vortexmf.errors import ConfigurationError, DomainError

PI = math.pi


@lru_cache(maxsize=None)
def case_one(sigma):
    return blowup.planted_case_one(sigma, ns=(5, 20, 80, 320), n_nodes=2048)


@lru_cache(maxsize=None)
def case_three(sigma):
    return blowup.planted_case_three(sigma, sup_values=(6.0, 15.0, 25.0, 40.0), n_nodes=2048)


def singular_bubble_member(alpha, n=2048):
    mesh = domain.build_disk_mesh(n, "log", r_min=1e-7)
    v = math.log(8 * (1 + alpha) ** 2) - 2 * np.log1p(mesh.radii ** (2 + 2 * alpha))
    return blowup.FamilyMember(mesh, v, 0.0, sigma=0.0, alpha=alpha)


# ---------------------------------------------------------------------------
# windows and quantized masses


@pytest.mark.parametrize("sigma,lo,hi,regime", [
    (0.25, 8 * PI, 16 * PI, "positive"),
    (-0.5, 4 * PI, 8 * PI, "negative"),
    (0.1, 8 * PI, 10 * PI, "positive"),
    (0.0, 8 * PI, 8 * PI, "regular"),
])
def test_window_examples(sigma, lo, hi, regime):
    w = blowup.quantization_window(sigma)
    assert (w.lower, w.upper) == (pytest.approx(lo), pytest.approx(hi))
    assert w.regime == regime


def test_window_flags():
    assert blowup.quantization_window(0.6).regime == "hypothesis-violation"
    assert blowup.quantization_window(0.5).regime == "open-regime"
    assert blowup.quantization_window(0.3, 4 * PI / 0.3).regime == "open-regime"
    assert blowup.quantization_window(-0.5, 9 * PI).regime == "hypothesis-violation"
    assert not blowup.quantization_window(0.6).contains(8 * PI)


@settings(max_examples=100, deadline=None)
@given(sigma=st.floats(-3.0, 0.499).filter(lambda s: s != 0))
def test_window_is_ordered_and_contains_the_homogeneous_mass(sigma):
    w = blowup.quantization_window(sigma)
    assert w.lower <= w.upper
    if sigma < 0:
        assert w.upper == pytest.approx(8 * PI)
        q = blowup.homogeneous_quantized_mass(sigma)
        assert q.lam_inf == pytest.approx(w.lower)
        assert q.point_mass == pytest.approx(blowup.minimal_mass(sigma, q.lam_inf))
    else:
        assert w.lower == pytest.approx(8 * PI)
        assert w.upper <= 4 * PI / sigma * (1 + 1e-12)


@pytest.mark.parametrize("sigma,lam_inf,point_mass", [
    (0.0, 8 * PI, 8 * PI),
    (0.25, 16 * PI, 16 * PI),
    (-0.5, 4 * PI, 4 * PI),
])
def test_homogeneous_masses(sigma, lam_inf, point_mass):
    q = blowup.homogeneous_quantized_mass(sigma)
    assert q.lam_inf == pytest.approx(lam_inf)
    assert q.point_mass == pytest.approx(point_mass)
    assert not q.bounded_above


def test_homogeneous_mass_flags_strong_vortex():
    q = blowup.homogeneous_quantized_mass(0.6)
    assert q.bounded_above and math.isnan(q.point_mass)
    assert blowup.homogeneous_quantized_mass(0.0, m=3).lam_inf == pytest.approx(24 * PI)
    with pytest.raises(ConfigurationError):
        blowup.homogeneous_quantized_mass(0.0, m=0)


# ---------------------------------------------------------------------------
# numerics


@settings(max_examples=50, deadline=None)
@given(limit=st.floats(-10, 10), c=st.floats(0.1, 5), q=st.floats(0.3, 3))
def test_extrapolation_recovers_power_law_limit(limit, c, q):
    s = np.array([0.1, 0.05, 0.025, 0.0125])
    y = limit + c * s ** q
    value, method = blowup.extrapolate_limit(s, y)
    assert method in ("richardson", "converged")
    assert value == pytest.approx(limit, abs=1e-7 * (1 + abs(limit)) + 1e-6 * c * s[-1] ** q)


def test_extrapolation_fallbacks():
    assert blowup.extrapolate_limit([1.0, 0.5], [1.0, 2.0]) == (2.0, "last")
    assert blowup.extrapolate_limit([1.0, 0.5, 0.25], [1.0, 2.0, 1.0]) == (1.0, "last")
    assert blowup.extrapolate_limit([1.0, 0.5, 0.25], [3.0, 3.0, 3.0])[1] == "converged"


@pytest.mark.parametrize("alpha", [-0.5, 0.0, 0.6])
def test_singular_bubble_member(alpha):
    m = singular_bubble_member(alpha)
    # total mass inside the unit disk
    exact = 8 * PI * (1 + alpha) * (1 - 1 / 2)
    assert m.lam == pytest.approx(exact, rel=1e-6)
    assert m.mass_within(0.5) == pytest.approx(8 * PI * (1 + alpha) * (1 - 1 / (1 + 0.5 ** (2 + 2 * alpha))),
                                               rel=1e-6)
    assert blowup.pohozaev_residual(m, 0.5) < 1e-6


def test_pohozaev_of_constant_field_without_source():
    mesh = domain.build_disk_mesh(256)
    m = blowup.FamilyMember(mesh, np.full(mesh.n_nodes, 2.0), 0.0, 0.0, lam=1.0, alpha=0.0, k_factor=0.0)
    assert blowup.pohozaev_residual(m, 0.5) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ConfigurationError):
        blowup.pohozaev_residual(m, 1.5)


def test_concentration_mass_monotone_and_bounded():
    m = case_one(0.1).members[-1]
    conc = blowup.concentration_mass(m)
    assert np.all(np.diff(conc.masses) >= -1e-12)
    assert conc.beta is not None
    assert conc.beta <= m.lam * (1 + 1e-9)
    assert conc.beta == pytest.approx(8 * PI, rel=2e-2)


def test_member_validation():
    mesh = domain.build_disk_mesh(64)
    with pytest.raises(ConfigurationError):
        blowup.FamilyMember(mesh, np.zeros(3), 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        blowup.FamilyMember(mesh, np.full(64, np.nan), 0.0, 0.0)
    with pytest.raises(DomainError):
        blowup.FamilyMember(mesh, np.zeros(64), 0.0, -1.0, alpha=-1.5, lam=1.0)


# ---------------------------------------------------------------------------
# bounds


def test_sup_inf_rejects_bad_constants():
    fam = case_one(0.1)
    with pytest.raises(ConfigurationError):
        blowup.sup_plus_cinf_check(fam, c0=1.0, alpha_inf=0.2)
    with pytest.raises(DomainError):
        blowup.sup_plus_cinf_check(fam, c0=5.0, alpha_inf=1.0)
    rep = blowup.sup_plus_cinf_check(fam, c0=3.0, alpha_inf=0.2)
    assert rep.c0_floor == pytest.approx(1.2 / 0.8)


def test_ls_decay():
    m = singular_bubble_member(0.0)
    # v + 2 log r = log 8 - 2 log(1 + r^2) + 2 log r <= log 2 on r <= 1
    good = blowup.ls_decay_check(m, d=0.01, c=math.log(2) + 1e-9)
    assert good.hypothesis
    assert good.max_excess <= math.log(2) + 1e-9
    bad = blowup.ls_decay_check(m, d=0.01, c=-10.0)
    assert not bad.hypothesis and bad.conclusion is None and not bad.passed
    empty = blowup.ls_decay_check(m, d=1.0, c=0.0)
    assert empty.passed
    with pytest.raises(ConfigurationError):
        blowup.ls_decay_check(m, d=0.0, c=0.0)


def test_ls_decay_on_concentrating_disk_solutions():
    m = blowup.disk_family(0.0, [1e8], n_nodes=2048).members[0]
    # with d = delta the ball B_4d is sqrt(2) core radii: exactly 1/3 of the mass stays outside
    at_delta = blowup.ls_decay_check(m, m.delta, c=1.0)
    assert at_delta.hypothesis
    assert at_delta.outer_fraction == pytest.approx(1 / 3, rel=1e-3)
    wide = blowup.ls_decay_check(m, math.sqrt(m.delta), c=1.0)
    assert wide.passed and wide.outer_fraction < 1e-3


def test_ls_decay_flat_and_case_one():
    mesh = domain.build_disk_mesh(512)
    flat = blowup.FamilyMember(mesh, np.zeros(mesh.n_nodes), 0.0, 0.0, alpha=0.0)
    chk = blowup.ls_decay_check(flat, 0.01, c=1.0)
    assert chk.hypothesis
    assert chk.outer_fraction == pytest.approx(1 - 0.04 ** 2, rel=1e-6)
    fractions = [blowup.ls_decay_check(m, math.sqrt(m.delta), c=10.0).outer_fraction
                 for m in case_one(0.1).members]
    assert np.all(np.diff(fractions) < 0)
    assert fractions[-1] < 1e-2


def test_ls_decay_outer_mass_is_exact():
    m = singular_bubble_member(0.0)
    chk = blowup.ls_decay_check(m, d=0.05, c=10.0)
    # mass of 8/(1+r^2)^2 on 0.2 <= r <= 1
    outer = 8 * PI * (1 / (1 + 0.2 ** 2) - 1 / 2)
    assert chk.outer_mass == pytest.approx(outer, rel=1e-6)


# ---------------------------------------------------------------------------
# classification


def test_case_one_is_classified():
    rep = blowup.classify_profile(case_one(0.1))
    assert rep.label == "I"
    assert rep.blowing_up
    assert rep.window_flags["beta_in_window"]
    assert rep.window_flags["beta_below_lam_inf"]
    json.dumps(rep.to_dict())


def test_case_three_is_classified():
    fam = case_three(0.1)
    rep = blowup.classify_profile(fam)
    assert rep.label == "III"
    assert rep.lam_inf == pytest.approx(fam.meta["planted"]["lam_inf"], rel=1e-3)


def test_case_two_is_classified():
    fam = blowup.planted_case_two(0.2, ns=(10, 100, 1000), n_rings=400, n_angles=32)
    rep = blowup.classify_profile(fam)
    assert rep.label == "II"


def test_cases_are_exclusive():
    for fam in (case_one(0.1), case_three(0.1)):
        rep = blowup.classify_profile(fam)
        r = rep.ratios
        t = r["threshold"]
        eps_t, x_d = np.array(r["eps_over_t"]), np.array(r["x_over_delta"])
        one = eps_t[-1] > t
        two = bool(np.all(eps_t < t)) and x_d[-1] > t
        three = bool(np.all(eps_t < t)) and bool(np.all(x_d < t))
        assert one + two + three == 1


def test_constant_family_is_not_blowing_up():
    mesh = domain.build_disk_mesh(256)
    members = [blowup.FamilyMember(mesh, np.full(mesh.n_nodes, 1.0), 0.01, 0.1, alpha=0.0) for _ in range(4)]
    fam = blowup.SolutionFamily(members, 0.1)
    assert not fam.is_blowing_up()
    assert blowup.classify_profile(fam).label == "none"


def test_negative_sigma_has_no_profile_case():
    fam = blowup.disk_family(-0.5, np.geomspace(1e2, 1e6, 4), n_nodes=1024)
    rep = blowup.classify_profile(fam)
    assert rep.label == "none"
    assert rep.regime == "negative"
    assert rep.beta == pytest.approx(4 * PI, rel=2e-2)


def test_energy_diverges_along_case_one():
    trend = blowup.high_energy_divergence(blowup.planted_case_one(0.1, n_nodes=2048))
    assert trend.increasing
    assert trend.diverging


def test_manifest_round_trip(tmp_path):
    fam = case_one(0.1)
    path = blowup.save_family(fam, tmp_path / "fam")
    back = blowup.load_family(path)
    assert len(back) == len(fam)
    assert np.allclose(back.lam, fam.lam)
    assert np.allclose(back.sup_v, fam.sup_v)
    assert blowup.classify_profile(back).label == "I"


def test_manifest_errors(tmp_path):
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps({"sigma": 0.1, "members": []}))
    with pytest.raises(ConfigurationError):
        blowup.load_family(p)
    p.write_text("{not json")
    with pytest.raises(ConfigurationError):
        blowup.load_family(p)
    p.write_text(json.dumps({"sigma": 0.1, "members": [{"eps": 0.1}]}))
    with pytest.raises(ConfigurationError):
        blowup.load_family(p)
    with pytest.raises(ConfigurationError):
        blowup.planted_family("IV", 0.1)
