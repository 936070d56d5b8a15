"""Diagnostics for families of concentrating solutions.

A family member is a nodal field ``v`` on a mesh of the unit disk solving
(exactly or approximately) ``-Laplace v = H e^v`` with the weight

    H(x) = (eps^2 + |x|^2)^alpha * K,      alpha = sigma lam / (4 pi),

where ``K > 0`` is a constant and ``lam = int H e^v``.  Solver output
``v = lam psi + log(lam / Z)`` fits this form with ``K = (1 + eps^2)^-alpha``
(``K = 1`` when ``eps = 0``).

Along a family the maximum ``sup v = v(x_n)`` defines the concentration scale
``delta`` through ``delta^(2 (1 + alpha)) = exp(-sup v)`` and
``t = max(delta, |x_n|)``.  The routines here estimate the concentrated mass,
the limit ``lam_inf``, check the admissible mass windows and classify the
profile near the singular point by the ratios ``eps/t`` and ``|x_n|/delta``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, least_squares

from .analytic import bubble_solve, disk_state, DiskSolution, lambda_sigma
from .domain import (
    DomainMesh,
    build_disk_mesh,
    build_grid_mesh,
    build_polar_mesh,
    disk_mesh_from_radii,
    radial_quadrature,
    read_field_csv,
    regularized_green,
    weighted_measure,
    write_field_csv,
)
from .errors import ConfigurationError, ConvergenceError, DomainError

log = logging.getLogger(__name__)

PI = math.pi
FOUR_PI = 4.0 * math.pi
EIGHT_PI = 8.0 * math.pi

RATIO_THRESHOLD = 10.0
WINDOW_TOL = 0.03


# ---------------------------------------------------------------------------
# members and families


@dataclass(eq=False)
class FamilyMember:
    """One solution of ``-Laplace v = (eps^2 + |x|^2)^alpha K e^v``.

    ``lam`` defaults to the measured ``int H e^v``.  ``alpha`` defaults to
    ``sigma lam / (4 pi)``; when both are omitted the pair is solved
    self-consistently.  Planted members may pass ``alpha`` explicitly.
    """

    mesh: DomainMesh
    v: np.ndarray
    eps: float
    sigma: float
    lam: float | None = None
    alpha: float | None = None
    k_factor: float = 1.0
    parameter: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != (self.mesh.n_nodes,):
            raise ConfigurationError("field length does not match the mesh")
        if not np.all(np.isfinite(self.v)):
            raise ConfigurationError("field contains non-finite values")
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ConfigurationError("eps must be finite and non-negative")
        if not (math.isfinite(self.k_factor) and self.k_factor >= 0):
            raise ConfigurationError("K must be finite and non-negative")
        if not math.isfinite(self.sigma):
            raise ConfigurationError("sigma must be finite")
        if self.lam is None and self.alpha is None:
            self.lam = self._self_consistent_lambda()
        if self.alpha is None:
            self.alpha = self.sigma * self.lam / FOUR_PI
        if self.lam is None:
            self.lam = self.mass_within(1.0)
        self.lam = float(self.lam)
        self.alpha = float(self.alpha)
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigurationError(f"lambda must be positive and finite, got {self.lam}")
        if self.eps == 0 and self.alpha <= -1.0:
            raise DomainError("weight not integrable at the origin (alpha <= -1)")

    # -- weight and masses --------------------------------------------------

    def _mass(self, alpha: float, r: float) -> float:
        mesh = self.mesh
        top = float(np.max(self.v))
        if mesh.is_radial:
            t, w = radial_quadrature(mesh.radii, alpha, self.eps, r_max=r)
            vals = np.exp(np.interp(t, mesh.radii, self.v) - top)
            return float(self.k_factor * math.exp(top) * np.dot(w, vals))
        sel = mesh.radius <= r * (1.0 + 1e-12)
        h = self._weight_at(alpha, mesh.radius[sel])
        return float(math.exp(top) * np.dot(mesh.weights[sel] * h, np.exp(self.v[sel] - top)))

    def _weight_at(self, alpha: float, radius: np.ndarray) -> np.ndarray:
        base = self.eps * self.eps + radius * radius
        with np.errstate(divide="ignore"):
            h = self.k_factor * np.exp(alpha * np.log(base)) if alpha != 0 else np.full(radius.shape, self.k_factor)
        return h

    def _self_consistent_lambda(self) -> float:
        """Root of ``lam = int (eps^2+|x|^2)^(sigma lam/4pi) K e^v``."""
        if self.sigma == 0:
            return self._mass(0.0, 1.0)

        def gap(lam):
            return self._mass(self.sigma * lam / FOUR_PI, 1.0) - lam

        hi = FOUR_PI / abs(self.sigma) * (1.0 - 1e-9) if (self.sigma < 0 and self.eps == 0) else None
        grid = np.geomspace(1e-3, hi if hi else 1e3, 200)
        vals = np.array([gap(x) for x in grid])
        change = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
        if change.size == 0:
            raise ConvergenceError("no self-consistent lambda for this field")
        i = int(change[0])
        return float(brentq(gap, grid[i], grid[i + 1], xtol=1e-13, rtol=1e-14))

    def weight(self) -> np.ndarray:
        """Nodal ``H``."""
        return self._weight_at(self.alpha, self.mesh.radius)

    def mass_within(self, r: float) -> float:
        """``int_{B_r} H e^v``."""
        if not 0 < r <= 1.0 + 1e-12:
            raise ConfigurationError("radius must lie in (0, 1]")
        return self._mass(self.alpha, min(r, 1.0))

    # -- concentration scales ---------------------------------------------

    @property
    def peak_index(self) -> int:
        return int(np.argmax(self.v))

    @property
    def peak(self) -> tuple[float, float]:
        i = self.peak_index
        return float(self.mesh.x[i]), float(self.mesh.y[i])

    @property
    def peak_distance(self) -> float:
        """``|x_n|``."""
        return float(math.hypot(*self.peak))

    @property
    def sup_v(self) -> float:
        return float(self.v[self.peak_index])

    @property
    def delta(self) -> float:
        return math.exp(-self.sup_v / (2.0 * (1.0 + self.alpha)))

    @property
    def t(self) -> float:
        return max(self.delta, self.peak_distance)

    @property
    def boundary_oscillation(self) -> float:
        b = self.v[self.mesh.boundary]
        return float(np.max(b) - np.min(b))

    def summary(self) -> dict:
        return {
            "eps": self.eps, "lambda": self.lam, "alpha": self.alpha, "sigma": self.sigma,
            "K": self.k_factor, "parameter": self.parameter, "sup_v": self.sup_v,
            "x_n": list(self.peak), "delta": self.delta, "t": self.t,
            "boundary_oscillation": self.boundary_oscillation,
        }


@dataclass
class SolutionFamily:
    """Ordered members sharing the vortex strength ``sigma``."""

    members: list
    sigma: float
    name: str = ""
    parameter_name: str = "n"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("a family needs at least one member")
        for m in self.members:
            if m.sigma != self.sigma:
                raise ConfigurationError("all members must share sigma")

    def __len__(self) -> int:
        return len(self.members)

    def _col(self, fn) -> np.ndarray:
        return np.array([fn(m) for m in self.members], dtype=float)

    @property
    def lam(self) -> np.ndarray:
        return self._col(lambda m: m.lam)

    @property
    def eps(self) -> np.ndarray:
        return self._col(lambda m: m.eps)

    @property
    def delta(self) -> np.ndarray:
        return self._col(lambda m: m.delta)

    @property
    def sup_v(self) -> np.ndarray:
        return self._col(lambda m: m.sup_v)

    @property
    def t(self) -> np.ndarray:
        return self._col(lambda m: m.t)

    @property
    def peak_distance(self) -> np.ndarray:
        return self._col(lambda m: m.peak_distance)

    @property
    def parameters(self) -> np.ndarray:
        return np.array([i if m.parameter is None else m.parameter
                         for i, m in enumerate(self.members)], dtype=float)

    def is_blowing_up(self) -> bool:
        """``sup v`` strictly increasing along the members."""
        s = self.sup_v
        return len(s) >= 2 and bool(np.all(np.diff(s) > 0))


# ---------------------------------------------------------------------------
# concentration mass and windows


@dataclass
class ConcentrationMass:
    radii: np.ndarray
    masses: np.ndarray
    beta: float | None
    plateau_radius: float | None
    interval: tuple[float, float]

    def to_dict(self) -> dict:
        return {"radii": self.radii.tolist(), "masses": self.masses.tolist(), "beta": self.beta,
                "plateau_radius": self.plateau_radius, "interval": list(self.interval)}


def _default_radii(member: FamilyMember) -> np.ndarray:
    d = member.mesh.radius
    r_lo = max(float(np.min(d[d > 0])) * 2.0, 1e-14)
    k = int(math.floor(math.log2(1.0 / r_lo)))
    return 2.0 ** -np.arange(min(k, 60), -1, -1, dtype=float)


def concentration_mass(member: FamilyMember, radii=None, plateau_tol: float = 1e-3) -> ConcentrationMass:
    """Masses ``beta_r = int_{B_r} H e^v`` and the plateau estimate of ``beta``.

    ``radii`` default to the dyadic radii ``2^-k`` down to the mesh scale.  The
    plateau radius is the smallest ``r`` such that every doubling from ``r`` up
    to the largest radius adds less than ``plateau_tol * lam``.  Without a
    plateau ``beta`` is ``None`` and only ``interval`` is meaningful.
    """
    radii = _default_radii(member) if radii is None else np.sort(np.asarray(radii, dtype=float))
    if radii.size == 0 or radii[0] <= 0 or radii[-1] > 1.0 + 1e-12:
        raise ConfigurationError("radii must lie in (0, 1]")
    masses = np.maximum.accumulate(np.array([member.mass_within(float(r)) for r in radii]))
    tol = plateau_tol * member.lam
    beta = rad = None
    lookup = {float(r): m for r, m in zip(radii, masses)}
    for i in range(radii.size - 1, -1, -1):
        r = float(radii[i])
        two = lookup.get(2.0 * r)
        if two is None:
            if 2.0 * r <= radii[-1] * (1 + 1e-12):
                two = member.mass_within(2.0 * r)
            else:
                continue
        if two - masses[i] < tol:
            beta, rad = float(masses[i]), r
        else:
            break
    return ConcentrationMass(radii, masses, beta, rad, (float(masses[0]), float(masses[-1])))


@dataclass
class QuantizationWindow:
    lower: float
    upper: float
    regime: str
    note: str = ""

    def contains(self, value: float, rel_tol: float = WINDOW_TOL) -> bool:
        if not math.isfinite(self.lower):
            return False
        return self.lower * (1.0 - rel_tol) <= value <= self.upper * (1.0 + rel_tol)

    def to_dict(self) -> dict:
        return asdict(self)


def quantization_window(sigma: float, lam_inf: float | None = None, tol: float = 1e-2) -> QuantizationWindow:
    """Admissible range of ``lam_inf`` for a blow-up family at a singular point.

    ``regime`` is ``"negative"``, ``"regular"`` (``sigma = 0``), ``"positive"``,
    ``"open-regime"`` (``lam_inf = 4 pi/sigma`` with ``sigma`` in ``[1/4, 1/2]``,
    or ``sigma = 1/2``) or ``"hypothesis-violation"``.
    """
    if not math.isfinite(sigma):
        raise ConfigurationError("sigma must be finite")
    nan = float("nan")
    if sigma < 0:
        cap = FOUR_PI / abs(sigma)
        if lam_inf is not None and lam_inf >= cap:
            return QuantizationWindow(nan, nan, "hypothesis-violation",
                                      f"lam_inf must stay below 4 pi/|sigma| = {cap:.6g}")
        return QuantizationWindow(EIGHT_PI / (1.0 + 2.0 * abs(sigma)), EIGHT_PI, "negative")
    if sigma == 0:
        return QuantizationWindow(EIGHT_PI, EIGHT_PI, "regular")
    if sigma > 0.5:
        return QuantizationWindow(nan, nan, "hypothesis-violation", "sigma must not exceed 1/2")
    cap = FOUR_PI / sigma
    upper = cap if sigma == 0.5 else min(EIGHT_PI / (1.0 - 2.0 * sigma), cap)
    if lam_inf is not None and lam_inf > cap * (1.0 + tol):
        return QuantizationWindow(EIGHT_PI, upper, "hypothesis-violation",
                                  "lam_inf above 4 pi/sigma: blow-up without concentration")
    if sigma == 0.5 or (sigma >= 0.25 and lam_inf is not None and abs(lam_inf - cap) <= tol * cap):
        return QuantizationWindow(EIGHT_PI, upper, "open-regime", "lam_inf = 4 pi/sigma is not covered")
    return QuantizationWindow(EIGHT_PI, upper, "positive")


@dataclass
class QuantizedMass:
    point_mass: float
    lam_inf: float
    bounded_above: bool

    def to_dict(self) -> dict:
        return asdict(self)


def homogeneous_quantized_mass(sigma_j: float, lam_inf: float | None = None, m: int = 1) -> QuantizedMass:
    """Quantized masses for ``m`` blow-up points and one vortex of strength ``sigma_j``.

    Returns ``lam_inf = 8 pi m / (1 - 2 sigma_j)`` and the mass at the singular
    point ``8 pi (1 + lam_inf sigma_j / 4 pi)`` (using the given ``lam_inf`` when
    provided).  For ``sigma_j >= 1/2`` solutions stay bounded above near the
    vortex; the masses are NaN and ``bounded_above`` is set.
    """
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ConfigurationError("m must be a positive integer")
    if sigma_j >= 0.5:
        return QuantizedMass(float("nan"), float("nan"), True)
    closed = EIGHT_PI * int(m) / (1.0 - 2.0 * sigma_j)
    lam = closed if lam_inf is None else float(lam_inf)
    return QuantizedMass(EIGHT_PI * (1.0 + lam * sigma_j / FOUR_PI), closed, False)


def minimal_mass(sigma: float, lam_inf: float) -> float:
    """Lower bound on the concentrated mass: ``8 pi (1 + alpha_inf)`` or ``8 pi``."""
    if sigma < 0:
        return EIGHT_PI * (1.0 + sigma * lam_inf / FOUR_PI)
    return EIGHT_PI


# ---------------------------------------------------------------------------
# limit extrapolation


def extrapolate_limit(scale, values) -> tuple[float, str]:
    """Limit of ``values`` as ``scale -> 0`` assuming ``value = L + C scale^q``.

    ``q`` is fitted from the last three members.  The last value is returned
    when the last step is below ``1e-6`` relative (method ``"converged"``) or
    when the sequence is not monotonically converging (method ``"last"``).
    """
    s = np.asarray(scale, dtype=float)
    y = np.asarray(values, dtype=float)
    if y.size < 3:
        return float(y[-1]), "last"
    (p1, p2, p3), (v1, v2, v3) = s[-3:], y[-3:]
    d1, d2 = v2 - v1, v3 - v2
    if abs(d2) <= 1e-6 * abs(v3):
        return float(v3), "converged"
    if not (p1 > p2 > p3 > 0) or d1 == 0:
        return float(v3), "last"
    ratio = d2 / d1
    if not 0.0 < ratio < 1.0:
        return float(v3), "last"

    def gap(q):
        return (p3 ** q - p2 ** q) / (p2 ** q - p1 ** q) - ratio

    try:
        q = brentq(gap, 1e-3, 20.0, xtol=1e-12)
    except ValueError:
        return float(v3), "last"
    c = d2 / (p3 ** q - p2 ** q)
    return float(v3 - c * p3 ** q), "richardson"


# ---------------------------------------------------------------------------
# Pohozaev identity


def _local_cubic(r: np.ndarray, v: np.ndarray, x: float) -> tuple[float, float]:
    """Value and derivative at ``x`` of the cubic through the 4 nearest nodes."""
    i = int(np.clip(np.searchsorted(r, x) - 2, 0, r.size - 4))
    c = np.polyfit(r[i:i + 4] - x, v[i:i + 4], 3)
    return float(c[3]), float(c[2])


def pohozaev_residual(member: FamilyMember, r: float) -> float:
    """Relative residual of the radial Pohozaev identity on ``B_r``.

    For radial ``v`` the identity reads
    ``-pi r^2 v'(r)^2 = 2 pi r^2 W(r) e^v(r) - int_{B_r} (2 W + x.grad W) e^v``
    with ``W = (eps^2 + |x|^2)^alpha K``.  Returns
    ``|LHS - RHS| / (1 + |RHS|)``.
    """
    mesh = member.mesh
    if not mesh.is_radial:
        raise ConfigurationError("the Pohozaev residual is implemented for radial meshes")
    radii = mesh.radii
    if not radii[3] < r < radii[-1]:
        raise ConfigurationError("r must lie strictly inside the mesh")
    if np.searchsorted(radii, r) < 16:
        warnings.warn(f"radius {r:g} is resolved by fewer than 16 cells", RuntimeWarning, stacklevel=2)
    v_r, dv = _local_cubic(radii, member.v, r)
    a, e2, k = member.alpha, member.eps ** 2, member.k_factor
    w_r = k * (e2 + r * r) ** a
    t, w = radial_quadrature(radii, a, member.eps, r_max=r)
    bulk = k * float(np.dot(w, np.exp(np.interp(t, radii, member.v)) * (2.0 + 2.0 * a * t * t / (e2 + t * t))))
    lhs = -PI * r * r * dv * dv
    rhs = 2.0 * PI * r * r * w_r * math.exp(v_r) - bulk
    return abs(lhs - rhs) / (1.0 + abs(rhs))


# ---------------------------------------------------------------------------
# sup + C inf


@dataclass
class SupInfReport:
    values: list
    mean: float
    spread: float
    bounded: bool
    c0: float
    c0_floor: float
    alpha_inf: float

    def to_dict(self) -> dict:
        return asdict(self)


def sup_plus_cinf_check(family: SolutionFamily, c0: float, compact_radius: float = 0.5,
                        alpha_inf: float | None = None, spread_tol: float = 0.2) -> SupInfReport:
    """``sup_{B_r} v + C0 inf v`` per member and its relative spread.

    Requires ``alpha_inf < 1`` and ``C0 > max(1, (1 + alpha_inf)/(1 - alpha_inf))``;
    ``alpha_inf`` defaults to ``sigma lam_inf / 4 pi``.
    """
    if alpha_inf is None:
        lam_inf, _ = extrapolate_limit(family.delta, family.lam)
        alpha_inf = family.sigma * lam_inf / FOUR_PI
    if not -1.0 < alpha_inf < 1.0:
        raise DomainError(f"sup + C inf needs alpha_inf in (-1, 1), got {alpha_inf:.6g}")
    floor = max(1.0, (1.0 + alpha_inf) / (1.0 - alpha_inf))
    if not c0 > floor:
        raise ConfigurationError(f"C0 must exceed {floor:.6g}")
    if not 0 < compact_radius < 1:
        raise ConfigurationError("compact radius must lie in (0, 1)")
    vals = []
    for m in family.members:
        inner = m.mesh.radius <= compact_radius
        vals.append(float(np.max(m.v[inner]) + c0 * np.min(m.v)))
    arr = np.array(vals)
    mean = float(np.mean(arr))
    spread = float((arr.max() - arr.min()) / abs(mean)) if mean != 0 else float("inf")
    return SupInfReport(vals, mean, spread, bool(spread < spread_tol), float(c0), floor, float(alpha_inf))


# ---------------------------------------------------------------------------
# decay check


@dataclass
class DecayCheck:
    hypothesis: bool
    max_excess: float
    outer_mass: float
    outer_fraction: float
    conclusion: bool | None

    @property
    def passed(self) -> bool:
        return self.hypothesis and bool(self.conclusion)

    def to_dict(self) -> dict:
        return asdict(self)


def ls_decay_check(member: FamilyMember, d: float, c: float, mass_fraction: float = 0.05) -> DecayCheck:
    """Check ``v + 2 (1 + alpha) log|x| <= C`` on ``4 d <= |x| <= 1`` and the outer mass.

    When the bound holds, ``conclusion`` states whether
    ``int_{B_1 \\ B_4d} H e^v <= mass_fraction * lam``.
    """
    if not d > 0:
        raise ConfigurationError("d must be positive")
    rad = member.mesh.radius
    sel = (rad >= 4.0 * d) & (rad <= 1.0)
    if not np.any(sel):
        # empty annulus: nothing to check
        return DecayCheck(True, float("-inf"), 0.0, 0.0, True)
    excess = member.v[sel] + 2.0 * (1.0 + member.alpha) * np.log(rad[sel])
    top = float(np.max(excess))
    hyp = top <= c
    outer = member.lam - member.mass_within(min(4.0 * d, 1.0)) if 4.0 * d < 1.0 else 0.0
    outer = max(outer, 0.0)
    frac = outer / member.lam
    return DecayCheck(bool(hyp), top, float(outer), float(frac), bool(frac <= mass_fraction) if hyp else None)


# ---------------------------------------------------------------------------
# energies


def member_energy(member: FamilyMember) -> float:
    """``1/2 int rho G[rho] - sigma int rho G_eps`` for ``rho = H e^v / lam``."""
    mesh, a, eps = member.mesh, member.alpha, member.eps
    if mesh.kind == "polar":
        raise ConfigurationError("energies need a mesh with a Poisson operator")
    top = float(np.max(member.v))
    if mesh.is_radial:
        meas = weighted_measure(mesh, FOUR_PI * a, eps, cache=False)
        shift = a * math.log1p(eps * eps) if eps > 0 else 0.0
        f = member.k_factor * np.exp(member.v - top + shift)
        total = meas.total(f)
        f = f / total
        load = meas.load(f)
        psi = mesh.solve_load(load)
        return 0.5 * float(load @ psi) - member.sigma * meas.moment_g(f)
    if not eps > 0:
        raise ConfigurationError("grid energies need eps > 0")
    g = regularized_green(mesh, eps)
    q = mesh.weights * member.weight() * np.exp(member.v - top)
    q = q / q.sum()
    psi = mesh.solve_load(q)
    return 0.5 * float(q @ psi) - member.sigma * float(q @ g)


@dataclass
class EnergyTrend:
    parameters: list
    energies: list
    increasing: bool
    ratio: float
    parameter_span: float
    diverging: bool

    def to_dict(self) -> dict:
        return asdict(self)


def high_energy_divergence(family: SolutionFamily, ratio_threshold: float = RATIO_THRESHOLD) -> EnergyTrend:
    """Energies of ``rho_n = H_n e^(v_n) / lam_n`` along the family and their trend."""
    if not 0 < family.sigma < 0.5:
        log.info("energy trend requested outside 0 < sigma < 1/2 (sigma=%g)", family.sigma)
    e = np.array([member_energy(m) for m in family.members])
    p = family.parameters
    inc = bool(e.size >= 2 and np.all(np.diff(e) > 0))
    ratio = float(e[-1] / e[0]) if e[0] > 0 else float("inf") if e[-1] > 0 else float("nan")
    pos = np.abs(p[p != 0])
    span = float(pos.max() / pos.min()) if pos.size else float("nan")
    return EnergyTrend(p.tolist(), e.tolist(), inc, ratio, span, bool(inc and ratio > ratio_threshold))


# ---------------------------------------------------------------------------
# profile classification


@dataclass
class BlowupReport:
    """Diagnosis of a family; ``to_dict`` gives the JSON form."""

    sigma: float
    n_members: int
    blowing_up: bool
    beta: float | None
    beta_interval: tuple
    lam_inf: float
    lam_inf_method: str
    label: str
    regime: str
    window: dict
    window_flags: dict
    ratios: dict
    fit: dict
    pohozaev: list
    energy: dict | None
    members: list
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _tends_to_infinity(x: np.ndarray, threshold: float) -> bool:
    return bool(x[-1] > threshold and (x.size < 2 or np.all(np.diff(x) > 0)))


def _bounded(x: np.ndarray, threshold: float) -> bool:
    return bool(np.all(x < threshold))


def _fit_annulus(member: FamilyMember, center: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    mesh = member.mesh
    d = np.hypot(mesh.x - center[0], mesh.y - center[1])
    levels = np.unique(np.round(d[d > 0], 14))
    inner = levels[min(1, levels.size - 1)]
    sel = (d > inner) & (mesh.radius <= 0.9)
    return d[sel], member.v[sel]


def _fit_power_profile(member: FamilyMember, a_guess: float) -> dict:
    """Least squares for ``v = sup v + C - 2 log(1 + A d^p)``, ``p = lam / 4 pi``."""
    d, v = _fit_annulus(member, member.peak)
    p = member.lam / FOUR_PI
    v0 = member.sup_v
    ld = np.log(d)

    def model(x):
        return v0 + x[1] - 2.0 * np.logaddexp(0.0, x[0] + p * ld)

    res = least_squares(lambda x: model(x) - v, x0=[math.log(a_guess), 0.0], method="lm",
                        xtol=1e-14, ftol=1e-14)
    resid = float(np.max(np.abs(model(res.x) - v)))
    return {"log_A": float(res.x[0]), "offset": float(res.x[1]), "exponent": p,
            "residual": resid, "n_points": int(d.size)}


def _fit_case_one(member: FamilyMember) -> dict:
    a, eps = member.alpha, member.eps
    xn = member.peak_distance
    theta_pow = (eps / member.delta) ** (2.0 * (1.0 + a))
    gamma_pred = (1.0 + (xn / eps) ** 2) ** a * member.k_factor / 8.0
    p = member.lam / FOUR_PI
    out = _fit_power_profile(member, gamma_pred * theta_pow * eps ** -p)
    out["theta"] = eps / member.delta
    out["gamma"] = math.exp(out["log_A"]) * eps ** p / theta_pow
    out["gamma_expected"] = gamma_pred
    return out


def _fit_case_two(member: FamilyMember) -> dict:
    a, eps = member.alpha, member.eps
    xn = member.peak_distance
    theta_pow = (xn / member.delta) ** (2.0 * (1.0 + a))
    gamma_pred = ((eps / xn) ** 2 + 1.0) ** a * member.k_factor / 8.0
    p = member.lam / FOUR_PI
    out = _fit_power_profile(member, gamma_pred * theta_pow * xn ** -p)
    out["theta"] = xn / member.delta
    out["gamma"] = math.exp(out["log_A"]) * xn ** p / theta_pow
    out["gamma_expected"] = gamma_pred
    return out


def _fit_case_three(member: FamilyMember, alpha_inf: float) -> dict:
    delta = member.delta
    eps0 = member.eps / delta
    c = math.log(member.k_factor) if member.k_factor > 0 else 0.0
    bub = bubble_solve(alpha_inf, eps0, c)
    d, v = _fit_annulus(member, member.peak)
    pred = member.sup_v + bub.evaluate(d / delta) - c
    resid = float(np.max(np.abs(pred - v)))
    return {"eps0": eps0, "alpha": alpha_inf, "beta_tilde": bub.mass, "residual": resid,
            "n_points": int(d.size)}


def classify_profile(family: SolutionFamily, ratio_threshold: float = RATIO_THRESHOLD, *,
                     plateau_tol: float = 1e-3, window_tol: float = WINDOW_TOL,
                     pohozaev_radius: float = 0.5, with_energy: bool = False) -> BlowupReport:
    """Concentration mass, ``lam_inf``, mass windows and the profile case of a family.

    Case I: ``eps/t`` grows beyond ``ratio_threshold``.  Case II: ``eps/t``
    stays below it while ``|x_n|/delta`` grows beyond it.  Case III: both stay
    bounded.  Anything else, or ``sigma`` outside ``(0, 1/2)``, is labelled
    ``"none"``.  Cases I/II are fitted with the power profile of exponent
    ``lam_n / 4 pi``; Case III is matched against the bubble with
    ``t0 = eps/delta`` and ``alpha = sigma lam_inf / 4 pi``.
    """
    sigma = family.sigma
    notes = []
    last = family.members[-1]
    blowing = family.is_blowing_up()
    conc = concentration_mass(last, plateau_tol=plateau_tol)
    lam_inf, method = extrapolate_limit(family.delta, family.lam)
    window = quantization_window(sigma, lam_inf)
    beta = conc.beta
    if beta is None:
        notes.append("no mass plateau on the last member")
    flags = {
        "lam_inf_in_window": window.contains(lam_inf, window_tol),
        "beta_in_window": beta is not None and window.contains(beta, window_tol),
        "beta_above_minimal_mass": beta is not None and beta >= minimal_mass(sigma, lam_inf) * (1.0 - window_tol),
        "beta_below_lam_inf": beta is not None and beta <= lam_inf * (1.0 + 1e-6) + 1e-6,
        "boundary_oscillation": max(m.boundary_oscillation for m in family.members),
    }
    eps_t = family.eps / family.t
    x_d = family.peak_distance / family.delta
    ratios = {"eps_over_t": eps_t.tolist(), "x_over_delta": x_d.tolist(), "threshold": ratio_threshold}

    label, fit = "none", {}
    regime = window.regime
    if not blowing:
        notes.append("sup v is not increasing: no blow-up")
    elif not 0 < sigma < 0.5:
        notes.append("profile cases are defined for 0 < sigma < 1/2")
    elif regime == "hypothesis-violation":
        notes.append(window.note)
    else:
        if regime == "open-regime":
            notes.append(window.note)
        if _tends_to_infinity(eps_t, ratio_threshold):
            label = "I"
        if _bounded(eps_t, ratio_threshold):
            if _tends_to_infinity(x_d, ratio_threshold):
                label = "II"
            elif _bounded(x_d, ratio_threshold):
                label = "III"
        try:
            if label == "I":
                fit = _fit_case_one(last)
            elif label == "II":
                fit = _fit_case_two(last)
            elif label == "III":
                fit = _fit_case_three(last, sigma * lam_inf / FOUR_PI)
        except (ConvergenceError, ConfigurationError, DomainError) as exc:
            notes.append(f"profile fit failed: {exc}")
        if label == "none":
            notes.append("ratio tests are indeterminate")

    poho = []
    for m in family.members:
        if m.mesh.is_radial:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                poho.append(pohozaev_residual(m, pohozaev_radius))
        else:
            poho.append(None)
    energy = high_energy_divergence(family, ratio_threshold).to_dict() if with_energy else None
    return BlowupReport(
        sigma=sigma, n_members=len(family), blowing_up=blowing, beta=beta,
        beta_interval=conc.interval, lam_inf=lam_inf, lam_inf_method=method, label=label,
        regime=regime, window=window.to_dict(), window_flags=flags, ratios=ratios, fit=fit,
        pohozaev=poho, energy=energy, members=[m.summary() for m in family.members], notes=notes,
    )


# ---------------------------------------------------------------------------
# planted families


def _profile_mesh(core: float, n_nodes: int) -> DomainMesh:
    return build_disk_mesh(n_nodes, "log", r_min=min(1e-3 * core, 1e-6), log_fraction=0.6)


def disk_family(sigma: float, gamma2_values, n_nodes: int = 4096) -> SolutionFamily:
    """Closed-form disk solutions ``v = lam psi + log(lam / Z)`` with growing ``gamma^2``."""
    members = []
    for g in gamma2_values:
        lam, _, _ = disk_state(sigma, float(g))
        a = sigma * lam / FOUR_PI
        sol = DiskSolution(sigma, lam, a, 1.0 + a, float(g))
        core = float(g) ** (-1.0 / (2.0 * sol.b))
        mesh = _profile_mesh(core, n_nodes)
        v = sol.lam_psi(mesh.radii) + math.log(lam / sol.normalizer)
        members.append(FamilyMember(mesh, v, 0.0, sigma, lam=lam, parameter=lambda_sigma(sigma) - lam,
                                    meta={"gamma2": float(g)}))
    return SolutionFamily(members, sigma, name=f"disk sigma={sigma:g}", parameter_name="lambda_sigma - lambda",
                          meta={"planted": {"kind": "disk", "lam_inf": lambda_sigma(sigma)}})


def planted_case_one(sigma: float, ns=(2, 5, 10, 20, 50, 100, 200), n_nodes: int = 4096) -> SolutionFamily:
    """Power profile centred at 0 with ``eps_n = n^-1/2`` and ``delta_n = n^-2``.

    ``v = sup v - 2 log(1 + gamma theta^(2(1+alpha)) eps^-2 |x|^2)`` with
    ``theta = eps/delta``, ``8 gamma = 1`` and ``alpha = 2 sigma``; the limit is
    ``lam_inf = 8 pi``.
    """
    a = 2.0 * sigma
    members = []
    for n in ns:
        eps, delta = n ** -0.5, float(n) ** -2.0
        mesh = _profile_mesh(delta, n_nodes)
        big = 0.125 * (eps / delta) ** (2.0 * (1.0 + a)) / (eps * eps)
        v = -2.0 * (1.0 + a) * math.log(delta) - 2.0 * np.log1p(big * mesh.radii ** 2)
        members.append(FamilyMember(mesh, v, eps, sigma, alpha=a, parameter=eps, meta={"n": n}))
    return SolutionFamily(members, sigma, name=f"case I sigma={sigma:g}", parameter_name="eps",
                          meta={"planted": {"kind": "I", "lam_inf": EIGHT_PI}})


def planted_case_two(sigma: float, ns=(10, 30, 100, 300, 1000), n_rings: int = 800,
                     n_angles: int = 64) -> SolutionFamily:
    """Power profile centred at ``x_n = (xi_n, 0)``, ``xi_n = n^-1/2 / 2``, ``eps_n = xi_n/2``, ``delta_n = n^-2``."""
    a = 2.0 * sigma
    members = []
    for n in ns:
        xi = 0.5 * n ** -0.5
        eps, delta = 0.5 * xi, float(n) ** -2.0
        gbar = ((eps / xi) ** 2 + 1.0) ** a / 8.0
        big = gbar * (xi / delta) ** (2.0 * (1.0 + a)) / (xi * xi)
        s_min = min(1e-8, 1e-3 / math.sqrt(big))
        mesh = build_polar_mesh((xi, 0.0), n_rings=n_rings, n_angles=n_angles, s_min=s_min)
        d2 = (mesh.x - xi) ** 2 + mesh.y ** 2
        v = -2.0 * (1.0 + a) * math.log(delta) - 2.0 * np.log1p(big * d2)
        members.append(FamilyMember(mesh, v, eps, sigma, alpha=a, parameter=xi, meta={"n": n}))
    return SolutionFamily(members, sigma, name=f"case II sigma={sigma:g}", parameter_name="|x_n|",
                          meta={"planted": {"kind": "II", "lam_inf": EIGHT_PI}})


def case_three_exponent(sigma: float, eps0: float = 0.5, log_k: float = 6.0) -> tuple[float, float]:
    """Fixed point ``alpha = sigma m(alpha) / 4 pi`` of the bubble mass ``m``; returns ``(alpha, m)``."""
    if not 0 < sigma < 0.5:
        raise DomainError("Case III families need 0 < sigma < 1/2")

    def gap(a):
        return sigma * bubble_solve(a, eps0, log_k).mass / FOUR_PI - a

    hi = min(2.0 * sigma / (1.0 - 2.0 * sigma), 0.999)
    try:
        a = brentq(gap, 2.0 * sigma * (1.0 - 1e-9), hi, xtol=1e-13)
    except ValueError as exc:
        raise ConvergenceError(f"no bubble exponent fixed point for sigma={sigma}, log K={log_k}") from exc
    return a, bubble_solve(a, eps0, log_k).mass


def planted_case_three(sigma: float, sup_values=(6.0, 12.0, 18.0, 24.0, 30.0, 40.0, 50.0, 60.0),
                       eps0: float = 0.5, log_k: float = 6.0, n_nodes: int = 4096) -> SolutionFamily:
    """Scaled bubbles ``v = sup v + w(x / delta)`` with ``eps_n = eps0 delta_n`` and ``K = e^log_k``.

    ``w`` solves ``-Laplace w = K (eps0^2 + |y|^2)^alpha e^w``, ``w(0) = 0``, where
    ``alpha`` is the fixed point of ``alpha = sigma m / 4 pi`` for the bubble
    mass ``m``, so every member solves the equation exactly and ``lam_n -> m``.
    """
    a, m = case_three_exponent(sigma, eps0, log_k)
    bub = bubble_solve(a, eps0, log_k)
    members = []
    for s in sup_values:
        delta = math.exp(-s / (2.0 * (1.0 + a)))
        mesh = _profile_mesh(delta, n_nodes)
        v = s + bub.evaluate(mesh.radii / delta) - log_k
        members.append(FamilyMember(mesh, v, eps0 * delta, sigma, alpha=a, k_factor=math.exp(log_k),
                                    parameter=float(s)))
    return SolutionFamily(members, sigma, name=f"case III sigma={sigma:g}", parameter_name="sup v",
                          meta={"planted": {"kind": "III", "lam_inf": m, "alpha": a}})


def solver_family(solutions, parameters=None, name: str = "") -> SolutionFamily:
    """Family from mean field solutions (``v = lam psi + log(lam / Z)``)."""
    members = []
    for i, sol in enumerate(solutions):
        spec = sol.spec
        k = (1.0 + spec.eps ** 2) ** -spec.a if spec.eps > 0 else 1.0
        p = None if parameters is None else float(parameters[i])
        members.append(FamilyMember(sol.mesh, sol.v, spec.eps, spec.sigma, lam=spec.lam, k_factor=k, parameter=p))
    return SolutionFamily(members, members[0].sigma, name=name)


def planted_family(kind: str, sigma: float, **kwargs) -> SolutionFamily:
    """Dispatch by ``kind`` in ``{"disk", "I", "II", "III"}``."""
    if kind == "disk":
        return disk_family(sigma, kwargs.pop("gamma2_values", np.geomspace(1e2, 1e8, 7)), **kwargs)
    builders = {"I": planted_case_one, "II": planted_case_two, "III": planted_case_three}
    if kind not in builders:
        raise ConfigurationError(f"unknown family kind {kind!r}")
    return builders[kind](sigma, **kwargs)


# ---------------------------------------------------------------------------
# manifests


def _mesh_entry(mesh: DomainMesh) -> dict:
    out = {"kind": mesh.kind}
    out.update({k: v for k, v in mesh.meta.items() if not k.startswith("_")})
    return out


def _mesh_from_entry(entry: dict, columns: dict) -> DomainMesh:
    kind = entry.get("kind")
    if kind == "disk-radial":
        return disk_mesh_from_radii(columns["x"])
    if kind == "grid-2d":
        return build_grid_mesh(entry["width"], entry["height"], entry["h"], tuple(entry["origin_offset"]))
    if kind == "polar":
        return build_polar_mesh(tuple(entry["center"]), entry["n_rings"], entry["n_angles"], entry["s_min"],
                                entry.get("log_fraction", 0.5))
    raise ConfigurationError(f"unknown mesh kind {kind!r} in manifest")


def save_family(family: SolutionFamily, directory: str | Path) -> Path:
    """Write member fields as CSV and a ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, m in enumerate(family.members):
        name = f"member_{i:03d}.csv"
        write_field_csv(directory / name, m.mesh, m.v)
        entries.append({"field": name, "eps": m.eps, "lambda": m.lam, "alpha": m.alpha,
                        "K": m.k_factor, "parameter": m.parameter, "mesh": _mesh_entry(m.mesh)})
    manifest = {"sigma": family.sigma, "name": family.name, "parameter_name": family.parameter_name,
                "members": entries}
    path = directory / "manifest.json"
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return path


def load_family(path: str | Path) -> SolutionFamily:
    """Read a family manifest written by :func:`save_family` (or by hand).

    Each member needs ``field`` and ``eps``; ``lambda``, ``alpha``, ``K``,
    ``parameter`` and ``mesh`` are optional (the mesh defaults to radial).
    """
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(manifest, dict) or "sigma" not in manifest:
        raise ConfigurationError("manifest must be an object with 'sigma' and 'members'")
    entries = manifest.get("members") or []
    if not entries:
        raise ConfigurationError("manifest lists no members")
    sigma = float(manifest["sigma"])
    members = []
    for e in entries:
        try:
            cols = read_field_csv(path.parent / e["field"])
            mesh = _mesh_from_entry(e.get("mesh", {"kind": "disk-radial"}), cols)
            members.append(FamilyMember(mesh, cols["value"], float(e["eps"]), sigma,
                                        lam=e.get("lambda"), alpha=e.get("alpha"),
                                        k_factor=float(e.get("K", 1.0)), parameter=e.get("parameter")))
        except KeyError as exc:
            raise ConfigurationError(f"manifest member is missing {exc}") from exc
    return SolutionFamily(members, sigma, name=manifest.get("name", ""),
                          parameter_name=manifest.get("parameter_name", "n"))
