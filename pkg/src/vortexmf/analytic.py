"""Closed-form radial solutions on the unit disk and the planar bubble solver.

Disk solutions
--------------
On ``B_1`` the vortex weight is ``H = |x|^(2a)`` with ``a = sigma lam / (4 pi)``
and the mean field equation has the explicit solution (``b = 1 + a``)::

    gamma^2   = lam / (8 pi b - lam)
    lam psi   = 2 log((1 + gamma^2) / (1 + gamma^2 r^(2b)))
    int H e^(lam psi) = pi (1 + gamma^2) / b
    rho       = b (1 + gamma^2) / pi * r^(2a) / (1 + gamma^2 r^(2b))^2

With ``s = lam / (8 pi b)`` the energy ``1/2 int rho psi`` and the entropy are

    E = -(1 / (8 pi b s)) (1 + log(1 - s) / s)
    S = 2 + log(pi / b) + (2 / s - 2 sigma - 1) log(1 - s)

The same weight is also written ``|x|^a2`` with ``a2 = sigma lam / (2 pi) = 2a``.
Every formula here uses ``a``; substituting ``a2`` into ``b = 1 + a`` does not
solve the equation.

Bubbles
-------
Entire radial solutions of ``-Laplace phi = (t0^2 + |x|^2)^alpha e^phi`` are
integrated in ``s = log r`` where the mass inside ``B_r`` is exactly
``-2 pi r phi'(r)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigurationError, ConvergenceError, DomainError

PI = math.pi
EIGHT_PI = 8.0 * math.pi

# below this value of s = lam/(8 pi b) the energy/entropy use their Taylor series
_SERIES_CUTOFF = 1e-3
_SERIES_TERMS = 16


def lambda_sigma(sigma: float) -> float:
    """Critical parameter: ``8 pi / (1 + 2|sigma|)`` for ``sigma < 0``, else ``8 pi``."""
    if sigma < 0:
        return EIGHT_PI / (1.0 + 2.0 * abs(sigma))
    return EIGHT_PI


def _check(sigma: float, lam: float) -> tuple[float, float]:
    if not (math.isfinite(sigma) and math.isfinite(lam)):
        raise ConfigurationError("sigma and lambda must be finite")
    if lam < 0:
        raise ConfigurationError("lambda must be non-negative")
    a = sigma * lam / (4.0 * PI)
    b = 1.0 + a
    if sigma <= 0 and lam >= lambda_sigma(sigma):
        raise DomainError(f"no disk solution for lambda >= lambda_sigma = {lambda_sigma(sigma):.12g}")
    if lam >= EIGHT_PI * b:
        raise DomainError("no disk solution: lambda >= 8 pi (1 + a)")
    return a, b


@dataclass(frozen=True)
class DiskSolution:
    """Explicit radial solution of the mean field equation on the unit disk."""

    sigma: float
    lam: float
    a: float
    b: float
    gamma2: float

    @property
    def normalizer(self) -> float:
        """``int_{B_1} H e^(lam psi)``."""
        return PI * (1.0 + self.gamma2) / self.b

    def lam_psi(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        g = self.gamma2
        return 2.0 * (math.log1p(g) - np.log1p(g * r ** (2.0 * self.b)))

    def psi(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.lam == 0:
            return (1.0 - r * r) / 4.0 / PI
        return self.lam_psi(r) / self.lam

    def reduced_density(self, r) -> np.ndarray:
        """``rho / H = e^(lam psi) / int H e^(lam psi)`` (smooth factor)."""
        r = np.asarray(r, dtype=float)
        g = self.gamma2
        return self.b * (1.0 + g) / PI / (1.0 + g * r ** (2.0 * self.b)) ** 2

    def rho(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            h = r ** (2.0 * self.a) if self.a != 0 else np.ones_like(r)
        return h * self.reduced_density(r)

    def mass_within(self, r) -> np.ndarray:
        """``int_{B_r} rho`` in closed form."""
        r = np.asarray(r, dtype=float)
        g = self.gamma2
        u = g * r ** (2.0 * self.b)
        return (1.0 + g) * r ** (2.0 * self.b) / (1.0 + u)

    def sup_lam_psi(self) -> float:
        return 2.0 * math.log1p(self.gamma2)


def disk_solution(sigma: float, lam: float) -> DiskSolution:
    """Closed-form disk solution for ``0 <= lam < lambda_sigma``."""
    a, b = _check(sigma, lam)
    gamma2 = lam / (EIGHT_PI * b - lam)
    return DiskSolution(float(sigma), float(lam), a, b, gamma2)


def _s_param(sigma: float, lam: float) -> tuple[float, float, float]:
    a, b = _check(sigma, lam)
    return a, b, lam / (EIGHT_PI * b)


def disk_energy(sigma: float, lam: float) -> float:
    """Energy ``1/2 int rho G[rho]`` of the disk solution."""
    _, b, s = _s_param(sigma, lam)
    if s < _SERIES_CUTOFF:
        k = np.arange(_SERIES_TERMS)
        return float(np.sum(s ** k / (k + 2.0)) / (EIGHT_PI * b))
    return -(1.0 + math.log1p(-s) / s) / (EIGHT_PI * b * s)


def disk_entropy(sigma: float, lam: float) -> float:
    """Entropy ``-int rho log rho`` of the disk solution."""
    _, b, s = _s_param(sigma, lam)
    if s < _SERIES_CUTOFF:
        k = np.arange(1, _SERIES_TERMS)
        tail = -np.sum(2.0 * s ** k / (k + 1.0))
        return float(math.log(PI / b) + tail - (2.0 * sigma + 1.0) * math.log1p(-s))
    return 2.0 + math.log(PI / b) + (2.0 / s - 2.0 * sigma - 1.0) * math.log1p(-s)


def disk_vortex_moment(sigma: float, lam: float) -> float:
    """``int rho G(., 0)`` of the disk solution."""
    _, b, _ = _s_param(sigma, lam)
    g = lam / (EIGHT_PI * b - lam)
    if g < 1e-6:
        ratio = 1.0 + g / 2.0 - g * g / 6.0
    else:
        ratio = (1.0 + g) * math.log1p(g) / g
    return ratio / (4.0 * PI * b)


def disk_entropy_asymptote(sigma: float, energy: float) -> float:
    """Large-energy expansion of the entropy along the disk branch.

    With ``b = 1/(1 + 2|sigma|)`` (``b = 1`` for ``sigma >= 0``) and
    ``X = exp(-8 pi b E)``::

        S(E) = -8 pi E + 2 - 1/b + log(pi/b)
               + (X/e) ((1-b)/b + b - 2 + 8 pi (1-b) E) + O(E^2 X^2)

    The expansion is useful for ``8 pi b E`` above roughly 5.
    """
    b = 1.0 / (1.0 + 2.0 * abs(sigma)) if sigma < 0 else 1.0
    x = math.exp(-EIGHT_PI * b * energy)
    lead = -EIGHT_PI * energy + 2.0 - 1.0 / b + math.log(PI / b)
    corr = (x / math.e) * ((1.0 - b) / b + b - 2.0 + EIGHT_PI * (1.0 - b) * energy)
    return lead + corr


def disk_entropy_asymptote_constant(sigma: float) -> float:
    """Constant term of :func:`disk_entropy_asymptote`."""
    b = 1.0 / (1.0 + 2.0 * abs(sigma)) if sigma < 0 else 1.0
    return 2.0 - 1.0 / b + math.log(PI / b)


def disk_state(sigma: float, gamma2: float) -> tuple[float, float, float]:
    """``(lam, E, S)`` of the disk solution parametrized by ``gamma^2``.

    Near ``lambda_sigma`` the map ``lam -> gamma^2`` loses all precision, so
    large-energy work should go through ``gamma^2`` instead of ``lam``.
    """
    if not (math.isfinite(gamma2) and gamma2 >= 0):
        raise ConfigurationError("gamma^2 must be finite and non-negative")
    den = 1.0 + gamma2 * (1.0 - 2.0 * sigma)
    if den <= 0:
        raise DomainError("gamma^2 outside the disk branch for this sigma")
    lam = EIGHT_PI * gamma2 / den
    s = gamma2 / (1.0 + gamma2)
    if s < _SERIES_CUTOFF:
        return lam, disk_energy(sigma, lam), disk_entropy(sigma, lam)
    b = 1.0 + sigma * lam / (4.0 * PI)
    ell = math.log1p(gamma2)
    energy = (ell / s - 1.0) / (EIGHT_PI * b * s)
    ent = 2.0 + math.log(PI / b) - (2.0 / s - 2.0 * sigma - 1.0) * ell
    return lam, energy, ent


def _gamma2_for_energy(sigma: float, energy: float) -> float:
    from scipy.optimize import brentq

    lo_e = disk_energy(sigma, 0.0)
    if energy < lo_e:
        raise DomainError("energy below the uniform-state value")
    if energy == lo_e:
        return 0.0
    top = 600.0
    if sigma > 0.5:
        top = math.log(1.0 / (2.0 * sigma - 1.0)) - 1e-12
    fn = lambda t: disk_state(sigma, math.exp(t))[1] - energy
    if fn(top) < 0:
        raise DomainError("energy above the range of the disk branch")
    return math.exp(brentq(fn, -40.0, top, xtol=1e-14, rtol=1e-15, maxiter=500))


def disk_lambda_for_energy(sigma: float, energy: float) -> float:
    """Invert ``lam -> disk_energy(sigma, lam)`` (monotone on ``[0, lambda_sigma)``)."""
    return disk_state(sigma, _gamma2_for_energy(sigma, energy))[0]


def disk_entropy_for_energy(sigma: float, energy: float) -> float:
    """Entropy of the disk solution with interaction energy ``energy``."""
    return disk_state(sigma, _gamma2_for_energy(sigma, energy))[2]


# ---------------------------------------------------------------------------
# bubbles


@dataclass
class BubbleSolution:
    """Radial entire solution of ``-Laplace phi = (t0^2 + r^2)^alpha e^phi``."""

    alpha: float
    t0: float
    c: float
    r: np.ndarray
    phi: np.ndarray
    mass: float
    beta: float
    identity_lhs: float
    r_max: float
    tail_fraction: float
    meta: dict = field(default_factory=dict)

    @property
    def identity_rhs(self) -> float:
        return PI * self.beta * (self.beta - 4.0)

    def weight(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (self.t0 ** 2 + r * r) ** self.alpha

    def density(self, r=None) -> np.ndarray:
        """``(t0^2 + r^2)^alpha e^phi`` on the stored samples (or interpolated)."""
        if r is None:
            return self.weight(self.r) * np.exp(self.phi)
        return self.weight(r) * np.exp(self.evaluate(r))

    def evaluate(self, r) -> np.ndarray:
        """``phi(r)``; log-linear interpolation of the samples, exact decay beyond."""
        r = np.asarray(r, dtype=float)
        out = np.interp(np.log(np.maximum(r, self.r[0])), np.log(self.r), self.phi)
        far = r > self.r[-1]
        if np.any(far):
            out = np.where(far, self.phi[-1] - self.beta * np.log(np.maximum(r, 1e-300) / self.r[-1]), out)
        return out

    def decay_slope(self, lo: float | None = None, hi: float | None = None) -> float:
        """Least-squares slope of ``phi`` against ``log(r + 1)`` on ``[R/4, R]``."""
        lo = self.r_max / 4.0 if lo is None else lo
        hi = self.r_max if hi is None else hi
        sel = (self.r >= lo) & (self.r <= hi)
        x = np.log1p(self.r[sel])
        return float(np.polyfit(x, self.phi[sel], 1)[0])


def _bubble_rhs(alpha: float, t0: float):
    t02 = t0 * t0

    def rhs(s, y):
        phi, p, _ = y
        r2 = math.exp(2.0 * s)
        base = t02 + r2
        dens = base ** alpha * math.exp(phi)
        dp = -r2 * dens
        di = 4.0 * PI * alpha * r2 * r2 * dens / base
        return [p, dp, di]

    return rhs


def bubble_solve(
    alpha: float,
    t0: float = 0.0,
    c: float | None = None,
    r_max: float | None = None,
    *,
    rtol: float = 1e-12,
    atol: float = 1e-14,
    n_samples: int = 2000,
) -> BubbleSolution:
    """Shoot the radial bubble from ``phi(0) = c``, ``phi'(0) = 0``.

    Parameters
    ----------
    alpha : weight exponent, ``alpha > -1``.
    t0 : weight offset ``t0 >= 0``.
    c : centre value; defaults to ``log(8 (1+alpha)^2)`` for ``t0 = 0`` and 0 otherwise.
    r_max : outer radius; chosen automatically so that the mass in
        ``[r_max/2, r_max]`` is below ``1e-8`` of the total when omitted.

    Returns
    -------
    BubbleSolution with the total mass including a power-law tail correction.
    """
    if not alpha > -1.0:
        raise ConfigurationError("alpha must exceed -1")
    if t0 < 0:
        raise ConfigurationError("t0 must be non-negative")
    if c is None:
        c = math.log(8.0 * (1.0 + alpha) ** 2) if t0 == 0 else 0.0
    # natural length scale of the solution near the origin
    if t0 > 0:
        w0 = t0 ** (2.0 * alpha) * math.exp(c)
        scale = 1.0 / math.sqrt(w0)
        r0 = 1e-7 * min(scale, t0)
    else:
        scale = math.exp(-c / (2.0 * alpha + 2.0))
        r0 = 1e-7 * scale
    rhs = _bubble_rhs(alpha, t0)
    # series start
    if t0 > 0:
        w0 = t0 ** (2.0 * alpha) * math.exp(c)
        phi0 = c - w0 * r0 * r0 / 4.0
        p0 = -w0 * r0 * r0 / 2.0
        i0 = 4.0 * PI * alpha * t0 ** (2.0 * alpha - 2.0) * math.exp(c) * r0 ** 4 / 4.0
    else:
        q = 2.0 * alpha + 2.0
        phi0 = c - math.exp(c) * r0 ** q / q ** 2
        p0 = -math.exp(c) * r0 ** q / q
        i0 = 4.0 * PI * alpha * math.exp(c) * r0 ** q / q
    s0 = math.log(r0)

    auto = r_max is None
    r_end = 1e4 * max(scale, t0, 1.0) if auto else float(r_max)
    if r_end <= r0 * 10:
        raise ConfigurationError("r_max too small")
    for _ in range(12):
        s_end = math.log(r_end)
        grid = np.linspace(s0, s_end, n_samples)
        sol = solve_ivp(rhs, (s0, s_end), [phi0, p0, i0], method="DOP853",
                        rtol=rtol, atol=atol, t_eval=grid, dense_output=True)
        if not sol.success:
            raise ConvergenceError(f"bubble integration failed: {sol.message}")
        phi, p, ident = sol.y
        r = np.exp(sol.t)
        mass_r = -2.0 * PI * p
        dens_end = (t0 * t0 + r[-1] ** 2) ** alpha * math.exp(phi[-1])
        beta_r = -p[-1]
        decay = beta_r - 2.0 * alpha - 2.0
        half = sol.sol(s_end - math.log(2.0))
        local = mass_r[-1] - (-2.0 * PI * half[1])
        frac = local / mass_r[-1]
        if decay > 0 and frac < 1e-8:
            break
        if not auto:
            break
        r_end *= 1e3
    if decay <= 0:
        raise ConvergenceError(
            f"bubble mass does not converge (beta={beta_r:.6g} <= 2 alpha + 2 at r={r[-1]:.3g})"
        )
    # power-law tail: rho ~ C r^(2 alpha - beta); solve beta = beta_R + rho R^2/(beta - 2 alpha - 2)
    q = dens_end * r[-1] ** 2
    b0 = 2.0 * alpha + 2.0
    beta = 0.5 * (beta_r + b0 + math.sqrt((beta_r - b0) ** 2 + 4.0 * q))
    tail_mass = 2.0 * PI * (beta - beta_r)
    mass = mass_r[-1] + tail_mass
    # identity integrand behaves like 2 alpha r^2/(t0^2 + r^2) times the density
    ident_total = ident[-1] + 2.0 * alpha * tail_mass * r[-1] ** 2 / (t0 * t0 + r[-1] ** 2)
    return BubbleSolution(
        alpha=float(alpha),
        t0=float(t0),
        c=float(c),
        r=r,
        phi=phi,
        mass=float(mass),
        beta=float(mass / (2.0 * PI)),
        identity_lhs=float(ident_total),
        r_max=float(r[-1]),
        tail_fraction=float(tail_mass / mass),
        meta={"local_mass_fraction": float(frac), "nfev": int(sol.nfev)},
    )


def bubble_identity_residual(b: BubbleSolution) -> float:
    """Relative residual of ``2 alpha int |x|^2 (t0^2+|x|^2)^(alpha-1) e^phi = pi beta (beta - 4)``."""
    rhs = b.identity_rhs
    return abs(b.identity_lhs - rhs) / (1.0 + abs(rhs))


def bubble_mass_bounds(alpha: float) -> tuple[float, float]:
    """Lower and upper bounds on the bubble mass for weight exponent ``alpha``."""
    if alpha < 0:
        return EIGHT_PI * (1.0 + alpha), EIGHT_PI
    return max(EIGHT_PI, 4.0 * PI * (1.0 + alpha)), EIGHT_PI * (1.0 + alpha)


def check_bubble_mass(b: BubbleSolution, tol: float = 1e-6) -> dict:
    """Check the mass bounds including which side is attained.

    For ``alpha < 0`` the lower bound is attained iff ``t0 = 0`` and the upper
    bound never is; for ``alpha > 0`` the upper bound is attained iff
    ``t0 = 0`` and the lower one never is.
    """
    lo, hi = bubble_mass_bounds(b.alpha)
    m = b.mass
    scale = tol * max(1.0, m)
    at_lo = abs(m - lo) <= scale
    at_hi = abs(m - hi) <= scale
    inside = lo - scale <= m <= hi + scale
    if b.alpha < 0:
        expect_lo, expect_hi = b.t0 == 0, False
    else:
        # at alpha = 0 the weight is trivial and both bounds equal 8 pi
        expect_lo, expect_hi = b.alpha == 0, b.t0 == 0 or b.alpha == 0
    ok = inside and at_lo == expect_lo and at_hi == expect_hi
    return {"lower": lo, "upper": hi, "mass": m, "at_lower": at_lo, "at_upper": at_hi,
            "expected_lower": expect_lo, "expected_upper": expect_hi, "ok": bool(ok)}


# ---------------------------------------------------------------------------
# oracle tables


def disk_oracle_rows(sigmas, fractions) -> list[dict]:
    rows = []
    for sigma in sigmas:
        for frac in fractions:
            lam = frac * lambda_sigma(sigma)
            sol = disk_solution(sigma, lam)
            rows.append({"sigma": sigma, "lambda": lam, "gamma2": sol.gamma2,
                         "E": disk_energy(sigma, lam), "S": disk_entropy(sigma, lam)})
    return rows


def bubble_oracle_rows(alphas, t0s) -> list[dict]:
    rows = []
    for alpha in alphas:
        for t0 in t0s:
            b = bubble_solve(alpha, t0)
            rows.append({"alpha": alpha, "t0": t0, "c": b.c, "mass": b.mass, "beta": b.beta,
                         "identity_residual": bubble_identity_residual(b)})
    return rows


def write_rows_csv(path: str | Path, rows: list[dict], columns: list[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        wr.writeheader()
        for row in rows:
            wr.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})


# ---------------------------------------------------------------------------
# regularized disk problem by shooting (independent of any mesh)


@dataclass(frozen=True)
class ShootingDiskSolution:
    """Radial solution of the regularized problem on ``B_1`` obtained by shooting.

    ``v = lam psi + log(lam / Z)`` solves ``-Laplace v = H_eps e^v`` with
    ``H_eps = ((eps^2 + r^2)/(1 + eps^2))^a``; the centre value is tuned so
    that the total mass equals ``lam``.
    """

    sigma: float
    lam: float
    eps: float
    v0: float
    v1: float
    energy: float
    vortex_moment: float
    entropy: float

    @property
    def regularized_energy(self) -> float:
        return self.energy - self.sigma * self.vortex_moment


def shooting_disk_solution(sigma: float, lam: float, eps: float, *, r0: float = 1e-10,
                           rtol: float = 1e-13) -> ShootingDiskSolution:
    """Solve the radial regularized mean field problem on the unit disk by shooting."""
    from scipy.optimize import brentq

    if lam <= 0:
        raise ConfigurationError("shooting requires lambda > 0")
    if eps < 0:
        raise ConfigurationError("eps must be non-negative")
    a = sigma * lam / (4.0 * PI)
    if eps == 0 and a <= -1:
        raise DomainError("weight not integrable")
    e2 = eps * eps
    log1pe = math.log1p(e2)

    def rhs(s, y):
        v, p = y[0], y[1]
        r2 = math.exp(2.0 * s)
        logh = a * (math.log(e2 + r2) - log1pe)
        d = math.exp(logh + v) * r2
        g = (log1pe - math.log(e2 + r2)) / (4.0 * PI)
        w = 2.0 * PI * d
        return [p, -d, w, w * v, w * g]

    s0 = math.log(r0)

    def shoot(c):
        sol = solve_ivp(rhs, (s0, 0.0), [c, 0.0, 0.0, 0.0, 0.0], method="DOP853", rtol=rtol, atol=1e-16)
        return sol.y[:, -1]

    lo, hi = -10.0, 10.0
    while shoot(hi)[2] < lam:
        hi += 10.0
        if hi > 200:
            raise ConvergenceError("shooting: mass never reaches lambda")
    while shoot(lo)[2] > lam:
        lo -= 10.0
    c = brentq(lambda t: shoot(t)[2] - lam, lo, hi, xtol=1e-14, rtol=1e-15)
    v1, _, mass, mv, mg = shoot(c)
    # psi = (v - v1)/lam, rho = H e^v / lam
    energy = 0.5 * (mv - v1 * mass) / lam ** 2
    moment = mg / lam
    # -int rho log rho with log rho = log H + v - log lam and log H = -sigma lam G_eps
    entropy = -(-sigma * lam * moment + mv / lam - math.log(lam))
    return ShootingDiskSolution(float(sigma), float(lam), float(eps), float(c), float(v1),
                                float(energy), float(moment), float(entropy))
