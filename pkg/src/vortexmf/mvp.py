"""Microcanonical ensemble: entropy maximization at fixed regularized energy.

The maximizer at energy ``E`` is a mean field solution whose multiplier
``lam`` solves ``E(lam) = E`` where ``E(lam) = E(rho_lam) - sigma int rho_lam G_eps``.
The multiplier is recovered by scanning ``lam`` with warm-started canonical
solves and refining every sign change of ``E(lam) - E`` with Brent's method.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .analytic import lambda_sigma
from .cvp import MeanFieldSolution, interaction_energy, solve_cvp, vortex_moment
from .domain import DomainMesh, WeightSpec
from .errors import ConfigurationError

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
EIGHT_PI = 8.0 * math.pi


def regularized_energy(mesh: DomainMesh, rho: np.ndarray, sigma: float, eps: float,
                       spec: WeightSpec | None = None) -> float:
    """``1/2 int rho G[rho] - sigma int rho G_eps``.

    ``spec`` selects the quadrature adapted to densities carrying that weight.
    With ``eps = 0`` the vortex term uses the exact logarithmic moments.
    """
    if eps < 0:
        raise ConfigurationError("eps must be non-negative")
    base = spec if spec is not None else WeightSpec(0.0, 0.0, eps)
    e = interaction_energy(mesh, rho, base)
    if sigma == 0:
        return e
    return e - sigma * vortex_moment(mesh, rho, eps, base)


def e0_uniform(mesh: DomainMesh, sigma: float, eps: float) -> float:
    """Regularized energy of the uniform density ``1/|Omega|``."""
    rho0 = np.full(mesh.n_nodes, 1.0 / mesh.area)
    return regularized_energy(mesh, rho0, sigma, eps)


def default_bracket(sigma: float, margin: float = 1e-3, lam_cap: float = 16.0 * math.pi) -> tuple[float, float, bool]:
    """Default multiplier bracket ``(0, upper)`` and whether the cap was applied."""
    if sigma < 0:
        upper = min(1.5 * lambda_sigma(sigma), FOUR_PI / abs(sigma) * (1.0 - margin))
        return 0.0, upper, False
    if sigma == 0:
        return 0.0, EIGHT_PI * (1.0 - margin), False
    if sigma < 0.5:
        upper = min(EIGHT_PI / (1.0 - 2.0 * sigma), FOUR_PI / sigma) * (1.0 - margin)
        if upper > lam_cap:
            return 0.0, lam_cap, True
        return 0.0, upper, False
    return 0.0, lam_cap, True


@dataclass
class MvpResult:
    """Outcome of an entropy maximization at fixed energy."""

    energy_target: float
    eps: float
    sigma: float
    lam: float
    roots: list
    entropy: float
    achieved_energy: float
    status: str
    solution: MeanFieldSolution | None = None
    scan: list = field(default_factory=list)
    bracket: tuple = (0.0, 0.0)
    saturated: bool = False
    energy_range: tuple = (math.nan, math.nan)

    def to_dict(self) -> dict:
        return {
            "energy_target": self.energy_target,
            "eps": self.eps,
            "sigma": self.sigma,
            "lambda": self.lam,
            "entropy": self.entropy,
            "achieved_energy": self.achieved_energy,
            "roots": [float(r) for r in self.roots],
            "status": self.status,
            "bracket": [float(b) for b in self.bracket],
            "saturated": self.saturated,
            "energy_range": [float(e) for e in self.energy_range],
            "scan": [{"lambda": float(l), "E": float(e), "status": s} for l, e, s in self.scan],
        }


def _check_eps(mesh: DomainMesh, eps: float) -> None:
    if eps < 0:
        raise ConfigurationError("eps must be non-negative")
    if eps > 0 and eps < 2.0 * mesh.min_cell():
        raise ConfigurationError(
            f"eps={eps:g} is below twice the smallest cell ({mesh.min_cell():.3g}); refine the mesh"
        )
    if eps == 0 and not mesh.is_radial:
        raise ConfigurationError("grid meshes need eps > 0")


def solve_mvp(
    mesh: DomainMesh,
    sigma: float,
    eps: float,
    energy_target: float,
    *,
    lam_bracket: tuple[float, float] | None = None,
    n_scan: int = 24,
    energy_tol: float = 1e-8,
    method: str = "newton",
    lam_cap: float = 16.0 * math.pi,
    **cvp_opts,
) -> MvpResult:
    """Recover the multiplier ``lam(E)`` and the entropy maximizer at energy ``E``.

    All roots on the scan grid are refined; the smallest is the primary one.
    When no root exists the result carries ``status="no_root"`` (or
    ``"below_e0"``) and the energy range reached by the scan.
    """
    _check_eps(mesh, eps)
    if not math.isfinite(energy_target):
        raise ConfigurationError("energy target must be finite")
    e0 = e0_uniform(mesh, sigma, eps)
    saturated = False
    if lam_bracket is None:
        lo, hi, saturated = default_bracket(sigma, lam_cap=lam_cap)
    else:
        lo, hi = map(float, lam_bracket)
        if not 0 <= lo < hi:
            raise ConfigurationError("lambda bracket must satisfy 0 <= lo < hi")
    opts = dict(method=method, **cvp_opts)

    def solve(lam: float, psi0=None) -> MeanFieldSolution:
        return solve_cvp(mesh, WeightSpec(sigma, lam, eps), psi0=psi0, **opts)

    if abs(energy_target - e0) <= energy_tol and lo == 0:
        sol = solve(0.0)
        return MvpResult(energy_target, eps, sigma, 0.0, [0.0], sol.entropy, sol.regularized_energy,
                         "ok", sol, [(0.0, sol.regularized_energy, sol.status)], (lo, hi), saturated, (e0, e0))
    if energy_target < e0:
        return MvpResult(energy_target, eps, sigma, math.nan, [], math.nan, math.nan, "below_e0",
                         None, [], (lo, hi), saturated, (e0, e0))

    grid = np.linspace(lo, hi, n_scan + 1)
    scan = []
    sols: list[MeanFieldSolution] = []
    psi = None
    lam_fail = None
    for lam in grid:
        sol = solve(float(lam), psi)
        scan.append((float(lam), sol.regularized_energy, sol.status))
        if not sol.converged:
            lam_fail = float(lam)
            break
        sols.append(sol)
        psi = sol.psi
    # the energy diverges at the branch end: bisect towards it while the target is out of reach
    if lam_fail is not None and sols:
        lam_ok = sols[-1].lam
        for _ in range(80):
            if max(s.regularized_energy for s in sols) >= energy_target:
                break
            if lam_fail - lam_ok <= 1e-12 * lam_fail:
                break
            mid = 0.5 * (lam_ok + lam_fail)
            sol = solve(mid, sols[-1].psi)
            scan.append((mid, sol.regularized_energy, sol.status))
            if sol.converged:
                sols.append(sol)
                lam_ok = mid
            else:
                lam_fail = mid
    energies = np.array([s.regularized_energy for s in sols])
    erange = (float(energies.min()), float(energies.max())) if energies.size else (math.nan, math.nan)

    roots: list[float] = []
    root_sols: list[MeanFieldSolution] = []
    for i in range(len(sols) - 1):
        g0 = energies[i] - energy_target
        g1 = energies[i + 1] - energy_target
        if g0 == 0:
            roots.append(sols[i].lam)
            root_sols.append(sols[i])
            continue
        if g0 * g1 >= 0:
            continue
        cache = {"psi": sols[i].psi, "sol": None}

        def gap(lam: float) -> float:
            s = solve(lam, cache["psi"])
            if not s.converged:
                raise ArithmeticError(f"canonical solve failed at lambda={lam}")
            cache["psi"], cache["sol"] = s.psi, s
            return s.regularized_energy - energy_target

        try:
            lam_star = brentq(gap, sols[i].lam, sols[i + 1].lam, xtol=1e-13, rtol=1e-14, maxiter=200)
        except ArithmeticError as exc:
            log.warning("root refinement failed: %s", exc)
            continue
        s = cache["sol"]
        if s is None or s.lam != lam_star:
            s = solve(lam_star, cache["psi"])
        roots.append(lam_star)
        root_sols.append(s)
    if len(sols) and energies[-1] == energy_target:
        roots.append(sols[-1].lam)
        root_sols.append(sols[-1])

    if not roots:
        return MvpResult(energy_target, eps, sigma, math.nan, [], math.nan, math.nan, "no_root",
                         None, scan, (lo, hi), saturated, erange)
    order = np.argsort(roots)
    roots = [roots[k] for k in order]
    best = root_sols[order[0]]
    achieved = best.regularized_energy
    status = "ok" if abs(achieved - energy_target) <= energy_tol else "energy_tolerance"
    return MvpResult(energy_target, eps, sigma, float(roots[0]), roots, best.entropy, achieved,
                     status, best, scan, (lo, hi), saturated, erange)


@dataclass
class DomainTypeReport:
    verdict: str
    rows: list

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "rows": self.rows}


def classify_domain_type(mesh: DomainMesh, sigma: float, eps: float, energy_grid, **mvp_opts) -> DomainTypeReport:
    """Empirical Type I / Type II classification on a grid of energies.

    Type I: every energy has a multiplier below ``lambda_sigma``; Type II: some
    energy only has multipliers at or above it; otherwise inconclusive.
    """
    energy_grid = np.asarray(energy_grid, dtype=float)
    if energy_grid.ndim != 1 or energy_grid.size == 0 or np.any(np.diff(energy_grid) <= 0):
        raise ConfigurationError("energy grid must be a non-empty increasing sequence")
    crit = lambda_sigma(sigma)
    rows = []
    any_fail = any_two = False
    e0 = e0_uniform(mesh, sigma, eps)
    for e in energy_grid:
        if abs(e - e0) <= 1e-12 * max(1.0, abs(e0)):
            rows.append({"E": float(e), "lambda": 0.0, "roots": [0.0], "label": "I"})
            continue
        res = solve_mvp(mesh, sigma, eps, float(e), **mvp_opts)
        if res.status in ("ok", "energy_tolerance") and res.roots:
            label = "I" if res.roots[0] < crit else "II"
        else:
            label = "fail"
        any_fail |= label == "fail"
        any_two |= label == "II"
        rows.append({"E": float(e), "lambda": res.lam, "roots": list(res.roots), "label": label,
                     "status": res.status})
    verdict = "TypeII" if any_two else ("inconclusive" if any_fail else "TypeI")
    return DomainTypeReport(verdict, rows)


@dataclass
class RegularizationLimitReport:
    eps: list
    lam: list
    entropy: list
    l1_distance: list
    lam_differences: list
    observed_rates: list
    cauchy: bool
    status: str
    results: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "lambda": self.lam, "entropy": self.entropy,
                "l1_distance": self.l1_distance, "lambda_differences": self.lam_differences,
                "observed_rates": self.observed_rates, "cauchy": self.cauchy, "status": self.status,
                "members": [r.to_dict() for r in self.results]}


def mvp_regularization_limit(mesh: DomainMesh, sigma: float, energy_target: float, eps_sequence,
                             **mvp_opts) -> RegularizationLimitReport:
    """Run :func:`solve_mvp` along a decreasing sequence of ``eps`` and report Cauchy behaviour."""
    eps_seq = [float(e) for e in eps_sequence]
    if len(eps_seq) < 2 or any(b >= a for a, b in zip(eps_seq, eps_seq[1:])) or eps_seq[-1] <= 0:
        raise ConfigurationError("eps sequence must be strictly decreasing and positive")
    results = []
    status = "ok"
    for e in eps_seq:
        res = solve_mvp(mesh, sigma, e, energy_target, **mvp_opts)
        results.append(res)
        if res.solution is None:
            status = "partial"
            break
    lams = [r.lam for r in results]
    ents = [r.entropy for r in results]
    l1 = []
    for r1, r2 in zip(results, results[1:]):
        if r1.solution is None or r2.solution is None:
            break
        diff = np.abs(r1.solution.rho - r2.solution.rho)
        l1.append(float(np.dot(mesh.weights, diff)))
    dl = [abs(b - a) for a, b in zip(lams, lams[1:]) if math.isfinite(a) and math.isfinite(b)]
    rates = []
    for k in range(len(dl) - 1):
        if dl[k] > 0 and dl[k + 1] > 0:
            rates.append(math.log(dl[k] / dl[k + 1]) / math.log(eps_seq[k] / eps_seq[k + 1]))
    tol = 1e-9
    cauchy = len(dl) >= 1 and all(dl[k + 1] <= dl[k] + tol for k in range(len(dl) - 1))
    return RegularizationLimitReport(eps_seq[: len(results)], lams, ents, l1, dl, rates, bool(cauchy),
                                     status, results)
