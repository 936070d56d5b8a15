"""Canonical ensemble: the mean field equation at fixed ``lam``.

A density of the form ``rho = H f`` with ``H = exp(-sigma lam G_eps)`` is
represented by its smooth factor ``f`` together with a
:class:`~vortexmf.domain.WeightedMeasure`.  All functionals are assembled in
that representation, which makes the discrete identities

    int rho psi = psi^T S psi,      F(rho) - J(psi) = int rho log(rho / rho_psi)

hold to rounding error on every mesh.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import splu

from .analytic import lambda_sigma
from .domain import DomainMesh, WeightedMeasure, WeightSpec, regularized_green, weighted_measure
from .errors import ConfigurationError, DomainError

log = logging.getLogger(__name__)

DEFAULT_CEILING = 40.0
NEWTON_MAX_ITER = 60
NEWTON_TRUST = 2.0
CURVE_COLUMNS = ["lambda", "E", "S", "F", "J", "sup_psi", "mass_b01", "mass_b001", "status"]


# ---------------------------------------------------------------------------
# functionals in the reduced representation


def _measure_for(mesh: DomainMesh, spec: WeightSpec | None) -> WeightedMeasure:
    if spec is None:
        return weighted_measure(mesh, 0.0, 0.0)
    spec.validate()
    return weighted_measure(mesh, spec.k, spec.eps)


def _reduced(meas: WeightedMeasure, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (meas.mesh.n_nodes,):
        raise ConfigurationError("density must have one value per node")
    if not np.all(np.isfinite(rho)):
        raise DomainError("density must be finite")
    if np.any(rho < -1e-12):
        raise DomainError("density has negative values")
    return np.maximum(rho, 0.0) / meas.h


def _neg_entropy_f(meas: WeightedMeasure, f: np.ndarray) -> float:
    """``int rho log rho`` for ``rho = H f``."""
    return meas.xlogx(f) + meas.log_h_coeff * meas.moment_g(f)


@dataclass
class _Scalars:
    mass: float
    energy: float
    vortex_energy: float
    entropy: float
    free_energy: float
    j_value: float


def _scalars(meas: WeightedMeasure, f: np.ndarray, psi: np.ndarray, sigma: float, lam: float) -> _Scalars:
    mesh = meas.mesh
    load = meas.load(f)
    phi = mesh.solve_load(load)
    energy = 0.5 * float(np.dot(load, phi))
    moment = meas.moment_g(f)
    neg_s = _neg_entropy_f(meas, f)
    free = neg_s - lam * energy + sigma * lam * moment
    logz, _ = meas.log_partition(lam * psi)
    j = 0.5 * lam * mesh.dirichlet_energy(psi) - logz
    return _Scalars(meas.total(f), energy, sigma * moment, -neg_s, free, j)


# ---------------------------------------------------------------------------
# public functionals on nodal densities


def entropy(mesh: DomainMesh, rho: np.ndarray, spec: WeightSpec | None = None) -> float:
    """``-int rho log rho`` with ``0 log 0 = 0``.

    ``spec`` selects the quadrature adapted to densities carrying the vortex
    weight of ``spec``; without it the plain area quadrature is used.
    """
    meas = _measure_for(mesh, spec)
    return -_neg_entropy_f(meas, _reduced(meas, rho))


def interaction_energy(mesh: DomainMesh, rho: np.ndarray, spec: WeightSpec | None = None) -> float:
    """``1/2 int rho G[rho]``."""
    meas = _measure_for(mesh, spec)
    load = meas.load(_reduced(meas, rho))
    return 0.5 * float(np.dot(load, mesh.solve_load(load)))


def vortex_moment(mesh: DomainMesh, rho: np.ndarray, eps: float, spec: WeightSpec | None = None) -> float:
    """``int rho G_eps`` (``G(., 0)`` when ``eps = 0``)."""
    base = spec if spec is not None else WeightSpec(0.0, 0.0, eps)
    meas = _measure_for(mesh, base)
    f = _reduced(meas, rho)
    if meas.eps == eps:
        return meas.moment_g(f)
    if eps > 0:
        return float(np.dot(meas.load(f), regularized_green(mesh, eps)))
    raise DomainError("int rho G(., 0) needs the eps = 0 quadrature; pass a spec with eps = 0")


def free_energy(mesh: DomainMesh, rho: np.ndarray, spec: WeightSpec) -> float:
    """``int rho log rho - lam/2 int rho G[rho] + sigma lam int rho G_eps``."""
    meas = _measure_for(mesh, spec)
    f = _reduced(meas, rho)
    load = meas.load(f)
    energy = 0.5 * float(np.dot(load, mesh.solve_load(load)))
    return _neg_entropy_f(meas, f) - spec.lam * energy + spec.k * meas.moment_g(f)


def j_functional(mesh: DomainMesh, psi: np.ndarray, spec: WeightSpec) -> float:
    """``lam/2 int |grad psi|^2 - log int H e^(lam psi)`` (max-shifted)."""
    meas = _measure_for(mesh, spec)
    psi = np.asarray(psi, dtype=float)
    if np.any(psi[mesh.boundary] != 0):
        raise ConfigurationError("psi must vanish on the boundary")
    logz, _ = meas.log_partition(spec.lam * psi)
    return 0.5 * spec.lam * mesh.dirichlet_energy(psi) - logz


def induced_density(mesh: DomainMesh, psi: np.ndarray, spec: WeightSpec) -> np.ndarray:
    """``H e^(lam psi) / int H e^(lam psi)`` as nodal values."""
    meas = _measure_for(mesh, spec)
    _, f = meas.log_partition(spec.lam * np.asarray(psi, dtype=float))
    return meas.h * f


def duality_gap(mesh: DomainMesh, rho: np.ndarray, spec: WeightSpec) -> float:
    """``int rho log(rho / rho_psi)`` with ``psi = G[rho]``; non-negative."""
    meas = _measure_for(mesh, spec)
    f = _reduced(meas, rho)
    f = f / meas.total(f)
    psi = mesh.solve_load(meas.load(f))
    _, g = meas.log_partition(spec.lam * psi)
    fq = meas.at_points(f)
    pos = fq > 0
    with np.errstate(divide="ignore"):
        diff = meas.log_at_points(np.log(f) - np.log(g))
    return float(np.dot(meas.W[pos] * fq[pos], diff[pos]))


def normalize_density(mesh: DomainMesh, rho: np.ndarray, spec: WeightSpec | None = None) -> np.ndarray:
    """Rescale a non-negative nodal density to unit mass in the quadrature of ``spec``."""
    meas = _measure_for(mesh, spec)
    f = _reduced(meas, rho)
    return meas.h * f / meas.total(f)


def random_density(mesh: DomainMesh, rng: np.random.Generator, spec: WeightSpec | None = None,
                   spread: float = 2.0) -> np.ndarray:
    """Random positive unit-mass density (log-normal smooth factor)."""
    meas = _measure_for(mesh, spec)
    f = np.exp(spread * rng.standard_normal(mesh.n_nodes))
    return meas.h * f / meas.total(f)


# ---------------------------------------------------------------------------
# solver


@dataclass
class MeanFieldSolution:
    """Solution of the mean field equation with derived scalars."""

    mesh: DomainMesh
    spec: WeightSpec
    measure: WeightedMeasure
    psi: np.ndarray
    f: np.ndarray
    log_partition: float
    mass: float
    energy: float
    vortex_energy: float
    entropy: float
    free_energy: float
    j_value: float
    iterations: int
    update_norm: float
    converged: bool
    status: str
    method: str
    residual: float
    warnings: list = field(default_factory=list)

    @property
    def rho(self) -> np.ndarray:
        """Nodal density (cell average at a singular origin node)."""
        return self.measure.h * self.f

    @property
    def lam(self) -> float:
        return self.spec.lam

    @property
    def regularized_energy(self) -> float:
        """``E(rho) - sigma int rho G_eps``."""
        return self.energy - self.vortex_energy

    @property
    def sup_psi(self) -> float:
        return float(np.max(self.psi))

    @property
    def v(self) -> np.ndarray:
        """``lam psi + log(lam / Z)``, solving ``-Laplace v = H e^v``."""
        return self.spec.lam * self.psi + math.log(self.spec.lam) - self.log_partition

    def mass_within(self, r: float) -> float:
        """``int_{B_r} rho``."""
        meas = self.measure
        if self.mesh.is_radial:
            cum = meas.mass_within(self.f)
            return float(np.interp(r, self.mesh.radii, cum))
        sel = self.mesh.radius <= r
        return float(np.dot(meas.W[sel], self.f[sel]))

    def summary(self) -> dict:
        return {
            "sigma": self.spec.sigma, "lambda": self.spec.lam, "eps": self.spec.eps,
            "mass": self.mass, "energy": self.energy, "vortex_energy": self.vortex_energy,
            "regularized_energy": self.regularized_energy, "entropy": self.entropy,
            "free_energy": self.free_energy, "j_value": self.j_value, "sup_psi": self.sup_psi,
            "log_partition": self.log_partition, "iterations": self.iterations,
            "update_norm": self.update_norm, "residual": self.residual,
            "converged": self.converged, "status": self.status, "method": self.method,
            "warnings": list(self.warnings),
        }


@dataclass
class _Linearization:
    f: np.ndarray
    u: np.ndarray
    res: np.ndarray
    floor: np.ndarray
    solve: object

    @property
    def at_floor(self) -> bool:
        return bool(np.all(np.abs(self.res) <= self.floor))


def _linearize(mesh: DomainMesh, meas: WeightedMeasure, psi: np.ndarray, lam: float) -> _Linearization:
    """Residual ``S psi - load(rho(psi))`` on free nodes and a solver for its Jacobian."""
    free = mesh.free
    _, f = meas.log_partition(lam * psi)
    u = meas.load(f)[free]
    s = mesh.stiffness[free][:, free]
    res = s @ psi[free] - u
    lu = splu((s - lam * meas.mass_operator(f)[free][:, free]).tocsc())
    y = lu.solve(u)
    denom = 1.0 + lam * float(np.dot(u, y))

    def solve(rhs: np.ndarray) -> np.ndarray:
        # rank-one normalization term by Sherman-Morrison
        x = lu.solve(rhs)
        return x - y * (lam * float(np.dot(u, x)) / denom)

    # residual level at which cancellation error dominates
    floor = 64.0 * np.finfo(float).eps * (abs(s) @ np.abs(psi[free]) + np.abs(u))
    return _Linearization(f, u, res, floor, solve)


def _newton_step(mesh: DomainMesh, meas: WeightedMeasure, psi: np.ndarray, lam: float):
    lin = _linearize(mesh, meas, psi, lam)
    out = np.zeros(mesh.n_nodes)
    out[mesh.free] = lin.solve(lin.res)
    return out, float(np.max(np.abs(lin.res))), lin.at_floor


def solve_cvp(
    mesh: DomainMesh,
    spec: WeightSpec,
    *,
    damping: float = 0.5,
    tol: float | None = None,
    max_iter: int = 10000,
    psi0: np.ndarray | None = None,
    method: str = "picard",
    ceiling: float = DEFAULT_CEILING,
) -> MeanFieldSolution:
    """Solve ``-Laplace psi = H e^(lam psi) / int H e^(lam psi)``, ``psi = 0`` on the boundary.

    ``method="picard"`` runs the damped fixed point ``psi <- (1-w) psi + w G[rho(psi)]``
    with the damping halved whenever the update grows; ``method="newton"``
    uses Newton's method with the rank-one normalization term handled by
    Sherman-Morrison.  Non-convergence is reported through ``status``.
    """
    spec.validate()
    if not 0 < damping <= 1:
        raise ConfigurationError("damping must lie in (0, 1]")
    if method not in ("picard", "newton"):
        raise ConfigurationError(f"unknown method {method!r}")
    if tol is None:
        tol = 1e-10 if mesh.is_radial else 1e-8
    lam = spec.lam
    warnings = []
    if lam >= lambda_sigma(spec.sigma):
        warnings.append(f"lambda >= lambda_sigma = {lambda_sigma(spec.sigma):.6g}")
    meas = weighted_measure(mesh, spec.k, spec.eps)
    psi = np.zeros(mesh.n_nodes) if psi0 is None else np.array(psi0, dtype=float)
    psi[mesh.boundary] = 0.0

    status = "max_iter"
    norm = math.inf
    it = 0
    if lam == 0:
        _, f = meas.log_partition(np.zeros(mesh.n_nodes))
        psi = mesh.solve_load(meas.load(f))
        norm, status = 0.0, "converged"
    elif method == "picard":
        omega = damping
        prev = math.inf
        for it in range(1, max_iter + 1):
            _, f = meas.log_partition(lam * psi)
            new = mesh.solve_load(meas.load(f))
            norm = float(np.max(np.abs(new - psi)))
            if not math.isfinite(norm):
                status = "diverged"
                break
            if norm < tol:
                psi = new
                status = "converged"
                break
            if norm > prev:
                omega = max(0.5 * omega, 1e-3)
            prev = norm
            psi = psi + omega * (new - psi)
            if lam * np.max(psi) > ceiling:
                status = "diverged"
                break
    else:
        # Newton converges in a handful of steps or not at all
        for it in range(1, min(max_iter, NEWTON_MAX_ITER) + 1):
            delta, res, at_floor = _newton_step(mesh, meas, psi, lam)
            if at_floor:
                status = "converged"
                norm = 0.0
                break
            # cap the change of lam * psi so the exponential stays in range
            step = min(1.0, NEWTON_TRUST / (lam * float(np.max(np.abs(delta))) + 1e-300))
            psi = psi - step * delta
            norm = float(step * np.max(np.abs(delta)))
            if not math.isfinite(norm):
                status = "diverged"
                break
            if norm < tol and step == 1.0:
                status = "converged"
                break
            if lam * np.max(psi) > ceiling:
                status = "diverged"
                break
    if status == "converged" and lam * np.max(psi) > ceiling:
        status = "diverged"
    return _package(mesh, spec, meas, psi, it, norm, status, method, warnings)


def _package(mesh, spec, meas, psi, it, norm, status, method, warnings) -> MeanFieldSolution:
    lam = spec.lam
    logz, f = meas.log_partition(lam * psi)
    residual = float(np.max(np.abs(mesh.solve_load(meas.load(f)) - psi)))
    sc = _scalars(meas, f, psi, spec.sigma, lam)
    if status != "converged":
        log.info("%s sigma=%g lambda=%g: %s after %d iterations (update %.3g)", method,
                 spec.sigma, lam, status, it, norm)
    return MeanFieldSolution(
        mesh=mesh, spec=spec, measure=meas, psi=psi, f=f, log_partition=logz,
        mass=sc.mass, energy=sc.energy, vortex_energy=sc.vortex_energy, entropy=sc.entropy,
        free_energy=sc.free_energy, j_value=sc.j_value, iterations=it, update_norm=norm,
        converged=status == "converged", status=status, method=method, residual=residual,
        warnings=warnings,
    )


def solve_at_energy(
    mesh: DomainMesh,
    sigma: float,
    eps: float,
    energy: float,
    *,
    psi0: np.ndarray | None = None,
    lam0: float | None = None,
    tol: float = 1e-10,
    ceiling: float = DEFAULT_CEILING,
    max_iter: int = NEWTON_MAX_ITER,
) -> MeanFieldSolution:
    """Solution of the mean field equation with prescribed ``1/2 int rho psi``.

    ``(psi, lam)`` are found together by Newton's method on the bordered
    system.  Near ``lambda_sigma`` the branch is nearly vertical in ``lam``,
    so this is the reliable way to follow concentrating solutions.  Warm
    starts (``psi0`` with its ``lam0``) should come from a nearby energy.
    """
    if not (math.isfinite(energy) and energy > 0):
        raise ConfigurationError("energy must be positive and finite")
    if psi0 is None or lam0 is None:
        lam0 = 0.5 * min(lambda_sigma(sigma), 8.0 * math.pi)
        psi0 = solve_cvp(mesh, WeightSpec(sigma, lam0, eps), method="newton", ceiling=ceiling).psi
    psi = np.array(psi0, dtype=float)
    psi[mesh.boundary] = 0.0
    lam = float(lam0)
    free = mesh.free
    s_ff = mesh.stiffness[free][:, free]
    status, norm, it = "max_iter", math.inf, 0
    meas = weighted_measure(mesh, sigma * lam, eps, cache=False)
    for it in range(1, max_iter + 1):
        lin = _linearize(mesh, meas, psi, lam)
        # d load / d lam: log of the integrand moves by psi - sigma G
        fq = meas.W * meas.at_points(lin.f)
        dq = meas.log_at_points(psi) - sigma * meas.g_values
        dload = meas.to_nodes(fq * dq)[free] - lin.u * float(np.dot(fq, dq))
        grad = s_ff @ psi[free]
        gval = 0.5 * float(np.dot(psi[free], grad)) - energy
        z1 = lin.solve(lin.res)
        z2 = lin.solve(-dload)
        dlam = (gval - float(np.dot(grad, z1))) / float(np.dot(grad, z2))
        dpsi = -z1 - dlam * z2
        big = max(float(np.max(np.abs(lam * dpsi + dlam * psi[free]))), abs(dlam) / max(lam, 1e-300))
        step = min(1.0, NEWTON_TRUST / (big + 1e-300))
        psi[free] += step * dpsi
        lam += step * dlam
        norm = float(step * np.max(np.abs(dpsi)))
        if not (math.isfinite(norm) and math.isfinite(lam)) or lam <= 0:
            status = "diverged"
            break
        meas = weighted_measure(mesh, sigma * lam, eps, cache=False)
        if lam * np.max(psi) > ceiling:
            status = "diverged"
            break
        e_floor = 1e3 * np.finfo(float).eps * float(np.dot(np.abs(psi[free]), abs(s_ff) @ np.abs(psi[free])))
        on_branch = abs(gval) <= max(1e-14 * energy, e_floor)
        if step == 1.0 and on_branch and (norm < tol or lin.at_floor):
            status = "converged"
            break
    spec = WeightSpec(sigma, lam, eps)
    warnings = []
    if lam >= lambda_sigma(sigma):
        warnings.append(f"lambda >= lambda_sigma = {lambda_sigma(sigma):.6g}")
    return _package(mesh, spec, meas, psi, it, norm, status, "bordered", warnings)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class EnsembleCurve:
    """Samples of a warm-started sweep in ``lam``.

    ``E`` is the energy entering the microcanonical constraint,
    ``E(rho) - sigma int rho G_eps``; the interaction energy alone is kept in
    ``energy``.
    """

    sigma: float
    eps: float
    lam: np.ndarray
    E: np.ndarray
    energy: np.ndarray
    S: np.ndarray
    F: np.ndarray
    J: np.ndarray
    sup_psi: np.ndarray
    mass_b01: np.ndarray
    mass_b001: np.ndarray
    status: list
    solutions: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> np.ndarray:
        return np.array([s == "converged" for s in self.status])

    @property
    def branch_end(self) -> float | None:
        bad = np.flatnonzero(~self.converged)
        return float(self.lam[bad[0]]) if bad.size else None

    def rows(self) -> list[dict]:
        out = []
        for i in range(self.lam.size):
            out.append({"lambda": float(self.lam[i]), "E": float(self.E[i]), "S": float(self.S[i]),
                        "F": float(self.F[i]), "J": float(self.J[i]), "sup_psi": float(self.sup_psi[i]),
                        "mass_b01": float(self.mass_b01[i]), "mass_b001": float(self.mass_b001[i]),
                        "status": self.status[i]})
        return out

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
            wr.writeheader()
            for row in self.rows():
                wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def sweep_lambda(
    mesh: DomainMesh,
    sigma: float,
    eps: float,
    lam_grid,
    *,
    warm_start: bool = True,
    threads: int = 1,
    keep_solutions: bool = False,
    **opts,
) -> EnsembleCurve:
    """Continuation in ``lam``; samples after the first failure are marked ``skipped``."""
    lam_grid = np.asarray(lam_grid, dtype=float)
    if lam_grid.ndim != 1 or lam_grid.size == 0:
        raise ConfigurationError("lambda grid must be a non-empty 1-D sequence")
    if np.any(np.diff(lam_grid) <= 0):
        raise ConfigurationError("lambda grid must be strictly increasing")
    if lam_grid[0] < 0:
        raise ConfigurationError("lambda must be non-negative")
    n = lam_grid.size
    sols: list = [None] * n
    if warm_start or threads <= 1:
        psi = None
        failed = False
        for i, lam in enumerate(lam_grid):
            if failed:
                continue
            sol = solve_cvp(mesh, WeightSpec(sigma, float(lam), eps), psi0=psi, **opts)
            sols[i] = sol
            if not sol.converged:
                failed = True
            elif warm_start:
                psi = sol.psi
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(solve_cvp, mesh, WeightSpec(sigma, float(l), eps), **opts) for l in lam_grid]
            sols = [f.result() for f in futs]
        seen_fail = False
        for i, s in enumerate(sols):
            if seen_fail:
                sols[i] = None
            elif not s.converged:
                seen_fail = True
    nan = float("nan")

    def col(fn):
        return np.array([fn(s) if s is not None else nan for s in sols])

    status = [s.status if s is not None else "skipped" for s in sols]
    status = ["converged" if st == "converged" else ("skipped" if st == "skipped" else "diverged") for st in status]
    return EnsembleCurve(
        sigma=float(sigma), eps=float(eps), lam=lam_grid,
        E=col(lambda s: s.regularized_energy), energy=col(lambda s: s.energy),
        S=col(lambda s: s.entropy), F=col(lambda s: s.free_energy), J=col(lambda s: s.j_value),
        sup_psi=col(lambda s: s.sup_psi), mass_b01=col(lambda s: s.mass_within(0.1)),
        mass_b001=col(lambda s: s.mass_within(0.01)), status=status,
        solutions=sols if keep_solutions else [],
    )
