"""Meshes, Dirichlet Poisson solves, Green functions and the singular vortex weight.

Two mesh kinds are supported:

* ``disk-radial``: radially symmetric fields on the unit disk, discretized with
  piecewise-linear elements in ``r`` (node 0 at the origin, last node on the
  boundary).  Loads are integrated against the hat functions with the exact
  power-law antiderivative on the cell touching the origin, so weights of the
  form ``r**(2a)`` with ``a > -1`` are handled without quadrature error there.
* ``grid-2d``: a uniform rectangular grid with the 5-point Laplacian and
  trapezoidal cell areas.  The origin must be a grid node.
* ``polar``: a quadrature-only sample mesh with rings around an arbitrary
  centre, used to evaluate off-centre profiles.

Both discretizations share one algebraic form: a symmetric positive definite
stiffness matrix ``S`` on the free (non-Dirichlet) nodes and a nodal load
vector ``b``; ``psi = S^{-1} b`` and ``int rho psi = b . psi = psi^T S psi``.

A field is a plain ``numpy`` array with one value per mesh node.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import splu
from scipy.special import roots_jacobi

from .errors import ConfigurationError, DomainError, InternalError

TWO_PI = 2.0 * math.pi
FOUR_PI = 4.0 * math.pi

_GL_ORDER = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


@dataclass(frozen=True, eq=False)
class DomainMesh:
    """Discretized domain containing the origin as an interior node.

    Attributes
    ----------
    kind : {"disk-radial", "grid-2d", "polar"}
    x, y : node coordinates (for the radial mesh ``x = r`` and ``y = 0``).
    weights : area quadrature weight per node; they sum to ``area``.
    boundary : Dirichlet mask.
    area : measure of the domain.
    stiffness : symmetric sparse matrix of the discrete Dirichlet form on all
        nodes; restricted to the free nodes it is the Poisson operator
        (``None`` for quadrature-only meshes).
    radii : node radii for the radial mesh, else ``None``.
    shape : ``(ny, nx)`` for grids, else ``None``.
    h : grid spacing for grids, else ``None``.
    """

    kind: str
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    boundary: np.ndarray
    area: float
    stiffness: sparse.csr_matrix | None
    origin_index: int
    radii: np.ndarray | None = None
    shape: tuple[int, int] | None = None
    h: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return int(self.x.size)

    @property
    def is_radial(self) -> bool:
        return self.kind == "disk-radial"

    @cached_property
    def radius(self) -> np.ndarray:
        """Distance of every node to the origin."""
        if self.is_radial:
            return self.radii
        return np.hypot(self.x, self.y)

    @cached_property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @cached_property
    def _factor(self):
        if self.stiffness is None:
            raise ConfigurationError(f"{self.kind} meshes carry no Poisson operator")
        s = self.stiffness[self.free][:, self.free].tocsc()
        try:
            return splu(s)
        except RuntimeError as exc:  # pragma: no cover - valid meshes are SPD
            raise InternalError(f"singular Poisson matrix: {exc}") from exc

    @cached_property
    def _coupling(self) -> sparse.csr_matrix:
        if self.stiffness is None:
            raise ConfigurationError(f"{self.kind} meshes carry no Poisson operator")
        bnd = np.flatnonzero(self.boundary)
        return self.stiffness[self.free][:, bnd].tocsr()

    def solve_load(self, load: np.ndarray) -> np.ndarray:
        """Solve ``S psi = load`` on the free nodes with ``psi = 0`` on the boundary."""
        load = np.asarray(load, dtype=float)
        out = np.zeros(self.n_nodes)
        out[self.free] = self._factor.solve(load[self.free])
        return out

    def harmonic_extension(self, boundary_values: np.ndarray) -> np.ndarray:
        """Discrete harmonic field with the given values on boundary nodes."""
        vals = np.asarray(boundary_values, dtype=float)
        bnd = np.flatnonzero(self.boundary)
        out = np.zeros(self.n_nodes)
        out[bnd] = vals[bnd]
        out[self.free] = self._factor.solve(-(self._coupling @ vals[bnd]))
        return out

    def dirichlet_energy(self, psi: np.ndarray) -> float:
        """Discrete ``int |grad psi|^2``."""
        if self.stiffness is None:
            raise ConfigurationError(f"{self.kind} meshes carry no Poisson operator")
        psi = np.asarray(psi, dtype=float)
        return float(psi @ (self.stiffness @ psi))

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def min_cell(self) -> float:
        if self.is_radial:
            return float(np.min(np.diff(self.radii)))
        if self.h is None:
            raise ConfigurationError(f"{self.kind} meshes have no uniform cell size")
        return float(self.h)

    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Left and right radius of every radial cell."""
        self._require_radial()
        return self.radii[:-1], self.radii[1:]

    def _require_radial(self) -> None:
        if not self.is_radial:
            raise ConfigurationError("operation requires a radial disk mesh")

    def describe(self) -> dict:
        out = {"kind": self.kind, "n_nodes": self.n_nodes, "area": self.area}
        out.update({k: v for k, v in self.meta.items() if not k.startswith("_")})
        return out


# ---------------------------------------------------------------------------
# construction


def _graded_radii(n_nodes: int, r_min: float, log_fraction: float) -> np.ndarray:
    """Geometric cells from ``r_min`` joined smoothly to uniform cells up to 1."""
    n_geo = max(2, int(round(log_fraction * n_nodes)))
    n_uni = n_nodes - 1 - n_geo
    if n_uni < 1:
        raise ConfigurationError("too few nodes for the requested grading")

    # r_t = r_min q^(n_geo-1) and the uniform spacing equals the next geometric step
    def gap(logq: float) -> float:
        q = math.exp(logq)
        return math.log(r_min) + (n_geo - 1) * logq + math.log1p(n_uni * (q - 1.0))

    logq = brentq(gap, 1e-12, 50.0, xtol=1e-15)
    q = math.exp(logq)
    geo = r_min * q ** np.arange(n_geo)
    r_t = geo[-1]
    uni = np.linspace(r_t, 1.0, n_uni + 1)[1:]
    radii = np.concatenate(([0.0], geo, uni))
    radii[-1] = 1.0
    return radii


def build_disk_mesh(
    n_nodes: int,
    grading: str = "uniform",
    *,
    r_min: float = 1e-6,
    log_fraction: float = 0.25,
) -> DomainMesh:
    """Radial mesh of the unit disk with ``n_nodes`` radii ``0 = r_0 < ... < r_N = 1``.

    ``grading="log-near-origin"`` places a geometric progression of cells
    starting at ``r_min`` (about ``log_fraction`` of the nodes) and switches to
    uniform cells once the geometric step reaches the uniform spacing.
    """
    if int(n_nodes) != n_nodes or n_nodes < 16:
        raise ConfigurationError("a disk mesh needs at least 16 nodes")
    n_nodes = int(n_nodes)
    if grading == "uniform":
        radii = np.linspace(0.0, 1.0, n_nodes)
    elif grading in ("log-near-origin", "log"):
        if not 0.0 < r_min < 1e-2:
            raise ConfigurationError("r_min must lie in (0, 1e-2)")
        radii = _graded_radii(n_nodes, r_min, log_fraction)
        grading = "log-near-origin"
    else:
        raise ConfigurationError(f"unknown grading {grading!r}")
    return _radial_mesh(radii, grading)


def disk_mesh_from_radii(radii: np.ndarray) -> DomainMesh:
    """Radial mesh from explicit radii (must start at 0, end at 1, increase)."""
    radii = np.asarray(radii, dtype=float)
    if radii.size < 16 or radii[0] != 0.0 or radii[-1] != 1.0 or np.any(np.diff(radii) <= 0):
        raise ConfigurationError("radii must increase strictly from 0 to 1 (>= 16 nodes)")
    return _radial_mesh(radii, "custom")


def _radial_mesh(radii: np.ndarray, grading: str) -> DomainMesh:
    n = radii.size
    r1, r2 = radii[:-1], radii[1:]
    hc = r2 - r1
    # 2 pi int phi_i r dr on each cell, split between left and right node
    left = TWO_PI * hc * (2.0 * r1 + r2) / 6.0
    right = TWO_PI * hc * (r1 + 2.0 * r2) / 6.0
    weights = np.zeros(n)
    np.add.at(weights, np.arange(n - 1), left)
    np.add.at(weights, np.arange(1, n), right)
    # 2 pi int phi_i' phi_j' r dr, cell contribution pi (r1 + r2) / h
    k = math.pi * (r1 + r2) / hc
    diag = np.zeros(n)
    np.add.at(diag, np.arange(n - 1), k)
    np.add.at(diag, np.arange(1, n), k)
    stiff = sparse.diags([-k, diag, -k], [-1, 0, 1], format="csr")
    boundary = np.zeros(n, dtype=bool)
    boundary[-1] = True
    return DomainMesh(
        kind="disk-radial",
        x=radii.copy(),
        y=np.zeros(n),
        weights=weights,
        boundary=boundary,
        area=math.pi,
        stiffness=stiff,
        origin_index=0,
        radii=radii.copy(),
        meta={"grading": grading, "r1": float(radii[1])},
    )


def build_grid_mesh(
    width: float,
    height: float,
    h: float,
    origin_offset: tuple[float, float] = (0.0, 0.0),
) -> DomainMesh:
    """Uniform grid on a ``width x height`` rectangle.

    The rectangle is centred at ``-origin_offset``, i.e. the origin sits at
    ``origin_offset`` relative to the rectangle centre.  The origin must be an
    interior grid node.
    """
    if h <= 0 or width <= 0 or height <= 0:
        raise ConfigurationError("width, height and h must be positive")
    nx_f, ny_f = width / h, height / h
    nx, ny = int(round(nx_f)), int(round(ny_f))
    if abs(nx - nx_f) > 1e-9 * max(1.0, nx_f) or abs(ny - ny_f) > 1e-9 * max(1.0, ny_f):
        raise ConfigurationError("width and height must be integer multiples of h")
    ox, oy = origin_offset
    xmin, ymin = -0.5 * width - ox, -0.5 * height - oy
    i0_f, j0_f = -xmin / h, -ymin / h
    i0, j0 = int(round(i0_f)), int(round(j0_f))
    if abs(i0 - i0_f) > 1e-9 * max(1.0, i0_f) or abs(j0 - j0_f) > 1e-9 * max(1.0, j0_f):
        raise ConfigurationError("the origin must coincide with a grid node")
    if not (0 < i0 < nx and 0 < j0 < ny):
        raise ConfigurationError("the origin must lie strictly inside the rectangle")
    nxp, nyp = nx + 1, ny + 1
    ii, jj = np.meshgrid(np.arange(nxp), np.arange(nyp))
    ii, jj = ii.ravel(), jj.ravel()
    x = xmin + ii * h
    y = ymin + jj * h
    # snap the origin exactly
    x[ii == i0] = 0.0
    y[jj == j0] = 0.0
    edge_x = (ii == 0) | (ii == nx)
    edge_y = (jj == 0) | (jj == ny)
    boundary = edge_x | edge_y
    weights = np.full(x.size, h * h)
    weights[edge_x] *= 0.5
    weights[edge_y] *= 0.5

    idx = np.arange(x.size).reshape(nyp, nxp)
    a = np.concatenate((idx[:, :-1].ravel(), idx[:-1, :].ravel()))
    b = np.concatenate((idx[:, 1:].ravel(), idx[1:, :].ravel()))
    ones = np.ones(a.size)
    adj = sparse.coo_matrix((ones, (a, b)), shape=(x.size, x.size))
    adj = adj + adj.T
    deg = np.asarray(adj.sum(axis=1)).ravel()
    stiff = (sparse.diags(deg) - adj).tocsr()
    return DomainMesh(
        kind="grid-2d",
        x=x,
        y=y,
        weights=weights,
        boundary=boundary,
        area=float(width * height),
        stiffness=stiff,
        origin_index=int(j0 * nxp + i0),
        shape=(nyp, nxp),
        h=float(h),
        meta={"width": float(width), "height": float(height), "h": float(h),
              "origin_offset": [float(ox), float(oy)]},
    )


def _ring_weights(s: np.ndarray) -> np.ndarray:
    """Weights ``w`` with ``sum w F(s_i) ~ int_0^1 s F(s) ds`` (non-uniform Simpson)."""
    w = np.zeros(s.size)
    n_pairs = (s.size - 1) // 2
    i = 2 * np.arange(n_pairs)
    h0, h1 = s[i + 1] - s[i], s[i + 2] - s[i + 1]
    tot = h0 + h1
    np.add.at(w, i, tot / 6.0 * (2.0 - h1 / h0))
    np.add.at(w, i + 1, tot ** 3 / (6.0 * h0 * h1))
    np.add.at(w, i + 2, tot / 6.0 * (2.0 - h0 / h1))
    if (s.size - 1) % 2:
        h = s[-1] - s[-2]
        w[-2] += 0.5 * h
        w[-1] += 0.5 * h
    return w * s


def build_polar_mesh(
    center: tuple[float, float],
    n_rings: int = 800,
    n_angles: int = 64,
    s_min: float = 1e-8,
    log_fraction: float = 0.5,
) -> DomainMesh:
    """Quadrature-only sample mesh of the unit disk with rings around ``center``.

    Along the ray of angle ``theta`` from ``center`` the nodes sit at
    ``s * R(theta)`` where ``R`` is the distance to the unit circle and ``s``
    is graded like the radial disk mesh (geometric from ``s_min``, then
    uniform up to 1).  Along each ray ``s F(s)`` is integrated with Simpson's
    rule on pairs of cells, so sharply peaked fields centred at ``center`` are
    resolved.  The mesh has
    no Poisson operator.
    """
    cx, cy = map(float, center)
    if not math.hypot(cx, cy) < 1.0:
        raise ConfigurationError("the centre must lie inside the unit disk")
    if n_rings < 4 or n_angles < 8:
        raise ConfigurationError("need at least 4 rings and 8 angles")
    if not 0.0 < s_min < 0.1:
        raise ConfigurationError("s_min must lie in (0, 0.1)")
    if not 0.0 < log_fraction < 1.0:
        raise ConfigurationError("log_fraction must lie in (0, 1)")
    s = _graded_radii(n_rings + 1, s_min, log_fraction)
    ws = _ring_weights(s)
    theta = TWO_PI * np.arange(n_angles) / n_angles
    ux, uy = np.cos(theta), np.sin(theta)
    # distance from the centre to the unit circle along each ray
    proj = cx * ux + cy * uy
    reach = -proj + np.sqrt(proj * proj + 1.0 - cx * cx - cy * cy)
    dtheta = TWO_PI / n_angles
    x = np.concatenate(([cx], (cx + np.outer(s[1:], reach * ux)).ravel()))
    y = np.concatenate(([cy], (cy + np.outer(s[1:], reach * uy)).ravel()))
    scale = dtheta * reach * reach
    weights = np.concatenate(([ws[0] * scale.sum()], np.outer(ws[1:], scale).ravel()))
    boundary = np.zeros(x.size, dtype=bool)
    boundary[-n_angles:] = True
    return DomainMesh(
        kind="polar",
        x=x,
        y=y,
        weights=weights,
        boundary=boundary,
        area=float(weights.sum()),
        stiffness=None,
        origin_index=int(np.argmin(np.hypot(x, y))),
        meta={"center": [cx, cy], "n_rings": int(n_rings), "n_angles": int(n_angles),
              "s_min": float(s_min), "log_fraction": float(log_fraction)},
    )


# ---------------------------------------------------------------------------
# Poisson and Green operators


def poisson_solve(mesh: DomainMesh, rhs: np.ndarray, weight: "WeightedMeasure | None" = None) -> np.ndarray:
    """Solve ``-Laplace psi = rhs`` with ``psi = 0`` on the boundary.

    Without ``weight`` the load is ``weights * rhs`` (exact for piecewise
    constant data on the radial mesh).  With a :class:`WeightedMeasure` the
    source is ``H * rhs`` and the load uses the exact weighted moments, so
    ``rhs`` should be the smooth factor of the density.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (mesh.n_nodes,):
        raise ConfigurationError("rhs must have one value per node")
    if not np.all(np.isfinite(rhs)):
        raise ConfigurationError("rhs must be finite")
    load = weight.load(rhs) if weight is not None else mesh.weights * rhs
    return mesh.solve_load(load)


def green_operator(mesh: DomainMesh, rho: np.ndarray) -> np.ndarray:
    """``G[rho]`` for a nodal density with the area quadrature."""
    return poisson_solve(mesh, rho)


def _disk_green(r: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return -np.log(r) / TWO_PI


def _disk_green_reg(r: np.ndarray, eps: float) -> np.ndarray:
    e2 = eps * eps
    return (np.log1p(e2) - np.log(e2 + r * r)) / FOUR_PI


def _grid_regular_part(mesh: DomainMesh, eps: float) -> np.ndarray:
    key = ("regular", float(eps))
    cache = mesh.meta.setdefault("_cache", {})
    if key not in cache:
        r2 = mesh.x ** 2 + mesh.y ** 2 + eps * eps
        data = np.zeros(mesh.n_nodes)
        bnd = mesh.boundary
        data[bnd] = np.log(r2[bnd]) / FOUR_PI
        cache[key] = mesh.harmonic_extension(data)
    return cache[key]


def green_vortex(mesh: DomainMesh) -> np.ndarray:
    """``x -> G(x, 0)``; the origin node carries ``+inf``."""
    if mesh.is_radial:
        return _disk_green(mesh.radii)
    r = mesh.radius
    with np.errstate(divide="ignore"):
        g = -np.log(r) / TWO_PI + _grid_regular_part(mesh, 0.0)
    g[mesh.boundary] = 0.0
    return g


def regularized_green(mesh: DomainMesh, eps: float) -> np.ndarray:
    """Regularized vortex Green function with ``|x|`` replaced by ``sqrt(eps^2 + |x|^2)``."""
    if not eps > 0:
        raise ConfigurationError("regularization eps must be positive")
    if mesh.is_radial:
        return _disk_green_reg(mesh.radii, eps)
    r2 = mesh.x ** 2 + mesh.y ** 2 + eps * eps
    g = -np.log(r2) / FOUR_PI + _grid_regular_part(mesh, eps)
    g[mesh.boundary] = 0.0
    return g


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightSpec:
    """Physical parameters of the vortex weight ``H = exp(-sigma lam G)``."""

    sigma: float
    lam: float
    eps: float = 0.0

    @property
    def a(self) -> float:
        """Exponent of ``(eps^2 + |x|^2)`` in the weight: ``sigma lam / (4 pi)``."""
        return self.sigma * self.lam / FOUR_PI

    @property
    def k(self) -> float:
        return self.sigma * self.lam

    def validate(self) -> "WeightSpec":
        if not all(math.isfinite(v) for v in (self.sigma, self.lam, self.eps)):
            raise ConfigurationError("sigma, lambda and eps must be finite")
        if self.lam < 0:
            raise ConfigurationError("lambda must be non-negative")
        if self.eps < 0:
            raise ConfigurationError("eps must be non-negative")
        if self.eps == 0 and self.a <= -1.0:
            raise DomainError(
                f"weight not integrable: sigma={self.sigma}, lambda={self.lam} "
                f"requires lambda < 4 pi/|sigma| = {FOUR_PI / abs(self.sigma):.6g}"
            )
        return self


class WeightedMeasure:
    """Quadrature for densities ``rho = H f`` with ``H = exp(-k G_eps)``.

    On radial meshes ``log f`` is interpolated linearly inside every cell and
    integrated with Gauss-Legendre points (Gauss-Jacobi with the exact
    ``r^(2a+1)`` weight on the cell touching the origin when ``eps = 0``).  On
    grids the rule is the lumped nodal one.  ``h`` is the nodal weight used to
    convert between ``f`` and nodal densities; at a singular origin it is the
    cell average, which keeps it finite and positive.

    Because one positive quadrature is used for every integral, the discrete
    normalization, Jensen inequality and the identity
    ``int rho log(rho/H) = lam int rho psi - log Z`` hold to rounding error.
    """

    def __init__(self, mesh: DomainMesh, k: float, eps: float, weights: np.ndarray,
                 g_values: np.ndarray, h: np.ndarray, interp: sparse.csr_matrix | None,
                 cells: np.ndarray | None = None):
        self.mesh = mesh
        self.k = float(k)
        self.eps = float(eps)
        self.W = weights
        self.WG = weights * g_values
        self.g_values = g_values
        self.h = h
        self.P = interp
        self.PT = interp.T.tocsr() if interp is not None else None
        self.cells = cells

    @property
    def log_h_coeff(self) -> float:
        """``log H = log_h_coeff * G_eps``."""
        return -self.k

    def at_points(self, f: np.ndarray) -> np.ndarray:
        """Values of the (log-linearly interpolated) field at quadrature points."""
        f = np.asarray(f, dtype=float)
        if self.P is None:
            return f
        with np.errstate(divide="ignore"):
            return np.exp(self.P @ np.log(f))

    def log_at_points(self, u: np.ndarray) -> np.ndarray:
        return u if self.P is None else self.P @ u

    def to_nodes(self, q: np.ndarray) -> np.ndarray:
        """Pair point values with the hat functions: ``sum_q W_q q_q phi_i(x_q)``."""
        return q if self.PT is None else self.PT @ q

    def load(self, f: np.ndarray) -> np.ndarray:
        """Nodal load ``int H f phi_i``."""
        return self.to_nodes(self.W * self.at_points(f))

    def total(self, f: np.ndarray) -> float:
        return float(np.dot(self.W, self.at_points(f)))

    def moment_g(self, f: np.ndarray) -> float:
        """``int H f G_eps``."""
        return float(np.dot(self.WG, self.at_points(f)))

    def xlogx(self, f: np.ndarray) -> float:
        """``int H f log f``."""
        fq = self.at_points(f)
        pos = fq > 0
        return float(np.dot(self.W[pos] * fq[pos], np.log(fq[pos])))

    def log_partition(self, lam_psi: np.ndarray) -> tuple[float, np.ndarray]:
        """``log int H e^(lam psi)`` (max-shifted) and the nodal ``f = e^(lam psi)/Z``."""
        top = float(np.max(lam_psi))
        uq = self.log_at_points(lam_psi - top)
        z = float(np.dot(self.W, np.exp(uq)))
        logz = top + math.log(z)
        return logz, np.exp(lam_psi - logz)

    def mass_operator(self, f: np.ndarray) -> sparse.csr_matrix:
        """Sparse ``int H f phi_i phi_j`` (derivative of the load for ``f = e^u``)."""
        fq = self.W * self.at_points(f)
        if self.P is None:
            return sparse.diags(fq, format="csr")
        return (self.PT @ sparse.diags(fq) @ self.P).tocsr()

    def mass_within(self, f: np.ndarray) -> np.ndarray:
        """Cumulative ``int_{B_r} H f`` at every node radius (radial meshes)."""
        if self.cells is None:
            raise ConfigurationError("cumulative mass requires a radial mesh")
        per_cell = np.bincount(self.cells, weights=self.W * self.at_points(f),
                               minlength=self.mesh.n_nodes - 1)
        return np.concatenate(([0.0], np.cumsum(per_cell)))


def _radial_rule(radii: np.ndarray, a: float, eps: float):
    """Quadrature points, weights (``2 pi r H`` included), G values and hat values."""
    r1, r2 = radii[:-1], radii[1:]
    hc = r2 - r1
    t = 0.5 * (r1 + r2)[:, None] + 0.5 * hc[:, None] * _GL_X[None, :]
    gw = 0.5 * hc[:, None] * _GL_W[None, :]
    if eps > 0:
        e2 = eps * eps
        hval = np.exp(a * (np.log(e2 + t * t) - math.log1p(e2)))
        gval = _disk_green_reg(t, eps)
    else:
        hval = t ** (2.0 * a) if a != 0 else np.ones_like(t)
        gval = -np.log(t) / TWO_PI
    weights = TWO_PI * gw * t * hval
    if eps == 0:
        # Gauss-Jacobi on [0, r_1] with the exact weight r^(2a+1)
        rc = radii[1]
        p = 2.0 * a + 1.0
        xj, wj = roots_jacobi(_GL_ORDER, 0.0, p)
        tj = 0.5 * rc * (1.0 + xj)
        t[0] = tj
        weights[0] = TWO_PI * wj * (0.5 * rc) ** (p + 1.0)
        gval[0] = -np.log(tj) / TWO_PI
    phi_r = (t - r1[:, None]) / hc[:, None]
    ncell = r1.size
    cells = np.repeat(np.arange(ncell), _GL_ORDER)
    rows = np.arange(cells.size)
    interp = sparse.csr_matrix(
        (np.concatenate(((1.0 - phi_r).ravel(), phi_r.ravel())),
         (np.concatenate((rows, rows)), np.concatenate((cells, cells + 1)))),
        shape=(cells.size, radii.size),
    )
    return weights.ravel(), gval.ravel(), interp, cells, t.ravel()


def radial_quadrature(radii: np.ndarray, a: float, eps: float, r_max: float | None = None):
    """Points ``t`` and weights ``w`` with ``sum w F(t) ~ int_0^r_max 2 pi r (eps^2 + r^2)^a F(r) dr``.

    Cells are those of ``radii`` cut at ``r_max``; the rule is exact for the
    power weight on the cell touching the origin when ``eps = 0``.
    """
    radii = np.asarray(radii, dtype=float)
    if r_max is not None:
        if not 0.0 < r_max <= radii[-1]:
            raise ConfigurationError("r_max must lie in (0, outer radius]")
        inner = radii[radii < r_max]
        radii = np.concatenate((inner, [r_max]))
    if eps == 0 and a <= -1.0:
        raise DomainError("weight not integrable at the origin")
    w, _, _, _, t = _radial_rule(radii, a, eps)
    if eps > 0:
        w = w * (1.0 + eps * eps) ** a
    return t, w


def weighted_measure(mesh: DomainMesh, k: float, eps: float, *, cache: bool = True) -> WeightedMeasure:
    """Quadrature for the weight ``exp(-k G_eps)`` (``k = sigma lam``); cached per mesh."""
    store = mesh.meta.setdefault("_cache", {}) if cache else {}
    key = ("measure", float(k), float(eps))
    if key in store:
        return store[key]
    a = k / FOUR_PI
    if eps < 0:
        raise ConfigurationError("eps must be non-negative")
    if eps == 0 and a <= -1.0:
        raise DomainError("weight not integrable at the origin")
    n = mesh.n_nodes
    if mesh.is_radial:
        wq, gq, interp, cells, _ = _radial_rule(mesh.radii, a, eps)
        r = mesh.radii
        if eps > 0:
            e2 = eps * eps
            h = np.exp(a * (np.log(e2 + r * r) - math.log1p(e2)))
        else:
            with np.errstate(divide="ignore"):
                h = r ** (2.0 * a) if a != 0 else np.ones(n)
        if not (np.isfinite(h[0]) and h[0] > 0):
            # cell average of H over the origin cell, paired with phi_0
            sel = cells == 0
            h[0] = float(np.sum(wq[sel] * interp[sel][:, 0].toarray().ravel())) / mesh.weights[0]
        meas = WeightedMeasure(mesh, k, eps, wq, gq, h, interp, cells)
    else:
        c = mesh.weights
        if eps > 0:
            g = regularized_green(mesh, eps)
            h = np.exp(-k * g)
            meas = WeightedMeasure(mesh, k, eps, c * h, g, h, None)
        else:
            if k != 0:
                raise ConfigurationError("grid meshes need eps > 0 for a non-trivial vortex weight")
            g = green_vortex(mesh).copy()
            o = mesh.origin_index
            s = 0.5 * mesh.h
            # cell average over [-s, s]^2 of -(1/2pi) log|x|, plus the regular part
            log_int = 2.0 * s * s * (2.0 * math.log(s) + math.log(2.0) - 3.0 + math.pi / 2.0)
            g[o] = -log_int / TWO_PI / c[o] + _grid_regular_part(mesh, 0.0)[o]
            meas = WeightedMeasure(mesh, 0.0, 0.0, c.copy(), g, np.ones(n), None)
    store[key] = meas
    return meas


def weight_field(mesh: DomainMesh, spec: WeightSpec) -> np.ndarray:
    """Nodal weight ``H = exp(-sigma lam G)`` (``G_eps`` when ``eps > 0``).

    With ``eps = 0`` the origin node carries ``0`` when ``sigma lam > 0`` and
    ``+inf`` when ``sigma lam < 0``.
    """
    spec.validate()
    if spec.eps > 0:
        return np.exp(-spec.k * regularized_green(mesh, spec.eps))
    if spec.k == 0:
        return np.ones(mesh.n_nodes)
    if not mesh.is_radial:
        raise ConfigurationError("grid meshes need eps > 0 for a non-trivial vortex weight")
    with np.errstate(divide="ignore"):
        return mesh.radii ** (2.0 * spec.a)


# ---------------------------------------------------------------------------
# output


def write_field_csv(path: str | Path, mesh: DomainMesh, values: np.ndarray) -> None:
    """Dump a nodal field as CSV with columns ``node_id, x, y, weight, value``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["node_id", "x", "y", "weight", "value"])
        for i in range(mesh.n_nodes):
            wr.writerow([i, repr(float(mesh.x[i])), repr(float(mesh.y[i])),
                         repr(float(mesh.weights[i])), repr(float(values[i]))])


def read_field_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a field dump back into column arrays."""
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty field file")
    return {key: np.array([float(r[key]) for r in rows]) for key in ("node_id", "x", "y", "weight", "value")}
