"""Logarithmic radial grid, quadrature, Coulomb multipoles and bound states.

Every radial quantity in the package is a plain ``numpy`` array sampled on a
:class:`RadialGrid`.  Orbitals are stored as ``u(r) = r R(r)`` so that
``integrate(u**2) == 1`` for a normalized orbital, and densities are stored
angularly integrated, ``n_rad(r) = 4 pi r**2 n(r)``.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numba
import numpy as np

from .errors import ConfigurationError, DomainError, SolverError

__all__ = [
    "RadialGrid",
    "build_grid",
    "hartree_potential",
    "multipole_integral_k",
    "solve_bound_states",
    "threej_squared",
    "radial_derivative",
]

# Lagrange stencil width used for cumulative integrals and derivatives.
_STENCIL = 8


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Log-spaced radial mesh ``r_i = r_min exp(i h)``.

    Parameters
    ----------
    r : ndarray
        Strictly increasing positive radii with a constant ratio.

    Attributes
    ----------
    h : float
        Step in ``x = ln r``.
    w : ndarray
        Trapezoidal weights in ``x``: ``integrate(f) = sum(w * f)``
        approximates ``int f dr``.
    """

    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.ndim != 1 or r.size < _STENCIL + 2:
            raise ConfigurationError("grid needs a 1-d array of at least 10 points")
        if not np.all(np.isfinite(r)) or np.any(r <= 0.0):
            raise ConfigurationError("grid points must be finite and positive")
        if np.any(np.diff(r) <= 0.0):
            raise ConfigurationError("grid points must be strictly increasing")
        x = np.log(r)
        dx = np.diff(x)
        h = (x[-1] - x[0]) / (r.size - 1)
        if not np.allclose(dx, h, rtol=1e-8, atol=0.0):
            raise ConfigurationError("grid is not logarithmically spaced")
        # Rebuild exactly from the endpoints so every derived grid is consistent.
        r = np.exp(x[0] + h * np.arange(r.size))
        r[-1] = float(np.asarray(self.r)[-1])
        w = h * r
        w[0] *= 0.5
        w[-1] *= 0.5
        r.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)

    @property
    def n_points(self):
        return self.r.size

    @property
    def r_min(self):
        return float(self.r[0])

    @property
    def r_max(self):
        return float(self.r[-1])

    def __eq__(self, other):
        return (
            isinstance(other, RadialGrid)
            and other.r.size == self.r.size
            and bool(np.array_equal(other.r, self.r))
        )

    def __hash__(self):
        return hash((self.r.size, self.r[0], self.r[-1]))

    def check(self, f, name="function"):
        """Return ``f`` as a float array after checking it lives on this grid."""
        f = np.asarray(f, dtype=float)
        if f.shape != self.r.shape:
            raise ConfigurationError(
                f"{name} has shape {f.shape}, grid has {self.r.shape}"
            )
        return f

    def integrate(self, f):
        """Trapezoidal quadrature of ``int_0^rmax f(r) dr`` in the log variable."""
        return float(np.dot(self.w, self.check(f)))

    def integrate_from_origin(self, f):
        """Like :meth:`integrate`, adding ``int_0^{r_min} f dr`` for a power-law ``f``."""
        f = self.check(f)
        return float(np.dot(self.w, f)) + _origin_head(f, 0, self)

    def cumulative(self, f):
        """High-order running integral ``F(r_i) = int_{r_min}^{r_i} f dr``."""
        g = self.check(f) * self.r
        idx, wts = _interval_weights(self.r.size)
        pieces = self.h * np.einsum("ij,ij->i", wts, g[idx])
        out = np.empty_like(g)
        out[0] = 0.0
        np.cumsum(pieces, out=out[1:])
        return out

    def cumulative_tail(self, f):
        """High-order running integral ``F(r_i) = int_{r_i}^{r_max} f dr``."""
        g = self.check(f) * self.r
        idx, wts = _interval_weights(self.r.size)
        pieces = self.h * np.einsum("ij,ij->i", wts, g[idx])
        out = np.empty_like(g)
        out[-1] = 0.0
        out[:-1] = np.cumsum(pieces[::-1])[::-1]
        return out

    def coarse(self):
        """Every second point, used for Richardson extrapolation."""
        return RadialGrid(self.r[::2].copy())


def build_grid(Z, n_points=600, r_max=40.0):
    """Default logarithmic grid for nuclear charge ``Z``.

    Parameters
    ----------
    Z : float
        Nuclear charge, sets ``r_min = 1e-6 / Z``.
    n_points : int
        Number of points, at least 200.
    r_max : float
        Outer radius in bohr, larger than 10.
    """
    if not np.isfinite(Z) or Z <= 0:
        raise ConfigurationError(f"Z must be positive, got {Z}")
    if int(n_points) != n_points or n_points < 200:
        raise ConfigurationError(f"n_points must be an integer >= 200, got {n_points}")
    if not np.isfinite(r_max) or r_max <= 10.0:
        raise ConfigurationError(f"r_max must exceed 10 bohr, got {r_max}")
    r_min = 1e-6 / Z
    x = np.linspace(np.log(r_min), np.log(r_max), int(n_points))
    r = np.exp(x)
    r[0] = r_min
    r[-1] = r_max
    return RadialGrid(r)


@lru_cache(maxsize=16)
def _interval_weights(n, p=_STENCIL):
    """Lagrange weights for ``int_{x_i}^{x_{i+1}} g dx / h`` on a uniform mesh.

    Each interval uses ``p`` nodes, centred where possible.
    """
    offsets = np.arange(p)
    starts = np.clip(np.arange(n - 1) - (p // 2 - 1), 0, n - p)
    vander = np.vander(offsets.astype(float), p, increasing=True).T
    cache = {}
    wts = np.empty((n - 1, p))
    for i, s in enumerate(starts):
        a = i - s
        if a not in cache:
            m = np.arange(p)
            rhs = ((a + 1.0) ** (m + 1) - float(a) ** (m + 1)) / (m + 1)
            cache[a] = np.linalg.solve(vander, rhs)
        wts[i] = cache[a]
    idx = starts[:, None] + offsets[None, :]
    idx.setflags(write=False)
    wts.setflags(write=False)
    return idx, wts


@lru_cache(maxsize=16)
def _derivative_weights(n, p=_STENCIL + 1):
    """Lagrange weights for ``dg/dx`` at every node of a uniform mesh (units of 1/h)."""
    offsets = np.arange(p)
    starts = np.clip(np.arange(n) - p // 2, 0, n - p)
    vander = np.vander(offsets.astype(float), p, increasing=True).T
    cache = {}
    wts = np.empty((n, p))
    for i, s in enumerate(starts):
        a = i - s
        if a not in cache:
            m = np.arange(p)
            rhs = np.where(m > 0, m * float(a) ** np.maximum(m - 1, 0), 0.0)
            cache[a] = np.linalg.solve(vander, rhs)
        wts[i] = cache[a]
    idx = starts[:, None] + offsets[None, :]
    return idx, wts


def radial_derivative(f, grid):
    """High-order ``df/dr`` computed as ``(df/dx) / r``."""
    f = grid.check(f)
    idx, wts = _derivative_weights(grid.n_points)
    return np.einsum("ij,ij->i", wts, f[idx]) / (grid.h * grid.r)


def _origin_head(p, k, grid):
    """Estimate ``int_0^{r_min} p r^k dr`` assuming a power law near the origin."""
    p0, p1 = p[0], p[1]
    if p0 == 0.0 or p0 * p1 <= 0.0:
        return 0.0
    s = np.log(p1 / p0) / grid.h + k
    if s <= -1.0:
        return 0.0
    return p0 * grid.r[0] ** (k + 1) / (s + 1.0)


def _screened(p, k, grid):
    r = grid.r
    inner = grid.cumulative(p * r**k) + _origin_head(p, k, grid)
    outer = grid.cumulative_tail(p / r ** (k + 1))
    return inner / r ** (k + 1) + r**k * outer


def hartree_potential(n_rad, grid):
    """Hartree potential of a spherical density.

    Parameters
    ----------
    n_rad : ndarray
        Angularly integrated density ``4 pi r^2 n(r)``.
    grid : RadialGrid

    Returns
    -------
    ndarray
        ``v_H(r) = (1/r) int_0^r n_rad + int_r^inf n_rad / r'``.
    """
    n_rad = grid.check(n_rad, "n_rad")
    if not np.all(np.isfinite(n_rad)):
        raise DomainError("density contains non-finite values")
    if np.any(n_rad < -1e-12):
        raise DomainError(f"negative density, min {n_rad.min():.3e}")
    return _screened(n_rad, 0, grid)


def multipole_integral_k(f, g, k, grid):
    """Screened Slater multipole ``Y_k[f g](r)``.

    ``Y_k(r) = r^{-(k+1)} int_0^r f g r'^k dr' + r^k int_r^inf f g r'^{-(k+1)} dr'``.
    Symmetric in ``f`` and ``g`` bit for bit.
    """
    if int(k) != k or k < 0:
        raise DomainError(f"multipole order must be a non-negative integer, got {k}")
    f = grid.check(f, "f")
    g = grid.check(g, "g")
    return _screened(f * g, int(k), grid)


def threej_squared(a, b, k):
    """Square of the Wigner symbol ``(a b k; 0 0 0)``."""
    J = a + b + k
    if J % 2 or k < abs(a - b) or k > a + b:
        return 0.0
    g = J // 2
    num = factorial(J - 2 * a) * factorial(J - 2 * b) * factorial(J - 2 * k)
    val = num / factorial(J + 1)
    val *= (factorial(g) / (factorial(g - a) * factorial(g - b) * factorial(g - k))) ** 2
    return float(val)


# --------------------------------------------------------------------------
# Bound states: Numerov in x = ln r for y = u / sqrt(r)
#   y'' = Q y,  Q = (l + 1/2)^2 + 2 r^2 (v - e)


@numba.njit(cache=True)
def _numerov_pass(r, h, v, l, e, z0, y):
    """Match outward and inward Numerov solutions at the outer turning point.

    Returns (icl, nodes, de): icl < 0 flags an energy too low (-1) or too
    high (-2); de is the first-order energy correction from the derivative
    mismatch at the matching point.
    """
    n = r.size
    h12 = h * h / 12.0
    ll = (l + 0.5) ** 2
    f = np.empty(n)
    for i in range(n):
        f[i] = 1.0 - h12 * (ll + 2.0 * r[i] * r[i] * (v[i] - e))
    icl = -1
    for i in range(n - 1, -1, -1):
        if l * (l + 1) / (2.0 * r[i] * r[i]) + v[i] < e:
            icl = i
            break
    if icl < 10:
        return -1, 0, 0.0
    if icl > n - 4:
        return -2, 0, 0.0
    # practical infinity: where the WKB decay exponent exceeds 50
    iend = n - 1
    acc = 0.0
    for i in range(icl + 1, n):
        q = ll + 2.0 * r[i] * r[i] * (v[i] - e)
        if q > 0.0:
            acc += np.sqrt(q) * h
        if acc > 50.0:
            iend = i
            break
    if iend < icl + 3:
        iend = min(n - 1, icl + 3)
    for i in range(n):
        y[i] = 0.0
    y[0] = r[0] ** (l + 0.5) * (1.0 - z0 * r[0] / (l + 1.0))
    y[1] = r[1] ** (l + 0.5) * (1.0 - z0 * r[1] / (l + 1.0))
    nodes = 0
    for i in range(1, icl):
        y[i + 1] = ((12.0 - 10.0 * f[i]) * y[i] - f[i - 1] * y[i - 1]) / f[i + 1]
        if y[i + 1] * y[i] < 0.0:
            nodes += 1
        if abs(y[i + 1]) > 1e150:
            for j in range(i + 2):
                y[j] *= 1e-150
    yc = y[icl]
    y[iend] = 1e-200
    q = ll + 2.0 * r[iend - 1] * r[iend - 1] * (v[iend - 1] - e)
    y[iend - 1] = y[iend] * np.exp(h * np.sqrt(max(q, 0.0)))
    for i in range(iend - 1, icl, -1):
        y[i - 1] = ((12.0 - 10.0 * f[i]) * y[i] - f[i + 1] * y[i + 1]) / f[i - 1]
        if abs(y[i - 1]) > 1e150:
            for j in range(i - 1, iend + 1):
                y[j] *= 1e-150
    s = yc / y[icl]
    for i in range(icl, iend + 1):
        y[i] *= s
    norm = 0.0
    for i in range(n):
        norm += y[i] * y[i] * r[i] * r[i]
    sc = 1.0 / np.sqrt(norm * h)
    for i in range(n):
        y[i] *= sc
    ycusp = (y[icl - 1] * f[icl - 1] + f[icl + 1] * y[icl + 1] + 10.0 * f[icl] * y[icl]) / 12.0
    dfcusp = f[icl] * (y[icl] / ycusp - 1.0)
    de = 0.5 * dfcusp / h12 * ycusp * ycusp * h
    return icl, nodes, de


@numba.njit(cache=True)
def _count_nodes(r, h, v, l, e, z0):
    """Sign changes of the outward solution over the whole mesh (Sturm count)."""
    n = r.size
    h12 = h * h / 12.0
    ll = (l + 0.5) ** 2
    fm = 1.0 - h12 * (ll + 2.0 * r[0] * r[0] * (v[0] - e))
    f0 = 1.0 - h12 * (ll + 2.0 * r[1] * r[1] * (v[1] - e))
    ym = r[0] ** (l + 0.5) * (1.0 - z0 * r[0] / (l + 1.0))
    y0 = r[1] ** (l + 0.5) * (1.0 - z0 * r[1] / (l + 1.0))
    nodes = 0
    for i in range(1, n - 1):
        fp = 1.0 - h12 * (ll + 2.0 * r[i + 1] * r[i + 1] * (v[i + 1] - e))
        yp = ((12.0 - 10.0 * f0) * y0 - fm * ym) / fp
        if yp * y0 < 0.0:
            nodes += 1
        if abs(yp) > 1e150:
            yp *= 1e-150
            y0 *= 1e-150
        ym, y0 = y0, yp
        fm, f0 = f0, fp
    return nodes


def _energy_bounds(r, v, l):
    zeff = max(float(np.max(-r * v)), 0.0)
    lower = 1.05 * (-(zeff**2) / (2.0 * (l + 1) ** 2)) + float(np.min(v + zeff / r)) - 1e-3
    upper = float(v[-1] + l * (l + 1) / (2.0 * r[-1] ** 2))
    return lower, upper


def _shoot(r, h, v, l, nodes, elo, ehi, max_iter=300):
    """Eigenvalue with ``nodes`` radial nodes inside ``(elo, ehi)``."""
    z0 = -r[0] * v[0]
    y = np.zeros(r.size)
    e = 0.5 * (elo + ehi)
    lo, hi = elo, ehi
    for _ in range(max_iter):
        icl, cnt, de = _numerov_pass(r, h, v, l, e, z0, y)
        if icl == -1 or (icl >= 0 and cnt < nodes):
            lo = e
            e = 0.5 * (lo + hi)
            continue
        if icl == -2 or cnt > nodes:
            hi = e
            e = 0.5 * (lo + hi)
            continue
        if de > 0.0:
            lo = e
        else:
            hi = e
        enew = e + de
        if not (lo < enew < hi):
            enew = 0.5 * (lo + hi)
        if abs(enew - e) < 1e-15 * max(1.0, abs(e)):
            _numerov_pass(r, h, v, l, enew, z0, y)
            return enew, y * np.sqrt(r)
        e = enew
    raise SolverError(
        f"shooting did not converge for l={l}, nodes={nodes}",
        {"l": l, "nodes": nodes, "bracket": (lo, hi), "energy": e},
    )


def _sign_changes(u, rel=1e-8):
    big = u[np.abs(u) > rel * np.max(np.abs(u))]
    return int(np.count_nonzero(big[1:] * big[:-1] < 0.0))


def solve_bound_states(v, l, n_states, grid, extrapolate=True):
    """Lowest bound states of ``-u''/2 + [l(l+1)/(2r^2) + v] u = e u``.

    Parameters
    ----------
    v : ndarray
        Potential on ``grid``; must behave as ``-Z/r`` at the origin and tend
        to a constant at ``r_max``.
    l : int
        Angular momentum.
    n_states : int
        Number of states requested.
    grid : RadialGrid
    extrapolate : bool
        Combine the eigenvalue with one from the every-other-point mesh,
        ``(16 e_h - e_2h) / 15``, removing the leading Numerov error.

    Returns
    -------
    list of (float, ndarray)
        ``(e, u)`` pairs in increasing energy; may be shorter than
        ``n_states`` when fewer states are bound below the asymptote.
        Orbitals are normalized on ``grid`` and positive near the origin.
    """
    if int(l) != l or l < 0:
        raise DomainError(f"l must be a non-negative integer, got {l}")
    if int(n_states) != n_states or n_states < 1:
        raise DomainError(f"n_states must be >= 1, got {n_states}")
    v = grid.check(v, "v")
    if not np.all(np.isfinite(v)):
        raise DomainError("potential contains non-finite values")
    l = int(l)
    r, h = np.ascontiguousarray(grid.r), grid.h
    elo, ehi = _energy_bounds(r, v, l)
    available = _count_nodes(r, h, v, l, ehi - 1e-12 * max(1.0, abs(ehi)), -r[0] * v[0])
    if extrapolate:
        rc, hc, vc = np.ascontiguousarray(r[::2]), 2.0 * h, np.ascontiguousarray(v[::2])
        elo_c, ehi_c = _energy_bounds(rc, vc, l)
        available = min(available, _count_nodes(rc, hc, vc, l, ehi_c - 1e-12, -rc[0] * vc[0]))
    out = []
    lo = elo
    for k in range(min(int(n_states), available)):
        e, u = _shoot(r, h, v, l, k, lo, ehi)
        if _sign_changes(u) != k:
            raise SolverError(
                f"eigenfunction for l={l} has {_sign_changes(u)} nodes, expected {k}",
                {"l": l, "nodes": k, "energy": e},
            )
        lo = e
        if extrapolate:
            ec, _ = _shoot(rc, hc, vc, l, k, elo_c, ehi_c)
            e = (16.0 * e - ec) / 15.0
        u = u / np.sqrt(grid.integrate(u * u))
        out.append((float(e), u))
    return out
