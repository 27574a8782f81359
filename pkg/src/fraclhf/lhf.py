"""Localized Hartree-Fock exchange potential for fractional electron numbers.

Conventions
-----------
All radial quantities live on one :class:`~fraclhf.radial.RadialGrid`.
Potentials are stored per spin as ``(2, n)`` arrays indexed by
``UP``/``DOWN``.  The effective potential of spin ``s`` is
``v_ext + v_H + v_x[s]`` where ``v_H`` is the Hartree potential of the
``beta``-weighted density.  The sum ``v_H + v_x[s]`` is the quantity that
stays fixed when the weight used to build the density changes, so the
exchange potential "seen" by a ``gamma``-weighted density is
``v_x + v_H - v_H[gamma]``.

The pointwise exchange equation for spin ``s`` reads::

    (v_x + G_beta) n = sum_{ab} w_a w_b (2l+1) u_a u_b <a|v_x|b>
                       - sum_{ab} w_a w_b d_a d_b sum_k g_k u_a u_b Y_k[u_a u_b]
                       + sum_{ab} w_a w_b (2l+1) u_a u_b <a|K|b>

with ``g_k`` the squared ``(l_a l_b k; 0 0 0)`` symbol and ``K`` the
exchange operator of the ``beta``-weighted density matrix.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    ConsistencyError,
    ConvergenceError,
    SolverError,
    UnboundSpeciesError,
)
from .occupations import (
    DOWN,
    SPIN_NAMES,
    UP,
    OccupationSpec,
    SpinOrbital,
    build_density_matrix,
)
from .radial import (
    RadialGrid,
    hartree_potential,
    multipole_integral_k,
    radial_derivative,
    solve_bound_states,
    threej_squared,
)

__all__ = [
    "ScfParams",
    "PotentialSet",
    "ScfResult",
    "JumpReport",
    "vx_update",
    "compute_G",
    "fix_constants",
    "solve_exchange",
    "scf",
    "total_energy_direct",
    "total_energy_dft",
    "ensemble_energy",
    "asymptotic_fit",
    "potential_jump",
    "exchange_energy",
]

log = logging.getLogger(__name__)
SPINS = (UP, DOWN)


@dataclass(frozen=True)
class ScfParams:
    """Controls for :func:`scf`.

    Parameters
    ----------
    mixing : float
        Linear mixing factor for the effective potential.
    max_iter : int
        Iteration cap.
    tol : float
        Convergence threshold on the density-weighted max-norm of the
        potential update.
    tol_E : float
        Convergence threshold on the energy change between iterations.
    density_floor : float
        Relative density below which the exchange potential is continued
        analytically.
    anderson : int
        History length for Anderson acceleration; 0 selects plain linear
        mixing.
    """

    mixing: float = 0.3
    max_iter: int = 400
    tol: float = 1e-8
    tol_E: float = 1e-8
    density_floor: float = 1e-12
    anderson: int = 5

    def __post_init__(self):
        if not (0.0 < self.mixing <= 1.0):
            raise ConfigurationError(f"mixing must lie in (0, 1], got {self.mixing}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.tol <= 0 or self.tol_E <= 0:
            raise ConfigurationError("tolerances must be positive")
        if not (0.0 < self.density_floor < 1e-3):
            raise ConfigurationError(f"density_floor out of range: {self.density_floor}")
        if int(self.anderson) != self.anderson or self.anderson < 0:
            raise ConfigurationError(f"anderson must be a non-negative integer, got {self.anderson}")


@dataclass(frozen=True, eq=False)
class PotentialSet:
    """Converged potentials of one configuration.

    Attributes
    ----------
    v_x : ndarray, shape (2, n)
        Exchange potential per spin, relative to ``v_H``.
    c : ndarray, shape (2,)
        Asymptotic constants, ``v_x[s](r) -> -q_s / r + c[s]``.
    """

    grid: RadialGrid
    v_ext: np.ndarray
    v_H: np.ndarray
    v_x: np.ndarray
    c: np.ndarray
    G_alpha: float
    G_beta: float

    @property
    def v_tilde(self):
        return self.v_H[None, :] + self.v_x

    @property
    def v_eff(self):
        return self.v_ext[None, :] + self.v_tilde


@dataclass(frozen=True, eq=False)
class ScfResult:
    """Outcome of :func:`scf`."""

    spec: OccupationSpec
    grid: RadialGrid
    potentials: PotentialSet
    orbitals: tuple
    eigenvalues: dict
    E_direct: float
    E_dft: float
    E_x: float
    identity_residual: float
    iterations: int
    update_norm: float
    history: tuple = field(default=(), repr=False)

    def orbital(self, shell, spin):
        for o in self.orbitals:
            if o.shell == shell and o.spin == spin:
                return o
        raise KeyError((shell, spin))

    def eigenvalue(self, shell, spin):
        return self.eigenvalues[(shell, spin)]

    def density_matrix(self, gamma):
        return build_density_matrix(self.orbitals, self.spec, gamma)

    def spin_densities(self, gamma=None):
        """``(2, n)`` array of ``n_rad`` at HOMO weight ``gamma`` (default ``alpha``)."""
        dm = self.density_matrix(self.spec.alpha if gamma is None else gamma)
        return np.array([dm.n_rad(UP), dm.n_rad(DOWN)])


# --------------------------------------------------------------------------
# Two-electron radial integrals for one spin channel


class _Channel:
    """Radial integrals among the orbitals of one spin channel."""

    def __init__(self, orbitals, grid):
        self.orbs = list(orbitals)
        self.grid = grid
        self.u = [o.u for o in self.orbs]
        self.l = [o.l for o in self.orbs]
        self.d = np.array([2 * o.l + 1 for o in self.orbs], dtype=float)
        self._Y = {}
        self._X = {}

    def __len__(self):
        return len(self.orbs)

    def ks(self, a, b):
        la, lb = self.l[a], self.l[b]
        out = []
        for k in range(abs(la - lb), la + lb + 1):
            g = threej_squared(la, lb, k)
            if g:
                out.append((k, g))
        return out

    def Y(self, a, b, k):
        key = (min(a, b), max(a, b), k)
        if key not in self._Y:
            self._Y[key] = multipole_integral_k(self.u[key[0]], self.u[key[1]], k, self.grid)
        return self._Y[key]

    def X(self, s, t, q, k):
        """``int u_s u_t Y_k[u_t u_q] dr``."""
        key = (s, t, q, k)
        if key not in self._X:
            self._X[key] = self.grid.integrate(self.u[s] * self.u[t] * self.Y(t, q, k))
        return self._X[key]

    def same_l_pairs(self):
        return [(a, b) for a in range(len(self)) for b in range(a, len(self)) if self.l[a] == self.l[b]]

    def n_rad(self, w):
        out = np.zeros(self.grid.n_points)
        for a in range(len(self)):
            if w[a]:
                out += w[a] * self.d[a] * self.u[a] ** 2
        return out

    def exchange_operator(self, w):
        """Matrix ``<s|K|q>`` of the ``w``-weighted exchange operator (same-l blocks)."""
        m = len(self)
        B = np.zeros((m, m))
        for s, q in self.same_l_pairs():
            val = 0.0
            for t in range(m):
                if w[t]:
                    val += w[t] * self.d[t] * sum(g * self.X(s, t, q, k) for k, g in self.ks(s, t))
            B[s, q] = B[q, s] = val
        return B

    def exchange_integral(self, w):
        """``int int |rho(x,x')|^2 / |r - r'|`` for this spin."""
        B = self.exchange_operator(w)
        return float(sum(w[s] * self.d[s] * B[s, s] for s in range(len(self))))

    def t2(self, w):
        out = np.zeros(self.grid.n_points)
        m = len(self)
        for a in range(m):
            for b in range(a, m):
                if not (w[a] and w[b]):
                    continue
                fac = (1.0 if a == b else 2.0) * w[a] * w[b] * self.d[a] * self.d[b]
                for k, g in self.ks(a, b):
                    out -= fac * g * self.u[a] * self.u[b] * self.Y(a, b, k)
        return out

    def pair_density(self, w, a, b):
        """``(2 - delta_ab) w_a w_b (2l+1) u_a u_b`` for a same-l pair."""
        return (1.0 if a == b else 2.0) * w[a] * w[b] * self.d[a] * self.u[a] * self.u[b]


def _tail_charge(orbs, w):
    """Weight of the slowest-decaying occupied orbital (highest eigenvalue)."""
    occ = [(o.eps, wi) for o, wi in zip(orbs, w) if wi > 0]
    if not occ:
        return 0.0
    return float(max(occ)[1])


def _floor_index(n_rad, grid, floor):
    """Last grid index where ``n = n_rad / (4 pi r^2)`` exceeds ``floor * max(n)``."""
    n3 = n_rad / grid.r**2
    keep = np.flatnonzero(n3 >= floor * np.max(n3))
    return int(keep[-1])


def _continue_tail(f, ib, q, r):
    """Replace ``f`` beyond index ``ib`` by ``-q/r + const`` matched at ``ib``."""
    out = np.array(f, dtype=float)
    out[ib + 1:] = f[ib] + q / r[ib] - q / r[ib + 1:]
    return out


# --------------------------------------------------------------------------
# Public building blocks


def _dm_channels(dm):
    chans, weights = [], []
    for sp in SPINS:
        orbs = [o for o, _ in dm.entries[sp]]
        chans.append(_Channel(orbs, dm.grid))
        weights.append(np.array([w for _, w in dm.entries[sp]], dtype=float))
    return chans, weights


def exchange_energy(dm):
    """``-1/2 sum_s int int |rho_s(x,x')|^2 / |r - r'|`` of a density matrix."""
    chans, weights = _dm_channels(dm)
    return -0.5 * sum(ch.exchange_integral(w) for ch, w in zip(chans, weights))


def vx_update(dm_beta, v_x, G_beta, density_floor=1e-12):
    """One pointwise application of the exchange equation.

    Parameters
    ----------
    dm_beta : EnsembleDensityMatrix
        Density matrix at the renormalized weight.
    v_x : ndarray, shape (2, n)
        Current exchange potential; enters through ``<a|v_x|b>``.
    G_beta : float
        Constant of the ``beta`` ensemble for ``v_x``.
    density_floor : float
        Relative density below which the result is continued as
        ``-q/r + const``.

    Returns
    -------
    ndarray, shape (2, n)
        Right-hand side divided by the density, minus ``G_beta``.  Channels
        without electrons are returned unchanged.
    """
    grid = dm_beta.grid
    v_x = np.asarray(v_x, dtype=float)
    out = v_x.copy()
    chans, weights = _dm_channels(dm_beta)
    for sp in SPINS:
        ch, w = chans[sp], weights[sp]
        if not len(ch):
            continue
        n = ch.n_rad(w)
        ib = _floor_index(n, grid, density_floor)
        B = ch.exchange_operator(w)
        rhs = ch.t2(w)
        for a, b in ch.same_l_pairs():
            m_ab = grid.integrate(ch.u[a] * v_x[sp] * ch.u[b])
            rhs += ch.pair_density(w, a, b) * (m_ab + B[a, b])
        vals = np.zeros(grid.n_points)
        vals[: ib + 1] = rhs[: ib + 1] / n[: ib + 1] - G_beta
        out[sp] = _continue_tail(vals, ib, _tail_charge(ch.orbs, w), grid.r)
    return out


def compute_G(v_x, dm_gamma, v_H_ref=None):
    """Ensemble constant ``G`` at weight ``gamma``.

    ``G = sum_s int v_x[s] n_s + 1/2 int v_H n + 1/2 sum_s int int |rho_s|^2/|r-r'|``
    with ``v_H`` the Hartree potential of ``dm_gamma``.

    Parameters
    ----------
    v_x : ndarray, shape (2, n)
        Exchange potential.  If ``v_H_ref`` is given, ``v_x`` is taken
        relative to that Hartree potential and converted to
        ``v_x + v_H_ref - v_H[gamma]`` first.
    dm_gamma : EnsembleDensityMatrix
    v_H_ref : ndarray, optional
    """
    grid = dm_gamma.grid
    v_x = np.asarray(v_x, dtype=float)
    n = np.array([dm_gamma.n_rad(UP), dm_gamma.n_rad(DOWN)])
    v_H = hartree_potential(n.sum(axis=0), grid)
    if v_H_ref is not None:
        v_x = v_x + (np.asarray(v_H_ref) - v_H)[None, :]
    chans, weights = _dm_channels(dm_gamma)
    kx = sum(ch.exchange_integral(w) for ch, w in zip(chans, weights))
    return float(
        sum(grid.integrate(v_x[sp] * n[sp]) for sp in SPINS)
        + 0.5 * grid.integrate(v_H * n.sum(axis=0))
        + 0.5 * kx
    )


def _homo_derivative(v_x, dm_gamma, homo, v_H_ref):
    """``dG/dw`` for the weight of ``homo`` at fixed ``v_H_ref + v_x``."""
    grid = dm_gamma.grid
    n = dm_gamma.n_rad(UP) + dm_gamma.n_rad(DOWN)
    v_H = hartree_potential(n, grid)
    sp = homo.spin
    orbs = [o for o, _ in dm_gamma.entries[sp]]
    w = [wt for _, wt in dm_gamma.entries[sp]]
    if not any(o is homo for o in orbs):
        orbs.append(homo)
        w.append(0.0)
    ch = _Channel(orbs, grid)
    h = next(i for i, o in enumerate(orbs) if o is homo)
    B = ch.exchange_operator(np.array(w))
    uh2 = homo.u**2
    d = 2 * homo.l + 1
    return d * (grid.integrate(np.asarray(v_x[sp]) * uh2)
                + grid.integrate((np.asarray(v_H_ref) - v_H) * uh2) + B[h, h])


def fix_constants(v_x, dm_alpha, dm_beta, homo=None):
    """Per-spin constants that make ``G_alpha`` and ``G_beta`` vanish.

    Solves ``c_up N_up^b + c_dn N_dn^b = -G_beta`` and
    ``c_up N_up^a + c_dn N_dn^a = -G_alpha``.  A fully polarized system only
    imposes the ``alpha`` condition.  When the system is singular (integer
    electron number) the constant of the HOMO spin is fixed by
    ``dG/dw_HOMO = 0``, the limit of the fractional conditions; ``homo``
    defaults to the highest occupied orbital, which is the approach from
    below.

    Returns
    -------
    (float, float)
        ``(c_up, c_down)`` to add to ``v_x``.
    """
    grid = dm_beta.grid
    nb = np.array([dm_beta.n_rad(UP), dm_beta.n_rad(DOWN)])
    v_H_b = hartree_potential(nb.sum(axis=0), grid)
    G_b = compute_G(v_x, dm_beta)
    G_a = compute_G(v_x, dm_alpha, v_H_ref=v_H_b)
    Nb = np.array([dm_beta.trace(UP), dm_beta.trace(DOWN)])
    Na = np.array([dm_alpha.trace(UP), dm_alpha.trace(DOWN)])
    occupied = [sp for sp in SPINS if dm_alpha.entries[sp] or dm_beta.entries[sp]]
    c = np.zeros(2)
    if len(occupied) == 1:
        sp = occupied[0]
        if Na[sp] > 0:
            c[sp] = -G_a / Na[sp]
        return float(c[UP]), float(c[DOWN])
    A = np.array([Nb, Na])
    det = np.linalg.det(A)
    if abs(det) > 1e-10 * max(1.0, float(np.abs(A).max()) ** 2):
        c = np.linalg.solve(A, -np.array([G_b, G_a]))
        return float(c[UP]), float(c[DOWN])
    if homo is None:
        homo = max((o for sp in SPINS for o, _ in dm_alpha.entries[sp]), key=lambda o: o.eps)
    s1 = homo.spin
    s2 = 1 - s1
    dG = _homo_derivative(v_x, dm_alpha, homo, v_H_b)
    c[s1] = -dG / (2 * homo.l + 1)
    c[s2] = (-G_a - c[s1] * Na[s1]) / Na[s2]
    return float(c[UP]), float(c[DOWN])


# --------------------------------------------------------------------------
# Exact solution of the exchange equations for frozen orbitals


def solve_exchange(orbitals, spec, grid, density_floor=1e-12):
    """Exchange potential satisfying the pointwise equation and both ``G`` conditions.

    For fixed orbitals the equations are linear in the unknowns
    ``M_ab = <a|v_x|b>`` and one constant per spin, so the fixed point of
    repeated :func:`vx_update` / :func:`fix_constants` is obtained in one
    linear solve.  At integer electron number the HOMO-weight derivative
    ``dG/dw = 0`` replaces the missing condition.

    Returns
    -------
    v_x : ndarray, shape (2, n)
    info : dict
        ``v_H`` (Hartree potential of the ``beta`` density), ``tail_charge``
        per spin and ``floor_radius`` per spin.
    """
    beta = spec.beta_eff
    alpha = spec.alpha
    lookup = {(o.shell, o.spin): o for o in orbitals}
    chans, wb, wa, homo_idx = [], [], [], [None, None]
    for sp in SPINS:
        orbs = []
        for shell in spec.shells(sp):
            if (shell, sp) not in lookup:
                raise ConsistencyError(f"no orbital for {shell} {SPIN_NAMES[sp]}")
            orbs.append(lookup[(shell, sp)])
        chans.append(_Channel(orbs, grid))
        wb.append(np.array([w for _, w in spec.weights(sp, beta)], dtype=float))
        wa.append(np.array([w for _, w in spec.weights(sp, alpha)], dtype=float))
        if sp == spec.homo_spin:
            homo_idx[sp] = len(orbs) - 1
    active = [sp for sp in SPINS if len(chans[sp])]

    nb = np.array([chans[sp].n_rad(wb[sp]) for sp in SPINS])
    na = np.array([chans[sp].n_rad(wa[sp]) for sp in SPINS])
    v_H_b = hartree_potential(nb.sum(axis=0), grid)
    v_H_a = hartree_potential(na.sum(axis=0), grid)

    # unknown layout: per active spin, same-l pairs then the constant
    index, pairs = {}, {}
    nunk = 0
    for sp in active:
        pairs[sp] = chans[sp].same_l_pairs()
        for p in pairs[sp]:
            index[(sp, p)] = nunk
            nunk += 1
        index[(sp, "K")] = nunk
        nunk += 1

    base = np.zeros((2, grid.n_points))
    coef = np.zeros((2, grid.n_points, nunk))
    tail_q = [0.0, 0.0]
    floor_r = [0.0, 0.0]
    for sp in active:
        ch, w = chans[sp], wb[sp]
        coef[sp, :, index[(sp, "K")]] = 1.0
        if not np.any(w > 0):
            continue
        n = nb[sp]
        ib = _floor_index(n, grid, density_floor)
        q = _tail_charge(ch.orbs, w)
        tail_q[sp], floor_r[sp] = q, grid.r[ib]
        B = ch.exchange_operator(w)
        rhs = ch.t2(w)
        for a, b in pairs[sp]:
            dens = ch.pair_density(w, a, b)
            rhs += dens * B[a, b]
            col = np.zeros(grid.n_points)
            col[: ib + 1] = dens[: ib + 1] / n[: ib + 1]
            col[ib + 1:] = col[ib]
            coef[sp, :, index[(sp, (a, b))]] = col
        s = np.zeros(grid.n_points)
        s[: ib + 1] = rhs[: ib + 1] / n[: ib + 1]
        base[sp] = _continue_tail(s, ib, q, grid.r)

    rows, rhs_vec = [], []
    for sp in active:
        ch = chans[sp]
        for a, b in pairs[sp]:
            wt = grid.w * ch.u[a] * ch.u[b]
            row = -(wt @ coef[sp])
            row[index[(sp, (a, b))]] += 1.0
            rows.append(row)
            rhs_vec.append(float(wt @ base[sp]))

    def g_row(w_gamma, n_gamma, v_H_gamma):
        row = np.zeros(nunk)
        const = 0.5 * grid.integrate(v_H_gamma * n_gamma.sum(axis=0))
        for sp in active:
            ch = chans[sp]
            for i in range(len(ch)):
                if w_gamma[sp][i]:
                    row[index[(sp, (i, i))]] += w_gamma[sp][i] * ch.d[i]
            const += grid.integrate((v_H_b - v_H_gamma) * n_gamma[sp])
            const += 0.5 * ch.exchange_integral(w_gamma[sp])
        return row, const

    def dg_row():
        sp = spec.homo_spin
        ch, h = chans[sp], homo_idx[sp]
        row = np.zeros(nunk)
        row[index[(sp, (h, h))]] = ch.d[h]
        B = ch.exchange_operator(wa[sp])
        const = ch.d[h] * (grid.integrate((v_H_b - v_H_a) * ch.u[h] ** 2) + B[h, h])
        return row, const

    cons = []
    if 0.0 < alpha < 1.0:
        if spec.N > 0 and len(active) == 2:
            cons.append(g_row(wb, nb, v_H_b))
        cons.append(g_row(wa, na, v_H_a))
    else:
        if spec.N_total > 0:
            cons.append(g_row(wa, na, v_H_a))
        if len(cons) < len(active):
            cons.append(dg_row())
    for row, const in cons:
        rows.append(row)
        rhs_vec.append(-const)

    A = np.array(rows)
    if A.shape != (nunk, nunk):
        raise SolverError("exchange equations are not square", {"shape": A.shape})
    try:
        z = np.linalg.solve(A, np.array(rhs_vec))
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular exchange equations", {"spec": spec.describe()}) from exc
    v_x = np.zeros((2, grid.n_points))
    for sp in active:
        v_x[sp] = base[sp] + coef[sp] @ z
    info = {"v_H": v_H_b, "tail_charge": tuple(tail_q), "floor_radius": tuple(floor_r)}
    return v_x, info


# --------------------------------------------------------------------------
# Self-consistent field


def _orthonormalize(orbs, grid):
    """Symmetric orthonormalization of same-l orbitals under the grid quadrature."""
    if len(orbs) < 2:
        return [o.u / np.sqrt(grid.integrate(o.u**2)) for o in orbs]
    U = np.array([o.u for o in orbs])
    S = (U * grid.w) @ U.T
    ev, vec = np.linalg.eigh(S)
    T = vec @ np.diag(ev**-0.5) @ vec.T
    return list(T @ U)


def _solve_orbitals(v_eff, spec, grid, report):
    """Eigenstates for every subshell of ``spec`` plus ``report`` extras."""
    wanted = {(sp, sh) for sp in SPINS for sh in spec.shells(sp)}
    extra = {(sp, sh) for sh, sp in report}
    orbitals, eigen = [], {}
    for sp in SPINS:
        shells = sorted({sh for s2, sh in wanted | extra if s2 == sp}, key=lambda s: (s.l, s.n))
        for l in sorted({sh.l for sh in shells}):
            need = [sh for sh in shells if sh.l == l]
            nmax = max(sh.nodes for sh in need) + 1
            states = solve_bound_states(v_eff[sp], l, nmax, grid)
            found = []
            for sh in need:
                if sh.nodes < len(states):
                    eps, u = states[sh.nodes]
                    eigen[(sh, sp)] = eps
                    if (sp, sh) in wanted:
                        found.append(SpinOrbital(sh, sp, eps, u, grid))
                elif (sp, sh) in wanted:
                    raise UnboundSpeciesError(
                        f"{sh} {SPIN_NAMES[sp]} is not bound ({len(states)} bound l={l} states)",
                        {"shell": str(sh), "spin": SPIN_NAMES[sp], "bound_states": len(states)},
                    )
                else:
                    eigen[(sh, sp)] = float("nan")
            us = _orthonormalize(found, grid)
            orbitals.extend(SpinOrbital(o.shell, o.spin, o.eps, u, grid) for o, u in zip(found, us))
    return orbitals, eigen


def total_energy_direct(orbitals, spec):
    """Occupation-weighted eigenvalue sum, HOMO weighted by the physical ``alpha``."""
    lookup = {(o.shell, o.spin): o.eps for o in orbitals}
    E = 0.0
    for sp in SPINS:
        for shell, w in spec.weights(sp, spec.alpha):
            if w:
                E += w * shell.degeneracy * lookup[(shell, sp)]
    return float(E)


def _dft_terms(orbitals, spec, grid, v_tilde):
    dm = build_density_matrix(orbitals, spec, spec.alpha)
    n = np.array([dm.n_rad(UP), dm.n_rad(DOWN)])
    v_H = hartree_potential(n.sum(axis=0), grid)
    v_x = v_tilde - v_H[None, :]
    E_x = exchange_energy(dm)
    vxn = sum(grid.integrate(v_x[sp] * n[sp]) for sp in SPINS if dm.entries[sp])
    residual = E_x - vxn - 0.5 * grid.integrate(v_H * n.sum(axis=0))
    return E_x, residual


def total_energy_dft(result, spec=None):
    """Density-functional form of the energy.

    Returns
    -------
    (E_dft, E_x, identity_residual)
        ``E_dft = E_direct - int v_x n - 1/2 int v_H n + E_x`` with all
        densities at the physical weight ``alpha`` and
        ``v_x = v_H[beta] + v_x[beta] - v_H[alpha]``; the residual is the sum
        of the last three terms.
    """
    spec = result.spec if spec is None else spec
    E_direct = total_energy_direct(result.orbitals, spec)
    E_x, residual = _dft_terms(result.orbitals, spec, result.grid, result.potentials.v_tilde)
    return E_direct + residual, E_x, residual


def ensemble_energy(result):
    """Ensemble expectation of the Hamiltonian from orbitals alone.

    Kinetic energies come from derivatives of the orbitals, so the value is
    independent of the eigenvalues.
    """
    grid, spec = result.grid, result.spec
    dm = result.density_matrix(spec.alpha)
    r = grid.r
    v_ext = -spec.Z / r
    E = 0.0
    for sp in SPINS:
        for orb, w in dm.entries[sp]:
            du = radial_derivative(orb.u, grid)
            t = 0.5 * grid.integrate_from_origin(du**2 + orb.l * (orb.l + 1) * orb.u**2 / r**2)
            E += w * orb.shell.degeneracy * (t + grid.integrate(v_ext * orb.u**2))
    n = dm.n_rad(UP) + dm.n_rad(DOWN)
    E += 0.5 * grid.integrate(hartree_potential(n, grid) * n)
    return float(E + exchange_energy(dm))


def _weight_profile(spec, orbitals, grid):
    """Per-spin weights ``sqrt(n_shape / max)`` for the convergence norm."""
    out = np.zeros((2, grid.n_points))
    for sp in SPINS:
        shape = np.zeros(grid.n_points)
        for o in orbitals:
            if o.spin == sp:
                shape += o.u**2 * (2 * o.l + 1)
        if shape.max() > 0:
            out[sp] = np.sqrt(shape / shape.max())
    return out


class _Anderson:
    """Anderson (Pulay) mixing on a flat vector."""

    def __init__(self, mixing, depth):
        self.a = mixing
        self.depth = depth
        self.x, self.f = [], []

    def step(self, x, f):
        if self.depth == 0:
            return x + self.a * f
        self.x.append(x.copy())
        self.f.append(f.copy())
        if len(self.x) > self.depth + 1:
            self.x.pop(0)
            self.f.pop(0)
        if len(self.x) < 2:
            return x + self.a * f
        dX = np.array([self.x[i + 1] - self.x[i] for i in range(len(self.x) - 1)]).T
        dF = np.array([self.f[i + 1] - self.f[i] for i in range(len(self.f) - 1)]).T
        gam, *_ = np.linalg.lstsq(dF, f, rcond=1e-10)
        return x + self.a * f - (dX + self.a * dF) @ gam


def _initial_potential(spec, grid):
    r = grid.r
    v_ext = -spec.Z / r
    orbitals, _ = _solve_orbitals(np.array([v_ext, v_ext]), spec, grid, ())
    dm = build_density_matrix(orbitals, spec, spec.beta_eff)
    v_H = hartree_potential(dm.n_rad(UP) + dm.n_rad(DOWN), grid)
    scale = 1.0 - 1.0 / max(spec.N_total, 1.0)
    return np.array([v_H * scale, v_H * scale])


def scf(spec, grid, params=None, report_shells=(), v_init=None):
    """Self-consistent LHF solution of a fractional configuration.

    Parameters
    ----------
    spec : OccupationSpec
    grid : RadialGrid
    params : ScfParams, optional
    report_shells : sequence of (Shell, spin)
        Additional (possibly empty) levels whose eigenvalues are reported.
    v_init : ndarray, shape (2, n), optional
        Starting ``v_H + v_x``; defaults to a scaled Hartree potential.

    Returns
    -------
    ScfResult

    Raises
    ------
    UnboundSpeciesError
        A required level is not bound in the effective potential.
    ConvergenceError
        ``max_iter`` reached; ``diagnostics['history']`` holds
        ``(update_norm, energy)`` per iteration.
    """
    params = params or ScfParams()
    r = grid.r
    v_ext = -spec.Z / r
    v_in = _initial_potential(spec, grid) if v_init is None else np.array(v_init, dtype=float)
    mixer = _Anderson(params.mixing, params.anderson)
    history = []
    E_prev = np.inf
    for it in range(1, params.max_iter + 1):
        orbitals, eigen = _solve_orbitals(v_ext[None, :] + v_in, spec, grid, report_shells)
        v_x, info = solve_exchange(orbitals, spec, grid, params.density_floor)
        v_out = info["v_H"][None, :] + v_x
        resid = v_out - v_in
        wts = _weight_profile(spec, orbitals, grid)
        norm = float(np.max(np.abs(resid) * wts))
        E = total_energy_direct(orbitals, spec)
        history.append((norm, E))
        log.debug("iter %d norm %.3e E %.12f", it, norm, E)
        if norm < params.tol and abs(E - E_prev) < params.tol_E:
            break
        E_prev = E
        v_in = mixer.step(v_in.ravel(), resid.ravel()).reshape(2, -1)
    else:
        raise ConvergenceError(
            f"SCF did not converge in {params.max_iter} iterations for {spec.describe()}",
            {"history": history},
        )

    # report the potential that generated the orbitals
    v_H = info["v_H"]
    v_x_in = v_in - v_H[None, :]
    for sp in SPINS:
        if not spec.shells(sp):
            v_x_in[sp] = 0.0
    dm_b = build_density_matrix(orbitals, spec, spec.beta_eff)
    dm_a = build_density_matrix(orbitals, spec, spec.alpha)
    G_b = compute_G(v_x_in, dm_b) if spec.N > 0 else compute_G(v_x_in, dm_b, v_H_ref=v_H)
    G_a = compute_G(v_x_in, dm_a, v_H_ref=v_H)
    c = np.array([v_x_in[sp][-1] + info["tail_charge"][sp] / r[-1] for sp in SPINS])
    pots = PotentialSet(grid, v_ext, v_H, v_x_in, c, G_a, G_b)
    E_direct = total_energy_direct(orbitals, spec)
    E_x, residual = _dft_terms(orbitals, spec, grid, pots.v_tilde)
    return ScfResult(
        spec=spec,
        grid=grid,
        potentials=pots,
        orbitals=tuple(orbitals),
        eigenvalues=dict(eigen),
        E_direct=E_direct,
        E_dft=E_direct + residual,
        E_x=E_x,
        identity_residual=residual,
        iterations=it,
        update_norm=norm,
        history=tuple(history),
    )


# --------------------------------------------------------------------------
# Asymptotics and jumps


def asymptotic_fit(v_x, grid, window=None):
    """Least-squares fit ``v_x[s](r) = a/r + c`` inside ``window``.

    Parameters
    ----------
    v_x : ndarray, shape (2, n)
    grid : RadialGrid
    window : (float, float), optional
        Radius range in bohr, default ``(0.5 r_max, 0.9 r_max)``.

    Returns
    -------
    list of (float, float)
        ``(a, c)`` per spin.
    """
    lo, hi = window if window is not None else (0.5 * grid.r_max, 0.9 * grid.r_max)
    if not (grid.r_min <= lo < hi <= grid.r_max):
        raise ConfigurationError(f"fit window {(lo, hi)} outside grid [{grid.r_min}, {grid.r_max}]")
    sel = (grid.r >= lo) & (grid.r <= hi)
    if np.count_nonzero(sel) < 3:
        raise ConfigurationError(f"fit window {(lo, hi)} holds fewer than 3 points")
    A = np.column_stack([1.0 / grid.r[sel], np.ones(np.count_nonzero(sel))])
    out = []
    for sp in SPINS:
        coef, *_ = np.linalg.lstsq(A, np.asarray(v_x)[sp][sel], rcond=None)
        out.append((float(coef[0]), float(coef[1])))
    return out


@dataclass(frozen=True, eq=False)
class JumpReport:
    """Exchange-potential differences across an integer electron number.

    Attributes
    ----------
    dv : ndarray, shape (2, n)
        ``v_x(N + delta) - v_x(N - delta)`` per spin.
    mean : ndarray, shape (2,)
        Density-weighted mean of ``dv`` over each spin's region.
    spread : ndarray, shape (2,)
        ``max |dv - mean| / |mean|`` over the region (inf for a zero mean).
    region : ndarray of bool, shape (2, n)
        Points where both one-sided spin densities exceed the threshold.
    counts : ndarray, shape (2,)
        Integer spin populations at the junction.
    residual : float
        ``sum_s mean[s] * counts[s]``.
    integrated_residual : float
        ``sum_s int dv[s] n_s`` with the average one-sided densities.
    """

    grid: RadialGrid
    delta: float
    dv: np.ndarray
    mean: np.ndarray
    spread: np.ndarray
    region: np.ndarray
    counts: np.ndarray
    residual: float
    integrated_residual: float

    def relative_residual(self, mask=None):
        """``max |sum_s counts[s] dv[s]| / max_s |counts[s] mean[s]|`` over ``mask``."""
        mask = self.region[UP] & self.region[DOWN] if mask is None else mask
        comb = np.abs(self.counts[UP] * self.dv[UP] + self.counts[DOWN] * self.dv[DOWN])
        scale = np.max(np.abs(self.counts * self.mean))
        if not np.any(mask) or scale == 0:
            return 0.0 if not np.any(comb[mask]) else np.inf
        return float(np.max(comb[mask]) / scale)


def potential_jump(below, above, delta=None, threshold=1e-6):
    """Compare converged exchange potentials on both sides of an integer.

    Parameters
    ----------
    below, above : ScfResult
        Solutions at ``N - delta`` and ``N + delta``.
    delta : float, optional
        Recorded in the report; inferred from the electron numbers if omitted.
    threshold : float
        Relative spin-density threshold defining each spin's region.
    """
    if below.grid != above.grid:
        raise ConsistencyError("potential_jump needs both results on the same grid")
    grid = below.grid
    if delta is None:
        delta = 0.5 * (above.spec.N_total - below.spec.N_total)
    dv = above.potentials.v_x - below.potentials.v_x
    nb, na = below.spin_densities(), above.spin_densities()
    region = np.zeros((2, grid.n_points), dtype=bool)
    mean = np.zeros(2)
    spread = np.zeros(2)
    navg = 0.5 * (nb + na)
    counts = np.rint(0.5 * (np.array([below.spec.N_up, below.spec.N_down])
                            + np.array([above.spec.N_up, above.spec.N_down])))
    for sp in SPINS:
        rel = []
        for n in (nb[sp], na[sp]):
            n3 = n / grid.r**2
            rel.append(n3 / n3.max() if n3.max() > 0 else np.zeros_like(n3))
        region[sp] = (rel[0] > threshold) & (rel[1] > threshold)
        if not np.any(region[sp]):
            continue
        wts = grid.w * navg[sp] * region[sp]
        mean[sp] = float(np.dot(wts, dv[sp]) / wts.sum())
        dev = np.max(np.abs(dv[sp][region[sp]] - mean[sp]))
        spread[sp] = dev / abs(mean[sp]) if mean[sp] != 0 else (0.0 if dev == 0 else np.inf)
    residual = float(np.dot(counts, mean))
    integrated = float(sum(grid.integrate(dv[sp] * navg[sp]) for sp in SPINS))
    return JumpReport(grid, float(delta), dv, mean, spread, region, counts, residual, integrated)
