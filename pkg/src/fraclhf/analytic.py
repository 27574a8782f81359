"""Closed-form reference solutions for one- and two-electron systems.

These do not use the general exchange solver and serve as independent
oracles for it.  Orbitals are radial ``u`` arrays (s symmetry) on a shared
grid; ``Y0[f]`` below denotes the monopole potential of ``f``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, UnboundSpeciesError
from .occupations import beta_from_alpha
from .radial import hartree_potential, multipole_integral_k, solve_bound_states

__all__ = [
    "SubOneParticle",
    "SingletSolution",
    "sub_one_particle",
    "singlet_closed_form",
    "singlet_scf",
    "singlet_jump",
    "triplet_jump",
    "oep_singlet",
    "oep_singlet_scf",
]


def _check_alpha(alpha):
    alpha = float(alpha)
    if not (0.0 <= alpha <= 1.0):
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


def _ground(v, grid, what="ground state"):
    states = solve_bound_states(v, 0, 1, grid)
    if not states:
        raise UnboundSpeciesError(f"no bound {what}")
    return states[0]


@dataclass(frozen=True, eq=False)
class SubOneParticle:
    """Less than one electron: ``v_x = -v_H`` and ``v_eff = v_ext``."""

    eps0: float
    u: np.ndarray
    v_x: np.ndarray
    v_eff: np.ndarray
    E: float


def sub_one_particle(v_ext, alpha, grid):
    """Exact solution for ``0 <= N = alpha <= 1``.

    Parameters
    ----------
    v_ext : ndarray
        External potential on ``grid``.
    alpha : float
        Electron number.
    """
    alpha = _check_alpha(alpha)
    v_ext = grid.check(v_ext, "v_ext")
    eps0, u = _ground(v_ext, grid)
    v_x = -hartree_potential(u * u, grid)
    return SubOneParticle(eps0, u, v_x, v_ext.copy(), alpha * eps0)


@dataclass(frozen=True, eq=False)
class SingletSolution:
    """Two-electron singlet with the spin-down electron weighted by ``alpha``.

    Potentials follow the package convention: ``v_x`` is measured against the
    Hartree potential of the ``beta``-weighted density and
    ``v_tilde = v_H + v_x``.
    """

    alpha: float
    beta: float
    v_x_up: np.ndarray
    v_x_down: np.ndarray
    c_up: float
    v_tilde_up: np.ndarray
    v_tilde_down: np.ndarray
    eps_up: float = np.nan
    eps_down: float = np.nan
    u_up: np.ndarray = None
    u_down: np.ndarray = None
    E: float = np.nan
    iterations: int = 0


def _coulomb(u1, u2, grid):
    """``int int u1^2(r) u2^2(r') / r_> dr dr'``."""
    return grid.integrate(u1 * u1 * multipole_integral_k(u2, u2, 0, grid))


def singlet_closed_form(u_up, u_down, alpha, grid, eps=None):
    """LHF potentials of the ``1 < N < 2`` singlet for given orbitals.

    ``v_x_up = -Y0[u_up^2] + c_up``, ``v_x_down = -beta Y0[u_down^2]`` with
    ``c_up = -beta J`` and ``beta = alpha / (2 - alpha)``.

    Parameters
    ----------
    u_up, u_down : ndarray
        Normalized 1s radial orbitals of each spin.
    alpha : float
        Physical weight of the spin-down electron.
    eps : (float, float), optional
        Eigenvalues; when given, ``E = eps_up + alpha eps_down``.
    """
    alpha = _check_alpha(alpha)
    beta = beta_from_alpha(1, alpha)
    Y_up = multipole_integral_k(u_up, u_up, 0, grid)
    Y_dn = multipole_integral_k(u_down, u_down, 0, grid)
    c_up = -beta * grid.integrate(u_up * u_up * Y_dn)
    v_x_up = -Y_up + c_up
    v_x_down = -beta * Y_dn
    v_H = Y_up + beta * Y_dn
    eps_up, eps_down = (np.nan, np.nan) if eps is None else eps
    return SingletSolution(
        alpha=alpha,
        beta=beta,
        v_x_up=v_x_up,
        v_x_down=v_x_down,
        c_up=c_up,
        v_tilde_up=v_H + v_x_up,
        v_tilde_down=v_H + v_x_down,
        eps_up=eps_up,
        eps_down=eps_down,
        u_up=np.asarray(u_up),
        u_down=np.asarray(u_down),
        E=eps_up + alpha * eps_down,
    )


def _iterate(make_potentials, v_ext, grid, tol, max_iter, mixing):
    eps_up, u_up = _ground(v_ext, grid)
    u_dn = u_up
    vt = None
    for it in range(1, max_iter + 1):
        vt_up, vt_dn = make_potentials(u_up, u_dn)
        new = np.array([vt_up, vt_dn])
        if vt is not None:
            change = np.max(np.abs(new - vt) * np.sqrt((u_up**2 + u_dn**2) / np.max(u_up**2 + u_dn**2)))
            if change < tol:
                return u_up, u_dn, (eps_up, eps_dn), it
            vt = vt + mixing * (new - vt)
        else:
            vt = new
        eps_up, u_up = _ground(v_ext + vt[0], grid, "spin-up state")
        eps_dn, u_dn = _ground(v_ext + vt[1], grid, "spin-down state")
    raise ConvergenceError("closed-form singlet iteration did not converge", {"iterations": max_iter})


def singlet_scf(v_ext, alpha, grid, tol=1e-10, max_iter=500, mixing=0.5):
    """Self-consistent singlet built only from the closed-form potentials."""
    alpha = _check_alpha(alpha)

    def pots(u_up, u_dn):
        s = singlet_closed_form(u_up, u_dn, alpha, grid)
        return s.v_tilde_up, s.v_tilde_down

    u_up, u_dn, eps, it = _iterate(pots, grid.check(v_ext), grid, tol, max_iter, mixing)
    sol = singlet_closed_form(u_up, u_dn, alpha, grid, eps=eps)
    return SingletSolution(**{**sol.__dict__, "iterations": it})


def singlet_jump(v_ext, grid):
    """Derivative discontinuity of the singlet at ``N = 1``.

    Returns
    -------
    (float, float, float)
        ``(eps_down0 - eps_up0, eps_up0, eps_down0)`` where ``eps_up0`` is the
        ground state of ``v_ext`` and ``eps_down0`` that of
        ``v_ext + Y0[u_up0^2]``.
    """
    v_ext = grid.check(v_ext, "v_ext")
    e_up, u = _ground(v_ext, grid)
    e_dn, _ = _ground(v_ext + hartree_potential(u * u, grid), grid, "screened spin-down state")
    return e_dn - e_up, e_up, e_dn


def triplet_jump(v_ext, grid):
    """Derivative discontinuity of the spin-polarized 1s/2s system at ``N = 1``.

    ``e1 - e0 - (K01 - J01)`` with ``K01`` the exchange and ``J01`` the
    Coulomb integral of the two lowest s states of ``v_ext``.

    Returns
    -------
    (float, dict)
        Jump and the ingredients ``e0, e1, K, J``.
    """
    v_ext = grid.check(v_ext, "v_ext")
    states = solve_bound_states(v_ext, 0, 2, grid)
    if len(states) < 2:
        raise UnboundSpeciesError(f"need two bound s states, found {len(states)}")
    (e0, u0), (e1, u1) = states
    K = grid.integrate(u0 * u1 * multipole_integral_k(u0, u1, 0, grid))
    J = _coulomb(u0, u1, grid)
    return e1 - e0 - (K - J), {"e0": e0, "e1": e1, "K": K, "J": J}


def oep_singlet(u_up, u_down, alpha, grid, eps=None):
    """OEP (and HF) singlet potentials with constants zero at infinity.

    ``v_tilde_up = alpha Y0[u_down^2]``, ``v_tilde_down = Y0[u_up^2]``;
    ``E = eps_up + alpha eps_down - alpha J`` when ``eps`` is given.

    Returns
    -------
    (ndarray, ndarray, float)
        ``(v_tilde_up, v_tilde_down, E)``.
    """
    alpha = _check_alpha(alpha)
    Y_up = multipole_integral_k(u_up, u_up, 0, grid)
    Y_dn = multipole_integral_k(u_down, u_down, 0, grid)
    E = np.nan
    if eps is not None:
        E = eps[0] + alpha * eps[1] - alpha * grid.integrate(u_up * u_up * Y_dn)
    return alpha * Y_dn, Y_up, E


def oep_singlet_scf(v_ext, alpha, grid, tol=1e-10, max_iter=500, mixing=0.5):
    """Self-consistent OEP singlet; returns ``(E, eps_up, eps_down, iterations)``."""
    alpha = _check_alpha(alpha)

    def pots(u_up, u_dn):
        vu, vd, _ = oep_singlet(u_up, u_dn, alpha, grid)
        return vu, vd

    u_up, u_dn, eps, it = _iterate(pots, grid.check(v_ext), grid, tol, max_iter, mixing)
    _, _, E = oep_singlet(u_up, u_dn, alpha, grid, eps=eps)
    return E, eps[0], eps[1], it
