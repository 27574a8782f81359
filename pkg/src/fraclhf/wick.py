"""Exact Fock-space oracle for fractional-ensemble reduced density matrices.

Everything here is brute force on a bitmask determinant basis of at most
``2**8`` states.  Fermion operators use the Jordan-Wigner sign convention
``c_i |n> = (-1)^{sum_{j<i} n_j} |n - e_i>``.  A discrete coordinate ``x`` is
a spin-orbital index of the site basis; orbitals are columns of a unitary
``U``, i.e. ``b_p^dagger = sum_i U[i, p] c_i^dagger``.

Reduced density matrices follow the field-operator ordering

    rho_k(x_1..x_k; x'_1..x'_k) = < c+(x'_1)..c+(x'_k) c(x_k)..c(x_1) >,

so ``rho_1(x, x') = sum_occ phi(x) phi*(x')`` and the diagonal of ``rho_k`` is
the k-particle density.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import ConfigurationError, ConsistencyError, ConvergenceError, DomainError
from .occupations import beta_from_alpha

__all__ = [
    "MAX_MODES",
    "DeterminantState",
    "FractionalEnsemble",
    "ReducedDensityMatrix",
    "random_unitary",
    "random_ensemble",
    "annihilators",
    "rdm_bruteforce",
    "wick_factorization",
    "expectation",
    "wick_pairings",
    "generalized_wick_check",
    "random_string",
    "affine_fit_residual",
    "idempotency_check",
    "LatticeModel",
    "lhf_condition_discrete",
    "solve_lhf_discrete",
    "integrated_condition",
    "run_wick_suite",
]

MAX_MODES = 8
_UNITARY_TOL = 1e-12


@lru_cache(maxsize=None)
def _annihilators(M):
    dim = 1 << M
    ops = np.zeros((M, dim, dim))
    for state in range(dim):
        for i in range(M):
            if state >> i & 1:
                sign = -1.0 if bin(state & ((1 << i) - 1)).count("1") % 2 else 1.0
                ops[i, state ^ (1 << i), state] = sign
    ops.setflags(write=False)
    return ops


def annihilators(M):
    """Dense Jordan-Wigner annihilation matrices ``c_i``, shape ``(M, 2^M, 2^M)``."""
    if not (1 <= M <= MAX_MODES):
        raise ConfigurationError(f"basis size M must lie in [1, {MAX_MODES}], got {M}")
    return _annihilators(M)


def random_unitary(M, rng):
    """Haar-distributed complex unitary of size ``M``."""
    z = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


@dataclass(frozen=True, eq=False)
class DeterminantState:
    """Single Slater determinant over the orbitals ``U[:, p]``.

    Parameters
    ----------
    M : int
        Basis size.
    mask : int
        Occupied orbitals as a bitmask over the columns of ``U``.
    U : ndarray, optional
        Orbital coefficients; identity when omitted.
    """

    M: int
    mask: int
    U: np.ndarray = None

    def __post_init__(self):
        if not (1 <= self.M <= MAX_MODES):
            raise ConfigurationError(f"basis size M must lie in [1, {MAX_MODES}], got {self.M}")
        if not (0 <= self.mask < 1 << self.M):
            raise ConfigurationError(f"mask {self.mask:#b} does not fit in {self.M} modes")
        U = np.eye(self.M, dtype=complex) if self.U is None else np.asarray(self.U, dtype=complex)
        if U.shape != (self.M, self.M):
            raise ConfigurationError(f"U must be {self.M}x{self.M}, got {U.shape}")
        if np.max(np.abs(U.conj().T @ U - np.eye(self.M))) > _UNITARY_TOL:
            raise ConfigurationError("orbital coefficient matrix is not unitary")
        object.__setattr__(self, "U", U)

    @property
    def N(self):
        return bin(self.mask).count("1")

    @property
    def occupied(self):
        return [p for p in range(self.M) if self.mask >> p & 1]

    def orbital_creators(self):
        """``b_p^dagger`` matrices for every orbital, shape ``(M, 2^M, 2^M)``."""
        c = annihilators(self.M)
        return np.einsum("ip,iab->pba", self.U, c)

    def vector(self):
        """Fock-space amplitude vector of the determinant."""
        psi = np.zeros(1 << self.M, dtype=complex)
        psi[0] = 1.0
        bdag = self.orbital_creators()
        for p in reversed(self.occupied):
            psi = bdag[p] @ psi
        return psi

    def rho1(self):
        """``rho_1[x, x'] = sum_occ U[x, p] conj(U[x', p])``."""
        occ = self.U[:, self.occupied]
        return occ @ occ.conj().T


@dataclass(frozen=True, eq=False)
class FractionalEnsemble:
    """``(1 - gamma)|lower><lower| + gamma |upper><upper|``.

    The two determinants share ``U`` and ``upper`` adds exactly one orbital.
    """

    lower: DeterminantState
    upper: DeterminantState
    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if not (0.0 <= g <= 1.0):
            raise DomainError(f"gamma must lie in [0, 1], got {g}")
        object.__setattr__(self, "gamma", g)
        if self.lower.M != self.upper.M or not np.array_equal(self.lower.U, self.upper.U):
            raise ConsistencyError("ensemble members must share the orbital basis")
        added = self.upper.mask & ~self.lower.mask
        if self.lower.mask & ~self.upper.mask or bin(added).count("1") != 1:
            raise ConsistencyError("ensemble members must differ by exactly one added orbital")

    @classmethod
    def from_orbitals(cls, U, occupied, added, gamma):
        """Build from a list of occupied orbital indices and the added one."""
        U = np.asarray(U)
        M = U.shape[0]
        mask = sum(1 << p for p in occupied)
        return cls(DeterminantState(M, mask, U), DeterminantState(M, mask | 1 << added, U), gamma)

    @property
    def M(self):
        return self.lower.M

    @property
    def U(self):
        return self.lower.U

    @property
    def N(self):
        return self.lower.N

    @property
    def added(self):
        return (self.upper.mask & ~self.lower.mask).bit_length() - 1

    def members(self):
        """``[(weight, state), ...]`` skipping zero weights."""
        out = [(1.0 - self.gamma, self.lower), (self.gamma, self.upper)]
        return [(w, s) for w, s in out if w > 0]

    def rho1(self):
        return (1.0 - self.gamma) * self.lower.rho1() + self.gamma * self.upper.rho1()

    def with_gamma(self, gamma):
        return FractionalEnsemble(self.lower, self.upper, gamma)


def random_ensemble(rng, M=None, N=None, gamma=None, max_modes=6):
    """Random ensemble with Haar orbitals, random occupied set and added orbital."""
    M = int(rng.integers(2, max_modes + 1)) if M is None else M
    N = int(rng.integers(0, M)) if N is None else N
    if not (0 <= N < M):
        raise ConfigurationError(f"need 0 <= N < M, got N={N}, M={M}")
    gamma = float(rng.uniform()) if gamma is None else gamma
    perm = rng.permutation(M)
    return FractionalEnsemble.from_orbitals(random_unitary(M, rng), perm[:N], perm[N], gamma)


def _members(state):
    if isinstance(state, DeterminantState):
        return [(1.0, state)]
    if isinstance(state, FractionalEnsemble):
        return state.members()
    raise ConfigurationError(f"expected DeterminantState or FractionalEnsemble, got {type(state).__name__}")


@dataclass(frozen=True, eq=False)
class ReducedDensityMatrix:
    """k-body reduced density matrix on the site basis.

    ``tensor`` has shape ``(M,)*k`` when ``diagonal`` (the k-particle
    density) and ``(M,)*(2k)`` otherwise, ordered ``(x_1..x_k, x'_1..x'_k)``.
    """

    k: int
    tensor: np.ndarray
    diagonal: bool = False

    @property
    def M(self):
        return self.tensor.shape[0]

    def diag(self):
        """k-particle density ``rho_k(x_1..x_k)``."""
        if self.diagonal:
            return self.tensor
        M, k = self.M, self.k
        flat = self.tensor.reshape(M**k, M**k)
        return np.real(np.diagonal(flat)).reshape((M,) * k)

    def partial_trace(self):
        """Integrate out the last coordinate (diagonal representation)."""
        if self.k == 1:
            return np.real(np.trace(self.tensor)) if not self.diagonal else float(self.tensor.sum())
        return self.diag().sum(axis=-1)


def rdm_bruteforce(state, k, diagonal=None):
    """Exact k-body RDM by explicit operator application.

    Parameters
    ----------
    state : DeterminantState or FractionalEnsemble
    k : int
        Order, ``1 <= k <= 3``.
    diagonal : bool, optional
        Return only the k-particle density; default ``k >= 2``.

    Returns
    -------
    ReducedDensityMatrix
        Zero tensor when ``k`` exceeds every member's particle number.
    """
    if k not in (1, 2, 3):
        raise ConfigurationError(f"rdm order k must be 1, 2 or 3, got {k}")
    diagonal = k >= 2 if diagonal is None else bool(diagonal)
    members = _members(state)
    M = members[0][1].M
    c = annihilators(M)
    if diagonal:
        out = np.zeros((M,) * k)
        for w, s in members:
            prob = np.abs(s.vector()) ** 2
            n = np.array([[st >> i & 1 for st in range(1 << M)] for i in range(M)], dtype=float)
            for xs in product(range(M), repeat=k):
                if len(set(xs)) == k:
                    out[xs] += w * float(np.dot(prob, np.prod(n[list(xs)], axis=0)))
        return ReducedDensityMatrix(k, out, True)
    out = np.zeros((M**k, M**k), dtype=complex)
    for w, s in members:
        psi = s.vector()
        W = np.empty((M**k, psi.size), dtype=complex)
        for idx, xs in enumerate(product(range(M), repeat=k)):
            v = psi
            for x in xs:
                v = c[x] @ v
            W[idx] = v
        out += w * (W @ W.conj().T)
    return ReducedDensityMatrix(k, out.reshape((M,) * (2 * k)), False)


def wick_factorization(rho1, k, diagonal=True):
    """Assemble ``rho_k`` from the one-body density matrix.

    The diagonal forms are ``n n' - |rho(x, x')|^2`` for ``k = 2`` and, for
    ``k = 3``, the two cyclic ``rho rho rho`` products plus ``n n' n''`` minus
    the three ``n |rho|^2`` terms.  With ``diagonal=False`` the full
    determinant ``det[rho(x_i, x'_j)]`` is returned.
    """
    rho = np.asarray(rho1)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigurationError(f"rho1 must be square, got shape {rho.shape}")
    if k not in (2, 3):
        raise ConfigurationError(f"wick_factorization order must be 2 or 3, got {k}")
    n = np.real(np.diag(rho))
    a2 = np.abs(rho) ** 2
    if diagonal:
        if k == 2:
            return ReducedDensityMatrix(2, np.outer(n, n) - a2, True)
        cyc = np.einsum("ab,bc,ca->abc", rho, rho, rho)
        cyc2 = np.einsum("ac,cb,ba->abc", rho, rho, rho)
        nnn = np.einsum("a,b,c->abc", n, n, n)
        t = (cyc + cyc2).real + nnn
        t -= n[None, :, None] * a2[:, None, :]
        t -= n[None, None, :] * a2[:, :, None]
        t -= n[:, None, None] * a2[None, :, :]
        return ReducedDensityMatrix(3, t, True)
    M = rho.shape[0]
    out = np.empty((M,) * (2 * k), dtype=complex)
    for xs in product(range(M), repeat=k):
        for ys in product(range(M), repeat=k):
            out[xs + ys] = np.linalg.det(rho[np.ix_(xs, ys)])
    return ReducedDensityMatrix(k, out, False)


def _operator(ens, op, basis):
    idx, dag = op
    M = ens.M
    if not (0 <= idx < M):
        raise ConfigurationError(f"operator index {idx} outside basis of size {M}")
    c = annihilators(M)
    if basis == "orbital":
        a = np.einsum("i,iab->ab", ens.U[:, idx].conj(), c)
    elif basis == "site":
        a = c[idx].astype(complex)
    else:
        raise ConfigurationError(f"basis must be 'orbital' or 'site', got {basis!r}")
    return a.conj().T if dag else a


def expectation(state, string, basis="orbital"):
    """Ensemble expectation of an operator string ``[(index, dagger), ...]``.

    Operators act right to left, so ``string[-1]`` is applied first.
    """
    members = _members(state)
    ens = members[0][1] if isinstance(state, DeterminantState) else state
    ops = [_operator(ens, op, basis) for op in string]
    total = 0.0 + 0.0j
    for w, s in members:
        psi = s.vector()
        v = psi
        for o in reversed(ops):
            v = o @ v
        total += w * np.vdot(psi, v)
    return complex(total)


def wick_pairings(n):
    """All perfect matchings of ``range(n)`` with their permutation signs.

    Yields ``(sign, [(i, j), ...])`` with ``i < j`` in every pair.
    """
    if n % 2:
        return
    if n == 0:
        yield 1, []
        return

    def rec(items):
        if not items:
            yield 1, []
            return
        first, rest = items[0], items[1:]
        for pos, other in enumerate(rest):
            remaining = rest[:pos] + rest[pos + 1:]
            for sign, pairs in rec(remaining):
                yield (-1) ** pos * sign, [(first, other)] + pairs

    yield from rec(list(range(n)))


def generalized_wick_check(ens, string, basis="orbital"):
    """Compare a string expectation with its ensemble pairing expansion.

    Returns
    -------
    (complex, complex, float)
        ``(lhs, rhs, |lhs - rhs|)``; odd strings give zero on both sides.
    """
    string = [(int(i), bool(d)) for i, d in string]
    if len(string) % 2:
        return 0j, 0j, 0.0
    lhs = expectation(ens, string, basis)
    pair = {}
    for i in range(len(string)):
        for j in range(i + 1, len(string)):
            pair[i, j] = expectation(ens, [string[i], string[j]], basis)
    rhs = 0j
    for sign, pairs in wick_pairings(len(string)):
        term = complex(sign)
        for ij in pairs:
            term *= pair[ij]
            if term == 0:
                break
        rhs += term
    return lhs, rhs, float(abs(lhs - rhs))


def random_string(rng, M, length):
    """Number-conserving random string: equal creators and annihilators, shuffled."""
    if length % 2:
        raise ConfigurationError(f"string length must be even, got {length}")
    dags = np.array([True] * (length // 2) + [False] * (length // 2))
    rng.shuffle(dags)
    return [(int(rng.integers(M)), bool(d)) for d in dags]


def affine_fit_residual(ens, string, gammas=None, basis="orbital"):
    """Max residual of a straight-line fit of the expectation versus gamma."""
    gammas = np.linspace(0.0, 1.0, 11) if gammas is None else np.asarray(gammas, dtype=float)
    vals = np.array([expectation(ens.with_gamma(g), string, basis) for g in gammas])
    A = np.column_stack([np.ones_like(gammas), gammas])
    res = 0.0
    for part in (vals.real, vals.imag):
        coef, *_ = np.linalg.lstsq(A, part, rcond=None)
        res = max(res, float(np.max(np.abs(A @ coef - part))))
    return res


def idempotency_check(rho1):
    """Spectral norm of ``rho^2 - rho`` and the occupation spectrum (descending)."""
    rho = np.asarray(rho1)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigurationError(f"rho1 must be square, got shape {rho.shape}")
    dev = float(np.linalg.norm(rho @ rho - rho, 2))
    occ = np.sort(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)))[::-1]
    return dev, occ


@dataclass(frozen=True, eq=False)
class LatticeModel:
    """Tiny discrete model on spin-orbitals.

    Parameters
    ----------
    h : ndarray, shape (M, M)
        Hermitian one-body Hamiltonian (kinetic plus external), block diagonal
        in spin.
    w : ndarray, shape (M, M)
        Real symmetric pair interaction with zero diagonal; depends only on
        the spatial part of the two spin-orbitals.
    spin : ndarray of int, shape (M,)
        Spin label of each spin-orbital.
    """

    h: np.ndarray
    w: np.ndarray
    spin: np.ndarray = field(default=None)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        w = np.asarray(self.w, dtype=float)
        M = h.shape[0]
        if h.shape != (M, M) or w.shape != (M, M):
            raise ConfigurationError("h and w must be square of equal size")
        if not (1 <= M <= MAX_MODES):
            raise ConfigurationError(f"model size must lie in [1, {MAX_MODES}], got {M}")
        if np.max(np.abs(h - h.conj().T)) > 1e-14:
            raise ConfigurationError("h must be Hermitian")
        if np.max(np.abs(w - w.T)) > 1e-14 or np.any(np.diag(w) != 0):
            raise ConfigurationError("w must be symmetric with zero diagonal")
        spin = np.zeros(M, dtype=int) if self.spin is None else np.asarray(self.spin, dtype=int)
        if spin.shape != (M,):
            raise ConfigurationError("spin labels must have one entry per mode")
        if np.any(np.abs(h[spin[:, None] != spin[None, :]]) > 0):
            raise ConfigurationError("h must not couple different spins")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "spin", spin)

    @property
    def M(self):
        return self.h.shape[0]

    @classmethod
    def random(cls, rng, sites=2, coupling=1.0):
        """Random spinful lattice with ``2 * sites`` spin-orbitals."""
        L = sites
        t = rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))
        t = 0.5 * (t + t.conj().T)
        d = np.abs(rng.standard_normal((L, L)))
        wsp = coupling * (0.5 + 0.5 * (d + d.T))
        h = np.kron(np.eye(2), t)
        w = np.kron(np.ones((2, 2)), wsp)
        np.fill_diagonal(w, 0.0)
        return cls(h, w, np.repeat([0, 1], L))

    def ensemble(self, v, counts, added_spin, gamma):
        """Ensemble of ``h + diag(v)`` with fixed spin populations.

        Parameters
        ----------
        counts : sequence of int
            Integer number of occupied orbitals per spin label (aufbau within
            each spin).
        added_spin : int
            Spin of the fractionally occupied orbital: the lowest empty one of
            that spin.

        Returns
        -------
        (FractionalEnsemble, ndarray)
            Ensemble and eigenvalues indexed like the orbital columns.
        """
        heff = self.h + np.diag(np.asarray(v, dtype=float))
        U = np.zeros((self.M, self.M), dtype=complex)
        eps = np.zeros(self.M)
        occ, added = [], None
        labels = np.unique(self.spin)
        if len(counts) != len(labels):
            raise ConfigurationError(f"need one count per spin label {labels.tolist()}, got {counts}")
        for s, k in zip(labels, counts):
            idx = np.flatnonzero(self.spin == s)
            if not (0 <= k < idx.size) and not (k == idx.size and s != added_spin):
                raise ConfigurationError(f"cannot place {k} electrons in {idx.size} spin-{s} orbitals")
            e, vec = np.linalg.eigh(heff[np.ix_(idx, idx)])
            U[np.ix_(idx, idx)] = vec
            eps[idx] = e
            occ.extend(idx[:k])
            if s == added_spin:
                added = idx[k]
        if added is None:
            raise ConfigurationError(f"unknown spin label {added_spin}")
        return FractionalEnsemble.from_orbitals(U, occ, added, gamma), eps


def _pure_condition(model, state, v):
    """``<Phi| n_x (V - U) |Phi>`` for every ``x`` by explicit operators."""
    M = model.M
    psi = state.vector()
    prob = np.abs(psi) ** 2
    n = np.array([[st >> i & 1 for st in range(1 << M)] for i in range(M)], dtype=float)
    V = np.asarray(v) @ n
    U = 0.5 * np.einsum("xy,xs,ys->s", model.w, n, n)
    return n @ (prob * (V - U))


def _weights(N, alpha):
    beta = beta_from_alpha(N, alpha) if N > 0 else 1.0
    lam = ((1 - alpha) / N if N > 0 else 0.0) + alpha / (N + 1)
    return beta, lam


def lhf_condition_discrete(model, v, counts, added_spin, alpha):
    """Residual of the fractional LHF condition on a lattice.

    Parameters
    ----------
    model : LatticeModel
    v : ndarray, shape (M,)
        Trial effective potential (Hartree plus exchange parts).
    counts : sequence of int
        Integer spin populations of the lower determinant.
    added_spin : int
        Spin of the fractional orbital.
    alpha : float
        Physical fraction.

    Returns
    -------
    (ndarray, ndarray)
        ``(brute, wick)``: the average of ``<n_x (V - U)>`` with weights
        ``(1 - alpha)/N`` and ``alpha/(N + 1)`` from explicit operators, and
        ``lam * F`` assembled from the beta-ensemble one-body density matrix
        with ``lam = (1 - alpha)/N + alpha/(N + 1)``.
    """
    v = np.asarray(v, dtype=float)
    N = int(sum(counts))
    ens, _ = model.ensemble(v, counts, added_spin, 0.0)
    brute = np.zeros(model.M)
    if N > 0 and alpha < 1:
        brute += (1 - alpha) / N * _pure_condition(model, ens.lower, v)
    if alpha > 0:
        brute += alpha / (N + 1) * _pure_condition(model, ens.upper, v)
    beta, lam = _weights(N, alpha)
    rho = ens.with_gamma(beta).rho1()
    n = np.real(np.diag(rho))
    r2 = wick_factorization(rho, 2).tensor
    r3 = wick_factorization(rho, 3).tensor
    F = v * n + r2 @ v - np.sum(r2 * model.w, axis=1) - 0.5 * np.einsum("xyz,yz->x", r3, model.w)
    return brute, lam * F


def integrated_condition(model, v, counts, added_spin, alpha):
    """``(sum_x residual, (1 - alpha) G_N + alpha G_{N+1})``.

    ``G_K = sum v n^K - 1/2 sum rho_2^K w`` is ``<V - U>`` in the K-particle
    determinant; both sides agree for any ``v`` and vanish at the solution.
    """
    v = np.asarray(v, dtype=float)
    brute, _ = lhf_condition_discrete(model, v, counts, added_spin, alpha)
    ens, _ = model.ensemble(v, counts, added_spin, 0.0)

    def G(state):
        n = np.real(np.diag(state.rho1()))
        r2 = rdm_bruteforce(state, 2).tensor
        return float(np.dot(v, n) - 0.5 * np.sum(r2 * model.w))

    total = 0.0
    if alpha < 1:
        total += (1 - alpha) * G(ens.lower)
    if alpha > 0:
        total += alpha * G(ens.upper)
    return float(brute.sum()), total


def _exchange_solve(model, rho):
    """Exact pointwise solution of the discrete LHF equation for fixed orbitals.

    Unknown ``v_X = v - v_H`` obeys
    ``(v_X + G) n = sum_y (v_X(y) - w_xy) |rho_xy|^2 + T3`` with ``G`` linear in
    ``v_X``; the minimum-norm solution is taken when the gauge is free.
    """
    n = np.real(np.diag(rho))
    a2 = np.abs(rho) ** 2
    vH = model.w @ n
    t3 = np.real(np.einsum("xy,yz,zx,yz->x", rho, rho, rho, model.w))
    C = 0.5 * np.dot(vH, n) + 0.5 * np.sum(model.w * a2)
    A = np.diag(n) - a2 + np.outer(n, n)
    b = t3 - np.sum(model.w * a2, axis=1) - C * n
    vX, *_ = np.linalg.lstsq(A, b, rcond=None)
    return vH + vX


def solve_lhf_discrete(model, counts, added_spin, alpha, mixing=0.5, tol=1e-13, max_iter=2000):
    """Self-consistent discrete LHF potential.

    Returns
    -------
    (ndarray, int)
        Potential and iteration count.
    """
    beta, _ = _weights(int(sum(counts)), alpha)
    v = np.zeros(model.M)
    change = np.inf
    for it in range(1, max_iter + 1):
        ens, _ = model.ensemble(v, counts, added_spin, beta)
        new = _exchange_solve(model, ens.rho1())
        change = float(np.max(np.abs(new - v)))
        v = v + mixing * (new - v)
        if change < tol:
            return new, it
    raise ConvergenceError("discrete LHF iteration did not converge", {"iterations": max_iter, "change": change})


def run_wick_suite(seed=0, trials=1000, max_modes=6, lengths=(4, 6)):
    """Randomized checks of every identity; returns a dict of worst gaps."""
    rng = np.random.default_rng(seed)
    worst = {"wick": 0.0, "affine": 0.0, "rdm2": 0.0, "rdm3": 0.0, "idempotent_integer": 0.0,
             "idempotent_fraction_min": np.inf, "trace_recursion": 0.0}
    for t in range(trials):
        ens = random_ensemble(rng, max_modes=max_modes)
        string = random_string(rng, ens.M, lengths[t % len(lengths)])
        worst["wick"] = max(worst["wick"], generalized_wick_check(ens, string)[2])
        if t % 10 == 0:
            worst["affine"] = max(worst["affine"], affine_fit_residual(ens, string))
            rho = ens.rho1()
            for k, key in ((2, "rdm2"), (3, "rdm3")):
                gap = np.max(np.abs(rdm_bruteforce(ens, k).tensor - wick_factorization(rho, k).tensor))
                worst[key] = max(worst[key], float(gap))
            for g in (0.0, 1.0):
                worst["idempotent_integer"] = max(worst["idempotent_integer"],
                                                  idempotency_check(ens.with_gamma(g).rho1())[0])
            if 0 < ens.gamma < 1:
                worst["idempotent_fraction_min"] = min(worst["idempotent_fraction_min"],
                                                       idempotency_check(rho)[0] / (ens.gamma * (1 - ens.gamma)))
            st = ens.upper
            for k in (2, 3):
                if st.N >= k:
                    lhs = rdm_bruteforce(st, k).partial_trace()
                    prev = rdm_bruteforce(st, k - 1, diagonal=True).tensor
                    worst["trace_recursion"] = max(worst["trace_recursion"],
                                                   float(np.max(np.abs(lhs - (st.N - k + 1) * prev))))
    worst["trials"] = trials
    worst["seed"] = seed
    return worst
