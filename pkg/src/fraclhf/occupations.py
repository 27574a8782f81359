"""Shell configurations, occupation fractions and ensemble density matrices.

A fractional configuration is a set of closed subshells per spin plus one
"HOMO" s subshell of a definite spin carrying the physical fraction
``alpha``.  The potential equations use the renormalized fraction ``beta``,
while energies use ``alpha``.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConsistencyError, DomainError

__all__ = [
    "UP",
    "DOWN",
    "SPIN_NAMES",
    "Shell",
    "parse_shell",
    "parse_shells",
    "parse_spin",
    "beta_from_alpha",
    "OccupationSpec",
    "SpinOrbital",
    "EnsembleDensityMatrix",
    "build_density_matrix",
    "spin_density",
]

UP, DOWN = 0, 1
SPIN_NAMES = ("up", "down")
_L_LETTERS = "spdfg"


@dataclass(frozen=True, order=True)
class Shell:
    """Subshell ``n l`` holding ``2l+1`` orbitals of one spin."""

    n: int
    l: int

    def __post_init__(self):
        if self.n < 1 or self.l < 0 or self.l >= self.n or self.l >= len(_L_LETTERS):
            raise ConfigurationError(f"invalid subshell n={self.n}, l={self.l}")

    @property
    def degeneracy(self):
        return 2 * self.l + 1

    @property
    def nodes(self):
        return self.n - self.l - 1

    @property
    def label(self):
        return f"{self.n}{_L_LETTERS[self.l]}"

    def __str__(self):
        return self.label


def parse_shell(text):
    """``"2s"`` -> ``Shell(2, 0)``."""
    m = re.fullmatch(r"\s*(\d+)\s*([spdfg])\s*", str(text).lower())
    if m is None:
        raise ConfigurationError(f"cannot parse subshell {text!r}")
    return Shell(int(m.group(1)), _L_LETTERS.index(m.group(2)))


def parse_shells(text):
    """Comma separated subshells, empty string gives an empty tuple."""
    if isinstance(text, (list, tuple)):
        return tuple(s if isinstance(s, Shell) else parse_shell(s) for s in text)
    parts = [p for p in str(text).split(",") if p.strip()]
    return tuple(parse_shell(p) for p in parts)


def parse_spin(text):
    if text in (UP, DOWN):
        return int(text)
    t = str(text).strip().lower()
    if t in ("up", "u", "+", "alpha"):
        return UP
    if t in ("down", "dn", "d", "-", "beta"):
        return DOWN
    raise ConfigurationError(f"cannot parse spin {text!r}")


def beta_from_alpha(N, alpha):
    """Renormalized HOMO weight for a configuration with ``N`` electrons plus ``alpha``.

    ``beta = alpha N / ((1 - alpha)(N + 1) + alpha N)``.  Returns 0 for
    ``N = 0``; that case has no N-electron reference state.
    """
    if int(N) != N or N < 0:
        raise DomainError(f"N must be a non-negative integer, got {N}")
    alpha = float(alpha)
    if not (0.0 <= alpha <= 1.0):
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    if N == 0:
        return 0.0
    if alpha == 1.0:
        return 1.0
    return alpha * N / ((1.0 - alpha) * (N + 1) + alpha * N)


@dataclass(frozen=True)
class OccupationSpec:
    """Fractional configuration of an atom or ion.

    Parameters
    ----------
    Z : float
        Nuclear charge.
    closed : tuple of tuple of Shell
        Fully occupied subshells, indexed by spin (``UP``, ``DOWN``).
    homo : Shell
        Partially occupied subshell.
    homo_spin : int
        Spin of ``homo``.
    alpha : float
        Physical occupation of ``homo`` in ``[0, 1]``.  Non-s subshells are
        only accepted at ``alpha`` in ``{0, 1}``.
    """

    Z: float
    closed: tuple
    homo: Shell
    homo_spin: int
    alpha: float
    side: str = field(default="below", compare=False)

    def __post_init__(self):
        if not np.isfinite(self.Z) or self.Z <= 0:
            raise ConfigurationError(f"Z must be positive, got {self.Z}")
        closed = tuple(parse_shells(c) for c in self.closed)
        if len(closed) != 2:
            raise ConfigurationError("closed shells must be given for both spins")
        object.__setattr__(self, "closed", closed)
        homo = self.homo if isinstance(self.homo, Shell) else parse_shell(self.homo)
        object.__setattr__(self, "homo", homo)
        object.__setattr__(self, "homo_spin", parse_spin(self.homo_spin))
        alpha = float(self.alpha)
        if not (0.0 <= alpha <= 1.0):
            raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
        object.__setattr__(self, "alpha", alpha)
        for s, shells in enumerate(closed):
            if len(set(shells)) != len(shells):
                raise ConfigurationError(f"duplicate subshell for spin {SPIN_NAMES[s]}")
        if homo in closed[self.homo_spin]:
            raise ConfigurationError(f"HOMO {homo} is already closed for that spin")
        if homo.l != 0 and 0.0 < alpha < 1.0:
            raise ConfigurationError("fractional occupation is restricted to s subshells")
        if self.side not in ("below", "above"):
            raise ConfigurationError(f"side must be 'below' or 'above', got {self.side!r}")

    @classmethod
    def from_strings(cls, Z, shells_up, shells_down, homo, alpha=None, N_total=None):
        """Build from config-style text, with either ``alpha`` or ``N_total``."""
        closed = (parse_shells(shells_up), parse_shells(shells_down))
        parts = [p for p in str(homo).split(",") if p.strip()]
        if len(parts) != 2:
            raise ConfigurationError(f"homo must look like '2s,up', got {homo!r}")
        shell, spin = parse_shell(parts[0]), parse_spin(parts[1])
        if (alpha is None) == (N_total is None):
            raise ConfigurationError("give exactly one of alpha and N_total")
        if alpha is None:
            base = sum(s.degeneracy for c in closed for s in c)
            alpha = (float(N_total) - base) / shell.degeneracy
            if not (-1e-12 <= alpha <= 1.0 + 1e-12):
                raise ConfigurationError(
                    f"N_total={N_total} is outside [{base}, {base + shell.degeneracy}]"
                    " for these shells"
                )
            alpha = min(max(alpha, 0.0), 1.0)
        return cls(Z, closed, shell, spin, alpha)

    @classmethod
    def from_scheme(cls, Z, scheme_up, scheme_down, N_total, side="below"):
        """Aufbau configuration with ``N_total`` electrons.

        Subshells listed per spin are filled in ``(n + l, n)`` order, spin up
        before spin down.  At integer ``N_total`` the HOMO is the last filled
        subshell (``side='below'``, ``alpha=1``) or the next empty one
        (``side='above'``, ``alpha=0``); when that side does not exist the
        other one is used.
        """
        scheme = (parse_shells(scheme_up), parse_shells(scheme_down))
        order = sorted(set(scheme[0]) | set(scheme[1]), key=lambda s: (s.n + s.l, s.n))
        slots = [(sh, sp) for sh in order for sp in (UP, DOWN) if sh in scheme[sp]]
        if not slots:
            raise ConfigurationError("empty shell scheme")
        N_total = float(N_total)
        caps = np.array([sh.degeneracy for sh, _ in slots], dtype=float)
        edges = np.concatenate([[0.0], np.cumsum(caps)])
        tol = 1e-9
        if N_total < -tol or N_total > edges[-1] + tol:
            raise ConfigurationError(f"N_total={N_total} outside [0, {edges[-1]:g}] for scheme")
        near = np.flatnonzero(np.abs(edges - N_total) <= tol)
        if near.size:
            j = int(near[0])
            use_below = (side == "below" and j > 0) or j == len(slots)
            if use_below:
                homo_idx, alpha = j - 1, 1.0
            else:
                homo_idx, alpha = j, 0.0
        else:
            homo_idx = int(np.searchsorted(edges, N_total) - 1)
            alpha = N_total - edges[homo_idx]
            if slots[homo_idx][0].l != 0:
                raise ConfigurationError(
                    f"N_total={N_total} would fractionally fill {slots[homo_idx][0]}"
                )
        closed = ([], [])
        for sh, sp in slots[:homo_idx]:
            closed[sp].append(sh)
        homo, spin = slots[homo_idx]
        return cls(Z, (tuple(closed[0]), tuple(closed[1])), homo, spin, alpha, side=side)

    @property
    def N(self):
        """Integer baseline electron count (closed subshells only)."""
        return int(sum(s.degeneracy for c in self.closed for s in c))

    @property
    def N_total(self):
        return self.N + self.homo.degeneracy * self.alpha

    @property
    def beta(self):
        return beta_from_alpha(self.N, self.alpha)

    @property
    def beta_eff(self):
        """Weight of the HOMO inside the potential equations.

        Equal to ``beta`` except below one electron, where only the
        one-electron state enters and the weight is 1.
        """
        return 1.0 if self.N == 0 else self.beta

    @property
    def is_integer(self):
        return self.alpha in (0.0, 1.0)

    def shells(self, spin):
        """All subshells of a spin channel, closed ones first, HOMO last."""
        out = list(self.closed[spin])
        if spin == self.homo_spin:
            out.append(self.homo)
        return out

    def weights(self, spin, gamma):
        """``[(shell, weight), ...]`` with weight 1 for closed shells and ``gamma`` for the HOMO."""
        return [(s, gamma if (spin == self.homo_spin and s == self.homo) else 1.0)
                for s in self.shells(spin)]

    def counts(self, gamma):
        """``(N_up, N_down)`` with the HOMO weighted by ``gamma``."""
        return tuple(
            float(sum(w * s.degeneracy for s, w in self.weights(sp, gamma))) for sp in (UP, DOWN)
        )

    @property
    def N_up(self):
        return self.counts(self.alpha)[UP]

    @property
    def N_down(self):
        return self.counts(self.alpha)[DOWN]

    @property
    def fully_polarized(self):
        """True when one spin channel has no subshells at all."""
        return not self.shells(UP) or not self.shells(DOWN)

    def describe(self):
        parts = []
        for sp in (UP, DOWN):
            labels = [str(s) for s in self.closed[sp]]
            if sp == self.homo_spin:
                labels.append(f"{self.homo}({self.alpha:g})")
            parts.append(f"{SPIN_NAMES[sp]}: " + " ".join(labels))
        return f"Z={self.Z:g} N={self.N_total:g} [" + "; ".join(parts) + "]"


@dataclass(frozen=True, eq=False)
class SpinOrbital:
    """Radial orbital ``u(r) = r R(r)`` with quantum numbers and eigenvalue."""

    shell: Shell
    spin: int
    eps: float
    u: np.ndarray
    grid: object

    @property
    def l(self):
        return self.shell.l


@dataclass(frozen=True, eq=False)
class EnsembleDensityMatrix:
    """Low-rank spin-resolved one-particle density matrix at fraction ``gamma``.

    ``entries[spin]`` is a tuple of ``(SpinOrbital, weight)`` with weights in
    ``(0, 1]``; the implied kernel is
    ``sum_i w_i u_i(r) u_i(r') (2l+1) P_l(cos) / (4 pi r r')``.
    """

    grid: object
    gamma: float
    entries: tuple

    def n_rad(self, spin):
        out = np.zeros(self.grid.n_points)
        for orb, w in self.entries[spin]:
            out += w * orb.shell.degeneracy * orb.u**2
        return out

    def trace(self, spin):
        return float(sum(w * orb.shell.degeneracy for orb, w in self.entries[spin]))

    def eigen_occupations(self, spin):
        """Weight multiset of the kernel, each repeated ``2l+1`` times."""
        occ = []
        for orb, w in self.entries[spin]:
            occ.extend([w] * orb.shell.degeneracy)
        return np.sort(np.array(occ, dtype=float))[::-1]

    def kernel_spectrum(self, spin, l):
        """Eigenvalues of the discretized radial kernel in channel ``l``.

        Built densely on the grid (``sqrt(w) K sqrt(w)``); intended for
        checks, not for production contractions.
        """
        sq = np.sqrt(self.grid.w)
        k = np.zeros((self.grid.n_points, self.grid.n_points))
        for orb, w in self.entries[spin]:
            if orb.l == l:
                v = sq * orb.u
                k += w * np.outer(v, v)
        return np.sort(np.linalg.eigvalsh(k))[::-1]

    def idempotency_defect(self, spin):
        """Max over channels of ``||K^2 - K||_F`` for the discretized kernel."""
        worst = 0.0
        for l in {orb.l for orb, _ in self.entries[spin]}:
            ev = self.kernel_spectrum(spin, l)
            worst = max(worst, float(np.sqrt(np.sum((ev * ev - ev) ** 2))))
        return worst


def build_density_matrix(orbitals, spec, gamma):
    """Assemble the ensemble density matrix of ``spec`` with HOMO weight ``gamma``.

    Parameters
    ----------
    orbitals : sequence of SpinOrbital
        Must contain every subshell of ``spec`` (extra orbitals are ignored).
    spec : OccupationSpec
    gamma : float
        HOMO weight, typically ``spec.alpha`` or ``spec.beta``.
    """
    gamma = float(gamma)
    if not (0.0 <= gamma <= 1.0):
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    lookup = {(o.shell, o.spin): o for o in orbitals}
    grid = None
    entries = ([], [])
    for sp in (UP, DOWN):
        for shell, w in spec.weights(sp, gamma):
            orb = lookup.get((shell, sp))
            if orb is None:
                raise ConsistencyError(f"no orbital for {shell} spin {SPIN_NAMES[sp]}")
            if grid is not None and orb.grid != grid:
                raise ConsistencyError("orbitals live on different grids")
            grid = orb.grid
            if w > 0.0:
                entries[sp].append((orb, w))
    if grid is None:
        raise ConsistencyError("configuration has no subshells")
    return EnsembleDensityMatrix(grid, gamma, (tuple(entries[0]), tuple(entries[1])))


def spin_density(dm):
    """``(n_rad_up, n_rad_down)`` with ``n_rad = 4 pi r^2 n_sigma``."""
    return dm.n_rad(UP), dm.n_rad(DOWN)
