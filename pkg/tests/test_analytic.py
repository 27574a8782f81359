import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import hydrogenic, solve
from fraclhf.analytic import (
    oep_singlet,
    oep_singlet_scf,
    singlet_closed_form,
    singlet_jump,
    singlet_scf,
    sub_one_particle,
    triplet_jump,
)
from fraclhf.errors import DomainError, UnboundSpeciesError

# 1s level of -2/r screened by one hydrogenic 1s electron (Chebyshev collocation)
EPS_SCREENED_1S = -0.8207003630706


def y0_1s(Z, r):
    """Monopole potential of a normalized hydrogenic 1s density."""
    return 1.0 / r - (Z + 1.0 / r) * np.exp(-2 * Z * r)


class TestSubOneParticle:
    @pytest.mark.parametrize("alpha", [0.0, 0.25, 1.0])
    def test_hydrogenic(self, alpha, he_grid):
        r = he_grid.r
        s = sub_one_particle(-2.0 / r, alpha, he_grid)
        assert s.eps0 == pytest.approx(-2.0, abs=1e-10)
        assert s.E == pytest.approx(-2.0 * alpha, abs=1e-10)
        assert_allclose(s.v_x, -y0_1s(2, r), atol=1e-7)
        assert_allclose(s.v_eff, -2.0 / r)

    @pytest.mark.parametrize("alpha", [-0.1, 1.01])
    def test_domain(self, alpha, he_grid):
        with pytest.raises(DomainError):
            sub_one_particle(-2.0 / he_grid.r, alpha, he_grid)


class TestSingletClosedForm:
    def test_hydrogenic_orbitals(self, he_grid):
        r = he_grid.r
        u = hydrogenic(2, 1, 0, r)
        alpha = 0.6
        beta = alpha / (2 - alpha)
        s = singlet_closed_form(u, u, alpha, he_grid)
        J = 5 / 8 * 2
        assert s.beta == pytest.approx(beta)
        assert s.c_up == pytest.approx(-beta * J, abs=1e-9)
        assert_allclose(s.v_x_down, -beta * y0_1s(2, r), atol=1e-7)
        assert_allclose(s.v_x_up, -y0_1s(2, r) - beta * J, atol=1e-7)
        assert_allclose(s.v_tilde_down, y0_1s(2, r), atol=1e-7)
        assert np.isnan(s.E)

    def test_energy_from_eigenvalues(self, he_grid):
        u = hydrogenic(2, 1, 0, he_grid.r)
        s = singlet_closed_form(u, u, 0.5, he_grid, eps=(-1.0, -0.5))
        assert s.E == pytest.approx(-1.25)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8, 1.0])
def test_closed_form_scf_matches_general_solver(alpha, he_grid):
    ref = singlet_scf(-2.0 / he_grid.r, alpha, he_grid)
    res = solve(2, "1s", "1s", 1.0 + alpha)
    assert res.E_direct == pytest.approx(ref.E, abs=1e-8)
    assert ref.iterations > 0
    n = res.spin_densities().sum(axis=0) / he_grid.r**2
    mask = n > 1e-8 * n.max()
    v_x = res.potentials.v_x
    assert_allclose(v_x[0][mask], ref.v_x_up[mask], atol=1e-7)
    assert_allclose(v_x[1][mask], ref.v_x_down[mask], atol=1e-7)


def test_singlet_jump(he_grid):
    jump, e_up, e_dn = singlet_jump(-2.0 / he_grid.r, he_grid)
    assert e_up == pytest.approx(-2.0, abs=1e-10)
    # e_dn is screened by the numerical 1s density, hence the looser bound
    assert e_dn == pytest.approx(EPS_SCREENED_1S, abs=2e-8)
    assert jump == pytest.approx(2.0 + EPS_SCREENED_1S, abs=2e-8)


def test_triplet_jump_hydrogenic(he_grid):
    jump, parts = triplet_jump(-2.0 / he_grid.r, he_grid)
    # Z=2 scaling of the Z=1 Slater integrals G0(1s,2s)=16/729, F0(1s,2s)=17/81
    K, J = 32 / 729, 34 / 81
    assert parts["K"] == pytest.approx(K, rel=1e-7)
    assert parts["J"] == pytest.approx(J, rel=1e-7)
    assert parts["e0"] == pytest.approx(-2.0, abs=1e-10)
    assert parts["e1"] == pytest.approx(-0.5, abs=1e-10)
    assert jump == pytest.approx(1.5 - K + J, abs=5e-8)


def test_triplet_jump_needs_two_states(he_grid):
    with pytest.raises(UnboundSpeciesError):
        triplet_jump(-np.exp(-he_grid.r) / he_grid.r, he_grid)


class TestOEP:
    def test_potentials_hydrogenic(self, he_grid):
        r = he_grid.r
        u = hydrogenic(2, 1, 0, r)
        vu, vd, E = oep_singlet(u, u, 0.4, he_grid, eps=(-1.0, -0.5))
        assert_allclose(vu, 0.4 * y0_1s(2, r), atol=1e-7)
        assert_allclose(vd, y0_1s(2, r), atol=1e-7)
        assert E == pytest.approx(-1.2 - 0.4 * 1.25, abs=1e-9)

    def test_integer_limit_equals_lhf(self, he_grid):
        E, *_ = oep_singlet_scf(-2.0 / he_grid.r, 1.0, he_grid)
        assert E == pytest.approx(solve(2, "1s", "1s", 2.0).E_direct, abs=1e-8)

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
    def test_oep_below_lhf(self, alpha, he_grid):
        # the OEP minimizes over all local potentials, LHF is one of them
        E, *_ = oep_singlet_scf(-2.0 / he_grid.r, alpha, he_grid)
        E_lhf = solve(2, "1s", "1s", 1.0 + alpha).E_direct
        assert E < E_lhf
        assert E_lhf - E < 2e-3

    def test_zero_alpha(self, he_grid):
        E, eps_up, _, _ = oep_singlet_scf(-2.0 / he_grid.r, 0.0, he_grid)
        assert E == pytest.approx(-2.0, abs=1e-9)
        assert eps_up == pytest.approx(-2.0, abs=1e-9)
