import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from conftest import POSCHL_TELLER, PT_G_0, PT_G_BCS
from paircond import pairing as pr
from paircond.grid import Grid, ScalarField


class TestSolveRelative:
    def test_poschl_teller_closed_form(self, pt_state):
        assert abs(pt_state.E_b - 1.0) < 1e-4
        x = pt_state.grid.axis(0)
        exact = 1.0 / np.cosh(x) / np.sqrt(2.0)
        assert np.max(np.abs(pt_state.alpha_star.values - exact)) < 1e-4

    def test_poschl_teller_decay_rate(self, pt_state):
        assert abs(pt_state.rho_star - 1.0) < 0.02

    def test_even(self, pt_state):
        v = pt_state.alpha_star.values
        assert np.max(np.abs(v - v[::-1])) < 1e-10

    def test_normalized_and_positive(self, pt_state):
        w = pt_state.grid.weights()
        assert abs(np.sum(pt_state.alpha_star.values**2 * w) - 1.0) < 1e-10
        assert np.min(pt_state.alpha_star.values) > -1e-7

    def test_square_well_root_oracle(self):
        v0, a = 4.0, 1.0
        gs = pr.solve_relative({"kind": "square_well", "depth": v0, "halfwidth": a},
                               L=25.0, n=5001)

        def even_match(e):
            k = np.sqrt(v0 - e)
            return k * np.tan(k * a) - np.sqrt(e)

        root = brentq(even_match, 2.5, 3.5)
        # the jump in V is resolved to one cell, hence the loose tolerance
        assert abs(gs.E_b - root) < 0.01
        assert abs(gs.rho_star - np.sqrt(gs.E_b)) < 0.02 * np.sqrt(gs.E_b)

    def test_gaussian_well_exterior_rate(self):
        gs = pr.solve_relative({"kind": "gaussian_well", "depth": 3.0, "width": 1.0},
                               L=25.0, n=3001)
        assert abs(gs.rho_star - np.sqrt(gs.E_b)) < 0.02 * np.sqrt(gs.E_b)

    def test_no_bound_state(self):
        with pytest.raises(pr.PairingError, match="no bound state"):
            pr.solve_relative({"kind": "gaussian_well", "depth": -1.0, "width": 1.0},
                              L=10.0, n=801)

    def test_box_too_small(self):
        with pytest.raises(pr.PairingError, match="increase L"):
            pr.solve_relative(POSCHL_TELLER, L=4.0, n=401)

    def test_box_size_independence(self, pt_state):
        gs_wide = pr.solve_relative(POSCHL_TELLER, L=30.0,
                                    n=int(30 / 20 * 4000) + 1)
        assert abs(gs_wide.E_b - pt_state.E_b) < np.exp(-pt_state.rho_star * 20.0)

    def test_spectral_gap(self, pt_state):
        gap = pr.spectral_gap(pt_state)
        # second PT level sits at the continuum edge: gap ~ E_b
        assert gap > 0.5

    def test_exponential_moment_finite(self, pt_state):
        # int exp(2 rho |r|) |alpha|^2 at rho = 0.9 rho_star has converged
        # on the box: the outer half contributes a vanishing share
        rho = 0.9 * pt_state.rho_star
        r = np.abs(pt_state.grid.axis(0))
        w = pt_state.grid.weights()
        integrand = np.exp(2 * rho * r) * pt_state.alpha_star.values**2 * w
        total = float(np.sum(integrand))
        outer = float(np.sum(integrand[r > 0.75 * pt_state.L]))
        assert np.isfinite(total)
        assert outer < 0.05 * total

    def test_table_potential(self):
        x = np.linspace(0, 6, 400)
        desc = {"kind": "table", "x": x.tolist(),
                "v": (-2.0 / np.cosh(x) ** 2).tolist()}
        gs = pr.solve_relative(desc, L=20.0, n=2001)
        assert abs(gs.E_b - 1.0) < 5e-3

    def test_unknown_kind(self):
        with pytest.raises(pr.PairingError):
            pr.potential_from_descriptor({"kind": "lennard_jones"})

    def test_unknown_params(self):
        with pytest.raises(pr.PairingError):
            pr.potential_from_descriptor({"kind": "poschl_teller", "shape": 2})


class TestDecayFit:
    def test_gaussian_field_rejected(self, pt_state):
        g = Grid.box(-20.0, 20.0, 2001)
        x = g.axis(0)
        fake = pr.RelativeGroundState(
            potential=POSCHL_TELLER, E_b=1.0,
            alpha_star=ScalarField(g, np.exp(-(x**2) / 2) / np.pi**0.25),
            L=20.0, residual=0.0,
        )
        with pytest.raises(pr.PairingError):
            pr.fit_decay_rate(fake)

    def test_growing_tail_rejected(self, pt_state):
        g = Grid.box(-20.0, 20.0, 2001)
        x = g.axis(0)
        vals = 1.0 / np.cosh(x) + 1e-3 * (np.abs(x) > 10)
        fake = pr.RelativeGroundState(
            potential=POSCHL_TELLER, E_b=1.0,
            alpha_star=ScalarField(g, vals / np.sqrt(np.sum(vals**2) * 0.02)),
            L=20.0, residual=0.0,
        )
        with pytest.raises(pr.PairingError, match="monotone"):
            pr.fit_decay_rate(fake)


class TestCouplings:
    def test_coupling_oracle(self, pt_state):
        # independent oracle: adaptive quadrature on the closed-form
        # transform pi sech(pi p / 2)/sqrt(2)
        def ahat(p):
            return np.pi / np.sqrt(2.0) / np.cosh(np.pi * p / 2.0)

        g_bcs_oracle = quad(lambda p: (p * p + 1.0) * ahat(p) ** 4, -40, 40,
                            limit=400)[0] / (2 * np.pi)
        g_0_oracle = quad(lambda p: ahat(p) ** 4, -40, 40, limit=400)[0] / (2 * np.pi)
        assert abs(g_bcs_oracle - PT_G_BCS) < 1e-10
        assert abs(g_0_oracle - PT_G_0) < 1e-10
        # production resolution is already inside the acceptance tolerance
        assert abs(pt_state.g_bcs - g_bcs_oracle) < 1e-5 * g_bcs_oracle
        assert abs(pt_state.g_0 - g_0_oracle) < 1e-5 * g_0_oracle

    def test_rescaling_oracle(self):
        # alpha(x/s)/sqrt(s): the transform gains sqrt(s) and dilates, so
        # both couplings scale by s in one dimension (change of variables)
        s = 2.0
        g = Grid.box(-40.0, 40.0, 8001)
        x = g.axis(0)
        resc = ScalarField(g, 1.0 / np.cosh(x / s) / np.sqrt(2.0 * s))
        gb, g0 = pr.coupling_integrals(resc, 1.0 / s**2, p_max=12.0)
        assert abs(g0 - s * PT_G_0) < 1e-4 * s * PT_G_0

    def test_zero_field(self):
        g = Grid.box(-10.0, 10.0, 801)
        zero = ScalarField(g, np.zeros(801))
        gb, g0 = pr.coupling_integrals(zero, 1.0)
        assert gb == 0.0 and g0 == 0.0

    def test_domination(self, pt_state):
        assert pt_state.g_bcs >= pt_state.E_b * pt_state.g_0

    def test_nyquist_guard(self, pt_state):
        with pytest.raises(pr.PairingError, match="Nyquist"):
            pr.coupling_integrals(pt_state.alpha_star, 1.0, p_max=1e4)

    def test_small_p_grid_rejected(self, pt_state):
        with pytest.raises(pr.PairingError, match="512"):
            pr.coupling_integrals(pt_state.alpha_star, 1.0, n_p=128)


class TestCutoff:
    def test_profile_plateau_and_support(self):
        r = np.linspace(-3, 3, 1001)
        chi = pr.smoothstep_cutoff(r)
        assert np.all(chi[np.abs(r) <= 1.0] == 1.0)
        assert np.all(chi[np.abs(r) >= 1.5] == 0.0)
        assert np.all((chi >= 0) & (chi <= 1))

    def test_diagnostics_decay(self, pt_state_wide):
        d10 = pr.cutoff_diagnostics(pt_state_wide, 10.0)
        d20 = pr.cutoff_diagnostics(pt_state_wide, 20.0)
        rho = pt_state_wide.rho_star
        bound10 = np.exp(-rho * 10.0 / 2.0)
        for val in d10.as_tuple():
            assert abs(val) <= 2.0 * bound10  # fitted constant ~ O(1)
            assert abs(val) <= 1e-2
        for v10, v20 in zip(d10.as_tuple(), d20.as_tuple()):
            assert abs(v20) <= max(abs(v10) * 30 * np.exp(-rho * 5.0), 1e-12)

    def test_chi_one_limit_energy(self, pt_state):
        # at phi large enough that chi == 1 on the whole box, the energy
        # defect reduces to the eigenvalue equation residual
        d = pr.cutoff_diagnostics(pt_state, 13.2)
        assert abs(d.energy_defect) < 1e-9

    def test_norm_never_exceeds_h(self, pt_state):
        state = pr.cutoff_state(pt_state, 5.0, h=0.3)
        assert state.norm_sq() <= 0.3**2 + 1e-12

    def test_small_phi_rejected(self, pt_state):
        with pytest.raises(pr.PairingError):
            pr.cutoff_diagnostics(pt_state, 2.0)


class TestMatchedState:
    def test_quadratic_convergence(self):
        errs = []
        for step in (0.4, 0.2, 0.1):
            m = pr.matched_relative_state(POSCHL_TELLER, step)
            errs.append(abs(m.E_b - 1.0))
        assert errs[0] / errs[1] > 3.0
        assert errs[1] / errs[2] > 3.0

    def test_lattice_couplings_converge(self):
        vals = []
        for step in (0.2, 0.1, 0.05):
            m = pr.matched_relative_state(POSCHL_TELLER, step)
            a = pr.lattice_pair_field(m, 1e9, 1.0)
            vals.append(pr.lattice_couplings(m, a))
        assert abs(vals[-1][0] - PT_G_BCS) < 1e-3
        assert abs(vals[-1][1] - PT_G_0) < 1e-3
        assert abs(vals[1][1] - PT_G_0) < abs(vals[0][1] - PT_G_0)

    def test_eigen_cancellation_exact(self):
        m = pr.matched_relative_state(POSCHL_TELLER, 0.15)
        a = pr.lattice_pair_field(m, 1e9, 1.0)
        assert abs(pr.lattice_pair_energy(m, a)) < 1e-12

    def test_lattice_normalization(self):
        m = pr.matched_relative_state(POSCHL_TELLER, 0.1)
        assert abs(m.norm_sq() - 1.0) < 1e-12
