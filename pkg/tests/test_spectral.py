import numpy as np
import pytest
from scipy.sparse.linalg import eigsh

from paircond import geometry as geo
from paircond import spectral as sp
from paircond.grid import Grid, ScalarField
from paircond.reporting import fit_power_law


def interval_mask(n=801, a=0.0, b=1.0, pad=0.0):
    return geo.interval(a, b, grid=Grid.box(a - pad, b + pad, n))


class TestAssembly:
    def test_interval_spectrum(self):
        m = interval_mask(2001)
        op = sp.assemble_dirichlet(m, -1.0)
        res = sp.smallest_eigenpair(op)
        assert abs(res.eigenvalue - np.pi**2) < 2e-5 * np.pi**2

    def test_square_spectrum(self):
        m = geo.box_mask([0, 0], [1, 1], grid=Grid.box([0, 0], [1, 1], [121, 121]))
        op = sp.assemble_dirichlet(m, -1.0)
        res = sp.smallest_eigenpair(op)
        assert abs(res.eigenvalue - 2 * np.pi**2) < 1e-3 * 2 * np.pi**2

    def test_shift_translates_exactly(self):
        m = interval_mask(301)
        base = sp.smallest_eigenpair(sp.assemble_dirichlet(m, -1.0))
        shifted = sp.smallest_eigenpair(sp.assemble_dirichlet(m, -1.0, shift=5.0))
        assert abs(shifted.eigenvalue - base.eigenvalue - 5.0) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        m = interval_mask(101, pad=0.1)
        w = ScalarField(m.grid, np.where(m.inside, rng.standard_normal(m.grid.shape), 0.0))
        op = sp.assemble_dirichlet(m, -0.25, w, shift=0.3)
        mat = op.matrix
        assert abs(mat - mat.T).max() < 1e-12

    def test_potential_grid_mismatch(self):
        m = interval_mask(101)
        w = ScalarField(Grid.box(0.0, 1.0, 51), np.zeros(51))
        with pytest.raises(sp.SpectralError):
            sp.assemble_dirichlet(m, -1.0, w)

    def test_apply_vanishes_outside(self):
        m = interval_mask(101, pad=0.2)
        op = sp.assemble_dirichlet(m, -1.0)
        f = m.field(np.ones(m.count))
        out = op.apply_field(f)
        assert np.all(out.values[~m.inside] == 0.0)


class TestEigenSolver:
    def test_threshold_interval(self):
        res = sp.onset_threshold(interval_mask(2001))
        assert abs(res.eigenvalue - np.pi**2 / 4) < 1e-3

    def test_threshold_square(self):
        m = geo.box_mask([0, 0], [1, 1], grid=Grid.box([0, 0], [1, 1], [201, 201]))
        res = sp.onset_threshold(m)
        assert abs(res.eigenvalue - np.pi**2 / 2) < 5e-3

    def test_constant_potential_shifts(self):
        m = interval_mask(401)
        w = ScalarField(m.grid, np.where(m.inside, 7.5, 0.0))
        base = sp.onset_threshold(m)
        shifted = sp.onset_threshold(m, w)
        assert abs(shifted.eigenvalue - base.eigenvalue - 7.5) < 1e-8

    def test_rayleigh_consistency(self):
        m = interval_mask(501)
        op = sp.assemble_dirichlet(m, -0.25)
        res = sp.smallest_eigenpair(op, tol=1e-11)
        v = res.eigenvector.values[m.inside]
        rq = float(v @ (op.matrix @ v)) / float(v @ v)
        assert abs(rq - res.eigenvalue) <= 10 * res.residual + 1e-12

    def test_sign_fixed(self):
        res = sp.onset_threshold(interval_mask(301))
        assert np.sum(res.eigenvector.values) > 0

    def test_matches_lanczos_oracle(self):
        m = geo.lshape(n=61)
        op = sp.assemble_dirichlet(m, -1.0)
        mine = sp.smallest_eigenpair(op, tol=1e-11)
        oracle = eigsh(op.matrix, k=1, which="SA", tol=1e-10,
                       return_eigenvectors=False)[0]
        assert abs(mine.eigenvalue - oracle) < 1e-7 * abs(oracle)

    def test_monotone_under_erosion(self):
        m = interval_mask(401, pad=0.2)
        lam = sp.smallest_eigenpair(sp.assemble_dirichlet(m, -1.0)).eigenvalue
        dx = m.grid.spacing[0]
        lam_eroded = sp.smallest_eigenpair(
            sp.assemble_dirichlet(geo.erode(m, 2 * dx), -1.0)
        ).eigenvalue
        assert lam_eroded > lam

    def test_nonconvergence_diagnostic(self):
        m = interval_mask(301)
        op = sp.assemble_dirichlet(m, -1.0)
        with pytest.raises(sp.SpectralError, match="converge"):
            sp.smallest_eigenpair(op, tol=1e-16, max_iter=2)

    def test_threshold_continuity_under_approximation(self):
        # |D_c^pm(ell) - D_c| decays linearly for a convex domain
        m = interval_mask(1601, pad=0.25)
        d_c = sp.onset_threshold(m).eigenvalue
        dx = m.grid.spacing[0]
        ells = [8 * dx, 12 * dx, 16 * dx, 24 * dx, 32 * dx]
        diffs_int, diffs_ext = [], []
        for ell in ells:
            d_int = sp.onset_threshold(geo.erode(m, ell)).eigenvalue
            d_ext = sp.onset_threshold(geo.dilate(m, ell)).eigenvalue
            diffs_int.append(abs(d_int - d_c))
            diffs_ext.append(abs(d_ext - d_c))
        for diffs in (diffs_int, diffs_ext):
            fit = fit_power_law(ells, diffs)
            assert fit.exponent >= 0.9


class TestHardy:
    def test_interval_below_four_and_increasing(self):
        mus = []
        for n in (201, 401, 801):
            m = interval_mask(n, pad=0.25)
            mus.append(sp.hardy_quotient(m, 0.0))
        assert all(mu <= 4.0 + 1e-9 for mu in mus)
        assert mus[0] < mus[1] < mus[2]
        # the supremum 4 is approached logarithmically in the spacing
        assert mus[-1] > 2.8

    def test_square_below_four(self):
        m = geo.box_mask([0, 0], [1, 1], grid=Grid.box([-0.2, -0.2], [1.2, 1.2], [141, 141]))
        mu = sp.hardy_quotient(m, 0.0)
        assert mu <= 4.0 + 1e-9

    def test_dilation_invariance(self):
        mu1 = sp.hardy_quotient(interval_mask(401, 0.0, 1.0, pad=0.2), 0.0)
        mu2 = sp.hardy_quotient(interval_mask(401, 0.0, 2.0, pad=0.4), 0.0)
        assert abs(mu1 - mu2) < 5e-3 * mu1

    def test_indefinite_offset_rejected(self):
        m = interval_mask(201)
        with pytest.raises(sp.SpectralError):
            sp.hardy_quotient(m, lambda_offset=-1e4)
