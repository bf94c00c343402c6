import numpy as np
import pytest
from numpy.testing import assert_allclose

from paircond.grid import (
    Grid,
    GridError,
    ScalarField,
    fourier_samples,
    inner_product,
    integrate,
    momentum_lattice,
)


def field_1d(n, fn, lo=0.0, hi=1.0):
    g = Grid.box(lo, hi, n)
    return ScalarField(g, fn(g.axis(0)))


class TestIntegrate:
    def test_constant_is_exact(self):
        f = field_1d(101, lambda x: np.ones_like(x))
        assert abs(integrate(f) - 1.0) < 1e-12

    def test_sine_closed_form(self):
        f = field_1d(1001, lambda x: np.sin(np.pi * x))
        assert abs(integrate(f) - 2.0 / np.pi) < 1e-5

    def test_zero(self):
        f = field_1d(11, np.zeros_like)
        assert integrate(f) == 0.0

    def test_linearity(self):
        rng = np.random.default_rng(0)
        g = Grid.box(0.0, 1.0, 64)
        for _ in range(5):
            a, b = rng.standard_normal(2)
            fv, gv = rng.standard_normal((2, 64))
            lhs = integrate(ScalarField(g, a * fv + b * gv))
            rhs = a * integrate(ScalarField(g, fv)) + b * integrate(ScalarField(g, gv))
            assert abs(lhs - rhs) < 1e-12

    def test_refinement_is_second_order(self):
        errs = []
        for n in (101, 201, 401):
            f = field_1d(n, lambda x: np.sin(np.pi * x))
            errs.append(abs(integrate(f) - 2.0 / np.pi))
        # halving the spacing must cut the error by at least ~4
        assert errs[0] / errs[1] > 3.5
        assert errs[1] / errs[2] > 3.5

    def test_nonfinite_rejected(self):
        f = field_1d(11, np.zeros_like)
        f.values[3] = np.nan
        with pytest.raises(GridError):
            integrate(f)


class TestInnerProduct:
    def test_constants(self):
        f = field_1d(101, np.ones_like)
        assert abs(inner_product(f, f) - 1.0) < 1e-12

    def test_mode_orthogonality(self):
        f = field_1d(1001, lambda x: np.sin(np.pi * x))
        g = field_1d(1001, lambda x: np.sin(2 * np.pi * x))
        assert abs(inner_product(f, g)) < 1e-10

    def test_mode_norm(self):
        f = field_1d(1001, lambda x: np.sin(np.pi * x))
        assert abs(inner_product(f, f) - 0.5) < 1e-6

    def test_conjugate_linearity(self):
        g = Grid.box(0.0, 1.0, 32)
        rng = np.random.default_rng(1)
        fv = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        gv = rng.standard_normal(32)
        ip = inner_product(ScalarField(g, fv), ScalarField(g, gv))
        ip_conj = inner_product(ScalarField(g, gv), ScalarField(g, fv))
        assert abs(ip - np.conj(ip_conj)) < 1e-14

    def test_grid_mismatch(self):
        f = field_1d(11, np.ones_like)
        g = field_1d(21, np.ones_like)
        with pytest.raises(GridError):
            inner_product(f, g)


class TestFourier:
    def test_gaussian_at_zero(self):
        f = field_1d(601, lambda x: np.exp(-(x**2) / 2), lo=-12.0, hi=12.0)
        got = fourier_samples(f, [0.0])[0]
        assert abs(got - np.sqrt(2 * np.pi)) < 1e-6

    def test_real_even_gives_real_even(self):
        f = field_1d(601, lambda x: np.exp(-(x**2) / 2), lo=-12.0, hi=12.0)
        p = np.linspace(-4, 4, 41)
        fh = fourier_samples(f, p)
        assert np.max(np.abs(fh.imag)) < 1e-10
        assert_allclose(fh, fh[::-1], atol=1e-10)

    def test_zero_field(self):
        f = field_1d(64, np.zeros_like, lo=-2.0, hi=2.0)
        assert np.all(fourier_samples(f, [0.0, 1.0, 2.0]) == 0)

    def test_boundary_decay_warning(self):
        f = field_1d(64, np.ones_like)
        with pytest.warns(UserWarning, match="boundary"):
            fourier_samples(f, [0.0])

    def test_plancherel(self):
        # p grid covers the transform support and resolves scale 1/L
        f = field_1d(601, lambda x: np.exp(-(x**2) / 2), lo=-12.0, hi=12.0)
        pts, w = momentum_lattice(8.0, 512, dim=1)
        fh = fourier_samples(f, pts)
        lhs = np.sum(np.abs(fh) ** 2 * w) / (2 * np.pi)
        rhs = integrate(ScalarField(f.grid, np.abs(f.values) ** 2))
        assert abs(lhs - rhs) < 1e-4 * rhs

    def test_2d_gaussian(self):
        g = Grid.box([-8.0, -8.0], [8.0, 8.0], [161, 161])
        xx, yy = g.meshgrid()
        f = ScalarField(g, np.exp(-(xx**2 + yy**2) / 2))
        got = fourier_samples(f, np.array([[0.0, 0.0], [1.0, 0.0]]))
        assert abs(got[0] - 2 * np.pi) < 1e-5
        assert abs(got[1] - 2 * np.pi * np.exp(-0.5)) < 1e-5


class TestGridBasics:
    def test_bounds_reproduced(self):
        g = Grid.box(0.25, 1.75, 7)
        x = g.axis(0)
        assert x[0] == 0.25 and x[-1] == 1.75

    def test_rejects_tiny_axes(self):
        with pytest.raises(GridError):
            Grid.box(0.0, 1.0, 2)

    def test_rejects_inverted_bounds(self):
        with pytest.raises(GridError):
            Grid.box(1.0, 0.0, 11)

    def test_kernel_symmetry_check(self):
        from paircond.grid import PairKernel

        g = Grid.box(0.0, 1.0, 8)
        k = PairKernel(g, g, np.eye(8))
        k.check_symmetric()
        k2 = PairKernel(g, g, np.arange(64.0).reshape(8, 8))
        with pytest.raises(GridError):
            k2.check_symmetric()
