import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from momlab import (AtomicMeasure, Density, DomainError, Field, Grid, NormalizationError, Potential,
                    barycenter, center, entropy, gibbs, l1_dist_mod_translation, l1_distance,
                    moment_measure, moments, theta)


class TestTypes:
    def test_density_mass_check(self):
        g = Grid(0, 1, 11)
        with pytest.raises(NormalizationError):
            Density(g.constant(2.0))
        Density(g.constant(1.0))

    def test_density_negative(self):
        with pytest.raises(DomainError):
            Density.normalized(Grid(0, 1, 3).field(lambda x: x - 0.5))

    def test_zero_mass(self):
        with pytest.raises(NormalizationError):
            Density.normalized(Grid(0, 1, 3).constant(0.0))

    def test_atoms_sorted_and_checked(self):
        mu = AtomicMeasure(np.array([1.0, -1.0]), np.array([0.25, 0.75]))
        assert mu.locations.tolist() == [-1.0, 1.0]
        assert mu.weights.tolist() == [0.75, 0.25]
        with pytest.raises(NormalizationError):
            AtomicMeasure(np.array([0.0, 1.0]), np.array([0.5, 0.6]))
        with pytest.raises(DomainError):
            AtomicMeasure(np.array([0.0, 0.0]), np.array([0.5, 0.5]))
        with pytest.raises(DomainError):
            AtomicMeasure(np.array([0.0, 1.0]), np.array([1.0, 0.0]))

    def test_merged(self):
        mu = AtomicMeasure.merged([0.0, 1.0, 0.0], [0.25, 0.5, 0.25])
        assert mu.locations.tolist() == [0.0, 1.0]
        assert mu.weights.tolist() == [0.5, 0.5]


class TestGibbs:
    def test_gaussian(self):
        rho = gibbs(Potential.from_function(Grid(-8, 8, 4001), lambda x: x**2 / 2))
        assert rho.values[2000] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-6)

    def test_laplace(self):
        rho = gibbs(Potential.from_function(Grid(-20, 20, 20001), np.abs))
        assert rho.values[10000] == pytest.approx(0.5, abs=1e-6)

    def test_constant_shift_invariant(self):
        g = Grid(-5, 5, 501)
        a = gibbs(Potential.from_function(g, lambda x: x**2))
        b = gibbs(Potential.from_function(g, lambda x: x**2 + 37.0))
        np.testing.assert_allclose(a.values, b.values, rtol=1e-12)

    def test_regularized(self):
        rho = gibbs(Potential.from_function(Grid(-8, 8, 4001), lambda x: x**2 / 2), alpha=1.0)
        assert moments(rho, 2) == pytest.approx(0.5, abs=1e-6)

    def test_large_values_no_overflow(self):
        rho = gibbs(Potential.from_function(Grid(-1, 1, 101), lambda x: 1e4 + x**2))
        assert np.isfinite(rho.values).all()

    def test_infinite_outside_domain(self):
        vals = np.array([np.inf, 0.0, 0.0, 0.0, np.inf])
        rho = gibbs(Potential(Field(Grid(-2, 2, 5), vals)))
        # trapezoid mass of (0, c, c, c, 0) with h = 1 is 3c
        assert rho.values[0] == 0.0 and rho.values[2] == pytest.approx(1 / 3)


class TestMomentMeasure:
    def test_gaussian_identity(self):
        g = Grid(-8, 8, 4001)
        mu = moment_measure(Potential.from_function(g, lambda x: x**2 / 2))
        assert isinstance(mu, Density)
        assert moments(mu, 2) == pytest.approx(1.0, abs=1e-3)
        assert barycenter(mu) == pytest.approx(0.0, abs=1e-6)

    def test_abs_gives_two_atoms(self):
        mu = moment_measure(Potential.from_function(Grid(-20, 20, 4001), np.abs))
        assert isinstance(mu, AtomicMeasure)
        np.testing.assert_allclose(mu.locations, [-1, 1], atol=1e-9)
        np.testing.assert_allclose(mu.weights, [0.5, 0.5], atol=1e-6)

    def test_translation_invariant(self):
        g = Grid(-10, 10, 2001)
        a = moment_measure(Potential.from_function(g, lambda x: np.sqrt(1 + x**2)))
        b = moment_measure(Potential.from_function(g, lambda x: np.sqrt(1 + (x - 1)**2)))
        assert abs(moments(a, 2) - moments(b, 2)) < 1e-3


class TestStatistics:
    def test_moments(self):
        assert moments(AtomicMeasure.dirac(0.0), 2) == 0.0
        assert moments(AtomicMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5])), 4) == 1.0
        gauss = Density.from_function(Grid(-8, 8, 4001), lambda x: np.exp(-x**2 / 2))
        assert moments(gauss, 2) == pytest.approx(1.0, abs=1e-4)

    def test_entropy(self):
        assert entropy(Density.from_function(Grid(0, 1, 101), lambda x: 1 + 0 * x)) == pytest.approx(0.0, abs=1e-12)
        assert entropy(Density.from_function(Grid(0, 2, 101), lambda x: 1 + 0 * x)) == pytest.approx(-math.log(2), abs=1e-12)
        gauss = Density.from_function(Grid(-8, 8, 4001), lambda x: np.exp(-x**2 / 2))
        assert entropy(gauss) == pytest.approx(-0.5 * math.log(2 * math.pi * math.e), abs=1e-4)

    def test_barycenter_and_center(self):
        two = AtomicMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
        assert barycenter(two) == 0.0
        assert center(two).locations.tolist() == [-1.0, 1.0]
        c = center(AtomicMeasure.dirac(3.0))
        assert barycenter(AtomicMeasure.dirac(3.0)) == 3.0 and c.locations.tolist() == [0.0]
        shifted = Density.from_function(Grid(-6, 10, 4001), lambda x: np.exp(-(x - 2)**2 / 2))
        assert barycenter(shifted) == pytest.approx(2.0, abs=1e-4)
        assert barycenter(center(shifted)) == pytest.approx(0.0, abs=1e-12)

    def test_theta(self):
        assert theta(AtomicMeasure.dirac(0.0)) == 0.0
        assert theta(AtomicMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))) == 1.0
        gauss = Density.from_function(Grid(-8, 8, 4001), lambda x: np.exp(-x**2 / 2))
        assert theta(gauss) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-4)

    def test_theta_two_dimensional(self):
        # atoms on the x-axis: the vertical direction sees nothing
        mu = AtomicMeasure(np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5]))
        assert theta(mu) == pytest.approx(0.0, abs=1e-9)
        square = AtomicMeasure(np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]]),
                               np.full(4, 0.25))
        # the diagonal direction sees |x + y| / sqrt(2): half the atoms project to 0
        assert theta(square) == pytest.approx(1 / math.sqrt(2), abs=1e-6)


class TestL1:
    def test_identical(self):
        g = Grid(-3, 3, 301)
        mu = Density.from_function(g, lambda x: np.exp(-x**2))
        assert l1_distance(mu, mu) == 0.0

    def test_disjoint(self):
        a = Density.from_function(Grid(0, 1, 101), lambda x: 1 + 0 * x)
        b = Density.from_function(Grid(1, 2, 101), lambda x: 1 + 0 * x)
        assert l1_distance(a, b) == pytest.approx(2.0, abs=1e-12)

    def test_shifted_gaussians(self):
        g = Grid(-8, 8, 4001)
        a = Density.from_function(g, lambda x: np.exp(-x**2 / 2))
        b = Density.from_function(g, lambda x: np.exp(-(x - 0.1)**2 / 2))
        assert l1_distance(a, b) == pytest.approx(2 * (2 * norm.cdf(0.05) - 1), abs=1e-3)

    def test_quadrature_oracle(self):
        ga, gb = Grid(-4, 4, 801), Grid(-3, 5, 601)
        a = Density.from_function(ga, lambda x: np.exp(-x**2 / 2))
        b = Density.from_function(gb, lambda x: np.exp(-np.abs(x - 1)))

        # dense-sampling oracle of the piecewise-linear difference
        x = np.linspace(-4, 5, 2_000_001)
        diff = np.abs(np.interp(x, ga.x, a.values, 0, 0) - np.interp(x, gb.x, b.values, 0, 0))
        oracle = np.trapezoid(diff, x)
        assert l1_distance(a, b) == pytest.approx(oracle, abs=1e-6)

    def test_two_dimensional(self):
        g = Grid([0, 0], [1, 1], [21, 21])
        X, _ = g.mesh()
        a = Density.normalized(Field(g, 1 + 0 * X))
        b = Density.normalized(Field(g, 2 * X))
        assert l1_distance(a, b) == pytest.approx(0.5, abs=1e-2)


class TestTranslation:
    def test_exact_translate(self):
        g = Grid(-8, 8, 1601)
        rho = Density.from_function(g, lambda x: np.exp(-x**2 / 2))
        bar = Density.from_function(g, lambda x: np.exp(-(x - 0.3)**2 / 2))
        fit = l1_dist_mod_translation(rho, bar)
        assert fit.shift == pytest.approx(0.3, abs=1e-4)
        assert fit.distance <= 2 * g.h[0] * 0.25
        assert not fit.at_bound

    def test_identical(self):
        g = Grid(-5, 5, 501)
        rho = Density.from_function(g, lambda x: np.exp(-x**2 / 2))
        fit = l1_dist_mod_translation(rho, rho)
        assert fit.distance == pytest.approx(0.0, abs=1e-9)
        assert fit.shift == pytest.approx(0.0, abs=1e-6)

    def test_variance_mismatch(self):
        g = Grid(-8, 8, 1601)
        a = Density.from_function(g, lambda x: np.exp(-x**2 / 2))
        b = Density.from_function(g, lambda x: np.exp(-x**2 / (2 * 1.21)))
        fit = l1_dist_mod_translation(a, b)
        assert fit.shift == pytest.approx(0.0, abs=1e-3)
        assert fit.distance == pytest.approx(l1_distance(a, b), abs=1e-3)


@settings(max_examples=25, deadline=None)
@given(s=st.floats(0.3, 3.0), m=st.floats(-2, 2))
def test_gaussian_entropy_property(s, m):
    g = Grid(m - 12 * s, m + 12 * s, 2001)
    rho = Density.from_function(g, lambda x: np.exp(-(x - m)**2 / (2 * s**2)))
    assert entropy(rho) == pytest.approx(-0.5 * math.log(2 * math.pi * math.e * s**2), abs=1e-4)
    assert barycenter(rho) == pytest.approx(m, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 5), min_size=4, max_size=30), st.lists(st.floats(0.05, 5), min_size=4, max_size=30))
def test_l1_is_a_bounded_symmetric_distance(va, vb):
    a = Density.normalized(Field(Grid(0, 1, len(va)), np.array(va)))
    b = Density.normalized(Field(Grid(-0.5, 1.5, len(vb)), np.array(vb)))
    dab = l1_distance(a, b)
    assert 0 <= dab <= 2 + 1e-12
    assert dab == pytest.approx(l1_distance(b, a), abs=1e-12)
