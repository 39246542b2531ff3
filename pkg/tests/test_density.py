import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, strategies as st

from ldpquad import density as dn, haar


class TestDyadicDensity:
    @pytest.mark.parametrize("values", [[1, 1, 1], [2.0, -0.0001, 0.0001 + 0.0], [1.0, 2.0], [np.nan, 1.0], []])
    def test_rejects_invalid(self, values):
        with pytest.raises(ValueError):
            dn.DyadicDensity(values)

    def test_text_roundtrip(self, tmp_path, rng):
        d = dn.random_density(4, rng)
        d.save(tmp_path / "d.txt")
        back = dn.DyadicDensity.load(tmp_path / "d.txt")
        np.testing.assert_array_equal(back.values, d.values)
        assert (tmp_path / "d.txt").read_text().splitlines()[0] == "4"

    def test_text_length_mismatch(self):
        with pytest.raises(ValueError):
            dn.DyadicDensity.from_text("2\n1 1 1\n")


class TestBesov:
    def test_zero_amplitude_is_uniform(self):
        d = dn.make_besov_density(dn.BesovSpec.single(2, 0.4, 0.0))
        np.testing.assert_array_equal(d.values, 1.0)

    def test_level_one_cells(self):
        # weight 0.5 * 2**-1 = 0.25 times the level-1 amplitude sqrt(2)
        d = dn.make_besov_density(dn.BesovSpec.single(1, 0.5, 0.5, signs=(1, 1)))
        h = 0.25 * math.sqrt(2)
        np.testing.assert_allclose(d.values, [1 + h, 1 - h, 1 + h, 1 - h], atol=1e-15)
        assert d.resolution == 2

    def test_amplitude_error_carries_bound(self):
        spec = dn.BesovSpec.single(1, 0.1, 5.0)
        with pytest.raises(dn.AmplitudeTooLargeError) as e:
            dn.make_besov_density(spec)
        expected = 1.0 / (2 ** (-1 * 0.6) * math.sqrt(2))
        assert e.value.max_delta == pytest.approx(expected, rel=1e-14)

    def test_admissible_edge_is_valid(self):
        spec = dn.BesovSpec.single(2, 0.3, 1.0)
        edge = dn.max_admissible_delta(spec)
        d = dn.make_besov_density(dn.BesovSpec.single(2, 0.3, edge))
        assert d.inf == 0.0 and d.sup <= 2.0 + 1e-12

    @given(st.integers(1, 6), st.floats(0.05, 0.95), st.floats(0, 1), st.integers(0, 100))
    def test_single_level_energy(self, m, s, frac, seed):
        spec = dn.BesovSpec.single(m, s, 1.0, seed=seed)
        delta = frac * dn.max_admissible_delta(spec)
        d = dn.make_besov_density(dn.BesovSpec.single(m, s, delta, seed=seed))
        assert dn.quad_functional(d) - 1 == pytest.approx(delta**2 * 2 ** (-2 * m * s), rel=1e-10, abs=1e-15)
        assert d.sup <= 2 + 1e-12

    def test_multilevel_energies_decay(self):
        spec = dn.BesovSpec(0.3, 0.1, tuple(range(0, 8)), seed=1)
        E = haar.exact_coeffs(dn.make_besov_density(spec), 8).level_energies()[1:]
        np.testing.assert_allclose(E, 0.01 * 2.0 ** (-0.6 * np.arange(8)), rtol=1e-10)

    def test_sign_seed_is_deterministic(self):
        a = dn.BesovSpec.single(4, 0.5, 0.1, seed=3).sign_vectors()
        b = dn.BesovSpec.single(4, 0.5, 0.1, seed=3).sign_vectors()
        np.testing.assert_array_equal(a[0], b[0])


class TestSample:
    def test_uniform_ks(self, rng):
        x = dn.sample(dn.DyadicDensity.uniform(0), 100_000, rng)
        crit = scipy.stats.kstwo.ppf(0.99, x.size)
        assert scipy.stats.kstest(x, "uniform").statistic < crit

    def test_all_mass_in_first_cell(self, rng):
        v = np.zeros(8)
        v[0] = 8
        x = dn.sample(dn.DyadicDensity(v), 1000, rng)
        assert np.all(x < 1 / 8)

    def test_seed_determinism(self):
        d = dn.DyadicDensity([0.5, 1.5])
        a = dn.sample(d, 100, np.random.default_rng(5))
        b = dn.sample(d, 100, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_cell_frequencies(self, rng):
        d = dn.random_density(4, rng)
        n = 1_000_000
        freq = np.bincount(haar.cell_index(dn.sample(d, n, rng), 4), minlength=16) / n
        p = d.masses()
        assert np.all(np.abs(freq - p) < 5 * np.sqrt(p * (1 - p) / n) + 1e-12)

    def test_rejects_empty(self, rng):
        with pytest.raises(ValueError):
            dn.sample(dn.DyadicDensity.uniform(0), 0, rng)


class TestFunctionals:
    def test_quad_examples(self):
        assert dn.quad_functional(dn.DyadicDensity.uniform(3)) == 1.0
        assert dn.quad_functional(dn.DyadicDensity([2.0, 0.0])) == 2.0
        d = dn.make_besov_density(dn.BesovSpec.single(3, 0.5, 0.5))
        assert dn.quad_functional(d) == pytest.approx(1.03125, abs=1e-15)

    def test_linear_examples(self, rng):
        d = dn.random_density(3, rng)
        assert dn.linear_functional(d, dn.DyadicDensity.uniform(0)) == pytest.approx(1.0, abs=1e-14)
        assert dn.linear_functional(d, d) == pytest.approx(dn.quad_functional(d), rel=1e-14)
        g = haar.CoeffTable(4, rng.normal(size=16))
        assert dn.linear_functional(dn.DyadicDensity.uniform(0), g) == pytest.approx(g[-1, 0], abs=1e-13)

    def test_eval_examples(self):
        d = dn.DyadicDensity([2.0, 0.0])
        assert dn.eval_density(dn.DyadicDensity.uniform(2), 0.37) == 1.0
        assert dn.eval_density(d, 0.25) == 2.0
        assert dn.eval_density(d, 0.75) == 0.0

    @given(st.integers(0, 10_000), st.integers(0, 8))
    def test_quad_at_least_one(self, seed, R):
        d = dn.random_density(R, np.random.default_rng(seed))
        q = dn.quad_functional(d)
        assert q >= 1 - 1e-12
        assert (abs(q - 1) < 1e-12) == bool(np.allclose(d.values, 1.0, atol=1e-6))

    def test_uniform_is_the_minimizer(self):
        assert dn.quad_functional(dn.DyadicDensity.uniform(5)) == 1.0

    def test_l2_distance(self):
        assert dn.l2_distance(dn.DyadicDensity([2.0, 0.0]), dn.DyadicDensity.uniform(0)) == pytest.approx(1.0)

    def test_integral_functional_entropy(self):
        d = dn.DyadicDensity([1.5, 0.5])
        expected = 0.5 * (1.5 * math.log(1.5) + 0.5 * math.log(0.5))
        assert dn.integral_functional(d, lambda t: t * np.log(t)) == pytest.approx(expected, rel=1e-15)

    def test_spike_density(self):
        d = dn.spike_density(3, 0.5)
        assert d.values[0] == pytest.approx(0.5 + 4.0)
        assert dn.quad_functional(d) == pytest.approx(1 + 0.25 * 7)
