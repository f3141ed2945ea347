import itertools
import logging
import math
import unittest
from sys import stderr
from typing import Callable, override

import numpy as np
from numpy.testing import assert_array_equal
from scipy.integrate import quad
from scipy.stats import ks_2samp, kstest

from bohm_pair_slit.exceptions import ConditioningStarved, ConfigError
from bohm_pair_slit.sampling import (
    CHUNK_SIZE,
    Conditioning,
    ConditioningKind,
    InitialSampler,
    SamplerConfig,
    draw_initial_pairs,
    sample_initial_positions,
)
from bohm_pair_slit.wavefunction import FloatArray, PhysicalParams, one_particle_density


def com_window(target_mean: float, **changes: bool) -> Conditioning:
    return Conditioning(
        kind=ConditioningKind.COM_OFFSET, target_mean=target_mean, window_width=0.2, **changes
    )


def quadrature_cdf(params: PhysicalParams) -> Callable[[FloatArray], FloatArray]:
    """CDF of the t = 0 one-particle density by adaptive quadrature, piecewise linear."""
    edges = np.linspace(-12.0, 12.0, 601)

    def density(y: float) -> float:
        return float(one_particle_density(params, y, 0.0))

    below, _ = quad(density, -np.inf, float(edges[0]))
    pieces = [quad(density, float(lo), float(hi))[0] for lo, hi in itertools.pairwise(edges)]
    levels = below + np.concatenate(([0.0], np.cumsum(pieces)))

    def cdf(y: FloatArray) -> FloatArray:
        return np.interp(y, edges, levels, left=0.0, right=1.0)

    return cdf


class TestSampling(unittest.TestCase):
    @classmethod
    @override
    def setUpClass(cls):
        logging.basicConfig(
            format="%(levelname)s: %(message)s", style="%", stream=stderr, level="INFO"
        )

    @override
    def setUp(self):
        self.params: PhysicalParams = PhysicalParams(sigma0=1.0, slit_offset=0.1, kx=10.0)

    def test_invalid_sampler_config(self):
        with self.assertRaises(ConfigError) as cm:
            _ = SamplerConfig(n_pairs=0, seed=1)
        self.assertEqual(cm.exception.path, "n_pairs")
        with self.assertRaises(ConfigError) as cm:
            _ = SamplerConfig(n_pairs=10, seed=-1)
        self.assertEqual(cm.exception.path, "seed")
        with self.assertRaises(ConfigError) as cm:
            _ = Conditioning(kind=ConditioningKind.COM_OFFSET, target_mean=1.0)
        self.assertEqual(cm.exception.path, "conditioning.window_width")

    def test_chunks(self):
        config = SamplerConfig(n_pairs=2 * CHUNK_SIZE + 5, seed=1)
        self.assertEqual(config.n_chunks, 3)
        self.assertEqual(config.chunk_bounds(2), (2 * CHUNK_SIZE, 2 * CHUNK_SIZE + 5))

    def test_unconditioned_moments(self):
        n = 10_000
        pairs = draw_initial_pairs(self.params, SamplerConfig(n_pairs=n, seed=5))
        self.assertEqual(len(pairs.y1), n)
        self.assertEqual(pairs.conditioning_probability, 1.0)
        self.assertEqual(pairs.acceptance_rate, 1.0)
        std = math.sqrt(1 + self.params.slit_offset**2)
        for values in (pairs.y1, pairs.y2):
            self.assertLess(abs(float(values.mean())), 4 * std / math.sqrt(n))

    def test_unconditioned_distribution(self):
        reference_cdf = quadrature_cdf(self.params)
        sampler = InitialSampler(self.params, SamplerConfig(n_pairs=10_000, seed=6))
        pairs = sampler.draw_all()
        for values in (pairs.y1, pairs.y2):
            result = kstest(values, reference_cdf)
            self.assertGreater(result.pvalue, 1e-3)
        states = sample_initial_positions(self.params, SamplerConfig(n_pairs=3, seed=6))
        self.assertEqual([state.t for state in states], [0.0, 0.0, 0.0])
        self.assertEqual(states[0].y1, float(pairs.y1[0]))

    def test_opposite_slits(self):
        conditioning = Conditioning(kind=ConditioningKind.OPPOSITE_SLITS)
        pairs = draw_initial_pairs(
            self.params, SamplerConfig(n_pairs=5000, seed=2, conditioning=conditioning)
        )
        self.assertEqual(len(pairs.y1), 5000)
        self.assertTrue(np.all(pairs.y1 * pairs.y2 < 0))
        self.assertAlmostEqual(pairs.conditioning_probability, 0.5, delta=1e-6)
        standard_error = math.sqrt(0.25 / (5000 / 0.5))
        self.assertAlmostEqual(pairs.acceptance_rate, 0.5, delta=5 * standard_error)

    def test_com_window_direct_matches_rejection(self):
        direct_sampler = InitialSampler(
            self.params, SamplerConfig(n_pairs=3000, seed=3, conditioning=com_window(0.5))
        )
        direct = direct_sampler.draw_all()
        filtered = draw_initial_pairs(
            self.params,
            SamplerConfig(n_pairs=3000, seed=4, conditioning=com_window(0.5, rejection=True)),
        )
        self.assertFalse(direct_sampler.uses_rejection)
        self.assertEqual(direct.acceptance_rate, 1.0)

        inside = com_window(0.5).accepts(direct.y1, direct.y2)
        self.assertGreaterEqual(float(inside.mean()), 0.999)
        self.assertTrue(np.all(filtered.y1 * filtered.y2 < 0))

        p = direct.conditioning_probability
        candidates = 3000 / filtered.acceptance_rate
        standard_error = math.sqrt(p * (1 - p) / candidates)
        self.assertAlmostEqual(filtered.acceptance_rate, p, delta=5 * standard_error)

        result = ks_2samp(direct.y1 + direct.y2, filtered.y1 + filtered.y2)
        self.assertGreater(result.pvalue, 1e-3)
        result = ks_2samp(direct.y1, filtered.y1)
        self.assertGreater(result.pvalue, 1e-3)

    def test_com_window_same_side(self):
        pairs = draw_initial_pairs(
            self.params,
            SamplerConfig(n_pairs=2000, seed=8, conditioning=com_window(1.0, opposite_sides=False)),
        )
        com = 0.5 * (pairs.y1 + pairs.y2)
        self.assertTrue(np.all(np.abs(com - 1.0) <= 0.1 + 1e-9))

    def test_negative_com_offset(self):
        pairs = draw_initial_pairs(
            self.params, SamplerConfig(n_pairs=2000, seed=9, conditioning=com_window(-1.5))
        )
        com = 0.5 * (pairs.y1 + pairs.y2)
        self.assertTrue(np.all(np.abs(com + 1.5) <= 0.1 + 1e-9))
        self.assertTrue(np.all(pairs.y1 * pairs.y2 <= 0))

    def test_conditioning_starved(self):
        with self.assertRaises(ConditioningStarved):
            _ = InitialSampler(
                self.params, SamplerConfig(n_pairs=10, seed=1, conditioning=com_window(60.0))
            )
        conditioning = Conditioning(
            kind=ConditioningKind.COM_OFFSET, target_mean=5.0, window_width=0.01, rejection=True
        )
        sampler = InitialSampler(
            self.params, SamplerConfig(n_pairs=10, seed=1, conditioning=conditioning)
        )
        with self.assertRaises(ConditioningStarved):
            _ = sampler.draw_all()

    def test_far_com_offsets(self):
        for target in (10.0, 15.0):
            conditioning = com_window(target)
            pairs = InitialSampler(
                self.params, SamplerConfig(n_pairs=1000, seed=1, conditioning=conditioning)
            ).draw_all()
            self.assertEqual(len(pairs.y1), 1000)
            self.assertTrue(np.all(np.isfinite(pairs.y1)) and np.all(np.isfinite(pairs.y2)))
            com = 0.5 * (pairs.y1 + pairs.y2)
            self.assertTrue(np.all(np.abs(com - target) <= 0.1 + 1e-9), f"target {target}")
            self.assertTrue(np.all(pairs.y1 * pairs.y2 <= 0), f"target {target}")
            self.assertGreater(pairs.conditioning_probability, 0.0)
        # the partner would sit past the representable range of the density
        with self.assertRaises(ConditioningStarved):
            _ = InitialSampler(
                self.params, SamplerConfig(n_pairs=10, seed=1, conditioning=com_window(20.0))
            )

    def test_chunk_prefix_determinism(self):
        for conditioning in (Conditioning(), Conditioning(kind=ConditioningKind.OPPOSITE_SLITS)):
            short = draw_initial_pairs(
                self.params, SamplerConfig(n_pairs=5000, seed=42, conditioning=conditioning)
            )
            long = draw_initial_pairs(
                self.params, SamplerConfig(n_pairs=9000, seed=42, conditioning=conditioning)
            )
            assert_array_equal(long.y1[:5000], short.y1)
            assert_array_equal(long.y2[:5000], short.y2)

        first = draw_initial_pairs(self.params, SamplerConfig(n_pairs=1000, seed=42))
        again = draw_initial_pairs(self.params, SamplerConfig(n_pairs=100, seed=42))
        other = draw_initial_pairs(self.params, SamplerConfig(n_pairs=100, seed=43))
        assert_array_equal(again.y1, first.y1[:100])
        self.assertFalse(np.array_equal(again.y1, other.y1))
