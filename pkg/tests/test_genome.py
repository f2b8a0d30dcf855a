import numpy as np
import pytest
from scipy import stats

from eelenia.genome import (
    DEFAULT_LAYOUT,
    Genome,
    GenomeLayout,
    decode,
    encode,
    mutate,
    sample_random,
)


def test_default_layout_dim_is_235():
    assert DEFAULT_LAYOUT.total_dim == 235
    lo, hi = DEFAULT_LAYOUT.bounds()
    assert lo.shape == (235,)
    assert np.all(lo < hi)
    assert np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))


def test_routing_layout_dim():
    layout = GenomeLayout(evolve_channel_routing=True)
    assert layout.total_dim == 18 * 15 + 1


def test_sample_bounds_and_determinism():
    a = sample_random(DEFAULT_LAYOUT, 7)
    b = sample_random(DEFAULT_LAYOUT, 7)
    assert a.values.shape == (235,)
    assert a.values.min() >= 0.0 and a.values.max() <= 1.0
    assert np.array_equal(a.values, b.values)
    c = sample_random(DEFAULT_LAYOUT, 8)
    assert not np.array_equal(a.values, c.values)


def test_sample_mean_law_of_large_numbers():
    rng = np.random.default_rng(123)
    sums = np.zeros(DEFAULT_LAYOUT.total_dim)
    n = 100_000
    block = 10_000
    for _ in range(n // block):
        sums += rng.random((block, DEFAULT_LAYOUT.total_dim)).sum(axis=0)
    means = sums / n
    assert np.all(np.abs(means - 0.5) < 0.01)


def test_mutate_validates_sigma():
    g = sample_random(DEFAULT_LAYOUT, 0)
    with pytest.raises(ValueError):
        mutate(g, 0.0, 0)
    with pytest.raises(ValueError):
        mutate(g, -0.1, 0)


def test_mutate_degenerate_noise():
    g = sample_random(DEFAULT_LAYOUT, 3)
    g2 = mutate(g, 1e-12, 0)
    assert np.max(np.abs(g2.values - g.values)) < 1e-9
    assert not np.shares_memory(g2.values, g.values)


def test_mutate_clips_at_bounds():
    g = Genome(np.ones(16))
    rng = np.random.default_rng(5)
    for _ in range(50):
        g2 = mutate(g, 2.0, rng)
        assert g2.values.max() <= 1.0
        assert g2.values.min() >= 0.0
    assert np.array_equal(g.values, np.ones(16))  # parent untouched


def test_mutate_noise_distribution():
    # per-component std over 1e5 mutations of an interior point, plus a KS
    # check that the deltas are N(0, sigma^2)
    sigma = 0.05
    g = Genome(np.full(8, 0.5))
    rng = np.random.default_rng(42)
    deltas = np.empty((100_000, 8))
    for i in range(deltas.shape[0]):
        deltas[i] = mutate(g, sigma, rng).values - g.values
    stds = deltas.std(axis=0)
    assert np.all(np.abs(stds - sigma) < 0.002)
    pvalue = stats.kstest(deltas[:, 0], "norm", args=(0.0, sigma)).pvalue
    assert pvalue > 0.01


def test_decode_affine_endpoints():
    lo, hi = DEFAULT_LAYOUT.bounds()
    params_lo = decode(Genome(np.zeros(235)), DEFAULT_LAYOUT)
    params_hi = decode(Genome(np.ones(235)), DEFAULT_LAYOUT)
    assert params_lo.kernels[0].radius_frac == pytest.approx(lo[0])
    assert params_hi.kernels[0].radius_frac == pytest.approx(hi[0])
    assert params_lo.flow_strength == pytest.approx(lo[-1])
    assert params_hi.flow_strength == pytest.approx(hi[-1])
    for kp, expect in ((params_lo, lo), (params_hi, hi)):
        k0 = kp.kernels[0]
        np.testing.assert_allclose(k0.ring_heights, expect[1:4])
        np.testing.assert_allclose(k0.ring_centers, expect[4:7])
        np.testing.assert_allclose(k0.ring_widths, expect[7:10])


def test_decode_monotone_per_slot():
    base = Genome(np.full(235, 0.3))
    ref = decode(base, DEFAULT_LAYOUT)
    for slot, getter in [
        (0, lambda p: p.kernels[0].radius_frac),
        (10, lambda p: p.kernels[0].growth_mean),
        (11, lambda p: p.kernels[0].growth_std),
        (12, lambda p: p.kernels[0].weight),
        (234, lambda p: p.flow_strength),
    ]:
        v = base.values.copy()
        v[slot] = 0.8
        assert getter(decode(Genome(v), DEFAULT_LAYOUT)) > getter(ref)


def test_encode_round_trip():
    for seed in range(5):
        g = sample_random(DEFAULT_LAYOUT, seed)
        g2 = encode(decode(g, DEFAULT_LAYOUT), DEFAULT_LAYOUT)
        assert np.max(np.abs(g2.values - g.values)) < 1e-12


def test_fixed_routing_covers_all_channel_pairs():
    seen = {DEFAULT_LAYOUT.routing(k) for k in range(DEFAULT_LAYOUT.kernel_count)}
    assert seen == {(s, t) for s in range(3) for t in range(3)}


def test_routing_layout_decodes_selectors():
    layout = GenomeLayout(evolve_channel_routing=True)
    g = Genome(np.zeros(layout.total_dim))
    params = decode(g, layout)
    assert all(kp.source == 0 and kp.target == 0 for kp in params.kernels)
    g = Genome(np.ones(layout.total_dim))
    params = decode(g, layout)
    assert all(kp.source == 2 and kp.target == 2 for kp in params.kernels)


def test_genome_rejects_out_of_bounds():
    with pytest.raises(ValueError):
        Genome(np.array([0.5, 1.2]))
    with pytest.raises(ValueError):
        Genome(np.array([-0.1, 0.5]))
