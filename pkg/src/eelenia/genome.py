"""Flow Lenia parameter vector: layout, bounds, sampling, mutation, decoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Physical ranges for the affine decode, one (lo, hi) pair per slot kind.
# Kernel/growth ranges follow the usual Flow Lenia parameterization.
RADIUS_RANGE = (0.2, 1.0)
RING_HEIGHT_RANGE = (0.001, 1.0)
RING_CENTER_RANGE = (0.0, 1.0)
RING_WIDTH_RANGE = (0.01, 0.5)
GROWTH_MEAN_RANGE = (0.05, 0.5)
GROWTH_STD_RANGE = (0.001, 0.18)
WEIGHT_RANGE = (0.01, 1.0)
FLOW_STRENGTH_RANGE = (0.2, 2.0)

DEFAULT_SIGMA_MUT = 0.05


def _as_rng(rng: int | np.random.Generator) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass(frozen=True)
class GenomeLayout:
    """Slot layout of the flat parameter vector.

    Per kernel: radius, ring heights, ring centers, ring widths, growth mean,
    growth std, weight; optionally two channel-selector slots when routing is
    evolved. One trailing global slot scales the flow field. The default
    18 kernels x (1 + 3*3 + 3) slots + 1 global = 235.
    """

    kernel_count: int = 18
    rings_per_kernel: int = 3
    channels: int = 3
    evolve_channel_routing: bool = False

    @property
    def slots_per_kernel(self) -> int:
        n = 1 + 3 * self.rings_per_kernel + 3
        if self.evolve_channel_routing:
            n += 2
        return n

    @property
    def global_slots(self) -> int:
        return 1

    @property
    def total_dim(self) -> int:
        return self.kernel_count * self.slots_per_kernel + self.global_slots

    def kernel_base(self, k: int) -> int:
        return k * self.slots_per_kernel

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-slot physical (lower, upper) bound arrays of length total_dim."""
        b = self.rings_per_kernel
        per_kernel = (
            [RADIUS_RANGE]
            + [RING_HEIGHT_RANGE] * b
            + [RING_CENTER_RANGE] * b
            + [RING_WIDTH_RANGE] * b
            + [GROWTH_MEAN_RANGE, GROWTH_STD_RANGE, WEIGHT_RANGE]
        )
        if self.evolve_channel_routing:
            per_kernel += [(0.0, float(self.channels))] * 2
        pairs = per_kernel * self.kernel_count + [FLOW_STRENGTH_RANGE]
        arr = np.asarray(pairs, dtype=np.float64)
        lo, hi = arr[:, 0].copy(), arr[:, 1].copy()
        if not np.all(lo < hi):
            raise ValueError("every slot needs a finite lower < upper bound")
        return lo, hi

    def routing(self, k: int) -> tuple[int, int]:
        """Fixed (source, target) channels for kernel k, round-robin over pairs."""
        pair = k % (self.channels * self.channels)
        return pair // self.channels, pair % self.channels


DEFAULT_LAYOUT = GenomeLayout()


@dataclass(frozen=True)
class Genome:
    """Flat parameter vector in normalized [0, 1] coordinates."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("genome values must be a flat vector")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("genome components must lie in [0, 1]")


@dataclass(frozen=True)
class KernelParams:
    """Decoded parameters of one kernel in physical units."""

    radius_frac: float
    ring_heights: np.ndarray
    ring_centers: np.ndarray
    ring_widths: np.ndarray
    growth_mean: float
    growth_std: float
    weight: float
    source: int
    target: int


@dataclass(frozen=True)
class PhysicalParams:
    kernels: tuple[KernelParams, ...]
    flow_strength: float
    channels: int


def sample_random(layout: GenomeLayout, rng: int | np.random.Generator) -> Genome:
    """Uniform sample of the normalized parameter space."""
    r = _as_rng(rng)
    return Genome(r.random(layout.total_dim))


def mutate(g: Genome, sigma_mut: float, rng: int | np.random.Generator) -> Genome:
    """Additive Gaussian noise in normalized coordinates, clipped to [0, 1]."""
    if sigma_mut <= 0:
        raise ValueError(f"sigma_mut must be positive, got {sigma_mut}")
    r = _as_rng(rng)
    noisy = g.values + r.normal(0.0, sigma_mut, size=g.values.shape)
    return Genome(np.clip(noisy, 0.0, 1.0))


def decode(g: Genome, layout: GenomeLayout = DEFAULT_LAYOUT) -> PhysicalParams:
    """Affine map from normalized coordinates to physical kernel/growth values."""
    if g.values.size != layout.total_dim:
        raise ValueError(
            f"genome length {g.values.size} does not match layout dim {layout.total_dim}"
        )
    lo, hi = layout.bounds()
    phys = lo + g.values * (hi - lo)
    b = layout.rings_per_kernel
    kernels = []
    for k in range(layout.kernel_count):
        o = layout.kernel_base(k)
        if layout.evolve_channel_routing:
            src = min(int(phys[o + 3 * b + 4]), layout.channels - 1)
            tgt = min(int(phys[o + 3 * b + 5]), layout.channels - 1)
        else:
            src, tgt = layout.routing(k)
        kernels.append(
            KernelParams(
                radius_frac=phys[o],
                ring_heights=phys[o + 1 : o + 1 + b].copy(),
                ring_centers=phys[o + 1 + b : o + 1 + 2 * b].copy(),
                ring_widths=phys[o + 1 + 2 * b : o + 1 + 3 * b].copy(),
                growth_mean=phys[o + 1 + 3 * b],
                growth_std=phys[o + 2 + 3 * b],
                weight=phys[o + 3 + 3 * b],
                source=src,
                target=tgt,
            )
        )
    return PhysicalParams(
        kernels=tuple(kernels), flow_strength=phys[-1], channels=layout.channels
    )


def encode(params: PhysicalParams, layout: GenomeLayout = DEFAULT_LAYOUT) -> Genome:
    """Inverse of decode. Channel selectors (when evolved) map to bin centers."""
    if len(params.kernels) != layout.kernel_count:
        raise ValueError("kernel count does not match layout")
    b = layout.rings_per_kernel
    phys = np.empty(layout.total_dim, dtype=np.float64)
    for k, kp in enumerate(params.kernels):
        o = layout.kernel_base(k)
        phys[o] = kp.radius_frac
        phys[o + 1 : o + 1 + b] = kp.ring_heights
        phys[o + 1 + b : o + 1 + 2 * b] = kp.ring_centers
        phys[o + 1 + 2 * b : o + 1 + 3 * b] = kp.ring_widths
        phys[o + 1 + 3 * b] = kp.growth_mean
        phys[o + 2 + 3 * b] = kp.growth_std
        phys[o + 3 + 3 * b] = kp.weight
        if layout.evolve_channel_routing:
            phys[o + 3 * b + 4] = kp.source + 0.5
            phys[o + 3 * b + 5] = kp.target + 0.5
    phys[-1] = params.flow_strength
    lo, hi = layout.bounds()
    return Genome(np.clip((phys - lo) / (hi - lo), 0.0, 1.0))
