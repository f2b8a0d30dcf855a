"""Mass-conserving Flow Lenia rollout from decoded parameters to a behavior image."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .genome import Genome, GenomeLayout, DEFAULT_LAYOUT, PhysicalParams, decode

log = logging.getLogger(__name__)

MIN_RING_WIDTH = 1e-3
FFT_WORKERS = 2


class NonFiniteStateError(RuntimeError):
    """A step produced NaN/inf mass; the rollout cannot continue."""


@dataclass(frozen=True)
class SimulatorConfig:
    height: int = 128
    width: int = 128
    channels: int = 3
    steps: int = 500
    dt: float = 0.2
    kernel_radius: float = 13.0
    flow_exponent: float = 2.0
    critical_mass: float = 2.0
    flow_clip: float | None = None  # defaults to kernel_radius - 1
    parcel_halfwidth: float = 0.5
    saturation: float = 2.0
    init_patch: int | None = None  # defaults to height * 40 // 128

    @property
    def max_displacement(self) -> float:
        return self.kernel_radius - 1.0 if self.flow_clip is None else self.flow_clip

    @property
    def patch_size(self) -> int:
        if self.init_patch is not None:
            return self.init_patch
        return max(2, self.height * 40 // 128)


DEFAULT_SIM = SimulatorConfig()


@dataclass
class GridState:
    mass: np.ndarray  # (H, W, C), nonnegative
    step_index: int = 0

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())


@dataclass(frozen=True)
class KernelBank:
    """Precomputed frequency-domain kernels plus per-kernel constants."""

    fk: np.ndarray  # (H, W//2+1, K) complex, rfft2 of unit-sum kernels
    spatial: np.ndarray  # (K, H, W) the spatial kernels, origin-centered
    source: np.ndarray  # (K,) int
    target: np.ndarray  # (K,) int
    weight: np.ndarray  # (K,)
    growth_mean: np.ndarray  # (K,)
    growth_std: np.ndarray  # (K,)
    target_matrix: np.ndarray  # (K, C), weight where kernel k feeds channel c


@dataclass(frozen=True)
class SimulationResult:
    image: np.ndarray  # (H, W, C) float in [0, 1]
    final: GridState
    truncated: bool
    steps_completed: int


def _torus_radius_grid(h: int, w: int) -> np.ndarray:
    dy = np.minimum(np.arange(h), h - np.arange(h)).astype(np.float64)
    dx = np.minimum(np.arange(w), w - np.arange(w)).astype(np.float64)
    return np.hypot(dy[:, None], dx[None, :])


_COORD_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _coords(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    if (h, w) not in _COORD_CACHE:
        yy, xx = np.meshgrid(
            np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
        )
        _COORD_CACHE[(h, w)] = (yy[:, :, None], xx[:, :, None])
    return _COORD_CACHE[(h, w)]


def build_kernels(params: PhysicalParams, config: SimulatorConfig = DEFAULT_SIM) -> KernelBank:
    """Ring-sum kernels, nonnegative and unit-sum, radius-limited to R cells."""
    h, w = config.height, config.width
    r_grid = _torus_radius_grid(h, w)
    spatial = np.zeros((len(params.kernels), h, w), dtype=np.float64)
    for i, kp in enumerate(params.kernels):
        radius = config.kernel_radius * kp.radius_frac
        d = r_grid / radius
        inside = d <= 1.0
        widths = kp.ring_widths.copy()
        if np.any(widths < MIN_RING_WIDTH):
            log.warning("kernel %d: ring width below %.0e floored", i, MIN_RING_WIDTH)
            widths = np.maximum(widths, MIN_RING_WIDTH)
        vals = np.zeros_like(d)
        di = d[inside]
        for b, a, wd in zip(kp.ring_heights, kp.ring_centers, widths):
            vals[inside] += b * np.exp(-0.5 * ((di - a) / wd) ** 2)
        total = vals.sum()
        if total <= 0.0:
            log.warning("kernel %d degenerate (zero ring mass), using uniform disc", i)
            vals = inside.astype(np.float64)
            total = vals.sum()
        spatial[i] = vals / total
    fk = np.ascontiguousarray(np.moveaxis(sfft.rfft2(spatial, axes=(1, 2)), 0, -1))
    target = np.array([kp.target for kp in params.kernels])
    weight = np.array([kp.weight for kp in params.kernels])
    target_matrix = np.zeros((len(params.kernels), params.channels))
    target_matrix[np.arange(len(params.kernels)), target] = weight
    return KernelBank(
        fk=fk,
        spatial=spatial,
        source=np.array([kp.source for kp in params.kernels]),
        target=target,
        weight=weight,
        growth_mean=np.array([kp.growth_mean for kp in params.kernels]),
        growth_std=np.array([kp.growth_std for kp in params.kernels]),
        target_matrix=target_matrix,
    )


def _gradient(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences on the torus along the two leading axes."""
    gy = (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) * 0.5
    gx = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) * 0.5
    return gy, gx


def _axis_offsets(mu: np.ndarray, halfwidth: float, size: int):
    """Cells floor(mu), floor(mu)+1 and the overlap weight of the lower cell."""
    base = np.floor(mu)
    frac = mu - base
    if halfwidth == 0.5:
        w0 = 1.0 - frac
    else:
        w0 = np.clip((0.5 + halfwidth - frac) / (2.0 * halfwidth), 0.0, 1.0)
    with np.errstate(invalid="ignore"):  # NaN flow is caught after advection
        i0 = base.astype(np.int64) % size
    i1 = i0 + 1
    i1[i1 == size] = 0
    return i0, i1, w0


def _advect(mass: np.ndarray, dy: np.ndarray, dx: np.ndarray, halfwidth: float) -> np.ndarray:
    """Move each cell's mass as a square parcel to its displaced position.

    Parcels of side 2*halfwidth (<= 1 cell) overlap at most two cells per
    axis; mass splits by overlap area, which conserves it exactly.
    """
    h, w, c = mass.shape
    yy, xx = _coords(h, w)
    iy0, iy1, wy0 = _axis_offsets(yy + dy, halfwidth, h)
    ix0, ix1, wx0 = _axis_offsets(xx + dx, halfwidth, w)
    ch = np.arange(c, dtype=np.int64)[None, None, :]
    py0 = iy0 * (w * c) + ch
    py1 = iy1 * (w * c) + ch
    px0 = ix0 * c
    px1 = ix1 * c
    wx1 = 1.0 - wx0
    m0 = mass * wy0
    m1 = mass - m0
    n = mass.size
    idx = np.empty(4 * n, dtype=np.int64)
    wts = np.empty(4 * n, dtype=np.float64)
    for i, (py, px, m) in enumerate(
        [(py0, px0, m0 * wx0), (py0, px1, m0 * wx1), (py1, px0, m1 * wx0), (py1, px1, m1 * wx1)]
    ):
        np.add(py, px, out=idx[i * n : (i + 1) * n].reshape(mass.shape))
        wts[i * n : (i + 1) * n] = m.ravel()
    return np.bincount(idx, weights=wts, minlength=h * w * c).reshape(h, w, c)


def convolve(mass: np.ndarray, kernels: KernelBank) -> np.ndarray:
    """Circular convolution of each kernel with its source channel -> (H, W, K)."""
    h, w = mass.shape[:2]
    fa = sfft.rfft2(mass, axes=(0, 1), workers=FFT_WORKERS)
    return sfft.irfft2(
        kernels.fk * fa[:, :, kernels.source], s=(h, w), axes=(0, 1), workers=FFT_WORKERS
    )


def step(
    state: GridState,
    kernels: KernelBank,
    params: PhysicalParams,
    config: SimulatorConfig = DEFAULT_SIM,
) -> GridState:
    """One Flow Lenia update: growth affinity -> flow field -> advection."""
    a = state.mass
    h, w, c = a.shape

    u = convolve(a, kernels)
    u -= kernels.growth_mean
    u *= u
    u *= -0.5 / kernels.growth_std**2
    growth = np.exp(u, out=u)
    growth *= 2.0
    growth -= 1.0
    affinity = growth.reshape(-1, kernels.fk.shape[2]) @ kernels.target_matrix
    affinity = affinity.reshape(h, w, c)

    total = a.sum(axis=2)
    rel = total / config.critical_mass
    if config.flow_exponent == 2.0:
        rel = np.square(rel)
    else:
        rel = rel**config.flow_exponent
    conc = np.clip(rel, 0.0, 1.0)[:, :, None]
    gy_t, gx_t = _gradient(total)
    gy_u, gx_u = _gradient(affinity)

    limit = config.max_displacement
    scale = config.dt * params.flow_strength
    dy = np.clip(scale * ((1.0 - conc) * gy_u - conc * gy_t[:, :, None]), -limit, limit)
    dx = np.clip(scale * ((1.0 - conc) * gx_u - conc * gx_t[:, :, None]), -limit, limit)

    new_mass = _advect(a, dy, dx, config.parcel_halfwidth)
    if not np.all(np.isfinite(new_mass)):
        raise NonFiniteStateError(f"non-finite mass at step {state.step_index + 1}")
    return GridState(mass=new_mass, step_index=state.step_index + 1)


def initial_state(config: SimulatorConfig, init_seed: int) -> GridState:
    """Centered square patch of uniform-random mass per channel."""
    rng = np.random.default_rng(init_seed)
    mass = np.zeros((config.height, config.width, config.channels), dtype=np.float64)
    p = config.patch_size
    y0 = (config.height - p) // 2
    x0 = (config.width - p) // 2
    mass[y0 : y0 + p, x0 : x0 + p, :] = rng.random((p, p, config.channels))
    return GridState(mass=mass, step_index=0)


def render(state: GridState, config: SimulatorConfig = DEFAULT_SIM) -> np.ndarray:
    """Map mass to [0, 1] pixels by a fixed saturation constant."""
    return np.clip(state.mass / config.saturation, 0.0, 1.0)


def image_to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(image * 255.0).astype(np.uint8)


RAW_STATE_MAGIC = b"FLST"


def save_raw_state(state: GridState, path) -> None:
    """Dump the mass field as float32 little-endian with a 16-byte header."""
    h, w, c = state.mass.shape
    header = RAW_STATE_MAGIC + np.array([h, w, c], dtype="<u4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(state.mass.astype("<f4").tobytes())


def load_raw_state(path) -> GridState:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if header[:4] != RAW_STATE_MAGIC or len(header) != 16:
            raise ValueError(f"{path}: not a raw state dump")
        h, w, c = np.frombuffer(header[4:], dtype="<u4")
        mass = np.frombuffer(fh.read(), dtype="<f4").astype(np.float64)
    if mass.size != h * w * c:
        raise ValueError(f"{path}: truncated raw state dump")
    return GridState(mass=mass.reshape(int(h), int(w), int(c)))


def simulate(
    theta: Genome,
    layout: GenomeLayout = DEFAULT_LAYOUT,
    init_seed: int = 0,
    config: SimulatorConfig = DEFAULT_SIM,
) -> SimulationResult:
    """Deterministic rollout of `config.steps` updates from the seeded start.

    A rollout that produces non-finite values is truncated; the behavior is
    the last finite state, flagged via `truncated`.
    """
    params = decode(theta, layout)
    bank = build_kernels(params, config)
    state = initial_state(config, init_seed)
    truncated = False
    for _ in range(config.steps):
        try:
            state = step(state, bank, params, config)
        except NonFiniteStateError as err:
            log.warning("rollout truncated: %s", err)
            truncated = True
            break
    return SimulationResult(
        image=render(state, config),
        final=state,
        truncated=truncated,
        steps_completed=state.step_index,
    )
