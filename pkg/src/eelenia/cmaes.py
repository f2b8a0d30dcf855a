"""Separable CMA-ES on the normalized [0, 1] genome box."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SepCmaState:
    """Search distribution state: mean, step size, diagonal covariance, paths."""

    mean: np.ndarray
    sigma: float
    variances: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int
    lam: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float


@dataclass
class OptimizationTrace:
    generations: list[int]
    gen_best: list[float]
    gen_mean: list[float]
    sigma: list[float]
    best_so_far: list[float]
    evaluations: int = 0

    def rows(self):
        """(generation, best_fitness, mean_fitness, sigma) rows for trace.csv."""
        return list(zip(self.generations, self.best_so_far, self.gen_mean, self.sigma))


@dataclass(frozen=True)
class OptimizeResult:
    best_theta: np.ndarray
    best_fitness: float
    trace: OptimizationTrace


def init_state(theta0: np.ndarray, sigma_init: float = 0.1, lam: int = 16) -> SepCmaState:
    """Start a separable CMA-ES run centered on theta0.

    Selection weights and learning rates follow the standard defaults, with
    the covariance rates scaled up by (d + 2) / 3 as usual for the
    diagonal-covariance variant.
    """
    if sigma_init <= 0:
        raise ValueError(f"sigma_init must be positive, got {sigma_init}")
    if lam < 4:
        raise ValueError(f"population size must be >= 4, got {lam}")
    theta0 = np.asarray(theta0, dtype=np.float64)
    d = theta0.size
    mu = lam // 2
    raw = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    weights = raw / raw.sum()
    mu_eff = 1.0 / float(np.sum(weights**2))

    c_sigma = (mu_eff + 2.0) / (d + mu_eff + 3.0)
    d_sigma = 1.0 + 2.0 * max(0.0, np.sqrt((mu_eff - 1.0) / (d + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d)
    boost = (d + 2.0) / 3.0
    c_1 = boost * 2.0 / ((d + 1.3) ** 2 + mu_eff)
    c_mu = min(
        1.0 - c_1, boost * 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0) ** 2 + mu_eff)
    )
    chi_n = np.sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d**2))

    return SepCmaState(
        mean=theta0.copy(),
        sigma=float(sigma_init),
        variances=np.ones(d),
        p_sigma=np.zeros(d),
        p_c=np.zeros(d),
        generation=0,
        lam=lam,
        weights=weights,
        mu_eff=mu_eff,
        c_sigma=c_sigma,
        d_sigma=d_sigma,
        c_c=c_c,
        c_1=c_1,
        c_mu=c_mu,
        chi_n=chi_n,
    )


def ask(state: SepCmaState, rng: int | np.random.Generator) -> np.ndarray:
    """Sample lam candidates, clipped to the [0, 1] box; rows are genomes."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    z = rng.standard_normal((state.lam, state.mean.size))
    x = state.mean + state.sigma * np.sqrt(state.variances) * z
    return np.clip(x, 0.0, 1.0)


def tell(state: SepCmaState, candidates: np.ndarray, fitnesses: np.ndarray) -> SepCmaState:
    """Rank-based distribution update; non-finite fitnesses rank worst."""
    candidates = np.asarray(candidates, dtype=np.float64)
    fitnesses = np.asarray(fitnesses, dtype=np.float64)
    if candidates.shape != (state.lam, state.mean.size) or fitnesses.shape != (state.lam,):
        raise ValueError(
            f"expected {state.lam} candidates of dim {state.mean.size} "
            f"with one fitness each, got {candidates.shape} / {fitnesses.shape}"
        )
    f = np.where(np.isfinite(fitnesses), fitnesses, np.inf)
    order = np.argsort(f, kind="stable")
    mu = state.weights.size
    selected = candidates[order[:mu]]

    y = (selected - state.mean) / state.sigma
    y_w = state.weights @ y
    z = y / np.sqrt(state.variances)
    z_w = state.weights @ z

    gen = state.generation + 1
    p_sigma = (1.0 - state.c_sigma) * state.p_sigma + np.sqrt(
        state.c_sigma * (2.0 - state.c_sigma) * state.mu_eff
    ) * z_w
    norm_ps = float(np.linalg.norm(p_sigma))
    unbias = np.sqrt(1.0 - (1.0 - state.c_sigma) ** (2 * gen))
    h_sigma = 1.0 if norm_ps / unbias < (1.4 + 2.0 / (state.mean.size + 1.0)) * state.chi_n else 0.0

    p_c = (1.0 - state.c_c) * state.p_c + h_sigma * np.sqrt(
        state.c_c * (2.0 - state.c_c) * state.mu_eff
    ) * y_w
    rank_mu = state.weights @ (y**2)
    stall = (1.0 - h_sigma) * state.c_c * (2.0 - state.c_c)
    variances = (
        (1.0 - state.c_1 - state.c_mu) * state.variances
        + state.c_1 * (p_c**2 + stall * state.variances)
        + state.c_mu * rank_mu
    )
    variances = np.maximum(variances, 1e-20)

    sigma = state.sigma * float(
        np.exp((state.c_sigma / state.d_sigma) * (norm_ps / state.chi_n - 1.0))
    )
    return replace(
        state,
        mean=state.mean + state.sigma * y_w,
        sigma=sigma,
        variances=variances,
        p_sigma=p_sigma,
        p_c=p_c,
        generation=gen,
    )


def optimize(
    objective,
    theta0: np.ndarray,
    steps: int,
    lam: int = 16,
    sigma_init: float = 0.1,
    rng_seed: int | np.random.Generator = 0,
    map_fn=None,
    on_generation=None,
) -> OptimizeResult:
    """Run ask/tell for `steps` generations, minimizing `objective`.

    A candidate whose evaluation raises or returns a non-finite value is
    assigned worst rank and the run continues. `on_generation(gen, best_theta,
    best_fitness)` fires after each generation (and once at generation 0 with
    the evaluated start point) so callers can snapshot progress.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    state = init_state(np.asarray(theta0, dtype=np.float64), sigma_init, lam)
    rng = np.random.default_rng(rng_seed)
    mapper = map_fn if map_fn is not None else map

    def eval_one(x: np.ndarray) -> float:
        try:
            value = float(objective(x))
        except Exception as err:  # noqa: BLE001 - candidate failure is non-fatal
            log.warning("objective failed for a candidate: %s", err)
            return np.inf
        return value if np.isfinite(value) else np.inf

    best_theta = np.clip(state.mean, 0.0, 1.0)
    best_fitness = eval_one(best_theta)
    trace = OptimizationTrace([], [], [], [], [], evaluations=1)
    if on_generation is not None:
        on_generation(0, best_theta, best_fitness)

    for gen in range(1, steps + 1):
        candidates = ask(state, rng)
        fitnesses = np.fromiter(mapper(eval_one, candidates), dtype=np.float64, count=lam)
        trace.evaluations += lam
        finite = np.isfinite(fitnesses)
        gen_best = float(fitnesses[finite].min()) if finite.any() else np.inf
        if gen_best < best_fitness:
            best_fitness = gen_best
            best_theta = candidates[int(np.nanargmin(np.where(finite, fitnesses, np.nan)))].copy()
        trace.generations.append(gen)
        trace.gen_best.append(gen_best)
        trace.gen_mean.append(float(fitnesses[finite].mean()) if finite.any() else np.inf)
        trace.sigma.append(state.sigma)
        trace.best_so_far.append(best_fitness)
        state = tell(state, candidates, fitnesses)
        if on_generation is not None:
            on_generation(gen, best_theta, best_fitness)
    return OptimizeResult(best_theta=best_theta, best_fitness=best_fitness, trace=trace)
