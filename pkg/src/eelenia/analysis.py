"""Diversity metrics, genealogy statistics, and exports over a finished archive."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archive import Archive

DEFAULT_PAIR_BUDGET = 200_000


class AnalysisError(RuntimeError):
    pass


def diversity(
    embeddings: np.ndarray,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    rng: int | np.random.Generator = 0,
) -> float:
    """Mean pairwise cosine distance; exact when the pair count fits the budget,
    otherwise an unbiased estimate from `pair_budget` sampled pairs."""
    n = len(embeddings)
    if n < 2:
        raise AnalysisError("diversity needs at least 2 embeddings")
    pairs = n * (n - 1) // 2
    if pairs <= pair_budget:
        gram = embeddings @ embeddings.T
        iu = np.triu_indices(n, k=1)
        return float(np.mean(1.0 - gram[iu]))
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    i = rng.integers(0, n, size=pair_budget)
    j = rng.integers(0, n - 1, size=pair_budget)
    j = np.where(j >= i, j + 1, j)  # uniform over ordered pairs with i != j
    dots = np.einsum("ij,ij->i", embeddings[i], embeddings[j])
    return float(np.mean(1.0 - dots))


def _parents(archive: Archive) -> np.ndarray:
    parents = np.full(len(archive), -1, dtype=np.int64)
    for r in archive.records:
        if r.parent_id is not None:
            if r.parent_id >= r.id:
                raise AnalysisError(f"record {r.id}: parent {r.parent_id} not earlier (cycle?)")
            parents[r.id] = r.parent_id
    return parents


def descendant_counts(archive: Archive) -> np.ndarray:
    """Strict descendant count per record via one bottom-up pass."""
    parents = _parents(archive)
    sizes = np.ones(len(archive), dtype=np.int64)
    for i in range(len(archive) - 1, -1, -1):
        if parents[i] >= 0:
            sizes[parents[i]] += sizes[i]
    return sizes - 1


def progeny_fraction(archive: Archive, origin_filter, include_self: bool = False) -> float:
    """Fraction of records descending (strictly, via parent links) from records
    matching `origin_filter`; `include_self` also counts the matches themselves."""
    n = len(archive)
    if n == 0:
        raise AnalysisError("progeny_fraction over empty archive")
    parents = _parents(archive)
    matched = np.fromiter((bool(origin_filter(r)) for r in archive.records), bool, count=n)
    tainted = np.zeros(n, dtype=bool)
    for i in range(n):
        p = parents[i]
        if p >= 0 and (matched[p] or tainted[p]):
            tainted[i] = True
    counted = (tainted | matched) if include_self else (tainted & ~matched)
    return float(np.count_nonzero(counted)) / n


def expedition_schedule(n: int, s: int, k: int) -> list[int]:
    """Iterations on which expeditions run: i in (s, n] with i % k == 0."""
    first = ((s // k) + 1) * k
    return list(range(first, n + 1, k))


def null_model_progeny(
    n: int,
    s: int,
    k: int,
    trials: int,
    rng: int | np.random.Generator = 0,
    expedition_count: int | None = None,
) -> tuple[float, float]:
    """Expected expedition-progeny share under uniform parent selection.

    Simulates a lineage where every post-seed node picks a uniform random
    existing parent, with expedition nodes pinned at the schedule positions.
    Counts each expedition node together with its descendants (the share of
    the archive that exists because expeditions happened), so a solution and
    its subtree move together. Returns (mean, std) over trials.
    """
    if trials < 1:
        raise AnalysisError("trials must be >= 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    schedule = expedition_schedule(n, s, k)
    if expedition_count is not None:
        schedule = schedule[:expedition_count]
    is_exp = np.zeros(n + 1, dtype=bool)
    for it in schedule:
        is_exp[it] = True
    fractions = np.empty(trials)
    for t in range(trials):
        u = rng.random(n + 1)
        tainted = np.zeros(n + 1, dtype=bool)
        count = 0
        for i in range(s + 1, n + 1):
            if is_exp[i]:
                tainted[i] = True
            else:
                parent = int(u[i] * (i - 1)) + 1  # uniform over nodes 1..i-1
                tainted[i] = tainted[parent]
            count += tainted[i]
        fractions[t] = count / n
    return float(fractions.mean()), float(fractions.std())


def window_comparison(archive: Archive, window: int = 10) -> float | None:
    """Mean individual progeny fraction of non-expedition records born within
    +/- `window` iterations of any expedition; None when no such records exist."""
    exp_iters = sorted({r.iteration for r in archive.records if r.origin == "expedition"})
    if not exp_iters:
        raise AnalysisError("window_comparison needs at least one expedition record")
    exp_arr = np.asarray(exp_iters)
    counts = descendant_counts(archive)
    n = len(archive)
    members = []
    for r in archive.records:
        if r.origin == "expedition":
            continue
        pos = np.searchsorted(exp_arr, r.iteration)
        near = (pos < len(exp_arr) and exp_arr[pos] - r.iteration <= window) or (
            pos > 0 and r.iteration - exp_arr[pos - 1] <= window
        )
        if near:
            members.append(counts[r.id] / n)
    if not members:
        return None
    return float(np.mean(members))


@dataclass
class GenealogyStats:
    origin_counts: dict[str, int]
    expedition_progeny_fraction: float  # strict descendants only
    expedition_influence_fraction: float  # expedition records plus descendants
    window_mean_progeny: float | None
    window: int
    max_descendants: int
    descendant_counts: list[int]
    null_expectation_mean: float | None = None  # uniform-selection reference
    null_expectation_std: float | None = None


def genealogy_stats(
    archive: Archive,
    window: int = 10,
    null_schedule: tuple[int, int, int] | None = None,
    null_trials: int = 200,
    rng_seed: int = 0,
) -> GenealogyStats:
    """Genealogical summary; `null_schedule=(N, S, K)` adds the uniform-selection
    expectation for the same expedition schedule."""
    counts = descendant_counts(archive)
    origins: dict[str, int] = {}
    for r in archive.records:
        origins[r.origin] = origins.get(r.origin, 0) + 1
    is_exp = lambda r: r.origin == "expedition"  # noqa: E731
    has_expeditions = origins.get("expedition", 0) > 0
    null_mean = null_std = None
    if null_schedule is not None and has_expeditions:
        null_mean, null_std = null_model_progeny(
            *null_schedule, trials=null_trials, rng=rng_seed,
            expedition_count=origins["expedition"],
        )
    return GenealogyStats(
        origin_counts=origins,
        expedition_progeny_fraction=progeny_fraction(archive, is_exp),
        expedition_influence_fraction=progeny_fraction(archive, is_exp, include_self=True),
        window_mean_progeny=window_comparison(archive, window) if has_expeditions else None,
        window=window,
        max_descendants=int(counts.max()) if len(archive) else 0,
        descendant_counts=[int(c) for c in counts],
        null_expectation_mean=null_mean,
        null_expectation_std=null_std,
    )


def diversity_curve(
    archive: Archive,
    checkpoint_every: int = 500,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    rng_seed: int = 0,
) -> list[tuple[int, float]]:
    """(archive size, diversity) at each checkpoint plus the final size."""
    n = len(archive)
    sizes = list(range(checkpoint_every, n, checkpoint_every)) + ([n] if n >= 2 else [])
    curve = []
    for size in sizes:
        if size < 2:
            continue
        value = diversity(archive.embeddings[:size], pair_budget, np.random.default_rng(rng_seed))
        curve.append((size, value))
    return curve


def export_embeddings(archive: Archive, path: str | Path) -> Path:
    """CSV of id, iteration, origin, parent_id plus the embedding columns."""
    if len(archive) == 0:
        raise AnalysisError("cannot export an empty archive")
    path = Path(path)
    dim = archive.dim
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "iteration", "origin", "parent_id"] + [f"e{i}" for i in range(dim)]
        )
        for r in archive.records:
            writer.writerow(
                [r.id, r.iteration, r.origin, "" if r.parent_id is None else r.parent_id]
                + [repr(float(v)) for v in r.embedding]
            )
    return path
