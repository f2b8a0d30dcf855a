import numpy as np
import pytest
from scipy import stats

from eelenia.archive import (
    Archive,
    ArchiveLoadError,
    ArchiveQueryError,
    SolutionRecord,
    novelty_biased_choice,
    novelty_weights,
)
from eelenia.embedding import Embedding

BACKEND = "test-backend"


def _emb(vec) -> Embedding:
    v = np.asarray(vec, dtype=np.float64)
    return Embedding(vector=v / np.linalg.norm(v), backend_id=BACKEND)


def _random_archive(n: int, dim: int = 16, seed: int = 0, k: int = 10) -> Archive:
    rng = np.random.default_rng(seed)
    archive = Archive(backend_id=BACKEND, dim=dim, k=k)
    for i in range(n):
        archive.insert(
            theta=rng.random(4),
            embedding=_emb(rng.standard_normal(dim)),
            origin="seed",
            iteration=i,
        )
    return archive


def _brute_novelty(embs: np.ndarray, e: np.ndarray, k: int, exclude: int | None = None) -> float:
    dists = [1.0 - float(np.dot(row, e)) for i, row in enumerate(embs) if i != exclude]
    dists.sort()
    take = dists[: min(k, len(dists))]
    return sum(take) / len(take)


# -- record validation --------------------------------------------------------


def test_record_validation():
    with pytest.raises(ValueError):
        SolutionRecord(0, np.zeros(2), np.zeros(2), "", None, "weird", 0)
    with pytest.raises(ValueError):
        SolutionRecord(1, np.zeros(2), np.zeros(2), "", 1, "expansion", 0)
    with pytest.raises(ValueError):
        SolutionRecord(1, np.zeros(2), np.zeros(2), "", 0, "expedition", 0, goal_id=None)
    with pytest.raises(ValueError):
        SolutionRecord(1, np.zeros(2), np.zeros(2), "", 0, "expansion", 0, goal_id=3)


def test_insert_ids_dense_and_backend_checked():
    archive = Archive(backend_id=BACKEND, dim=4)
    for i in range(5):
        assert archive.insert(np.zeros(2), _emb(np.ones(4) + i)) == i
    other = Embedding(vector=np.ones(4) / 2.0, backend_id="other")
    with pytest.raises(ValueError):
        archive.insert(np.zeros(2), other)


# -- novelty ------------------------------------------------------------------


def test_novelty_identical_embeddings_is_zero():
    archive = Archive(backend_id=BACKEND, dim=4)
    e = _emb([1, 2, 3, 4])
    for _ in range(5):
        archive.insert(np.zeros(2), e)
    assert archive.novelty(e, k=10) == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(archive.novelty_scores(), 0.0, atol=1e-12)


def test_novelty_single_orthogonal_neighbor():
    archive = Archive(backend_id=BACKEND, dim=4)
    archive.insert(np.zeros(2), _emb([1, 0, 0, 0]))
    q = _emb([0, 1, 0, 0])
    assert archive.novelty(q, k=10) == pytest.approx(1.0)


def test_novelty_empty_archive_raises():
    archive = Archive(backend_id=BACKEND, dim=4)
    with pytest.raises(ArchiveQueryError):
        archive.novelty(_emb(np.ones(4)))
    with pytest.raises(ArchiveQueryError):
        archive.nearest_to(_emb(np.ones(4)))
    with pytest.raises(ArchiveQueryError):
        archive.sample_high_novelty(1, 1.0, 0)


def test_novelty_matches_brute_force_oracle():
    archive = _random_archive(500, dim=16, seed=1)
    rng = np.random.default_rng(2)
    for _ in range(50):
        q = _emb(rng.standard_normal(16))
        got = archive.novelty(q, k=10)
        want = _brute_novelty(archive.embeddings, q.vector, k=10)
        assert abs(got - want) < 1e-9


def test_tracked_novelty_scores_match_brute_force():
    archive = _random_archive(300, dim=8, seed=3, k=10)
    scores = archive.novelty_scores()
    for i in range(0, 300, 17):
        want = _brute_novelty(archive.embeddings, archive.embeddings[i], k=10, exclude=i)
        assert abs(scores[i] - want) < 1e-9


def test_novelty_k_larger_than_archive_uses_all():
    archive = _random_archive(4, dim=8, seed=4)
    q = _emb(np.ones(8))
    want = _brute_novelty(archive.embeddings, q.vector, k=99)
    assert archive.novelty(q, k=99) == pytest.approx(want)


def test_duplicate_insert_does_not_increase_novelty():
    archive = _random_archive(50, dim=8, seed=5)
    before = archive.novelty_scores().copy()
    dup = Embedding(vector=archive.embeddings[7].copy(), backend_id=BACKEND)
    archive.insert(np.zeros(2), dup)
    after = archive.novelty_scores()
    assert after[7] <= before[7] + 1e-12


def test_post_insert_novelty_sees_new_record():
    archive = Archive(backend_id=BACKEND, dim=4)
    archive.insert(np.zeros(2), _emb([1, 0, 0, 0]))
    q = _emb([0, 1, 0, 0])
    assert archive.novelty(q) == pytest.approx(1.0)
    archive.insert(np.zeros(2), q)
    assert archive.novelty(q) == pytest.approx(0.5)  # itself now among neighbors


# -- nearest neighbor ---------------------------------------------------------


def test_nearest_single_record_and_exact_hit():
    archive = Archive(backend_id=BACKEND, dim=4)
    e = _emb([1, 1, 0, 0])
    archive.insert(np.zeros(2), e)
    assert archive.nearest_to(_emb([0, 0, 1, 1])).id == 0
    f = _emb([0, 1, 2, 3])
    archive.insert(np.zeros(2), f)
    hit = archive.nearest_to(f)
    assert hit.id == 1
    assert 1.0 - float(np.dot(hit.embedding, f.vector)) == pytest.approx(0.0, abs=1e-12)


def test_nearest_matches_brute_force():
    archive = _random_archive(1000, dim=16, seed=6)
    rng = np.random.default_rng(7)
    for _ in range(100):
        q = _emb(rng.standard_normal(16))
        dists = 1.0 - archive.embeddings @ q.vector
        assert archive.nearest_to(q).id == int(np.argmin(dists))


def test_nearest_tie_breaks_to_lowest_id():
    archive = Archive(backend_id=BACKEND, dim=4)
    e = _emb([1, 0, 0, 0])
    archive.insert(np.zeros(2), e)
    archive.insert(np.zeros(2), e)
    assert archive.nearest_to(e).id == 0


# -- sampling -----------------------------------------------------------------


def test_novelty_weights_uniform_when_alpha_zero_or_degenerate():
    w = novelty_weights(np.array([0.1, 0.2, 0.3]), 0.0)
    np.testing.assert_allclose(w, 1.0 / 3.0)
    w = novelty_weights(np.zeros(4), 4.0)
    np.testing.assert_allclose(w, 0.25)
    with pytest.raises(ValueError):
        novelty_weights(np.ones(2), -1.0)


def test_alpha4_selection_ratio_one_to_sixteen():
    rng = np.random.default_rng(11)
    counts = np.zeros(2)
    for _ in range(100_000):
        idx = novelty_biased_choice(np.array([0.1, 0.2]), 1, 4.0, rng)
        counts[idx[0]] += 1
    ratio = counts[1] / counts[0]
    assert abs(ratio - 16.0) / 16.0 < 0.05


def test_alpha0_sampling_uniform_chi_square():
    archive = _random_archive(100, dim=8, seed=8)
    rng = np.random.default_rng(9)
    counts = np.zeros(100)
    draws = 100_000
    for _ in range(draws):
        counts[archive.sample_high_novelty(1, 0.0, rng)[0].id] += 1
    p = stats.chisquare(counts).pvalue
    assert p > 0.01


def test_sampling_matches_computed_weights():
    # distribution of single draws tracks p ~ NOV^4 on a synthetic archive
    novelties = np.array([0.15, 0.2, 0.25, 0.3])
    weights = novelty_weights(novelties, 4.0)
    rng = np.random.default_rng(10)
    counts = np.zeros(4)
    draws = 100_000
    for _ in range(draws):
        counts[novelty_biased_choice(novelties, 1, 4.0, rng)[0]] += 1
    np.testing.assert_allclose(counts / draws, weights, rtol=0.05)


def test_sample_without_replacement_and_oversized_n():
    archive = _random_archive(10, dim=8, seed=12)
    records = archive.sample_high_novelty(5, 2.0, 0)
    ids = [r.id for r in records]
    assert len(set(ids)) == 5
    assert len(archive.sample_high_novelty(50, 2.0, 0)) == 10


# -- persistence --------------------------------------------------------------


def test_empty_archive_round_trip(tmp_path):
    archive = Archive(backend_id=BACKEND, dim=4)
    archive.save(tmp_path / "run")
    loaded = Archive.load(tmp_path / "run")
    assert len(loaded) == 0
    assert loaded.backend_id == BACKEND


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(13)
    archive = Archive(backend_id=BACKEND, dim=8, k=5)
    parents: list[int | None] = [None]
    for i in range(1000):
        origin = "seed" if i < 20 else ("expedition" if i % 37 == 0 else "expansion")
        parent = None if origin == "seed" else int(rng.integers(i))
        archive.insert(
            theta=rng.random(6),
            embedding=_emb(rng.standard_normal(8)),
            behavior_ref=f"behaviors/{i:06d}.png",
            parent_id=parent,
            origin=origin,
            iteration=i,
            goal_id=(i if origin == "expedition" else None),
        )
    archive.save(tmp_path / "run", manifest_extra={"note": "test"})
    loaded = Archive.load(tmp_path / "run")
    assert len(loaded) == len(archive)
    for a, b in zip(archive.records, loaded.records):
        assert a.id == b.id
        assert a.theta.tobytes() == b.theta.tobytes()
        assert a.embedding.tobytes() == b.embedding.tobytes()
        assert (a.parent_id, a.origin, a.iteration, a.goal_id, a.behavior_ref) == (
            b.parent_id,
            b.origin,
            b.iteration,
            b.goal_id,
            b.behavior_ref,
        )
    np.testing.assert_array_equal(loaded.novelty_scores(), archive.novelty_scores())


def test_truncated_records_file_errors_with_line(tmp_path):
    archive = _random_archive(10, dim=4, seed=14)
    archive.save(tmp_path / "run")
    path = tmp_path / "run" / "records.jsonl"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:6]) + "\n")
    with pytest.raises(ArchiveLoadError) as err:
        Archive.load(tmp_path / "run")
    assert "line 6" in str(err.value)


def test_corrupt_record_line_reported(tmp_path):
    archive = _random_archive(5, dim=4, seed=15)
    archive.save(tmp_path / "run")
    path = tmp_path / "run" / "records.jsonl"
    lines = path.read_text().splitlines()
    lines[3] = lines[3][: len(lines[3]) // 2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ArchiveLoadError) as err:
        Archive.load(tmp_path / "run")
    assert "line 3" in str(err.value)


def test_load_max_records_prefix(tmp_path):
    archive = _random_archive(20, dim=4, seed=16)
    archive.save(tmp_path / "run")
    loaded = Archive.load(tmp_path / "run", max_records=7)
    assert len(loaded) == 7
    assert loaded.records[-1].id == 6
