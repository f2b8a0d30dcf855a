"""Append-only solution archive: genealogy, exact k-NN novelty, persistence."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import Embedding

ORIGINS = ("seed", "expansion", "expedition")


class ArchiveQueryError(RuntimeError):
    """Raised when querying an empty archive."""


class ArchiveLoadError(RuntimeError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"{message} (records.jsonl line {line})")
        self.line = line


@dataclass
class SolutionRecord:
    id: int
    theta: np.ndarray
    embedding: np.ndarray
    behavior_ref: str
    parent_id: int | None
    origin: str
    iteration: int
    goal_id: int | None = None

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if self.parent_id is not None and self.parent_id >= self.id:
            raise ValueError(f"record {self.id}: parent_id {self.parent_id} must be < id")
        if (self.origin == "expedition") != (self.goal_id is not None):
            raise ValueError(f"record {self.id}: goal_id present iff origin is expedition")


def novelty_weights(novelties: np.ndarray, alpha: float) -> np.ndarray:
    """Selection weights p proportional to novelty**alpha; uniform fallback when all zero."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    w = np.asarray(novelties, dtype=np.float64) ** alpha
    total = w.sum()
    if total <= 0.0 or not np.isfinite(total):
        return np.full(len(w), 1.0 / len(w))
    return w / total


def novelty_biased_choice(
    novelties: np.ndarray, n: int, alpha: float, rng: np.random.Generator
) -> np.ndarray:
    """Indices of n draws without replacement with p proportional to novelty**alpha."""
    size = len(novelties)
    if n >= size:
        return np.arange(size)
    return rng.choice(size, size=n, replace=False, p=novelty_weights(novelties, alpha))


class Archive:
    """All discovered solutions, the genealogy, and an exact cosine k-NN index.

    Per-record novelty (mean cosine distance to the k nearest other records)
    is maintained incrementally: each insert folds the new distance column into
    every record's sorted k-nearest list, so scores are exact at all times.
    """

    def __init__(self, backend_id: str, dim: int, k: int = 10, knn_tracking: bool = True):
        self.backend_id = backend_id
        self.dim = dim
        self.k = k
        self.knn_tracking = knn_tracking  # off: genealogy-only archive, no novelty
        self.records: list[SolutionRecord] = []
        self._capacity = 1024
        self._emb_buf = np.empty((self._capacity, dim), dtype=np.float64)
        self._knn_buf = np.empty((self._capacity, k), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def embeddings(self) -> np.ndarray:
        return self._emb_buf[: len(self.records)]

    @property
    def _knn(self) -> np.ndarray:
        return self._knn_buf[: len(self.records)]

    def _ensure_capacity(self) -> None:
        if len(self.records) < self._capacity:
            return
        self._capacity *= 2
        emb = np.empty((self._capacity, self.dim), dtype=np.float64)
        emb[: len(self.records)] = self.embeddings
        knn = np.empty((self._capacity, self.k), dtype=np.float64)
        knn[: len(self.records)] = self._knn
        self._emb_buf, self._knn_buf = emb, knn

    def insert(
        self,
        theta: np.ndarray,
        embedding: Embedding,
        behavior_ref: str = "",
        parent_id: int | None = None,
        origin: str = "seed",
        iteration: int = 0,
        goal_id: int | None = None,
    ) -> int:
        if embedding.backend_id != self.backend_id:
            raise ValueError(
                f"embedding backend {embedding.backend_id!r} does not match "
                f"archive backend {self.backend_id!r}"
            )
        record = SolutionRecord(
            id=len(self.records),
            theta=np.asarray(theta, dtype=np.float64),
            embedding=embedding.vector,
            behavior_ref=behavior_ref,
            parent_id=parent_id,
            origin=origin,
            iteration=iteration,
            goal_id=goal_id,
        )
        self._append(record)
        return record.id

    def _append(self, record: SolutionRecord) -> None:
        n = len(self.records)
        self._ensure_capacity()
        e = record.embedding
        if self.knn_tracking:
            # fold the new column into existing k-NN lists, then add the new row
            own = np.full(self.k, np.inf)
            if n:
                dists = 1.0 - self.embeddings @ e
                knn = self._knn
                merged = np.concatenate([knn, dists[:, None]], axis=1)
                merged.sort(axis=1)
                knn[:] = merged[:, : self.k]
                m = min(self.k, n)
                own[:m] = np.sort(np.partition(dists, m - 1)[:m])
            self._knn_buf[n] = own
        self._emb_buf[n] = e
        self.records.append(record)

    def novelty(self, e: Embedding, k: int | None = None, exclude_id: int | None = None) -> float:
        """Mean cosine distance to the k nearest stored embeddings (full scan)."""
        if not self.records:
            raise ArchiveQueryError("novelty query on empty archive")
        if e.backend_id != self.backend_id:
            raise ValueError("embedding backend does not match archive backend")
        k = self.k if k is None else k
        dists = 1.0 - self.embeddings @ e.vector
        if exclude_id is not None:
            dists = np.delete(dists, exclude_id)
        if dists.size == 0:
            return 0.0
        m = min(k, dists.size)
        return float(np.sort(np.partition(dists, m - 1)[:m]).mean())

    def novelty_scores(self) -> np.ndarray:
        """Exact self-excluded novelty of every stored record at tracked k."""
        if not self.knn_tracking:
            raise ArchiveQueryError("novelty tracking disabled for this archive")
        n = len(self.records)
        if n == 0:
            return np.empty(0)
        if n == 1:
            return np.zeros(1)
        m = min(self.k, n - 1)
        return self._knn[:, :m].mean(axis=1)

    def sample_high_novelty(
        self, n: int, alpha: float, rng: int | np.random.Generator
    ) -> list[SolutionRecord]:
        """n records without replacement, p proportional to novelty**alpha."""
        if not self.records:
            raise ArchiveQueryError("cannot sample from empty archive")
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        idx = novelty_biased_choice(self.novelty_scores(), n, alpha, rng)
        return [self.records[i] for i in idx]

    def nearest_to(self, e_goal: Embedding) -> SolutionRecord:
        """Record minimizing cosine distance to e_goal; ties break to lowest id."""
        if not self.records:
            raise ArchiveQueryError("nearest query on empty archive")
        if e_goal.backend_id != self.backend_id:
            raise ValueError("embedding backend does not match archive backend")
        dists = 1.0 - self.embeddings @ e_goal.vector
        return self.records[int(np.argmin(dists))]

    # -- persistence ---------------------------------------------------------

    def manifest(self, extra: dict | None = None) -> dict:
        data = {
            "backend_id": self.backend_id,
            "dim": self.dim,
            "k": self.k,
            "record_count": len(self.records),
        }
        if extra:
            data.update(extra)
        return data

    def save(self, directory: str | Path, manifest_extra: dict | None = None) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "manifest.json").write_text(
            json.dumps(self.manifest(manifest_extra), indent=2)
        )
        with (directory / "records.jsonl").open("w") as fh:
            for r in self.records:
                fh.write(
                    json.dumps(
                        {
                            "id": r.id,
                            "iteration": r.iteration,
                            "origin": r.origin,
                            "parent_id": r.parent_id,
                            "goal_id": r.goal_id,
                            "behavior": r.behavior_ref,
                            "theta": r.theta.tolist(),
                            "embedding": r.embedding.tolist(),
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, directory: str | Path, max_records: int | None = None) -> "Archive":
        directory = Path(directory)
        try:
            manifest = json.loads((directory / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ArchiveLoadError(f"cannot read manifest.json: {err}") from err
        archive = cls(
            backend_id=manifest["backend_id"], dim=int(manifest["dim"]), k=int(manifest["k"])
        )
        path = directory / "records.jsonl"
        if not path.exists():
            if manifest["record_count"] != 0:
                raise ArchiveLoadError("manifest reports records but records.jsonl is missing")
            return archive
        with path.open() as fh:
            for lineno, line in enumerate(fh):
                if max_records is not None and len(archive.records) >= max_records:
                    break
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    record = SolutionRecord(
                        id=int(raw["id"]),
                        theta=np.asarray(raw["theta"], dtype=np.float64),
                        embedding=np.asarray(raw["embedding"], dtype=np.float64),
                        behavior_ref=raw["behavior"],
                        parent_id=raw["parent_id"],
                        origin=raw["origin"],
                        iteration=int(raw["iteration"]),
                        goal_id=raw["goal_id"],
                    )
                except (json.JSONDecodeError, KeyError, ValueError, TypeError) as err:
                    raise ArchiveLoadError(f"corrupt record: {err}", line=lineno) from err
                if record.id != len(archive.records):
                    raise ArchiveLoadError(
                        f"non-dense id {record.id}, expected {len(archive.records)}", line=lineno
                    )
                if record.embedding.size != archive.dim:
                    raise ArchiveLoadError(
                        f"embedding dim {record.embedding.size} != manifest dim {archive.dim}",
                        line=lineno,
                    )
                archive._append(record)
        expected = manifest["record_count"] if max_records is None else max_records
        if len(archive.records) < expected:
            raise ArchiveLoadError(
                f"records.jsonl truncated: {len(archive.records)} of {expected} records",
                line=len(archive.records),
            )
        return archive
