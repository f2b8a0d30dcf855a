"""Main exploration loop: seeding, expansion, expeditions, and the baselines."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cmaes
from .archive import Archive
from .config import RunConfig
from .embedding import (
    CachingEmbedder,
    Embedding,
    ServiceEmbedder,
    ToyEmbedder,
    cosine_distance,
    image_to_png_bytes,
)
from .genome import Genome, mutate, sample_random
from .goals import (
    GoalGenerationError,
    GoalLog,
    ScriptedGoalClient,
    VlmGoalClient,
    build_prompt,
    generate_goal,
    seed_goals,
)
from .simulator import image_to_uint8, simulate

log = logging.getLogger(__name__)


class EngineError(RuntimeError):
    pass


@dataclass
class RunState:
    archive: Archive
    goal_log: GoalLog
    iteration: int
    out_dir: Path


def make_embedder(config: RunConfig, out_dir: Path | None = None):
    e = config.data["embedding"]
    if e["backend"] == "toy":
        backend = ToyEmbedder(dim=e["dim"], seed=e["seed"])
    else:
        url = e["url"] or os.environ.get("EE_EMBED_URL", "")
        if not url:
            raise EngineError("service backend needs embedding.url or EE_EMBED_URL")
        backend = ServiceEmbedder(url, model=e["model"] or os.environ.get("EE_EMBED_MODEL", ""))
    if e["cache"] and out_dir is not None:
        return CachingEmbedder(backend, cache_path=out_dir / "embedding_cache.jsonl")
    return CachingEmbedder(backend)


def make_goal_client(config: RunConfig, generated_so_far: int = 0):
    g = config.data["goals"]
    if g["generator"] == "scripted":
        return ScriptedGoalClient(g["script"], start_index=generated_so_far), "scripted"
    url = os.environ.get("EE_VLM_URL", "")
    model = os.environ.get("EE_VLM_MODEL", "")
    if not url or not model:
        raise EngineError("vlm generator needs EE_VLM_URL and EE_VLM_MODEL")
    return VlmGoalClient(url, model, api_key=os.environ.get("EE_VLM_KEY", "")), "vlm"


class Engine:
    """Drives one run directory: iteration loop, checkpoints, expedition traces."""

    def __init__(self, config: RunConfig, out_dir: str | Path):
        self.config = config
        self.out = Path(out_dir)
        self.layout = config.layout
        self.sim_cfg = config.sim
        run = config.run
        self.N = run["iterations"]
        self.S = run["seed_iterations"]
        self.K = run["expedition_period"]
        self.alpha = float(run["alpha"])
        self.k = run["k_neighbors"]
        self.sigma_mut = run["sigma_mut"]
        self.checkpoint_every = run["checkpoint_every"]
        self.init_seed = config.data["simulator"]["init_seed"]
        self.mode = run["mode"]
        self.embedder = None
        self.archive: Archive | None = None
        self.goal_log: GoalLog | None = None
        self.rng: np.random.Generator | None = None
        self.goal_client = None
        self.goal_source = ""
        self._events_fh = None

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> None:
        if (self.out / "checkpoint.json").exists():
            raise EngineError(f"{self.out} already holds a run; use resume")
        (self.out / "behaviors").mkdir(parents=True, exist_ok=True)
        self.embedder = make_embedder(self.config, self.out)
        self.archive = Archive(
            backend_id=self.embedder.backend_id, dim=self.embedder.dim, k=self.k
        )
        self.rng = np.random.default_rng(
            np.random.SeedSequence([int(self.config.run["rng_seed"]), 0])
        )
        self.goal_log = GoalLog()
        for text in seed_goals(self.config.data["goals"]["seed_goals"]):
            emb = self.embedder.embed_text(text)
            self.goal_log.append(text, emb, iteration=0, source="predefined")
        if self.mode == "ee":
            self.goal_client, self.goal_source = make_goal_client(self.config)
        self._iteration = 0

    def resume(self) -> None:
        path = self.out / "checkpoint.json"
        if not path.exists():
            raise EngineError(f"no checkpoint.json in {self.out}")
        state = json.loads(path.read_text())
        if state["mode"] != self.mode:
            raise EngineError(
                f"checkpoint was written by mode {state['mode']!r}, config says {self.mode!r}"
            )
        self.embedder = make_embedder(self.config, self.out)
        completed = state["completed_iterations"]
        self.archive = Archive.load(self.out, max_records=completed)
        self.goal_log = GoalLog.load(self.out / "goals.jsonl")
        self.rng = np.random.default_rng()
        self.rng.bit_generator.state = state["rng_state"]
        if self.mode == "ee":
            # restore the exact call count so the script position replays;
            # duplicate-retry calls make it run ahead of the goal count
            calls = state.get("goal_client_calls")
            self.goal_client, self.goal_source = make_goal_client(
                self.config, self.goal_log.generated_count() if calls is None else calls
            )
        self._iteration = completed

    def run(self, stop_after: int | None = None) -> RunState:
        """Iterate to N (or stop_after), checkpointing every `checkpoint_every`."""
        if self.archive is None:
            raise EngineError("call start() or resume() first")
        self._events_fh = (self.out / "events.jsonl").open("a")
        limit = self.N if stop_after is None else min(self.N, stop_after)
        try:
            for i in range(self._iteration + 1, limit + 1):
                t0 = time.perf_counter()
                theta, parent_id, origin, goal_id = self._propose(i)
                result = simulate(theta, self.layout, self.init_seed, self.sim_cfg)
                rec_id = len(self.archive)
                ref = f"behaviors/{rec_id:06d}.png"
                (self.out / ref).write_bytes(image_to_png_bytes(image_to_uint8(result.image)))
                emb = self.embedder.embed_image(result.image)
                self.archive.insert(
                    theta=theta.values,
                    embedding=emb,
                    behavior_ref=ref,
                    parent_id=parent_id,
                    origin=origin,
                    iteration=i,
                    goal_id=goal_id,
                )
                self._events_fh.write(
                    json.dumps(
                        {
                            "iteration": i,
                            "id": rec_id,
                            "origin": origin,
                            "parent_id": parent_id,
                            "goal_id": goal_id,
                            "truncated": result.truncated,
                            "duration_s": round(time.perf_counter() - t0, 4),
                        }
                    )
                    + "\n"
                )
                self._iteration = i
                if i % self.checkpoint_every == 0 or i == limit:
                    self.checkpoint()
        finally:
            self._events_fh.close()
            self._events_fh = None
        return RunState(
            archive=self.archive, goal_log=self.goal_log, iteration=self._iteration, out_dir=self.out
        )

    def checkpoint(self) -> None:
        self.archive.save(
            self.out,
            manifest_extra={"config": self.config.manifest_echo(), "mode": self.mode},
        )
        self.goal_log.save(self.out / "goals.jsonl")
        if self._events_fh is not None:
            self._events_fh.flush()
        (self.out / "checkpoint.json").write_text(
            json.dumps(
                {
                    "completed_iterations": self._iteration,
                    "mode": self.mode,
                    "rng_state": self.rng.bit_generator.state,
                    "goal_client_calls": getattr(self.goal_client, "calls", None),
                },
                default=int,
            )
        )

    # -- iteration body ----------------------------------------------------------

    def _propose(self, i: int):
        if self.mode == "random_params" or i <= self.S:
            return sample_random(self.layout, self.rng), None, "seed", None
        if self.mode == "ee" and i % self.K == 0:
            return self._expedition_step(i)
        return self._expansion_step()

    def _expansion_step(self):
        alpha = 0.0 if self.mode == "random_ga" else self.alpha
        parent = self.archive.sample_high_novelty(1, alpha, self.rng)[0]
        child = mutate(Genome(parent.theta), self.sigma_mut, self.rng)
        return child, parent.id, "expansion", None

    def _expedition_step(self, i: int):
        cfg = self.config.data
        prompt = build_prompt(
            self.archive,
            self.goal_log,
            self._behavior_png,
            n=cfg["goals"]["context_size"],
            alpha=self.alpha,
            rng=self.rng,
        )
        try:
            record = generate_goal(
                prompt, self.goal_client, self.goal_log, self.embedder.embed_text, i,
                self.goal_source,
            )
        except GoalGenerationError as err:
            log.warning("goal generation failed (%s); falling back to the script", err)
            fallback = ScriptedGoalClient(
                cfg["goals"]["script"], start_index=self.goal_log.generated_count()
            )
            record = generate_goal(
                prompt, fallback, self.goal_log, self.embedder.embed_text, i, "scripted"
            )
        e_goal = Embedding(vector=record.embedding, backend_id=self.archive.backend_id)
        nn = self.archive.nearest_to(e_goal)

        def objective(theta_vec: np.ndarray) -> float:
            result = simulate(
                Genome(theta_vec), self.layout, self.init_seed, self.sim_cfg
            )
            return cosine_distance(self.embedder.embed_image(result.image), e_goal)

        exp_dir = self.out / "expeditions" / f"{record.goal_id:04d}"
        exp_dir.mkdir(parents=True, exist_ok=True)
        steps = cfg["cmaes"]["steps"]
        snap_gens = sorted({g for g in cfg["cmaes"]["snapshots"] if g <= steps} | {steps})

        def snapshot(gen: int, theta_vec: np.ndarray, fitness: float) -> None:
            if gen in snap_gens:
                result = simulate(
                    Genome(theta_vec), self.layout, self.init_seed, self.sim_cfg
                )
                (exp_dir / f"gen{gen:04d}.png").write_bytes(
                    image_to_png_bytes(image_to_uint8(result.image))
                )

        cma_seed = int(self.rng.integers(2**63))
        res = cmaes.optimize(
            objective,
            nn.theta,
            steps=steps,
            lam=cfg["cmaes"]["population"],
            sigma_init=cfg["cmaes"]["sigma_init"],
            rng_seed=cma_seed,
            on_generation=snapshot,
        )
        with (exp_dir / "trace.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["generation", "best_fitness", "mean_fitness", "sigma"])
            writer.writerows(res.trace.rows())
        return Genome(res.best_theta), nn.id, "expedition", record.goal_id

    def _behavior_png(self, record) -> bytes:
        return (self.out / record.behavior_ref).read_bytes()


def run(config: RunConfig, out_dir: str | Path, stop_after: int | None = None) -> RunState:
    engine = Engine(config, out_dir)
    engine.start()
    return engine.run(stop_after=stop_after)


def resume(config: RunConfig, out_dir: str | Path, stop_after: int | None = None) -> RunState:
    engine = Engine(config, out_dir)
    engine.resume()
    return engine.run(stop_after=stop_after)


def load_run(out_dir: str | Path) -> RunState:
    """Load a finished or checkpointed run directory for analysis."""
    out = Path(out_dir)
    archive = Archive.load(out)
    goals_path = out / "goals.jsonl"
    goal_log = GoalLog.load(goals_path) if goals_path.exists() else GoalLog()
    state = json.loads((out / "checkpoint.json").read_text())
    return RunState(
        archive=archive, goal_log=goal_log, iteration=state["completed_iterations"], out_dir=out
    )
