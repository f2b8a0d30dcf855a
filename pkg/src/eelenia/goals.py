"""Linguistic goal generation: prompts from archive context, clients, goal log."""
from __future__ import annotations

import base64
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .archive import Archive
from .embedding import Embedding

log = logging.getLogger(__name__)

GOAL_MIN_WORDS = 5
GOAL_MAX_WORDS = 15
DEFAULT_CONTEXT_SIZE = 25

# Six hand-crafted goals seeding the log. The first is the canonical example;
# the rest are our defaults in the same spirit (simple shapes and arrangements).
DEFAULT_SEED_GOALS = [
    "a pink square",
    "a blue circle with a yellow halo",
    "a green spiral arm rotating around a dark core",
    "two orange blobs orbiting each other",
    "a red hexagonal lattice of small cells",
    "a white starburst with thin radiating filaments",
]

SYSTEM_INSTRUCTIONS = (
    "You explore the visual patterns produced by a mass-conserving continuous "
    "cellular automaton. You will see a list of goals already pursued and a "
    "sample of discovered patterns with their novelty scores. Your job is to "
    "imagine a plausible pattern that has not been seen yet."
)

STAGE_INSTRUCTIONS = (
    "First, describe the characteristics shared across the sampled images. "
    "Second, describe characteristics unique to individual images, and consider "
    "adjacent possibles: patterns one small step beyond what is shown. "
    "Finally, generate a 5-15 words goal description of a new pattern to pursue. "
    "Reply with the goal alone on the last line."
)


class GoalGenerationError(RuntimeError):
    """The goal client failed after all retries."""


@dataclass
class GoalRecord:
    goal_id: int
    text: str
    embedding: np.ndarray | None
    iteration: int
    context_ids: list[int] = field(default_factory=list)
    source: str = "vlm"  # predefined | vlm | scripted
    word_count_flag: bool = False


@dataclass
class GoalPrompt:
    system: str
    instructions: str
    prior_goals: list[str]
    context_images: list[bytes]  # PNG bytes
    context_novelty: list[float]
    context_ids: list[int]


class GoalLog:
    """Append-only goal store with dense ids, persisted as goals.jsonl."""

    def __init__(self):
        self.records: list[GoalRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def texts(self) -> list[str]:
        return [r.text for r in self.records]

    def append(
        self,
        text: str,
        embedding: Embedding | None,
        iteration: int,
        context_ids: list[int] | None = None,
        source: str = "vlm",
    ) -> GoalRecord:
        words = len(text.split())
        record = GoalRecord(
            goal_id=len(self.records),
            text=text,
            embedding=None if embedding is None else embedding.vector,
            iteration=iteration,
            context_ids=list(context_ids or []),
            source=source,
            word_count_flag=not (GOAL_MIN_WORDS <= words <= GOAL_MAX_WORDS),
        )
        self.records.append(record)
        return record

    def generated_count(self) -> int:
        return sum(1 for r in self.records if r.source != "predefined")

    def save(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            for r in self.records:
                fh.write(
                    json.dumps(
                        {
                            "goal_id": r.goal_id,
                            "text": r.text,
                            "embedding": None if r.embedding is None else r.embedding.tolist(),
                            "iteration": r.iteration,
                            "context_ids": r.context_ids,
                            "source": r.source,
                            "word_count_flag": r.word_count_flag,
                        }
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path) -> "GoalLog":
        logbook = cls()
        with Path(path).open() as fh:
            for line in fh:
                if not line.strip():
                    continue
                raw = json.loads(line)
                logbook.records.append(
                    GoalRecord(
                        goal_id=raw["goal_id"],
                        text=raw["text"],
                        embedding=None
                        if raw["embedding"] is None
                        else np.asarray(raw["embedding"]),
                        iteration=raw["iteration"],
                        context_ids=raw["context_ids"],
                        source=raw["source"],
                        word_count_flag=raw["word_count_flag"],
                    )
                )
        return logbook


def seed_goals(texts: list[str] | None = None) -> list[str]:
    """The six predefined goal texts (config override or built-in defaults)."""
    chosen = list(texts) if texts else list(DEFAULT_SEED_GOALS)
    if len(chosen) != 6:
        raise ValueError(f"expected 6 seed goals, got {len(chosen)}")
    for text in chosen:
        if len(text.split()) > GOAL_MAX_WORDS:
            raise ValueError(f"seed goal too long: {text!r}")
        # hand-crafted goals may run shorter than the generated 5-word minimum
    return chosen


def build_prompt(
    archive: Archive,
    goal_log: GoalLog,
    behavior_png: "callable",
    n: int = DEFAULT_CONTEXT_SIZE,
    alpha: float = 4.0,
    rng: int | np.random.Generator = 0,
) -> GoalPrompt:
    """Assemble the goal-generation prompt from novelty-biased archive context.

    `behavior_png(record)` must return PNG bytes for a record's behavior.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    scores = archive.novelty_scores()
    records = archive.sample_high_novelty(n, alpha, rng)
    return GoalPrompt(
        system=SYSTEM_INSTRUCTIONS,
        instructions=STAGE_INSTRUCTIONS,
        prior_goals=goal_log.texts(),
        context_images=[behavior_png(r) for r in records],
        context_novelty=[float(scores[r.id]) for r in records],
        context_ids=[r.id for r in records],
    )


def extract_goal_text(response: str) -> str:
    """Last nonempty line, stripped of common list/quote decorations."""
    lines = [ln.strip() for ln in response.strip().splitlines() if ln.strip()]
    if not lines:
        raise GoalGenerationError("empty response from goal client")
    text = lines[-1].strip().strip("\"'").lstrip("-*0123456789. ").strip()
    if not text:
        raise GoalGenerationError("response contained no usable goal line")
    return text


class ScriptedGoalClient:
    """Deterministic offline goal source cycling through a fixed script."""

    def __init__(self, script: list[str], start_index: int = 0):
        if not script:
            raise ValueError("script must be nonempty")
        self.script = list(script)
        self.calls = start_index

    def complete(self, prompt: GoalPrompt) -> str:
        text = self.script[self.calls % len(self.script)]
        self.calls += 1
        return text


class VlmGoalClient:
    """Multimodal chat-completions client for a hosted vision-language model."""

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str = "",
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 120.0,
    ):
        import requests

        self._requests = requests
        self.url = url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout

    def _payload(self, prompt: GoalPrompt) -> dict:
        content: list[dict] = []
        intro = "Goals already pursued:\n" + "\n".join(
            f"- {t}" for t in prompt.prior_goals
        )
        content.append({"type": "text", "text": intro})
        for i, (png, nov) in enumerate(zip(prompt.context_images, prompt.context_novelty)):
            content.append({"type": "text", "text": f"Sample {i} (novelty {nov:.4f}):"})
            content.append(
                {
                    "type": "image_url",
                    "image_url": {
                        "url": "data:image/png;base64," + base64.b64encode(png).decode("ascii")
                    },
                }
            )
        content.append({"type": "text", "text": prompt.instructions})
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": content},
            ],
        }

    def complete(self, prompt: GoalPrompt) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last = None
        for attempt in range(self.retries):
            try:
                resp = self._requests.post(
                    self.url + "/chat/completions",
                    json=self._payload(prompt),
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except Exception as err:  # noqa: BLE001 - retry any transport failure
                last = err
                wait = self.backoff * (2**attempt)
                log.warning("goal client failed (%s), retry in %.1fs", err, wait)
                time.sleep(wait)
        raise GoalGenerationError(f"goal client failed after {self.retries} attempts: {last}")


def generate_goal(
    prompt: GoalPrompt,
    client,
    goal_log: GoalLog,
    embed_text: "callable",
    iteration: int,
    source: str = "vlm",
) -> GoalRecord:
    """One goal from the client; a duplicate of a logged goal gets one retry."""
    text = extract_goal_text(client.complete(prompt))
    if text in goal_log.texts():
        log.info("duplicate goal %r, regenerating once", text)
        retry = extract_goal_text(client.complete(prompt))
        if retry in goal_log.texts():
            log.warning("goal %r still duplicates the log, accepting anyway", retry)
        text = retry
    record = goal_log.append(
        text,
        embedding=embed_text(text),
        iteration=iteration,
        context_ids=prompt.context_ids,
        source=source,
    )
    if record.word_count_flag:
        log.warning("goal %r outside the %d-%d word target", text, GOAL_MIN_WORDS, GOAL_MAX_WORDS)
    return record
