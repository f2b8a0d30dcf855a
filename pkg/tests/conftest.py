import pytest

from eelenia.config import RunConfig


@pytest.fixture
def tiny_config():
    """Config factory for fast offline runs: toy embedder, small grid, short rollouts."""

    def make(**extra) -> RunConfig:
        overrides = [
            "iterations=60",
            "seed_iterations=40",
            "expedition_period=10",
            "checkpoint_every=20",
            "simulator.height=32",
            "simulator.width=32",
            "simulator.steps=8",
            "simulator.kernel_radius=6.0",
            "cmaes.steps=2",
            "cmaes.population=4",
            "cmaes.snapshots=[0,1]",
        ]
        overrides += [f"{k}={v}" for k, v in extra.items()]
        return RunConfig.from_file(None, overrides)

    return make
