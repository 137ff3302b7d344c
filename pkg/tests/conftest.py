"""Shared fixtures: random posterior grids and tiny vocabularies."""

import numpy as np
import pytest

from csasr.ctc import PosteriorGrid
from csasr.vocab import GraphemeVocab


def random_grid(rng, t: int, v: int, sharpness: float = 1.0) -> PosteriorGrid:
    logits = rng.normal(0.0, sharpness, size=(t, v))
    logp = logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)
    return PosteriorGrid(logp)


@pytest.fixture
def grid_factory():
    return random_grid


@pytest.fixture
def tiny_vocab() -> GraphemeVocab:
    return GraphemeVocab(("<blank>", "a", "b", " ", "你"))
