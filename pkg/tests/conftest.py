import random

import pytest

from coopnet.dynamics import C, D, NetworkState


class ScriptedRng(random.Random):
    """``random()`` replays the given draws, then falls back to the seeded stream.

    Integer draws (``randrange``, ``shuffle``) are untouched since they go
    through ``getrandbits``.
    """

    def __new__(cls, draws=(), seed=0):
        return super().__new__(cls, seed)

    def __init__(self, draws=(), seed=0):
        super().__init__(seed)
        self.draws = list(draws)

    def random(self):
        if self.draws:
            return self.draws.pop(0)
        return super().random()


def make_state(n, edges, strategies, draws=(), seed=0):
    if isinstance(strategies, str):
        strategies = [C if ch == "C" else D for ch in strategies]
    return NetworkState(n, edges, strategies, ScriptedRng(draws, seed))


def path_edges(n):
    return [(i, i + 1) for i in range(n - 1)]


def complete_edges(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


@pytest.fixture
def scripted():
    return ScriptedRng
