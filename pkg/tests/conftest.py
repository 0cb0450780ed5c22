import math
import os

import pytest

from spl_forge.core import EnergyEnvironment, Reaction, ReactionNetwork, Species

DATA = os.path.join(os.path.dirname(__file__), "data")


def data_path(name: str) -> str:
    return os.path.join(DATA, name)


def triangle_network(burst_rate: float = 2.0, burst_energy: float = 2.0,
                     half_lives: dict[str, float] | None = None) -> ReactionNetwork:
    """Three species at energies 3 > 2 > 1 on a loop: two downhill reactions
    and one energy-consuming closing reaction, each enzyme-assisted."""
    half_lives = half_lives or {}
    hl = lambda sid: half_lives.get(sid, math.inf)
    species = (
        Species("M1", 3.0, hl("M1")),
        Species("M2", 2.0, hl("M2")),
        Species("M3", 1.0, hl("M3")),
        Species("E12", 0.0),
        Species("E23", 0.0),
        Species("E31", 0.0),
    )
    reactions = (
        Reaction("M1_to_M2", (("M1", 1),), (("M2", 1),), 1.0, 1.0, "E12"),
        Reaction("M2_to_M3", (("M2", 1),), (("M3", 1),), 2.0, 1.0, "E23"),
        Reaction("M3_to_M1", (("M3", 1),), (("M1", 1),), 3.0, 1.0, "E31"),
    )
    env = EnergyEnvironment(
        burst_rate=burst_rate,
        burst_energy=burst_energy,
        abundant_inputs=(("E12", 1), ("E23", 1), ("E31", 1)),
    )
    return ReactionNetwork(species, reactions, env)


@pytest.fixture
def triangle():
    return triangle_network()


@pytest.fixture
def triangle_path():
    return data_path("triangle.net")
