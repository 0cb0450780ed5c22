import math

import numpy as np
import pytest

from spl_forge.core import (
    CatalogError,
    NetworkValidationError,
    Reaction,
    ReactionNetwork,
    Species,
    delta_energy,
    format_multiset,
    parse_multiset,
    species_digraph,
    validate_network,
)


def test_delta_energy_identity_reaction():
    cat = {"A": Species("A", 2.0)}
    r = Reaction("noop", (("A", 1),), (("A", 1),), 0.0)
    assert delta_energy(r, cat) == 0.0


def test_delta_energy_downhill_and_uphill(triangle):
    # energies 3, 2, 1: one step down releases 1, closing the loop costs 2
    assert delta_energy(triangle.reaction("M1_to_M2"), triangle) == -1.0
    assert delta_energy(triangle.reaction("M3_to_M1"), triangle) == 2.0


def test_delta_energy_unknown_species():
    r = Reaction("r", (("A", 1),), (("X", 1),), 0.0)
    with pytest.raises(CatalogError):
        delta_energy(r, {"A": Species("A", 1.0)})


def test_delta_energy_reversal_antisymmetry():
    rng = np.random.default_rng(1234)
    for _ in range(100):
        ids = [f"s{i}" for i in range(rng.integers(2, 6))]
        cat = {sid: Species(sid, float(rng.uniform(0, 5))) for sid in ids}
        lhs = tuple((sid, int(rng.integers(1, 3))) for sid in rng.choice(ids, 2))
        rhs = tuple((sid, int(rng.integers(1, 3))) for sid in rng.choice(ids, 2))
        r = Reaction("r", parse_multiset(format_multiset(lhs)),
                     parse_multiset(format_multiset(rhs)), 100.0)
        assert delta_energy(r, cat) == -delta_energy(r.reversed(), cat)


def test_validate_triangle_is_clean(triangle):
    assert validate_network(triangle) == []


def test_validate_dangling_id(triangle):
    bad = ReactionNetwork(
        triangle.catalog,
        triangle.reactions + (Reaction("bad", (("X", 1),), (("M1", 1),), 0.0),),
        triangle.environment,
    )
    report = validate_network(bad)
    assert len(report) == 1
    assert report[0].kind == "dangling-id"
    assert "X" in report[0].message


def test_validate_activation_energy_floor():
    net = ReactionNetwork(
        (Species("L", 0.0), Species("H", 2.0)),
        (Reaction("up", (("L", 1),), (("H", 1),), 0.0),),
    )
    report = validate_network(net)
    assert [v.kind for v in report] == ["activation-energy"]


def test_validate_empty_sides():
    net = ReactionNetwork(
        (Species("A", 1.0),),
        (Reaction("r", (), (("A", 1),), 0.0),),
    )
    kinds = {v.kind for v in validate_network(net)}
    assert "empty-side" in kinds


def test_validate_isolated_species_flagged_but_not_catalysts():
    net = ReactionNetwork(
        (Species("A", 1.0), Species("B", 1.0), Species("lonely", 1.0), Species("E", 0.0)),
        (Reaction("r", (("A", 1),), (("B", 1),), 0.0, 1.0, "E"),),
    )
    report = validate_network(net)
    assert [v.subject for v in report] == ["lonely"]


def test_validate_is_idempotent_and_pure(triangle):
    first = validate_network(triangle)
    second = validate_network(triangle)
    assert first == second == []


def test_species_digraph_triangle_cycle(triangle):
    adj = species_digraph(triangle)
    assert adj == {"M1": ["M2"], "M2": ["M3"], "M3": ["M1"]}


def test_species_digraph_single_edge():
    net = ReactionNetwork(
        (Species("A", 1.0), Species("B", 1.0)),
        (Reaction("r", (("A", 1),), (("B", 1),), 0.0),),
    )
    assert species_digraph(net) == {"A": ["B"], "B": []}


def test_species_digraph_bimolecular_edges():
    net = ReactionNetwork(
        (Species("A", 1.0), Species("B", 1.0), Species("C", 2.0)),
        (Reaction("r", (("A", 1), ("B", 1)), (("C", 1),), 0.0),),
    )
    assert species_digraph(net) == {"A": ["C"], "B": ["C"], "C": []}


def test_species_digraph_rejects_invalid():
    net = ReactionNetwork(
        (Species("A", 1.0),),
        (Reaction("r", (("Z", 1),), (("A", 1),), 0.0),),
    )
    with pytest.raises(NetworkValidationError):
        species_digraph(net)


def test_species_digraph_edge_bound_and_determinism():
    rng = np.random.default_rng(7)
    for _ in range(50):
        ids = [f"s{i}" for i in range(6)]
        reactions = []
        for k in range(rng.integers(1, 5)):
            lhs = tuple(sorted({str(x) for x in rng.choice(ids, rng.integers(1, 3))}))
            rhs = tuple(sorted({str(x) for x in rng.choice(ids, rng.integers(1, 3))}))
            reactions.append(
                Reaction(f"r{k}", tuple((s, 1) for s in lhs), tuple((s, 1) for s in rhs), 50.0)
            )
        used = sorted({s for r in reactions for s, _ in (*r.reactants, *r.products)})
        species = tuple(Species(sid, float(rng.uniform(0, 3))) for sid in used)
        net = ReactionNetwork(species, tuple(reactions))
        adj = species_digraph(net)
        per_reaction_bound = sum(len(r.reactants) * len(r.products) for r in reactions)
        assert sum(len(v) for v in adj.values()) <= per_reaction_bound
        assert adj == species_digraph(net)


def test_multiset_parse_and_format():
    assert parse_multiset("2*A + B") == (("A", 2), ("B", 1))
    assert format_multiset((("A", 2), ("B", 1))) == "2*A + B"
    assert parse_multiset("A + A") == (("A", 2),)
    with pytest.raises(ValueError):
        parse_multiset("0*A")
    with pytest.raises(ValueError):
        parse_multiset("12*A")  # stoichiometry is capped at small integers


def test_species_invariants():
    with pytest.raises(ValueError):
        Species("neg", -1.0)
    with pytest.raises(ValueError):
        Species("badhl", 1.0, 0.0)
    assert math.isinf(Species("ok", 1.0).half_life)


def test_reaction_invariants():
    with pytest.raises(ValueError):
        Reaction("r", (("A", 1),), (("B", 1),), -0.5)
    with pytest.raises(ValueError):
        Reaction("r", (("A", 1),), (("B", 1),), 0.0, base_rate=0.0)


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        ReactionNetwork((Species("A", 1.0), Species("A", 2.0)))
