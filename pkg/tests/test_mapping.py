import itertools

import pytest

from spl_forge.analysis import find_sccs
from spl_forge.core import Reaction, Species, species_digraph
from spl_forge.graphs import adjacency_cycles
from spl_forge.mapping import (
    MappingConstraints,
    SpeciesCatalog,
    UnsatisfiableMappingError,
    link_networks,
    map_physical_to_chemical,
    merge_networks,
    refine_with_cycle,
    required_species_count,
)
from spl_forge.track import (
    Segment,
    TrackGraph,
    PhysicalSystem,
    add_valleys,
    build_incline,
    close_loop,
)
from tests.conftest import triangle_network


def loop3():
    return add_valleys(close_loop(build_incline(10, 5)), 3)


def minimal_catalog():
    return SpeciesCatalog(
        species=(Species("M1", 3.0), Species("M2", 2.0), Species("M3", 1.0)),
        catalysts=("E12", "E23", "E31"),
    )


def theta_track() -> PhysicalSystem:
    """Two directed cycles sharing two junction nodes: a short loop a1->a2->a1
    and a long way back from a2 through two extra valleys b1, b2.

    Stable points: a1, a2, b1, b2 (4); valley arcs: a1->a2, a2->a1 (short),
    a2->b1, b1->b2, b2->a1 (5).
    """
    H, L = 4.0, 6.0

    def vee(h0, h1, peak=H):
        return ((0.0, h0), (L / 2, peak), (L, h1))

    nodes = {"a1": 3.0, "a2": 2.0, "b1": 2.5, "b2": 1.0}
    segments = {
        "s1": Segment("s1", "a1", "a2", L, vee(3.0, 2.0)),
        "s2": Segment("s2", "a2", "a1", L, vee(2.0, 3.0)),
        "s3": Segment("s3", "a2", "b1", L, vee(2.0, 2.5)),
        "s4": Segment("s4", "b1", "b2", L, vee(2.5, 1.0)),
        "s5": Segment("s5", "b2", "a1", L, vee(1.0, 3.0)),
    }
    return PhysicalSystem(track=TrackGraph(nodes, segments))


def test_required_counts_three_valley_loop():
    assert required_species_count(loop3()) == (3, 3)


def test_required_counts_single_valley_self_loop():
    sys = close_loop(build_incline(10, 5))
    assert required_species_count(sys) == (1, 1)


def test_required_counts_theta_figure():
    assert required_species_count(theta_track()) == (4, 5)


def test_required_counts_rejects_open_track():
    with pytest.raises(ValueError):
        required_species_count(build_incline(10, 5))


def test_map_three_valley_loop_reproduces_triangle():
    result = map_physical_to_chemical(loop3(), minimal_catalog())
    net = result.network
    species = [sp.id for sp in net.catalog]
    assert species == ["M1", "M2", "M3", "E12", "E23", "E31"]
    deltas = {r.id: net.species_by_id[r.products[0][0]].energy
              - net.species_by_id[r.reactants[0][0]].energy for r in net.reactions}
    downhill = [rid for rid, de in deltas.items() if de < 0]
    uphill = [rid for rid, de in deltas.items() if de > 0]
    assert len(downhill) == 2 and len(uphill) == 1
    assert result.uphill_reaction_ids == tuple(uphill)
    dec = find_sccs(species_digraph(net))
    assert dec.count == 1 and dec.components[0] == ("M1", "M2", "M3")
    # distinct catalyst per transition
    assert sorted(result.catalyst_of) == ["E12", "E23", "E31"]


def test_map_empty_catalog_unsatisfiable():
    with pytest.raises(UnsatisfiableMappingError):
        map_physical_to_chemical(loop3(), SpeciesCatalog(species=(), catalysts=()))


def test_map_too_few_catalysts_unsatisfiable():
    catalog = SpeciesCatalog(
        species=(Species("M1", 3.0), Species("M2", 2.0), Species("M3", 1.0)),
        catalysts=("E1",),
    )
    with pytest.raises(UnsatisfiableMappingError) as err:
        map_physical_to_chemical(loop3(), catalog)
    assert err.value.constraint_class == "catalyst-count"


def test_map_energy_mismatch_reports_class():
    catalog = SpeciesCatalog(
        species=(Species("X", 9.0), Species("Y", 9.5), Species("Z", 8.5)),
        catalysts=("E1", "E2", "E3"),
    )
    with pytest.raises(UnsatisfiableMappingError) as err:
        map_physical_to_chemical(loop3(), catalog)
    assert err.value.constraint_class in ("energy-match", "energy-order")


def brute_force_assignments(points, catalog, etol_scale, constraints):
    """All injective species assignments satisfying the energy constraints,
    in lexicographic species-id order."""
    e_max = max(sp.energy for sp in catalog.species)
    h_max = max(p.height for p in points)
    scale = e_max / h_max if h_max else 1.0
    etol = constraints.energy_tolerance * e_max
    ordered = sorted(catalog.species, key=lambda sp: sp.id)
    for combo in itertools.permutations(ordered, len(points)):
        ok = True
        for p, sp in zip(points, combo):
            if abs(sp.energy - p.height * scale) > etol:
                ok = False
                break
        if not ok:
            continue
        yield tuple(sp.id for sp in combo)


def test_map_matches_exhaustive_enumeration_oracle():
    sys = loop3()
    catalog = SpeciesCatalog(
        species=(
            Species("A", 3.0), Species("B", 2.1), Species("C", 0.9),
            Species("D", 2.0), Species("E", 1.2),
        ),
        catalysts=("K1", "K2", "K3"),
    )
    constraints = MappingConstraints(energy_tolerance=0.2, activation_tolerance=1.0)
    result = map_physical_to_chemical(sys, catalog, constraints)

    points = sys.track.stable_points()
    transitions = sys.track.transitions()
    valid = []
    for assign in brute_force_assignments(points, catalog, 0.2, constraints):
        energies = {sid: next(sp.energy for sp in catalog.species if sp.id == sid)
                    for sid in assign}
        ok = True
        for tr in transitions:
            ha, hb = points[tr.src].height, points[tr.dst].height
            ea, eb = energies[assign[tr.src]], energies[assign[tr.dst]]
            if ha > hb and not ea > eb:
                ok = False
            if ha < hb and not ea < eb:
                ok = False
        if ok:
            valid.append(assign)
    assert valid, "oracle found no valid assignment; test setup is wrong"
    assert result.assignment == min(valid)


def test_map_is_deterministic():
    a = map_physical_to_chemical(loop3(), minimal_catalog())
    b = map_physical_to_chemical(loop3(), minimal_catalog())
    assert a.assignment == b.assignment
    assert [r.id for r in a.network.reactions] == [r.id for r in b.network.reactions]


def test_refine_with_cycle_adds_loop_through_species():
    net = triangle_network()
    refined = refine_with_cycle(
        net, "M3", [Species("X1", 1.5), Species("X2", 0.5)], catalysts=["K1", "K2", "K3"]
    )
    ids = [sp.id for sp in refined.catalog]
    assert "X1" in ids and "X2" in ids
    assert len([i for i in ids if not i.startswith(("E", "K"))]) == 5
    adj = species_digraph(refined)
    n_cycles, _ = adjacency_cycles(adj)
    assert n_cycles == 2
    dec = find_sccs(adj)
    assert dec.count == 1  # both cycles share M3, fusing into one component


def test_refine_rejects_empty_and_colliding_specs():
    net = triangle_network()
    with pytest.raises(ValueError):
        refine_with_cycle(net, "M3", [])
    with pytest.raises(ValueError):
        refine_with_cycle(net, "M3", [Species("M1", 1.0)])
    with pytest.raises(KeyError):
        refine_with_cycle(net, "nope", [Species("X", 1.0)])


def test_refine_then_remove_restores_digraph():
    net = triangle_network()
    before = species_digraph(net)
    refined = refine_with_cycle(net, "M3", [Species("X1", 1.5), Species("X2", 0.5)])
    from spl_forge.core import ReactionNetwork

    stripped = ReactionNetwork(
        tuple(sp for sp in refined.catalog if not sp.id.startswith("X")),
        tuple(
            r for r in refined.reactions
            if not any(s.startswith("X") for s, _ in (*r.reactants, *r.products))
        ),
        refined.environment,
    )
    assert species_digraph(stripped) == before


def test_merge_networks_fuses_shared_species():
    a = triangle_network()
    b_species = (
        Species("M3", 1.0), Species("N1", 2.5), Species("N2", 0.5),
        Species("F1", 0.0), Species("F2", 0.0), Species("F3", 0.0),
    )
    b_reactions = (
        Reaction("M3_to_N1", (("M3", 1),), (("N1", 1),), 1.5, 1.0, "F1"),
        Reaction("N1_to_N2", (("N1", 1),), (("N2", 1),), 0.0, 1.0, "F2"),
        Reaction("N2_to_M3", (("N2", 1),), (("M3", 1),), 0.5, 1.0, "F3"),
    )
    from spl_forge.core import EnergyEnvironment, ReactionNetwork

    b = ReactionNetwork(
        b_species, b_reactions,
        EnergyEnvironment(abundant_inputs=(("F1", 1), ("F2", 1), ("F3", 1))),
    )
    merged = merge_networks(a, b)
    m_ids = {sp.id for sp in merged.catalog if sp.id.startswith(("M", "N"))}
    assert m_ids == {"M1", "M2", "M3", "N1", "N2"}
    dec = find_sccs(species_digraph(merged))
    assert dec.count == 1  # the two loops fuse through the shared species


def test_merge_conflicting_energy_is_error():
    a = triangle_network()
    from spl_forge.core import ReactionNetwork

    b = ReactionNetwork(
        (Species("M1", 99.0), Species("Q", 1.0)),
        (Reaction("r", (("M1", 1),), (("Q", 1),), 98.0),),
    )
    with pytest.raises(ValueError, match="conflict"):
        merge_networks(a, b)


def test_link_without_return_keeps_sccs_and_notes():
    from spl_forge.core import EnergyEnvironment, ReactionNetwork

    a = triangle_network()
    b_species = (
        Species("P1", 2.0), Species("P2", 1.0), Species("P3", 3.0),
        Species("G1", 0.0), Species("G2", 0.0), Species("G3", 0.0),
    )
    b = ReactionNetwork(
        b_species,
        (
            Reaction("P1_to_P2", (("P1", 1),), (("P2", 1),), 0.5, 1.0, "G1"),
            Reaction("P2_to_P3", (("P2", 1),), (("P3", 1),), 2.0, 1.0, "G2"),
            Reaction("P3_to_P1", (("P3", 1),), (("P1", 1),), 0.0, 1.0, "G3"),
        ),
        EnergyEnvironment(abundant_inputs=(("G1", 1), ("G2", 1), ("G3", 1))),
    )
    bridge = Reaction("M1_to_P1", (("M1", 1),), (("P1", 1),), 0.0)
    linked = link_networks(a, b, [bridge])
    dec = find_sccs(species_digraph(linked.network))
    assert dec.count == 2
    assert linked.notes and "no new cycle" in linked.notes[0]


def test_link_with_return_creates_cycle_and_no_note():
    from spl_forge.core import EnergyEnvironment, ReactionNetwork

    a = triangle_network()
    b = ReactionNetwork(
        (Species("P1", 2.0),),
        (),
    )
    bridges = [
        Reaction("M1_to_P1", (("M1", 1),), (("P1", 1),), 0.0),
        Reaction("P1_to_M2", (("P1", 1),), (("M2", 1),), 0.0),
    ]
    linked = link_networks(a, b, bridges)
    assert linked.notes == ()
    adj = species_digraph(linked.network)
    n_cycles, _ = adjacency_cycles(adj)
    assert n_cycles >= 2


def test_bridge_must_touch_both_networks():
    from spl_forge.core import ReactionNetwork

    a = triangle_network()
    b = ReactionNetwork((Species("P1", 2.0), Species("P2", 3.0)),
                        (Reaction("p", (("P1", 1),), (("P2", 1),), 1.0),))
    with pytest.raises(ValueError, match="both networks"):
        link_networks(a, b, [Reaction("inner", (("M1", 1),), (("M2", 1),), 0.0)])
