"""Mapping physical looped tracks onto reaction networks.

Valleys become species whose energies mirror the (rescaled) valley heights;
valley-to-valley transitions become reactions whose activation energies
mirror the barrier crossed, each assisted by a distinct catalyst.  The
search assigns catalog species to valleys by deterministic backtracking and
returns the first satisfying assignment in lexicographic order, or an
explicit unsatisfiable error naming the constraint class that blocked it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import (
    EnergyEnvironment,
    Reaction,
    ReactionNetwork,
    Species,
    delta_energy,
    species_digraph,
    validate_network,
)
from .track import PhysicalSystem, StablePoint, TrackGraph, Transition

__all__ = [
    "SpeciesCatalog",
    "MappingConstraints",
    "MappingResult",
    "UnsatisfiableMappingError",
    "required_species_count",
    "map_physical_to_chemical",
    "refine_with_cycle",
    "merge_networks",
    "link_networks",
    "LinkResult",
]

HTOL = 1e-9


class UnsatisfiableMappingError(ValueError):
    def __init__(self, constraint_class: str, detail: str):
        self.constraint_class = constraint_class
        super().__init__(f"no satisfying assignment ({constraint_class}): {detail}")


@dataclass(frozen=True)
class SpeciesCatalog:
    """Species available for assignment plus available catalyst ids."""

    species: tuple[Species, ...]
    catalysts: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [sp.id for sp in self.species]
        if len(set(ids)) != len(ids):
            raise ValueError("catalog species ids must be unique")
        if len(set(self.catalysts)) != len(self.catalysts):
            raise ValueError("catalyst ids must be unique")
        overlap = set(ids) & set(self.catalysts)
        if overlap:
            raise ValueError(f"ids used as both species and catalyst: {sorted(overlap)}")


@dataclass(frozen=True)
class MappingConstraints:
    energy_tolerance: float = 0.25
    activation_tolerance: float = 0.25

    def __post_init__(self):
        for name, v in (("energy_tolerance", self.energy_tolerance),
                        ("activation_tolerance", self.activation_tolerance)):
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")


@dataclass(frozen=True)
class MappingResult:
    assignment: tuple[str, ...]            # species id per stable point
    points: tuple[StablePoint, ...]
    transitions: tuple[Transition, ...]
    catalyst_of: tuple[str, ...]           # per transition
    uphill_reaction_ids: tuple[str, ...]   # energy-consuming closing steps
    network: ReactionNetwork
    height_scale: float


def _as_track(sys_or_track) -> TrackGraph:
    if isinstance(sys_or_track, PhysicalSystem):
        return sys_or_track.track
    return sys_or_track


def required_species_count(sys_or_track) -> tuple[int, int]:
    """(number of stable points, number of distinct transitions).

    The chaining constraint (one species per stable point, products of one
    step feeding the next) collapses the naive three-chemicals-per-reaction
    count down to this pair.
    """
    track = _as_track(sys_or_track)
    if not track.is_closed():
        raise ValueError("required_species_count needs a closed track")
    points = track.stable_points()
    transitions = track.transitions()
    return len(points), len(transitions)


def map_physical_to_chemical(
    sys_or_track,
    catalog: SpeciesCatalog,
    constraints: MappingConstraints | None = None,
) -> MappingResult:
    """Assign catalog species to stable points and build the mapped network.

    Constraints, checked during the deterministic backtracking search:
      1. rescaled valley height matches the species energy within
         energy_tolerance (relative to the top catalog energy),
      2. energies strictly decrease along each downhill transition (and
         strictly increase along uphill ones),
      3. chaining holds by construction (one species per stable point),
      4. every transition gets a distinct catalyst, and its activation energy
         stays within activation_tolerance of the mapped barrier height.
    """
    constraints = constraints or MappingConstraints()
    track = _as_track(sys_or_track)
    if not track.is_closed():
        raise ValueError("mapping needs a closed track")
    if not catalog.species:
        raise UnsatisfiableMappingError("empty-catalog", "catalog has no species")

    points = track.stable_points()
    transitions = track.transitions()
    if not points:
        raise UnsatisfiableMappingError("no-stable-points", "track has no stable point")
    if len(catalog.species) < len(points):
        raise UnsatisfiableMappingError(
            "energy-match",
            f"{len(points)} stable points but only {len(catalog.species)} species",
        )
    if len(catalog.catalysts) < len(transitions):
        raise UnsatisfiableMappingError(
            "catalyst-count",
            f"{len(transitions)} transitions but only {len(catalog.catalysts)} catalysts",
        )

    e_max = max(sp.energy for sp in catalog.species)
    h_max = max(p.height for p in points)
    scale = (e_max / h_max) if h_max > 0 else 1.0
    targets = [p.height * scale for p in points]
    scale_ref = max(e_max, 1e-12)
    etol = constraints.energy_tolerance * scale_ref
    atol = constraints.activation_tolerance * scale_ref

    ordered = sorted(catalog.species, key=lambda sp: sp.id)
    n = len(points)
    assignment: list[Species | None] = [None] * n
    used: set[str] = set()
    deepest_failure = (-1, "energy-match", "no species within energy tolerance")

    def order_ok(i: int) -> bool:
        for tr in transitions:
            a, b = tr.src, tr.dst
            if assignment[a] is None or assignment[b] is None:
                continue
            ha, hb = points[a].height, points[b].height
            ea, eb = assignment[a].energy, assignment[b].energy
            if ha > hb + HTOL and not ea > eb:
                return False
            if ha < hb - HTOL and not ea < eb:
                return False
            if abs(ha - hb) <= HTOL and abs(ea - eb) > etol:
                return False
        return True

    def search(i: int) -> bool:
        nonlocal deepest_failure
        if i == n:
            return True
        for sp in ordered:
            if sp.id in used:
                continue
            if abs(sp.energy - targets[i]) > etol:
                if i > deepest_failure[0]:
                    deepest_failure = (
                        i, "energy-match",
                        f"stable point {i} (target energy {targets[i]:.4g}) has no match",
                    )
                continue
            assignment[i] = sp
            if not order_ok(i):
                if i > deepest_failure[0]:
                    deepest_failure = (
                        i, "energy-order",
                        f"assigning {sp.id!r} to stable point {i} breaks the downhill order",
                    )
                assignment[i] = None
                continue
            used.add(sp.id)
            if search(i + 1):
                return True
            used.discard(sp.id)
            assignment[i] = None
        return False

    if not search(0):
        _, cls, detail = deepest_failure
        raise UnsatisfiableMappingError(cls, detail)

    chosen: list[Species] = [sp for sp in assignment if sp is not None]
    reactions: list[Reaction] = []
    catalyst_of: list[str] = []
    uphill: list[str] = []
    for idx, tr in enumerate(transitions):
        src_sp, dst_sp = chosen[tr.src], chosen[tr.dst]
        barrier = (tr.peak_height - points[tr.src].height) * scale
        de = dst_sp.energy - src_sp.energy
        ea = max(barrier, de, 0.0)
        if abs(ea - barrier) > atol:
            raise UnsatisfiableMappingError(
                "activation-energy",
                f"transition {src_sp.id}->{dst_sp.id} needs ea={ea:.4g} but the mapped "
                f"barrier is {barrier:.4g} (tolerance {atol:.4g})",
            )
        cat = catalog.catalysts[idx]
        rid = f"{src_sp.id}_to_{dst_sp.id}"
        reactions.append(
            Reaction(
                id=rid,
                reactants=((src_sp.id, 1),),
                products=((dst_sp.id, 1),),
                activation_energy=ea,
                base_rate=1.0,
                catalyst=cat,
            )
        )
        catalyst_of.append(cat)
        if de > HTOL:
            uphill.append(rid)

    catalyst_species = tuple(
        Species(cid, 0.0) for cid in catalog.catalysts[: len(transitions)]
    )
    net = ReactionNetwork(
        catalog=tuple(chosen) + catalyst_species,
        reactions=tuple(reactions),
        environment=EnergyEnvironment(
            abundant_inputs=tuple((sp.id, 1) for sp in catalyst_species)
        ),
    )
    return MappingResult(
        assignment=tuple(sp.id for sp in chosen),
        points=tuple(points),
        transitions=tuple(transitions),
        catalyst_of=tuple(catalyst_of),
        uphill_reaction_ids=tuple(uphill),
        network=net,
        height_scale=scale,
    )


def refine_with_cycle(
    net: ReactionNetwork,
    at_species: str,
    new_species: list[Species],
    catalysts: list[str] | None = None,
    base_rate: float = 1.0,
) -> ReactionNetwork:
    """Replace a species' terminal role with an inserted reaction cycle
    through it: at -> n1 -> ... -> nk -> at.

    Catalysts, if given, are assigned one per inserted reaction and added as
    zero-energy chemostatted species.
    """
    ids = {sp.id for sp in net.catalog}
    if at_species not in ids:
        raise KeyError(f"unknown species {at_species!r}")
    if not new_species:
        raise ValueError("cycle insertion needs at least one new species")
    for sp in new_species:
        if sp.id in ids:
            raise ValueError(f"new species id {sp.id!r} collides with the catalog")
    n_rxn = len(new_species) + 1
    if catalysts is not None:
        if len(catalysts) != n_rxn:
            raise ValueError(f"need {n_rxn} catalysts, got {len(catalysts)}")
        for cid in catalysts:
            if cid in ids:
                raise ValueError(f"catalyst id {cid!r} collides with the catalog")

    by_id = dict(net.species_by_id)
    for sp in new_species:
        by_id[sp.id] = sp
    chain = [at_species] + [sp.id for sp in new_species] + [at_species]
    reactions = list(net.reactions)
    for k, (src, dst) in enumerate(zip(chain, chain[1:])):
        de = by_id[dst].energy - by_id[src].energy
        rid = f"{src}_to_{dst}"
        if any(r.id == rid for r in reactions):
            rid = f"{rid}.{k}"
        reactions.append(
            Reaction(
                id=rid,
                reactants=((src, 1),),
                products=((dst, 1),),
                activation_energy=max(0.0, de),
                base_rate=base_rate,
                catalyst=None if catalysts is None else catalysts[k],
            )
        )

    catalog = tuple(net.catalog) + tuple(new_species)
    env = net.environment
    if catalysts is not None:
        catalog = catalog + tuple(Species(cid, 0.0) for cid in catalysts)
        env = EnergyEnvironment(
            burst_rate=env.burst_rate,
            burst_energy=env.burst_energy,
            abundant_inputs=env.abundant_inputs + tuple((cid, 1) for cid in catalysts),
        )
    return ReactionNetwork(catalog=catalog, reactions=tuple(reactions), environment=env)


def merge_networks(a: ReactionNetwork, b: ReactionNetwork,
                   validate: bool = True) -> ReactionNetwork:
    """Union of catalogs and reactions, fusing identically named species.

    Same id with different energy or half-life is an error; duplicate
    reaction ids must be identical reactions.  The merged environment keeps
    the first network's burst settings and unions the chemostats.
    """
    by_id = dict(a.species_by_id)
    catalog = list(a.catalog)
    for sp in b.catalog:
        if sp.id in by_id:
            have = by_id[sp.id]
            if have.energy != sp.energy or have.half_life != sp.half_life:
                raise ValueError(
                    f"species {sp.id!r} conflicts: energy {have.energy} vs {sp.energy}, "
                    f"half_life {have.half_life} vs {sp.half_life}"
                )
        else:
            by_id[sp.id] = sp
            catalog.append(sp)
    reactions = list(a.reactions)
    rids = {r.id: r for r in reactions}
    for r in b.reactions:
        if r.id in rids:
            if rids[r.id] != r:
                raise ValueError(f"reaction id {r.id!r} conflicts between networks")
        else:
            reactions.append(r)
            rids[r.id] = r
    abundant = dict(a.environment.abundant_inputs)
    for sid, count in b.environment.abundant_inputs:
        if sid in abundant and abundant[sid] != count:
            raise ValueError(f"chemostat count for {sid!r} conflicts")
        abundant[sid] = count
    env = EnergyEnvironment(
        burst_rate=a.environment.burst_rate,
        burst_energy=a.environment.burst_energy,
        abundant_inputs=tuple(abundant.items()),
    )
    merged = ReactionNetwork(tuple(catalog), tuple(reactions), env)
    if validate:
        violations = validate_network(merged)
        if violations:
            raise ValueError(f"merge produced an invalid network: {violations}")
    return merged


@dataclass(frozen=True)
class LinkResult:
    network: ReactionNetwork
    notes: tuple[str, ...] = field(default=())


def link_networks(a: ReactionNetwork, b: ReactionNetwork,
                  bridge_reactions: list[Reaction]) -> LinkResult:
    """Merge two networks and add bridge reactions spanning them.

    Emits a note when the bridges close no new cycle between the parts.
    """
    from .graphs import strongly_connected_components

    merged = merge_networks(a, b, validate=False)
    if not bridge_reactions:
        raise ValueError("link needs at least one bridge reaction")
    a_ids = {sp.id for sp in a.catalog}
    b_ids = {sp.id for sp in b.catalog}
    for r in bridge_reactions:
        touched = {sid for sid, _ in (*r.reactants, *r.products)}
        if not (touched & a_ids) or not (touched & b_ids):
            raise ValueError(
                f"bridge reaction {r.id!r} must reference species from both networks"
            )
    linked = ReactionNetwork(
        merged.catalog,
        merged.reactions + tuple(bridge_reactions),
        merged.environment,
    )
    violations = validate_network(linked)
    if violations:
        raise ValueError(f"link produced an invalid network: {violations}")
    # a genuinely new cycle shows up as a strongly connected component
    # spanning species exclusive to each part
    a_only = a_ids - b_ids
    b_only = b_ids - a_ids
    spanning = any(
        set(comp) & a_only and set(comp) & b_only
        for comp in strongly_connected_components(species_digraph(linked))
    )
    notes = () if spanning else ("bridges close no new cycle between the linked parts",)
    return LinkResult(network=linked, notes=notes)
