"""Core domain types: species, reactions, networks, and energy accounting.

Energies are abstract energy units (a.e.u.); only relative values matter.
All types are immutable value objects, safe to share across concurrent
simulation workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

__all__ = [
    "Species",
    "Reaction",
    "EnergyEnvironment",
    "ReactionNetwork",
    "EnergyLedger",
    "Violation",
    "CatalogError",
    "NetworkValidationError",
    "PUMP_CATALYST_PREFIX",
    "delta_energy",
    "validate_network",
    "species_digraph",
    "parse_multiset",
    "format_multiset",
]

PUMP_CATALYST_PREFIX = "pump:"

MAX_STOICH = 9  # examples in this domain are uni/bimolecular; keep coefficients small


class CatalogError(KeyError):
    """A referenced species id does not exist in the catalog."""


class NetworkValidationError(ValueError):
    """Raised by operations that require a valid network."""

    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Species:
    """A named chemical with an abstract energy level and optional half-life.

    ``half_life`` is in simulation time units; ``math.inf`` means the species
    never degrades.
    """

    id: str
    energy: float
    half_life: float = math.inf

    def __post_init__(self):
        if not self.id:
            raise ValueError("species id must be non-empty")
        if not (self.energy >= 0 and math.isfinite(self.energy)):
            raise ValueError(f"species {self.id!r}: energy must be finite and >= 0")
        if not self.half_life > 0:
            raise ValueError(f"species {self.id!r}: half_life must be > 0")


Multiset = tuple[tuple[str, int], ...]


def parse_multiset(text: str) -> Multiset:
    """Parse ``"2*A + B"`` into a sorted ((id, coeff), ...) tuple."""
    terms: dict[str, int] = {}
    for raw in text.split("+"):
        raw = raw.strip()
        if not raw:
            raise ValueError(f"empty term in multiset {text!r}")
        if "*" in raw:
            coeff_s, _, sid = raw.partition("*")
            try:
                coeff = int(coeff_s.strip())
            except ValueError:
                raise ValueError(f"bad coefficient {coeff_s!r} in {text!r}") from None
            sid = sid.strip()
        else:
            coeff, sid = 1, raw
        if coeff < 1 or coeff > MAX_STOICH:
            raise ValueError(f"coefficient {coeff} out of range 1..{MAX_STOICH} in {text!r}")
        if not sid:
            raise ValueError(f"missing species id in {text!r}")
        terms[sid] = terms.get(sid, 0) + coeff
    return tuple(sorted(terms.items()))


def format_multiset(ms: Multiset) -> str:
    return " + ".join(sid if k == 1 else f"{k}*{sid}" for sid, k in ms)


@dataclass(frozen=True)
class Reaction:
    """reactants -> products with an activation barrier and optional catalyst.

    The catalyst is conserved: it is required (and rate-multiplying) but never
    consumed, so it does not appear in the multisets.  A catalyst of the form
    ``pump:<id>`` means the reaction runs inside that pump.
    """

    id: str
    reactants: Multiset
    products: Multiset
    activation_energy: float
    base_rate: float = 1.0
    catalyst: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("reaction id must be non-empty")
        if self.activation_energy < 0:
            raise ValueError(f"reaction {self.id!r}: activation_energy must be >= 0")
        if not self.base_rate > 0:
            raise ValueError(f"reaction {self.id!r}: base_rate must be > 0")
        for side in (self.reactants, self.products):
            for sid, k in side:
                if k < 1 or k > MAX_STOICH:
                    raise ValueError(
                        f"reaction {self.id!r}: coefficient {k} for {sid!r} out of range"
                    )

    @property
    def pump_host(self) -> str | None:
        if self.catalyst and self.catalyst.startswith(PUMP_CATALYST_PREFIX):
            return self.catalyst[len(PUMP_CATALYST_PREFIX):]
        return None

    @property
    def catalyst_species(self) -> str | None:
        if self.catalyst and not self.catalyst.startswith(PUMP_CATALYST_PREFIX):
            return self.catalyst
        return None

    def reversed(self) -> "Reaction":
        return replace(self, reactants=self.products, products=self.reactants)


@dataclass(frozen=True)
class EnergyEnvironment:
    """Poisson energy bursts plus chemostatted (fixed-count) input species."""

    burst_rate: float = 0.0
    burst_energy: float = 0.0
    abundant_inputs: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        if self.burst_rate < 0 or self.burst_energy < 0:
            raise ValueError("burst_rate and burst_energy must be >= 0")
        for sid, count in self.abundant_inputs:
            if count < 0:
                raise ValueError(f"abundant count for {sid!r} must be >= 0")

    @property
    def abundant(self) -> dict[str, int]:
        return dict(self.abundant_inputs)


@dataclass(frozen=True)
class ReactionNetwork:
    """Species catalog + reactions + environment.

    Catalog order is significant: it fixes trajectory column order and all
    serialized output.
    """

    catalog: tuple[Species, ...]
    reactions: tuple[Reaction, ...] = ()
    environment: EnergyEnvironment = field(default_factory=EnergyEnvironment)

    def __post_init__(self):
        seen = set()
        for sp in self.catalog:
            if sp.id in seen:
                raise ValueError(f"duplicate species id {sp.id!r}")
            seen.add(sp.id)
        rseen = set()
        for r in self.reactions:
            if r.id in rseen:
                raise ValueError(f"duplicate reaction id {r.id!r}")
            rseen.add(r.id)

    @property
    def species_by_id(self) -> dict[str, Species]:
        return {sp.id: sp for sp in self.catalog}

    @property
    def species_ids(self) -> tuple[str, ...]:
        return tuple(sp.id for sp in self.catalog)

    def species(self, sid: str) -> Species:
        for sp in self.catalog:
            if sp.id == sid:
                return sp
        raise CatalogError(sid)

    def reaction(self, rid: str) -> Reaction:
        for r in self.reactions:
            if r.id == rid:
                return r
        raise KeyError(rid)


@dataclass
class EnergyLedger:
    """Cumulative energy bookkeeping for one simulation run.

    The closure invariant checked by simulators and the replay oracle:

        (chemical + pool) - (chemical0 + pool0)
            == injected + chemostat - leaked - dissipated

    ``chemostat`` is the net energy exchanged with fixed-count reservoirs and
    ``dissipated`` covers irreversible mechanical losses (friction, pump
    cycle costs); both are zero for a closed chemical run, recovering the
    plain ``chemical + pool - injected`` constancy.
    """

    chemical0: float = 0.0
    pool0: float = 0.0
    injected: float = 0.0
    leaked: float = 0.0
    dissipated: float = 0.0
    chemostat: float = 0.0

    def residual(self, chemical: float, pool: float) -> float:
        return (chemical + pool) - (self.chemical0 + self.pool0) - (
            self.injected + self.chemostat - self.leaked - self.dissipated
        )

    def scale(self) -> float:
        return max(
            1.0,
            abs(self.chemical0) + abs(self.pool0),
            abs(self.injected),
            abs(self.leaked) + abs(self.dissipated) + abs(self.chemostat),
        )


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.kind}] {self.subject}: {self.message}"


def delta_energy(reaction: Reaction, catalog) -> float:
    """Energy change of a reaction: sum over products minus sum over reactants.

    Negative means downhill (releases energy), positive means uphill.
    ``catalog`` is a mapping id -> Species or a ReactionNetwork.
    """
    if isinstance(catalog, ReactionNetwork):
        catalog = catalog.species_by_id

    def side_energy(side: Multiset) -> float:
        total = 0.0
        for sid, k in side:
            if sid not in catalog:
                raise CatalogError(f"unknown species {sid!r} in reaction {reaction.id!r}")
            total += k * catalog[sid].energy
        return total

    # summing each side separately keeps reversal exactly antisymmetric
    return side_energy(reaction.products) - side_energy(reaction.reactants)


def validate_network(net: ReactionNetwork) -> list[Violation]:
    """Report all invariant violations; an empty list means the network is valid.

    Checks: dangling species references, activation energy below the uphill
    energy gap, empty reaction sides, and isolated species (no reaction edge
    at all; catalysts and chemostatted inputs are exempt since they act
    through other channels).
    """
    out: list[Violation] = []
    ids = {sp.id for sp in net.catalog}

    for sid, _count in net.environment.abundant_inputs:
        if sid not in ids:
            out.append(Violation("dangling-id", sid, "abundant species not in catalog"))

    touched: set[str] = set()
    catalyst_ids: set[str] = set()
    for r in net.reactions:
        if not r.reactants:
            out.append(Violation("empty-side", r.id, "no reactants"))
        if not r.products:
            out.append(Violation("empty-side", r.id, "no products"))
        dangling = [
            sid for sid, _ in (*r.reactants, *r.products) if sid not in ids
        ]
        for sid in dangling:
            out.append(Violation("dangling-id", r.id, f"unknown species {sid!r}"))
        cat = r.catalyst_species
        if cat is not None:
            if cat not in ids:
                out.append(Violation("dangling-id", r.id, f"unknown catalyst {cat!r}"))
            else:
                catalyst_ids.add(cat)
        if not dangling:
            de = delta_energy(r, net)
            if r.activation_energy < max(0.0, de) - 1e-12:
                out.append(
                    Violation(
                        "activation-energy",
                        r.id,
                        f"activation_energy {r.activation_energy} < "
                        f"uphill gap {max(0.0, de):.6g}",
                    )
                )
            touched.update(sid for sid, _ in r.reactants)
            touched.update(sid for sid, _ in r.products)

    exempt = catalyst_ids | set(net.environment.abundant)
    for sp in net.catalog:
        if net.reactions and sp.id not in touched and sp.id not in exempt:
            out.append(Violation("isolated-species", sp.id, "no reaction edge"))
    return out


def species_digraph(net: ReactionNetwork) -> dict[str, list[str]]:
    """Induced directed species graph: edge s -> s' iff some reaction consumes
    s and produces s'.  Nodes are the species that take part in reactions;
    pure catalysts and bystanders act outside the graph.  Adjacency lists are
    sorted for reproducible output.

    Raises NetworkValidationError if the network fails validation.
    """
    violations = validate_network(net)
    if violations:
        raise NetworkValidationError(violations)
    touched = [
        sp.id for sp in net.catalog
        if any(
            any(sid == sp.id for sid, _ in (*r.reactants, *r.products))
            for r in net.reactions
        )
    ]
    adj: dict[str, set[str]] = {sid: set() for sid in touched}
    for r in net.reactions:
        for src, _ in r.reactants:
            for dst, _ in r.products:
                adj[src].add(dst)
    return {sid: sorted(adj[sid]) for sid in touched}
