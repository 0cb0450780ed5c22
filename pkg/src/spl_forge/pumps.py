"""Active material-energy looped compartments ("pumps").

A pump is an elastic compartment that expands while free energy pushes
against the membrane, actively sucking inputs in through its intake(s),
then contracts elastically, expelling products through its exhaust(s).
Hosting a reaction makes the pump act as a universal catalyst: confinement
concentrates reactants (rate multiplier), while the pump itself is left
unchanged by the chemistry.

Designs:
  A  one pass-all intake, one pass-all exhaust
  B  design A plus a secondary exothermic fuel reaction powering the primary
  C  multiple openings on each side
  D  openings admit only a specific set of species
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Reaction, ReactionNetwork, delta_energy

__all__ = [
    "SelectivityFilter",
    "Pump",
    "PumpError",
    "SustainabilityReport",
    "make_pump",
    "jump_start",
    "pump_cycle_step",
    "catalytic_factor",
    "apply_choke",
    "resolve_backpressure",
    "attach_fuel_loop",
    "sustainability_check",
    "SUSTAINED_CYCLES",
]

SUSTAINED_CYCLES = 10  # "long time" operationalized with the longevity factor
DEFAULT_CONFINEMENT_CAP = 100.0
VOLUME_EPS = 1e-9


class PumpError(ValueError):
    pass


@dataclass
class SelectivityFilter:
    direction: str                      # "intake" | "exhaust"
    species: frozenset[str] | None = None   # None = pass-all
    severity: float = 0.0               # choke level in [0, 1]

    def passes(self, species_id: str) -> bool:
        return self.species is None or species_id in self.species

    @property
    def flux_factor(self) -> float:
        return 1.0 - self.severity


@dataclass
class Pump:
    id: str
    design: str
    v_min: float
    v_max: float
    kappa: float
    e_mech: float
    e_js: float
    intakes: list[SelectivityFilter]
    exhausts: list[SelectivityFilter]
    hosted: tuple[str, ...] = ()
    fuel: str | None = None

    # tunables
    expansion_rate: float = 1.0     # volume growth per unit pool pressure per time
    suction: float = 2.0            # expected intake draws per unit volume gained
    exhaust_coeff: float = 2.0      # expected expulsions per unit volume lost
    beta: float = 0.05              # backpressure clearing coefficient
    v_env_ref: float | None = None  # reference ambient volume for confinement
    confinement_cap: float = DEFAULT_CONFINEMENT_CAP

    # state
    volume: float = field(default=0.0)
    phase: str = "idle"             # idle | expanding | contracting
    internal_counts: dict[str, int] = field(default_factory=dict)
    internal_pool: float = 0.0
    cycle_count: int = 0
    membrane_damaged: bool = False

    # cumulative accounting (event-log mirror)
    intake_energy: float = 0.0
    exhaust_energy: float = 0.0
    mech_paid: float = 0.0
    jump_energy: float = 0.0
    released_total: float = 0.0     # pool credits from hosted downhill firings
    consumed_total: float = 0.0     # pool debits from hosted uphill firings

    def __post_init__(self):
        if self.design not in ("A", "B", "C", "D"):
            raise PumpError(f"pump {self.id!r}: unknown design {self.design!r}")
        if not (0 < self.v_min <= self.v_max):
            raise PumpError(f"pump {self.id!r}: need 0 < v_min <= v_max")
        if not self.kappa > 0:
            raise PumpError(f"pump {self.id!r}: kappa must be > 0")
        if self.e_mech < 0 or self.e_js < 0:
            raise PumpError(f"pump {self.id!r}: energies must be >= 0")
        if self.design in ("A", "B"):
            if len(self.intakes) != 1 or len(self.exhausts) != 1:
                raise PumpError(f"pump {self.id!r}: design {self.design} has exactly one intake and one exhaust")
        if not self.intakes or not self.exhausts:
            raise PumpError(f"pump {self.id!r}: needs at least one intake and one exhaust")
        if self.volume == 0.0:
            self.volume = self.v_min
        if self.v_env_ref is None:
            self.v_env_ref = self.confinement_cap * self.v_max

    def clone(self) -> "Pump":
        return replace(
            self,
            intakes=[replace(f) for f in self.intakes],
            exhausts=[replace(f) for f in self.exhausts],
            internal_counts=dict(self.internal_counts),
        )

    def hosts(self, reaction_id: str) -> bool:
        return reaction_id in self.hosted or reaction_id == self.fuel

    def chemical_energy(self, species_energy: dict[str, float]) -> float:
        return sum(n * species_energy[s] for s, n in self.internal_counts.items())

    def ledger_residual(self, species_energy: dict[str, float]) -> float:
        """Local ledger: internal chemical + pool against the boundary flows."""
        inside = self.chemical_energy(species_energy) + self.internal_pool
        return inside - (self.intake_energy + self.jump_energy
                         - self.exhaust_energy - self.mech_paid)


def make_pump(pump_id: str, design: str, *, v_min: float = 1.0, v_max: float = 4.0,
              kappa: float = 1.0, e_mech: float = 1.0, e_js: float = 1.0,
              intake_species: frozenset[str] | None = None,
              exhaust_species: frozenset[str] | None = None,
              hosted: tuple[str, ...] = (), fuel: str | None = None,
              **tunables) -> Pump:
    """Construct a pump with design-appropriate openings."""
    n_openings = 2 if design == "C" else 1
    if design != "D":
        intake_species = exhaust_species = None
    intakes = [SelectivityFilter("intake", intake_species) for _ in range(n_openings)]
    exhausts = [SelectivityFilter("exhaust", exhaust_species) for _ in range(n_openings)]
    return Pump(
        id=pump_id, design=design, v_min=v_min, v_max=v_max, kappa=kappa,
        e_mech=e_mech, e_js=e_js, intakes=intakes, exhausts=exhausts,
        hosted=tuple(hosted), fuel=fuel, **tunables,
    )


def jump_start(pump: Pump, energy: float) -> Pump:
    """Initiate the cycle: below the threshold nothing happens (no partial
    start); at or above it the energy is banked and an idle pump starts
    expanding.  Repeated calls keep accumulating pool energy."""
    if energy < pump.e_js:
        return pump
    pump.internal_pool += energy
    pump.jump_energy += energy
    if pump.phase == "idle":
        pump.phase = "expanding"
    return pump


def apply_choke(pump: Pump, opening: str, severity: float) -> Pump:
    """Scale an opening's flux by (1 - severity).  ``opening`` is "intake" or
    "exhaust", optionally suffixed with an index ("intake1")."""
    if not 0.0 <= severity <= 1.0:
        raise PumpError("severity must lie in [0, 1]")
    if severity == 0.0:
        return pump
    group, idx = _opening_ref(pump, opening)
    group[idx].severity = max(group[idx].severity, severity)
    return pump


def _opening_ref(pump: Pump, opening: str):
    for prefix, group in (("intake", pump.intakes), ("exhaust", pump.exhausts)):
        if opening == prefix:
            return group, 0
        if opening.startswith(prefix):
            try:
                idx = int(opening[len(prefix):])
            except ValueError:
                break
            if not 0 <= idx < len(group):
                raise PumpError(f"pump {pump.id!r}: no opening {opening!r}")
            return group, idx
    raise PumpError(f"pump {pump.id!r}: no opening {opening!r}")


def resolve_backpressure(pump: Pump, rng: np.random.Generator) -> bool:
    """One clearing attempt against every choked opening, driven by the
    internal pressure proxy pool/volume.  Returns True if anything cleared."""
    pressure = pump.internal_pool / max(pump.volume, VOLUME_EPS)
    p_clear = min(1.0, pump.beta * pressure)
    cleared = False
    for f in (*pump.intakes, *pump.exhausts):
        if f.severity > 0.0 and rng.random() < p_clear:
            f.severity = 0.0
            cleared = True
    return cleared


def catalytic_factor(pump: Pump, reaction_id: str) -> float:
    """Confinement rate multiplier for a hosted reaction (>= 1, capped).

    Unhosted reactions get 1.0.  The factor is the concentration enhancement
    of squeezing ambient contents into the pump volume.
    """
    if not pump.hosts(reaction_id):
        return 1.0
    factor = pump.v_env_ref / max(pump.volume, VOLUME_EPS)
    return float(min(max(factor, 1.0), pump.confinement_cap))


def attach_fuel_loop(pump: Pump, fuel_reaction: Reaction,
                     net: ReactionNetwork) -> Pump:
    """Host a secondary exothermic reaction whose releases power the primary."""
    de = delta_energy(fuel_reaction, net)
    if de >= 0:
        raise PumpError(
            f"fuel reaction {fuel_reaction.id!r} must be exothermic (delta_energy={de:+g})"
        )
    pump.fuel = fuel_reaction.id
    if pump.design == "A":
        pump.design = "B"
    return pump


def pump_cycle_step(
    pump: Pump,
    env_counts: dict[str, int],
    species_energy: dict[str, float],
    rng: np.random.Generator,
    dt: float,
) -> tuple[list[tuple[str, int]], list[tuple[str, int]]]:
    """Advance the membrane by one tick; returns (intake, exhaust) events as
    (species, count) lists.  The caller owns the environment and applies the
    events; this function updates the pump's internal state and counts.

    Expansion is driven by internal pool pressure against the elastic
    restoring force; suction is proportional to the expansion rate.  At
    maximum volume or pressure exhaustion the phase flips; contraction
    relaxes elastically and expels through the exhaust; closing a cycle costs
    the mechanical budget, and an unpayable cycle parks the pump idle.
    """
    if pump.membrane_damaged:
        pump.phase = "idle"
        return [], []
    if pump.phase == "idle":
        return [], []

    intake_events: list[tuple[str, int]] = []
    exhaust_events: list[tuple[str, int]] = []

    if pump.phase == "expanding":
        resolve_backpressure(pump, rng)
        drive = pump.expansion_rate * pump.internal_pool - pump.kappa * (
            pump.volume - pump.v_min
        )
        dv = drive * dt
        if dv > 0.0:
            new_v = min(pump.volume + dv, pump.v_max)
            gained = new_v - pump.volume
            pump.volume = new_v
            intake_events = _draw_intake(pump, env_counts, rng, gained)
            for sid, n in intake_events:
                pump.internal_counts[sid] = pump.internal_counts.get(sid, 0) + n
                pump.intake_energy += n * species_energy[sid]
            if pump.volume >= pump.v_max - VOLUME_EPS:
                pump.phase = "contracting"
        else:
            pump.phase = "contracting"  # pressure exhausted
    elif pump.phase == "contracting":
        dv = pump.kappa * (pump.volume - pump.v_min) * dt
        new_v = max(pump.volume - dv, pump.v_min)
        lost = pump.volume - new_v
        pump.volume = new_v
        exhaust_events = _draw_exhaust(pump, rng, lost)
        for sid, n in exhaust_events:
            pump.internal_counts[sid] -= n
            pump.exhaust_energy += n * species_energy[sid]
        if pump.volume <= pump.v_min + max(VOLUME_EPS, 1e-6 * (pump.v_max - pump.v_min)):
            pump.volume = pump.v_min
            pump.cycle_count += 1
            if pump.internal_pool >= pump.e_mech:
                pump.internal_pool -= pump.e_mech
                pump.mech_paid += pump.e_mech
                pump.phase = "expanding"
            else:
                pump.phase = "idle"
    return intake_events, exhaust_events


def _draw_intake(pump: Pump, env_counts: dict[str, int],
                 rng: np.random.Generator, dv: float) -> list[tuple[str, int]]:
    events: dict[str, int] = {}
    taken: dict[str, int] = {}
    n_open = len(pump.intakes)
    for f in pump.intakes:
        lam = pump.suction * dv * f.flux_factor / n_open
        if lam <= 0.0:
            continue
        want = rng.poisson(lam)
        if want == 0:
            continue
        ids = sorted(
            sid for sid, n in env_counts.items()
            if n - taken.get(sid, 0) > 0 and f.passes(sid)
        )
        if not ids:
            continue
        avail = np.array([env_counts[sid] - taken.get(sid, 0) for sid in ids])
        want = min(want, int(avail.sum()))
        draw = rng.multivariate_hypergeometric(avail, want)
        for sid, n in zip(ids, draw):
            if n:
                events[sid] = events.get(sid, 0) + int(n)
                taken[sid] = taken.get(sid, 0) + int(n)
    return sorted(events.items())


def _draw_exhaust(pump: Pump, rng: np.random.Generator,
                  dv: float) -> list[tuple[str, int]]:
    events: dict[str, int] = {}
    n_open = len(pump.exhausts)
    for f in pump.exhausts:
        lam = pump.exhaust_coeff * dv * f.flux_factor / n_open
        if lam <= 0.0:
            continue
        want = rng.poisson(lam)
        if want == 0:
            continue
        ids = sorted(
            sid for sid, n in pump.internal_counts.items()
            if n - events.get(sid, 0) > 0 and f.passes(sid)
        )
        if not ids:
            continue
        avail = np.array([pump.internal_counts[sid] - events.get(sid, 0) for sid in ids])
        want = min(want, int(avail.sum()))
        draw = rng.multivariate_hypergeometric(avail, want)
        for sid, n in zip(ids, draw):
            if n:
                events[sid] = events.get(sid, 0) + int(n)
    return sorted(events.items())


@dataclass(frozen=True)
class SustainabilityReport:
    jump_started: bool
    energy_positive: bool
    inputs_available: bool
    openings_clear: bool
    membrane_intact: bool
    cycles_completed: int
    verdict: bool

    def conditions(self) -> dict[str, bool]:
        return {
            "jump_started": self.jump_started,
            "energy_positive": self.energy_positive,
            "inputs_available": self.inputs_available,
            "openings_clear": self.openings_clear,
            "membrane_intact": self.membrane_intact,
        }


def sustainability_check(pump: Pump, env_counts: dict[str, int]) -> SustainabilityReport:
    """Evaluate the five operating conditions after a simulation window.

    The verdict requires all conditions plus enough completed cycles to call
    the dynamics long-lived (the same factor used for loop longevity).
    """
    jump_started = pump.jump_energy > 0.0
    if pump.cycle_count > 0:
        energy_positive = pump.released_total >= pump.cycle_count * pump.e_mech
    else:
        energy_positive = pump.released_total > 0.0
    inputs_available = any(
        n > 0 and any(f.passes(sid) for f in pump.intakes)
        for sid, n in env_counts.items()
    )
    openings_clear = all(
        f.severity < 1.0 for f in (*pump.intakes, *pump.exhausts)
    )
    membrane_intact = not pump.membrane_damaged
    verdict = (
        jump_started and energy_positive and inputs_available
        and openings_clear and membrane_intact
        and pump.cycle_count >= SUSTAINED_CYCLES
    )
    return SustainabilityReport(
        jump_started=jump_started,
        energy_positive=energy_positive,
        inputs_available=inputs_available,
        openings_clear=openings_clear,
        membrane_intact=membrane_intact,
        cycles_completed=pump.cycle_count,
        verdict=verdict,
    )
