"""Exact event-driven stochastic simulation of reaction networks.

Direct-method sampling over reaction firings and half-life degradations,
interleaved with Poisson energy bursts (their own stream, so burst schedules
are identical across paired runs) and deterministic pump ticks.  A global
energy pool gates uphill reactions: they cannot fire unless the pool covers
the energy gap, and every firing moves exactly that gap between chemical
energy and the pool, keeping the ledger closed to roundoff.

Copy numbers are integers; degraded mass leaves the system and its energy is
booked as leaked.  Chemostatted species snap back to their fixed counts after
every event, with the exchanged energy booked against the reservoir.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    EnergyLedger,
    NetworkValidationError,
    Reaction,
    ReactionNetwork,
    delta_energy,
    validate_network,
)
from .pumps import Pump, catalytic_factor, pump_cycle_step
from .rng import substream
from .trajio import Trajectory

__all__ = [
    "RateModel",
    "SimulationState",
    "RunawayNetworkError",
    "half_life_to_rate",
    "propensity",
    "step_event",
    "ChemicalSimulation",
    "simulate_chemical",
    "total_counts",
    "DEFAULT_PUMP_TICK",
    "COUNT_CAP",
]

DEFAULT_PUMP_TICK = 0.05
COUNT_CAP = 10 ** 9
GATE_EPS = 1e-12


class RunawayNetworkError(RuntimeError):
    pass


def half_life_to_rate(half_life: float) -> float:
    """Exponential decay rate ln(2)/half_life; infinite half-life decays never."""
    if math.isinf(half_life):
        return 0.0
    if not half_life > 0:
        raise ValueError("half_life must be > 0")
    return math.log(2.0) / half_life


@dataclass
class RateModel:
    """Arrhenius-style rates against an ambient temperature scale.

    The effective barrier is the activation energy less any catalytic
    reduction, but never below the uphill energy gap: catalysis cannot beat
    thermodynamics.
    """

    temperature: float = 1.0
    catalytic_reduction: float = 0.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")

    def effective_barrier(self, reaction: Reaction, de: float, catalyzed: bool) -> float:
        ea = reaction.activation_energy
        if catalyzed:
            ea -= self.catalytic_reduction
        return max(0.0, de, ea)


@dataclass
class SimulationState:
    counts: dict[str, int]
    pool: float = 0.0
    time: float = 0.0
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    pumps: dict[str, Pump] = field(default_factory=dict)


def total_counts(state: SimulationState) -> dict[str, int]:
    """Copy numbers including molecules currently inside pumps."""
    out = dict(state.counts)
    for pump in state.pumps.values():
        for sid, n in pump.internal_counts.items():
            out[sid] = out.get(sid, 0) + n
    return out


def propensity(reaction: Reaction, state: SimulationState, net: ReactionNetwork,
               rate_model: RateModel | None = None,
               de: float | None = None) -> float:
    """Stochastic rate of one reaction in the current state.

    base_rate * exp(-barrier/T) * combinatorial reactant counts, times the
    catalyst copy number (a conserved implicit reactant) or the hosting
    pump's confinement factor.  Uphill reactions are gated to zero while the
    relevant energy pool cannot cover the gap.
    """
    rate_model = rate_model or RateModel()
    if de is None:
        de = delta_energy(reaction, net)
    host = state.pumps.get(reaction.pump_host) if reaction.pump_host else None
    if reaction.pump_host and host is None:
        return 0.0  # hosting pump absent from this simulation
    counts = host.internal_counts if host else state.counts
    pool = host.internal_pool if host else state.pool
    if de > GATE_EPS and pool < de - GATE_EPS:
        return 0.0

    h = 1.0
    for sid, k in reaction.reactants:
        n = counts.get(sid, 0)
        if n < k:
            return 0.0
        h *= math.comb(n, k)
    cat = reaction.catalyst_species
    catalyzed = cat is not None or host is not None
    if cat is not None:
        ncat = counts.get(cat, 0)
        if ncat == 0:
            return 0.0
        h *= ncat

    barrier = rate_model.effective_barrier(reaction, de, catalyzed)
    a = reaction.base_rate * math.exp(-barrier / rate_model.temperature) * h
    if host is not None:
        a *= catalytic_factor(host, reaction.id)
    return a


class ChemicalSimulation:
    """One exact stochastic run with exclusive ownership of its state."""

    def __init__(
        self,
        net: ReactionNetwork,
        initial_counts: dict[str, int] | None = None,
        seed: int = 0,
        rate_model: RateModel | None = None,
        pumps: list[Pump] | tuple[Pump, ...] = (),
        pump_tick: float = DEFAULT_PUMP_TICK,
        record_events: bool = False,
        validate: bool = True,
    ):
        if validate:
            violations = validate_network(net)
            if violations:
                raise NetworkValidationError(violations)
        self.net = net
        self.rate_model = rate_model or RateModel()
        self.energies = {sp.id: sp.energy for sp in net.catalog}
        self.decay_rates = {
            sp.id: half_life_to_rate(sp.half_life) for sp in net.catalog
        }
        self.abundant = net.environment.abundant
        self.seed = seed

        counts = {sp.id: 0 for sp in net.catalog}
        if initial_counts:
            for sid, n in initial_counts.items():
                if sid not in counts:
                    raise KeyError(f"initial count for unknown species {sid!r}")
                if n < 0:
                    raise ValueError(f"initial count for {sid!r} must be >= 0")
                counts[sid] = int(n)
        for sid, fixed in self.abundant.items():
            counts[sid] = fixed

        self.state = SimulationState(
            counts=counts,
            pumps={p.id: p.clone() for p in pumps},
        )
        self.delta = {r.id: delta_energy(r, net) for r in net.reactions}
        ledger = self.state.ledger
        ledger.chemical0 = self._chemical_energy()
        ledger.pool0 = self.state.pool + sum(
            p.internal_pool for p in self.state.pumps.values()
        )

        self.rng_events = substream(seed, "events")
        self.rng_bursts = substream(seed, "bursts")
        self.rng_pumps = substream(seed, "pumps")
        self.pump_tick = pump_tick
        self._next_pump_tick = pump_tick if self.state.pumps else math.inf
        self._next_burst = self._draw_burst_gap(0.0)
        self.extinction_time: float | None = None
        self.events: list[tuple] | None = [] if record_events else None
        self.quiescent = False
        self._check_extinction()

    # -- energy bookkeeping --------------------------------------------------

    def _chemical_energy(self) -> float:
        e = sum(n * self.energies[s] for s, n in self.state.counts.items())
        for p in self.state.pumps.values():
            e += p.chemical_energy(self.energies)
        return e

    def ledger_residual(self) -> float:
        pool_total = self.state.pool + sum(
            p.internal_pool for p in self.state.pumps.values()
        )
        return self.state.ledger.residual(self._chemical_energy(), pool_total)

    # -- event machinery ------------------------------------------------------

    def _draw_burst_gap(self, now: float) -> float:
        env = self.net.environment
        if env.burst_rate > 0 and env.burst_energy > 0:
            return now + self.rng_bursts.exponential(1.0 / env.burst_rate)
        return math.inf

    def _log(self, *event) -> None:
        if self.events is not None:
            self.events.append(event)

    def _channels(self) -> tuple[list[tuple], np.ndarray]:
        chans: list[tuple] = []
        rates: list[float] = []
        for r in self.net.reactions:
            a = propensity(r, self.state, self.net, self.rate_model, de=self.delta[r.id])
            if a > 0:
                chans.append(("reaction", r))
                rates.append(a)
        for sid, k in self.decay_rates.items():
            if k <= 0:
                continue
            n_env = self.state.counts[sid]
            n_tot = n_env + sum(
                p.internal_counts.get(sid, 0) for p in self.state.pumps.values()
            )
            if n_tot > 0:
                chans.append(("degradation", sid))
                rates.append(k * n_tot)
        return chans, np.array(rates)

    def _plan(self):
        """Time and kind of the next event, or None if the run is quiescent.

        The reaction clock is drawn here (memoryless, so discarding it when a
        scheduled burst or pump tick preempts is exact).
        """
        state = self.state
        chans, rates = self._channels()
        total = float(rates.sum())
        pumps_active = any(p.phase != "idle" for p in state.pumps.values())
        if pumps_active:
            while self._next_pump_tick <= state.time + GATE_EPS:
                self._next_pump_tick += self.pump_tick

        best_t = math.inf
        best: tuple | None = None
        if total > 0:
            t_rxn = state.time + self.rng_events.exponential(1.0 / total)
            best_t, best = t_rxn, ("channel", chans, rates, total)
        if self._next_burst < best_t:
            best_t, best = self._next_burst, ("burst",)
        if pumps_active and self._next_pump_tick < best_t:
            best_t, best = self._next_pump_tick, ("pumps",)
        if best is None:
            self.quiescent = True
            return None
        return best_t, best

    def _apply(self, t_event: float, action: tuple) -> None:
        state = self.state
        state.time = t_event
        if action[0] == "burst":
            e = self.net.environment.burst_energy
            state.pool += e
            state.ledger.injected += e
            self._log(t_event, "burst", e)
            self._next_burst = self._draw_burst_gap(t_event)
        elif action[0] == "pumps":
            self._tick_pumps(t_event)
            self._next_pump_tick += self.pump_tick
        else:
            _, chans, rates, total = action
            u = self.rng_events.random() * total
            idx = int(np.searchsorted(np.cumsum(rates), u, side="right"))
            idx = min(idx, len(chans) - 1)
            kind, payload = chans[idx]
            if kind == "reaction":
                self._fire(payload)
            else:
                self._degrade(payload)
        self._reset_chemostats(t_event)
        self._guard()
        self._check_extinction()

    def step(self, t_limit: float = math.inf) -> bool:
        """Advance one event; returns False when nothing can happen anymore or
        the next event would land past the time limit."""
        plan = self._plan()
        if plan is None:
            return False
        t_event, action = plan
        if t_event > t_limit:
            self.state.time = t_limit
            return False
        self._apply(t_event, action)
        return True

    def _fire(self, r: Reaction) -> None:
        state = self.state
        host = state.pumps.get(r.pump_host) if r.pump_host else None
        counts = host.internal_counts if host else state.counts
        for sid, k in r.reactants:
            counts[sid] = counts.get(sid, 0) - k
            assert counts[sid] >= 0, f"negative count for {sid!r} after {r.id!r}"
        for sid, k in r.products:
            counts[sid] = counts.get(sid, 0) + k
        de = self.delta[r.id]
        if host is not None:
            host.internal_pool -= de
            if de < 0:
                host.released_total += -de
            else:
                host.consumed_total += de
            assert host.internal_pool > -GATE_EPS
            host.internal_pool = max(host.internal_pool, 0.0)
        else:
            state.pool -= de
            assert state.pool > -GATE_EPS, "pool went negative: gating failure"
            state.pool = max(state.pool, 0.0)
        self._log(state.time, "reaction", r.id, r.pump_host)

    def _degrade(self, sid: str) -> None:
        state = self.state
        locations = [("env", None, state.counts.get(sid, 0))]
        for pid, p in state.pumps.items():
            locations.append(("pump", pid, p.internal_counts.get(sid, 0)))
        weights = np.array([max(n, 0) for _, _, n in locations], dtype=float)
        total = weights.sum()
        assert total > 0, f"degradation of absent species {sid!r}"
        pick = int(self.rng_events.choice(len(locations), p=weights / total))
        kind, pid, _ = locations[pick]
        if kind == "env":
            state.counts[sid] -= 1
        else:
            state.pumps[pid].internal_counts[sid] -= 1
        state.ledger.leaked += self.energies[sid]
        self._log(state.time, "degradation", sid, pid)

    def _tick_pumps(self, t: float) -> None:
        state = self.state
        for pid, pump in state.pumps.items():  # deterministic round-robin
            intake, exhaust = pump_cycle_step(
                pump, state.counts, self.energies, self.rng_pumps, self.pump_tick
            )
            mech_before = pump.mech_paid
            for sid, n in intake:
                state.counts[sid] -= n
            for sid, n in exhaust:
                state.counts[sid] = state.counts.get(sid, 0) + n
            mech_delta = pump.mech_paid - mech_before
            if mech_delta:
                state.ledger.dissipated += mech_delta
            if intake or exhaust or mech_delta:
                self._log(t, "pump", pid, tuple(intake), tuple(exhaust), mech_delta)

    def _reset_chemostats(self, t: float) -> None:
        state = self.state
        for sid, fixed in self.abundant.items():
            delta = fixed - state.counts[sid]
            if delta:
                state.counts[sid] = fixed
                state.ledger.chemostat += delta * self.energies[sid]
                self._log(t, "chemostat", sid, delta)

    def _guard(self) -> None:
        for sid, n in self.state.counts.items():
            if n > COUNT_CAP:
                raise RunawayNetworkError(
                    f"copy number of {sid!r} exceeded {COUNT_CAP} at t={self.state.time:.6g}; "
                    "likely runaway autocatalysis"
                )

    def _check_extinction(self) -> None:
        if self.extinction_time is not None:
            return
        totals = total_counts(self.state)
        alive = sum(n for sid, n in totals.items() if sid not in self.abundant)
        if alive == 0:
            self.extinction_time = self.state.time

    def jump_start_pump(self, pump_id: str, energy: float) -> None:
        """Externally supplied start-up energy (booked as injected)."""
        from .pumps import jump_start

        pump = self.state.pumps[pump_id]
        before = pump.jump_energy
        jump_start(pump, energy)
        gained = pump.jump_energy - before
        if gained:
            self.state.ledger.injected += gained
            self._log(self.state.time, "jump_start", pump_id, gained)

    # -- driver ---------------------------------------------------------------

    def run(self, t_max: float, sample_interval: float | None = None) -> Trajectory:
        if not t_max > 0:
            raise ValueError("t_max must be > 0")
        if sample_interval is None:
            sample_interval = t_max / 200.0
        rows = []
        sample_idx = 0

        def emit():
            ts = sample_idx * sample_interval
            totals = total_counts(self.state)
            led = self.state.ledger
            rows.append(
                [ts]
                + [float(totals.get(sid, 0)) for sid in self.net.species_ids]
                + [self.state.pool, led.injected, led.leaked]
            )

        while True:
            plan = self._plan()
            t_event = plan[0] if plan else math.inf
            # rows up to (strictly before) the event show the current state
            while sample_idx * sample_interval < min(t_event, t_max + 1e-12):
                emit()
                sample_idx += 1
            if plan is None or t_event > t_max:
                self.state.time = min(max(self.state.time, t_max), t_max)
                break
            self._apply(t_event, plan[1])

        arr = np.array(rows)
        traj = Trajectory(
            columns=["time", *self.net.species_ids, "pool", "injected", "leaked"],
            rows=arr,
            int_columns=set(self.net.species_ids),
            meta={
                "kind": "chemical",
                "seed": self.seed,
                "extinction_time": self.extinction_time,
                "quiescent": self.quiescent,
                "ledger_residual": self.ledger_residual(),
                "events": self.events,
                "final_counts": dict(self.state.counts),
                "final_pool": self.state.pool,
            },
        )
        return traj


def step_event(state_sim: ChemicalSimulation) -> bool:
    """Advance a simulation by a single event (thin alias for tests/drivers)."""
    return state_sim.step()


def simulate_chemical(
    net: ReactionNetwork,
    initial_counts: dict[str, int] | None,
    t_max: float,
    seed: int,
    sample_interval: float | None = None,
    *,
    pumps: list[Pump] | tuple[Pump, ...] = (),
    rate_model: RateModel | None = None,
    record_events: bool = False,
    pump_tick: float = DEFAULT_PUMP_TICK,
    jump_starts: dict[str, float] | None = None,
) -> Trajectory:
    """Validated end-to-end run; see ChemicalSimulation for the mechanics."""
    sim = ChemicalSimulation(
        net,
        initial_counts,
        seed=seed,
        rate_model=rate_model,
        pumps=pumps,
        pump_tick=pump_tick,
        record_events=record_events,
    )
    for pid, e in (jump_starts or {}).items():
        sim.jump_start_pump(pid, e)
    return sim.run(t_max, sample_interval)
