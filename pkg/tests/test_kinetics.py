import math

import numpy as np
import pytest

from spl_forge.core import EnergyEnvironment, Reaction, ReactionNetwork, Species
from spl_forge.kinetics import (
    ChemicalSimulation,
    RateModel,
    RunawayNetworkError,
    SimulationState,
    half_life_to_rate,
    propensity,
    simulate_chemical,
)
from tests.conftest import triangle_network


def two_state(rate=1.0):
    return ReactionNetwork(
        (Species("A", 1.0), Species("B", 1.0)),
        (
            Reaction("ab", (("A", 1),), (("B", 1),), 0.0, rate),
            Reaction("ba", (("B", 1),), (("A", 1),), 0.0, rate),
        ),
    )


def replay_ledger(net, traj):
    """Independent event-log replay: rebuild counts/pool/ledger terms from the
    log alone and return the worst closure residual seen at event boundaries."""
    energies = {sp.id: sp.energy for sp in net.catalog}
    deltas = {r.id: sum(k * energies[s] for s, k in r.products)
              - sum(k * energies[s] for s, k in r.reactants)
              for r in net.reactions}
    counts = dict(traj.meta["initial_counts"])
    pool = 0.0
    injected = leaked = chemostat = dissipated = 0.0
    chem0 = sum(n * energies[s] for s, n in counts.items())
    worst = 0.0
    for ev in traj.meta["events"]:
        kind = ev[1]
        if kind == "reaction":
            rid = ev[2]
            r = net.reaction(rid)
            for s, k in r.reactants:
                counts[s] -= k
            for s, k in r.products:
                counts[s] = counts.get(s, 0) + k
            pool -= deltas[rid]
        elif kind == "degradation":
            sid = ev[2]
            counts[sid] -= 1
            leaked += energies[sid]
        elif kind == "burst":
            pool += ev[2]
            injected += ev[2]
        elif kind == "chemostat":
            sid, delta = ev[2], ev[3]
            counts[sid] += delta
            chemostat += delta * energies[sid]
        else:
            raise AssertionError(f"unexpected event kind {kind!r} in pump-free run")
        chem = sum(n * energies[s] for s, n in counts.items())
        resid = (chem + pool) - chem0 - (injected + chemostat - leaked - dissipated)
        worst = max(worst, abs(resid))
        assert min(counts.values()) >= 0
    scale = max(1.0, abs(chem0), injected + leaked + abs(chemostat))
    return worst / scale, counts, pool


def run_with_log(net, counts, t_max, seed, **kw):
    sim = ChemicalSimulation(net, counts, seed=seed, record_events=True, **kw)
    initial = dict(sim.state.counts)
    traj = sim.run(t_max, sample_interval=kw.pop("sample_interval", t_max / 50))
    traj.meta["initial_counts"] = initial
    return sim, traj


def test_half_life_to_rate():
    assert half_life_to_rate(math.log(2)) == pytest.approx(1.0)
    assert half_life_to_rate(19_000) == pytest.approx(3.648e-5, rel=1e-3)
    assert half_life_to_rate(math.inf) == 0.0
    with pytest.raises(ValueError):
        half_life_to_rate(0.0)
    with pytest.raises(ValueError):
        half_life_to_rate(-1.0)


def test_half_life_rate_cross_checked_against_decay_sim():
    # one long decay run: survivors at one half-life cluster around N/2
    tau = 19_000.0
    net = ReactionNetwork((Species("A", 1.0, half_life=tau),), ())
    traj = simulate_chemical(net, {"A": 1000}, t_max=tau, seed=5, sample_interval=tau / 4)
    final = traj.column("A")[-1]
    assert abs(final - 500) < 3 * math.sqrt(250)


def test_propensity_zero_without_reactants(triangle):
    state = SimulationState(counts={sp.id: 0 for sp in triangle.catalog})
    assert propensity(triangle.reaction("M1_to_M2"), state, triangle) == 0.0


def test_propensity_bimolecular_combinatorics():
    net = ReactionNetwork(
        (Species("A", 1.0), Species("C", 2.0)),
        (Reaction("dim", (("A", 2),), (("C", 1),), 0.0, 1.0),),
    )
    state = SimulationState(counts={"A": 2, "C": 0})
    # n (n - 1) / 2 = 1 at n = 2
    assert propensity(net.reaction("dim"), state, net) == pytest.approx(1.0)
    state.counts["A"] = 5
    assert propensity(net.reaction("dim"), state, net) == pytest.approx(10.0)


def test_propensity_uphill_gated_by_pool(triangle):
    state = SimulationState(
        counts={"M1": 0, "M2": 0, "M3": 5, "E12": 1, "E23": 1, "E31": 1},
        pool=1.5,
    )
    up = triangle.reaction("M3_to_M1")  # needs 2.0 per firing
    assert propensity(up, state, triangle) == 0.0
    state.pool = 2.0
    assert propensity(up, state, triangle) > 0.0


def test_propensity_scales_with_catalyst_count(triangle):
    state = SimulationState(
        counts={"M1": 4, "M2": 0, "M3": 0, "E12": 1, "E23": 1, "E31": 1}
    )
    down = triangle.reaction("M1_to_M2")
    one = propensity(down, state, triangle)
    state.counts["E12"] = 3
    assert propensity(down, state, triangle) == pytest.approx(3 * one)
    state.counts["E12"] = 0
    assert propensity(down, state, triangle) == 0.0


def test_effective_barrier_cannot_beat_thermodynamics():
    net = ReactionNetwork(
        (Species("L", 0.0), Species("H", 2.0), Species("E", 0.0)),
        (Reaction("up", (("L", 1),), (("H", 1),), 2.5, 1.0, "E"),),
    )
    state = SimulationState(counts={"L": 1, "H": 0, "E": 1}, pool=10.0)
    strong = RateModel(catalytic_reduction=100.0)  # would take the barrier below the gap
    a = propensity(net.reaction("up"), state, net, strong)
    assert a == pytest.approx(1.0 * math.exp(-2.0))  # clamped at the energy gap


def test_burst_only_network_pool_grows_by_burst_energy():
    net = ReactionNetwork(
        (Species("A", 1.0),), (),
        EnergyEnvironment(burst_rate=1.0, burst_energy=0.75),
    )
    sim = ChemicalSimulation(net, {"A": 1}, seed=3, record_events=True)
    assert sim.step()
    assert sim.state.pool == pytest.approx(0.75)
    assert sim.state.ledger.injected == pytest.approx(0.75)
    events = [e for e in sim.events if e[1] == "burst"]
    assert len(events) == 1


def test_two_state_equilibrium_is_binomial_half():
    # time-reversible two-state hopping: stationary occupancy is 50/50
    net = two_state()
    n_runs, n_copies = 60, 40
    finals = []
    for k in range(n_runs):
        traj = simulate_chemical(net, {"A": n_copies}, t_max=6.0, seed=1000 + k,
                                 sample_interval=6.0)
        finals.append(traj.column("A")[-1])
    total = np.sum(finals)
    mean = n_runs * n_copies / 2
    sigma = math.sqrt(n_runs * n_copies * 0.25)
    assert abs(total - mean) <= 3 * sigma


def test_triangle_selfsustains_with_bursts(triangle):
    traj = simulate_chemical(
        triangle, {"M1": 10, "M2": 10, "M3": 10}, t_max=80.0, seed=11,
        sample_interval=0.5, rate_model=RateModel(temperature=2.0),
    )
    half = len(traj.rows) // 2
    for sid in ("M1", "M2", "M3"):
        assert traj.column(sid)[half:].mean() > 0.0


def test_pure_decay_binomial_oracle():
    tau = 3.0
    net = ReactionNetwork((Species("A", 1.0, half_life=tau),), ())
    traj = simulate_chemical(net, {"A": 1000}, t_max=tau, seed=21, sample_interval=tau)
    final = traj.column("A")[-1]
    assert abs(final - 500) <= 3 * math.sqrt(250)


def test_ledger_closure_replayed_from_event_log():
    net = triangle_network(half_lives={"M1": 40.0, "M2": 40.0, "M3": 8.0})
    sim, traj = run_with_log(net, {"M1": 10, "M2": 5, "M3": 25}, t_max=40.0, seed=9)
    worst, counts, pool = replay_ledger(net, traj)
    assert worst < 1e-9
    # the replay must land exactly on the simulator's final state
    assert counts == sim.state.counts
    assert pool == pytest.approx(sim.state.pool, abs=1e-12)
    assert abs(sim.ledger_residual()) < 1e-9


def test_chemostat_holds_fixed_counts():
    net = ReactionNetwork(
        (Species("W", 1.0), Species("P", 0.5)),
        (Reaction("feed", (("W", 1),), (("P", 1),), 0.0, 1.0),),
        EnergyEnvironment(abundant_inputs=(("W", 7),)),
    )
    traj = simulate_chemical(net, {}, t_max=5.0, seed=2, sample_interval=0.25)
    assert np.all(traj.column("W") == 7)
    assert traj.column("P")[-1] > 0


def test_gating_soundness_no_uphill_firing_without_pool():
    net = triangle_network(burst_rate=0.7, burst_energy=2.0)
    sim, traj = run_with_log(net, {"M3": 30}, t_max=30.0, seed=31)
    energies = {sp.id: sp.energy for sp in net.catalog}
    pool = 0.0
    for ev in traj.meta["events"]:
        kind = ev[1]
        if kind == "burst":
            pool += ev[2]
        elif kind == "reaction":
            r = net.reaction(ev[2])
            de = sum(k * energies[s] for s, k in r.products) - sum(
                k * energies[s] for s, k in r.reactants
            )
            if de > 0:
                assert pool >= de - 1e-9, "uphill fired without pool cover"
            pool -= de
    ups = [e for e in traj.meta["events"] if e[1] == "reaction" and e[2] == "M3_to_M1"]
    assert ups, "expected the closing reaction to fire at least once"


def test_determinism_same_seed_same_log_and_csv(triangle):
    a = simulate_chemical(triangle, {"M1": 8, "M3": 8}, t_max=20.0, seed=13,
                          record_events=True)
    b = simulate_chemical(triangle, {"M1": 8, "M3": 8}, t_max=20.0, seed=13,
                          record_events=True)
    assert a.meta["events"] == b.meta["events"]
    assert a.to_csv() == b.to_csv()
    c = simulate_chemical(triangle, {"M1": 8, "M3": 8}, t_max=20.0, seed=14)
    assert a.to_csv() != c.to_csv()


def test_runaway_autocatalysis_guard():
    net = ReactionNetwork(
        (Species("A", 0.0),),
        (Reaction("boom", (("A", 1),), (("A", 2),), 0.0, 50.0),),
    )
    with pytest.raises(RunawayNetworkError):
        simulate_chemical(net, {"A": 10}, t_max=1e6, seed=1)


def test_quiescent_network_rows_identical():
    net = ReactionNetwork((Species("A", 1.0),), ())
    traj = simulate_chemical(net, {"A": 5}, t_max=10.0, seed=1, sample_interval=1.0)
    assert len(traj.rows) == 11
    assert np.all(traj.column("A") == 5)
    assert traj.meta["quiescent"]


def test_decay_exactness_against_analytic_mean():
    # empirical mean across seeded runs vs N * exp(-k t) at three checkpoints
    tau = 2.0
    k = math.log(2) / tau
    n0, n_runs = 60, 400
    net = ReactionNetwork((Species("A", 1.0, half_life=tau),), ())
    checks = [1.0, 2.0, 4.0]
    sums = {t: 0.0 for t in checks}
    for run in range(n_runs):
        traj = simulate_chemical(net, {"A": n0}, t_max=4.0, seed=5000 + run,
                                 sample_interval=1.0)
        for t in checks:
            sums[t] += traj.column("A")[int(t)]
    for t in checks:
        expected = n0 * math.exp(-k * t)
        var = n0 * math.exp(-k * t) * (1 - math.exp(-k * t))
        se = math.sqrt(var / n_runs)
        assert abs(sums[t] / n_runs - expected) <= 3 * se


def test_extinction_time_recorded():
    net = ReactionNetwork((Species("A", 1.0, half_life=0.5),), ())
    sim = ChemicalSimulation(net, {"A": 20}, seed=8)
    traj = sim.run(60.0)
    assert traj.meta["extinction_time"] is not None
    assert 0 < traj.meta["extinction_time"] < 60.0
    assert traj.column("A")[-1] == 0
