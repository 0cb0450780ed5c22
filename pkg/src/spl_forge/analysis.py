"""Network- and trajectory-level analyses.

Structural: strongly connected components, generator-set enumeration,
closure (which species a seed set can regenerate), and a complexity score.
Dynamical: recurrence detection and the full stable-parallel-looped
classification, the paired looped-vs-control survival experiment, and the
random-split regeneration test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product as iter_product

import numpy as np
from scipy import stats as sp_stats

from .core import ReactionNetwork, Reaction, delta_energy, species_digraph
from .graphs import adjacency_cycles, condensation_edges, simple_cycles
from .graphs import strongly_connected_components as _tarjan
from .kinetics import ChemicalSimulation
from .rng import substream, substream_seed
from .trajio import Trajectory

__all__ = [
    "SCCDecomposition",
    "GeneratorSets",
    "RecurrenceProfile",
    "SPLReport",
    "ClassifyConfig",
    "ComplexityScore",
    "ExperimentStats",
    "SplitReport",
    "ConfigurationError",
    "find_sccs",
    "enumerate_generators",
    "closure",
    "regenerates",
    "classify_spl",
    "complexity_measure",
    "strip_uphill_reactions",
    "persistence_experiment",
    "split_test",
    "run_split_trials",
]

LONGEVITY_FACTOR = 10.0


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# structure


@dataclass(frozen=True)
class SCCDecomposition:
    components: tuple[tuple[str, ...], ...]
    condensation: tuple[tuple[int, int], ...]
    cyclic: tuple[bool, ...]   # component contains >= 1 cycle

    @property
    def count(self) -> int:
        return len(self.components)

    def component_of(self) -> dict[str, int]:
        return {n: i for i, comp in enumerate(self.components) for n in comp}


def find_sccs(adj: dict[str, list[str]]) -> SCCDecomposition:
    """Linear-time decomposition with deterministic component order (by
    smallest member id).  A component is cyclic if it has more than one
    member or a self-loop."""
    comps = _tarjan(adj)
    edges = condensation_edges(adj, comps)
    cyclic = tuple(
        len(c) > 1 or c[0] in adj.get(c[0], ()) for c in comps
    )
    return SCCDecomposition(
        components=tuple(tuple(c) for c in comps),
        condensation=tuple(edges),
        cyclic=cyclic,
    )


def closure(seed: set[str] | frozenset[str], net: ReactionNetwork) -> set[str]:
    """Least fixed point of species producible from the seed.

    Chemostatted inputs are always deemed present, and catalysts are given
    (they enable without being consumed), so neither blocks a reaction from
    contributing its products.
    """
    present = set(seed)
    abundant = set(net.environment.abundant)
    for sid in present:
        if sid not in {sp.id for sp in net.catalog}:
            raise KeyError(f"seed species {sid!r} not in catalog")
    changed = True
    while changed:
        changed = False
        for r in net.reactions:
            needed = {
                sid for sid, _ in r.reactants if sid not in abundant
            }
            if needed <= present:
                for sid, _ in r.products:
                    if sid not in present:
                        present.add(sid)
                        changed = True
    return present


def regenerates(seed: set[str], net: ReactionNetwork) -> bool:
    """Does the seed regenerate every species that is not externally given?"""
    given = set(net.environment.abundant)
    given |= {r.catalyst_species for r in net.reactions if r.catalyst_species}
    target = {sp.id for sp in net.catalog} - given
    return target <= (closure(seed, net) | given)


@dataclass(frozen=True)
class GeneratorSets:
    """Choices of one species per cyclic component.

    ``count`` follows the product formula over cyclic components only;
    species outside every cyclic component are listed separately since the
    formula does not cover them (they are regenerated iff closure reaches
    them, which the verification reports).
    """

    count: int
    cyclic_components: tuple[tuple[str, ...], ...]
    acyclic_species: tuple[str, ...]

    def sets(self):
        """Generator sets in lexicographic order."""
        if not self.cyclic_components:
            return iter(())
        return iter_product(*self.cyclic_components)


def enumerate_generators(net: ReactionNetwork) -> GeneratorSets:
    adj = species_digraph(net)
    dec = find_sccs(adj)
    cyclic = tuple(
        comp for comp, is_cyc in zip(dec.components, dec.cyclic) if is_cyc
    )
    acyclic = tuple(
        n for comp, is_cyc in zip(dec.components, dec.cyclic) if not is_cyc
        for n in comp
    )
    count = 1
    for comp in cyclic:
        count *= len(comp)
    if not cyclic:
        count = 0
    return GeneratorSets(
        count=count, cyclic_components=cyclic, acyclic_species=acyclic
    )


def verify_generator_set(genset: tuple[str, ...], net: ReactionNetwork) -> bool:
    """A generator set must regenerate at least every cyclic component that
    the condensation makes reachable from its members."""
    adj = species_digraph(net)
    dec = find_sccs(adj)
    comp_of = dec.component_of()
    reach: set[int] = set()
    frontier = {comp_of[s] for s in genset}
    cond: dict[int, set[int]] = {}
    for u, v in dec.condensation:
        cond.setdefault(u, set()).add(v)
    while frontier:
        c = frontier.pop()
        if c in reach:
            continue
        reach.add(c)
        frontier |= cond.get(c, set()) - reach
    required = {
        n
        for ci in reach
        if dec.cyclic[ci]
        for n in dec.components[ci]
    }
    return required <= closure(set(genset), net)


# ---------------------------------------------------------------------------
# complexity


@dataclass(frozen=True, order=True)
class ComplexityScore:
    edges: int
    mean_out_degree: float
    cycle_count: int
    saturated: bool = field(default=False, compare=False)

    def as_tuple(self) -> tuple:
        return (self.edges, self.mean_out_degree, self.cycle_count)


def complexity_measure(net: ReactionNetwork, cycle_cap: int = 10_000) -> ComplexityScore:
    """Lexicographic (edge count, mean out-degree, simple-cycle count).

    The cycle count saturates at the cap on dense graphs and says so.
    """
    adj = species_digraph(net)
    n_edges = sum(len(v) for v in adj.values())
    incident = {u for u, succs in adj.items() if succs}
    for succs in adj.values():
        incident.update(succs)
    mean_deg = (n_edges / len(incident)) if incident else 0.0
    cycles, capped = adjacency_cycles(adj, cap=cycle_cap)
    return ComplexityScore(
        edges=n_edges, mean_out_degree=mean_deg, cycle_count=cycles, saturated=capped
    )


# ---------------------------------------------------------------------------
# recurrence and classification


@dataclass(frozen=True)
class ClassifyConfig:
    epsilon: float = 0.1            # relative recurrence radius
    min_recurrences: int = 5
    drift_bound: float = 0.5        # max relative change between periods
    min_separation: int = 3         # samples between counted returns
    anchor_fraction: float = 0.25   # skip this much as transient before anchoring
    perturbation: float = 0.05      # stability perturbation size
    n_perturbations: int = 3
    bound_factor: float = 10.0      # stability envelope vs unperturbed max norm
    longevity_factor: float = LONGEVITY_FACTOR
    state_columns: tuple[str, ...] | None = None


@dataclass(frozen=True)
class RecurrenceProfile:
    times: tuple[float, ...]        # recurrence times, anchored at the start
    periods: tuple[float, ...]
    drift: float                    # max relative change between consecutive periods
    epsilon: float

    @property
    def returns(self) -> int:
        return max(0, len(self.times) - 1)


def _state_matrix(traj: Trajectory, config: ClassifyConfig) -> np.ndarray:
    if config.state_columns is not None:
        cols = list(config.state_columns)
    elif traj.meta.get("kind") == "physical" or "ke" in traj.columns:
        cols = [c for c in ("ke", "pe") if c in traj.columns]
    else:
        tail = {"pool", "injected", "leaked"}
        cols = [c for c in traj.columns[1:] if c not in tail]
    x = np.stack([traj.column(c) for c in cols], axis=1).astype(float)
    scales = np.max(np.abs(x), axis=0)
    keep = scales > 0
    if not np.any(keep):
        return np.zeros((len(x), 1))
    return x[:, keep] / scales[keep]


def detect_recurrences(traj: Trajectory, config: ClassifyConfig | None = None) -> RecurrenceProfile:
    """Crossing-based detection of returns to an earlier reference state.

    The reference is taken after the transient (``anchor_fraction`` of the
    trajectory), since systems rarely start on their recurrent set.  The
    normalized state must leave the epsilon ball and come back for a return
    to count (so a frozen trajectory has no recurrences); each below-epsilon
    episode contributes its closest approach.
    """
    config = config or ClassifyConfig()
    x_full = _state_matrix(traj, config)
    t_full = traj.times
    anchor = min(int(len(x_full) * config.anchor_fraction), max(len(x_full) - 2, 0))
    x = x_full[anchor:]
    t = t_full[anchor:]
    ref = x[0]
    d = np.linalg.norm(x - ref, axis=1) / math.sqrt(x.shape[1])

    times = [float(t[0])]
    outside = False
    episode_best: tuple[float, float] | None = None  # (distance, time)
    last_counted = 0
    for i in range(1, len(d)):
        if d[i] >= config.epsilon:
            if episode_best is not None and i - last_counted >= config.min_separation:
                times.append(episode_best[1])
                last_counted = i
            episode_best = None
            outside = True
        else:
            if outside:
                if episode_best is None or d[i] < episode_best[0]:
                    episode_best = (float(d[i]), float(t[i]))
    if episode_best is not None and len(d) - last_counted >= config.min_separation:
        times.append(episode_best[1])

    periods = tuple(b - a for a, b in zip(times, times[1:]))
    drift = 0.0
    for p0, p1 in zip(periods, periods[1:]):
        if p0 > 0:
            drift = max(drift, abs(p1 - p0) / p0)
    return RecurrenceProfile(
        times=tuple(times), periods=periods, drift=drift, epsilon=config.epsilon
    )


def _longest_compliant_run(periods: tuple[float, ...], bound: float) -> tuple[int, int]:
    """(start index, length) of the longest run of periods whose consecutive
    relative changes stay within the bound."""
    if not periods:
        return 0, 0
    best_start, best_len = 0, 1
    start = 0
    for i in range(1, len(periods)):
        ok = periods[i - 1] > 0 and abs(periods[i] - periods[i - 1]) / periods[i - 1] <= bound
        if not ok:
            start = i
        if i - start + 1 > best_len:
            best_start, best_len = start, i - start + 1
    return best_start, best_len


@dataclass(frozen=True)
class SPLReport:
    loops_found: bool
    parallel_interaction: bool
    interaction_mode: str           # "shared-species" | "energy-pool" | "none"
    stable: bool | None
    longevity_ratio: float
    recurrence: RecurrenceProfile
    inconclusive: bool = False
    reason: str = ""

    @property
    def verdict(self) -> bool | None:
        if self.inconclusive:
            return None
        return (
            self.loops_found
            and self.parallel_interaction
            and bool(self.stable)
            and self.longevity_ratio >= LONGEVITY_FACTOR
        )


def _cycle_node_sets(adj: dict[str, list[str]], cap: int = 2000) -> list[frozenset[str]]:
    edges = [(u, v, f"{u}->{v}") for u, succs in adj.items() for v in succs]
    out = []
    try:
        for keys in simple_cycles(edges, cap=cap):
            out.append(frozenset(k.split("->")[0] for k in keys))
    except Exception:
        pass
    return out


def _structural_interaction(digraph=None, track=None, net: ReactionNetwork | None = None):
    """Two or more directed cycles sharing a node, or both coupled through
    the energy pool."""
    if track is not None:
        cyc = [
            frozenset(
                n for sid in keys for n in (
                    track.segments[sid].src, track.segments[sid].dst
                )
            )
            for keys in track.cycles(cap=2000)
        ]
    elif digraph is not None:
        cyc = _cycle_node_sets(digraph)
    else:
        return False, "none"
    if len(cyc) < 2:
        return False, "none"
    for i in range(len(cyc)):
        for j in range(i + 1, len(cyc)):
            if cyc[i] & cyc[j]:
                return True, "shared-species"
    if net is not None:
        coupled = 0
        for nodes in cyc:
            for r in net.reactions:
                touched = {sid for sid, _ in (*r.reactants, *r.products)}
                if touched & nodes and abs(delta_energy(r, net)) > 1e-12:
                    coupled += 1
                    break
        if coupled >= 2:
            return True, "energy-pool"
    return False, "none"


def classify_spl(
    traj: Trajectory,
    *,
    digraph: dict[str, list[str]] | None = None,
    track=None,
    net: ReactionNetwork | None = None,
    resimulate=None,
    config: ClassifyConfig | None = None,
) -> SPLReport:
    """Full classification of a trajectory against the three conditions:
    (a) recurring dynamics with a slowly drifting period, (b) at least two
    interacting directed loops in the structure, (c) bounded response to
    small initial perturbations with recurrence preserved, plus the
    requirement that the dynamics outlive the slowest period by the
    longevity factor.

    ``resimulate(k)`` must rerun the system with its initial state perturbed
    by +-perturbation (seeded by k) and return the trajectory; without it the
    stability condition cannot be evaluated and the verdict is inconclusive.
    """
    config = config or ClassifyConfig()
    if net is not None and digraph is None and track is None:
        digraph = species_digraph(net)

    rec = detect_recurrences(traj, config)
    _, run_len = _longest_compliant_run(rec.periods, config.drift_bound)
    loops_found = run_len >= config.min_recurrences

    parallel, mode = _structural_interaction(digraph=digraph, track=track, net=net)

    # too short to judge: some returns happened, but the window could not
    # have held the required number at the observed period
    inconclusive = False
    reason = ""
    if not loops_found and rec.returns >= 2:
        med = float(np.median(rec.periods))
        if med > 0 and traj.duration < config.min_recurrences * med:
            inconclusive = True
            reason = (
                f"trajectory spans {traj.duration:.4g} but needs about "
                f"{config.min_recurrences * med:.4g} to hold "
                f"{config.min_recurrences} returns"
            )

    if rec.periods and run_len:
        start, _ = _longest_compliant_run(rec.periods, config.drift_bound)
        max_period = max(rec.periods[start:start + run_len])
    else:
        max_period = max(rec.periods) if rec.periods else math.inf
    sustained = rec.times[-1] if rec.returns else 0.0
    longevity = sustained / max_period if max_period > 0 else 0.0

    stable: bool | None = None
    if resimulate is not None and loops_found:
        base = _state_matrix(traj, config)
        base_norm = float(np.max(np.linalg.norm(base, axis=1)))
        stable = True
        for k in range(config.n_perturbations):
            ptraj = resimulate(k)
            px = _state_matrix(ptraj, config)
            pnorm = float(np.max(np.linalg.norm(px, axis=1)))
            if pnorm > config.bound_factor * max(base_norm, 1e-12):
                stable = False
                break
            prec = detect_recurrences(ptraj, config)
            _, prun = _longest_compliant_run(prec.periods, config.drift_bound)
            if prun < config.min_recurrences:
                stable = False
                break
    elif resimulate is None and loops_found and parallel:
        inconclusive = True
        reason = reason or "stability needs a resimulation handle"

    return SPLReport(
        loops_found=loops_found,
        parallel_interaction=parallel,
        interaction_mode=mode,
        stable=stable,
        longevity_ratio=longevity,
        recurrence=rec,
        inconclusive=inconclusive,
        reason=reason,
    )


# ---------------------------------------------------------------------------
# paired survival experiment


def strip_uphill_reactions(net: ReactionNetwork) -> ReactionNetwork:
    """Control construction: drop every energy-consuming reaction, breaking
    the loops while keeping species, energies, degradation, and bursts."""
    kept = tuple(
        r for r in net.reactions if delta_energy(r, net) <= 1e-12
    )
    return ReactionNetwork(net.catalog, kept, net.environment)


@dataclass(frozen=True)
class ExperimentStats:
    n_seeds: int
    t_max: float
    looped_extinction: tuple[float, ...]    # censored values hold t_max
    control_extinction: tuple[float, ...]
    looped_censored: tuple[bool, ...]
    control_censored: tuple[bool, ...]
    looped_median: float
    control_median: float
    looped_survival: float
    control_survival: float
    rank_statistic: float                   # paired win fraction, ties half
    p_value: float                          # one-sided sign test, looped > control

    def as_dict(self) -> dict:
        return {
            "n_seeds": self.n_seeds,
            "t_max": self.t_max,
            "looped_median_extinction": self.looped_median,
            "control_median_extinction": self.control_median,
            "looped_survival_fraction": self.looped_survival,
            "control_survival_fraction": self.control_survival,
            "rank_statistic": self.rank_statistic,
            "p_value_one_sided": self.p_value,
        }


def _check_matched_arms(looped: ReactionNetwork, control: ReactionNetwork) -> None:
    if [(s.id, s.energy, s.half_life) for s in looped.catalog] != [
        (s.id, s.energy, s.half_life) for s in control.catalog
    ]:
        raise ConfigurationError("arms differ in species, energies, or half-lives")
    if looped.environment != control.environment:
        raise ConfigurationError("arms differ in environment (bursts or chemostats)")
    looped_ids = {r.id for r in looped.reactions}
    if not {r.id for r in control.reactions} <= looped_ids:
        raise ConfigurationError("control reactions must be a subset of the looped arm")
    dec = find_sccs(species_digraph(control))
    if any(dec.cyclic):
        raise ConfigurationError("control arm still contains cycles")


def _extinction_of(net_arm: ReactionNetwork, initial_counts: dict[str, int],
                   run_seed: int, t_max: float) -> float | None:
    sim = ChemicalSimulation(net_arm, initial_counts, seed=run_seed)
    while sim.extinction_time is None and sim.step(t_limit=t_max):
        pass
    return sim.extinction_time


def _experiment_pair(payload) -> tuple[float | None, float | None]:
    looped, control, initial_counts, run_seed, t_max = payload
    return (
        _extinction_of(looped, initial_counts, run_seed, t_max),
        _extinction_of(control, initial_counts, run_seed, t_max),
    )


def persistence_experiment(
    looped: ReactionNetwork,
    control: ReactionNetwork | None,
    initial_counts: dict[str, int],
    n_seeds: int,
    t_max: float,
    seed: int,
    n_workers: int = 1,
) -> ExperimentStats:
    """Paired survival comparison under common random numbers.

    Both arms of each pair run from the same derived seed, so their burst
    schedules (drawn from a dedicated stream) are identical event for event.
    Extinction is the first time every non-chemostatted copy number reaches
    zero; runs alive beyond t_max are censored there.  Seed pairs are
    independent, so they may run in parallel workers; aggregation is
    seed-ordered either way.
    """
    if control is None:
        control = strip_uphill_reactions(looped)
    _check_matched_arms(looped, control)

    looped_ext = np.empty(n_seeds)
    control_ext = np.empty(n_seeds)
    looped_cen = np.zeros(n_seeds, dtype=bool)
    control_cen = np.zeros(n_seeds, dtype=bool)
    payloads = [
        (looped, control, initial_counts, substream_seed(seed, "experiment", k), t_max)
        for k in range(n_seeds)
    ]
    if n_workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_experiment_pair, payloads, chunksize=8))
    else:
        results = [_experiment_pair(p) for p in payloads]
    for k, (l_ext, c_ext) in enumerate(results):
        looped_cen[k] = l_ext is None
        control_cen[k] = c_ext is None
        looped_ext[k] = t_max if l_ext is None else l_ext
        control_ext[k] = t_max if c_ext is None else c_ext

    wins = int(np.sum(
        (looped_ext > control_ext)
        | (looped_cen & ~control_cen)
    ))
    losses = int(np.sum(
        (control_ext > looped_ext)
        | (control_cen & ~looped_cen)
    ))
    # censored-vs-censored and exact-time ties count half
    ties = n_seeds - wins - losses
    rank_statistic = (wins + 0.5 * ties) / n_seeds
    if wins + losses > 0:
        p_value = float(
            sp_stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue
        )
    else:
        p_value = 1.0

    return ExperimentStats(
        n_seeds=n_seeds,
        t_max=t_max,
        looped_extinction=tuple(float(x) for x in looped_ext),
        control_extinction=tuple(float(x) for x in control_ext),
        looped_censored=tuple(bool(x) for x in looped_cen),
        control_censored=tuple(bool(x) for x in control_cen),
        looped_median=float(np.median(looped_ext)),
        control_median=float(np.median(control_ext)),
        looped_survival=float(np.mean(looped_cen)),
        control_survival=float(np.mean(control_cen)),
        rank_statistic=float(rank_statistic),
        p_value=p_value,
    )


# ---------------------------------------------------------------------------
# random split


@dataclass(frozen=True)
class HalfReport:
    counts: dict[str, int]
    closure_complete: bool
    generator_coverage: bool
    regrown: bool | None


@dataclass(frozen=True)
class SplitReport:
    halves: tuple[HalfReport, HalfReport]
    warnings: tuple[str, ...]

    @property
    def both_closure_complete(self) -> bool:
        return all(h.closure_complete for h in self.halves)

    @property
    def both_generator_covered(self) -> bool:
        return all(h.generator_coverage for h in self.halves)


def split_test(
    net: ReactionNetwork,
    initial_counts: dict[str, int],
    seed: int,
    t_regrow: float | None = None,
    index: int = 0,
) -> SplitReport:
    """Assign every molecule copy to one of two halves uniformly at random,
    then ask each half whether it regenerates the whole catalog (closure) and
    whether it kept a member of every cyclic component.  With ``t_regrow``
    each half is also simulated and must revive every species dynamically.
    """
    warnings = []
    for sid, n in initial_counts.items():
        if n < 2:
            warnings.append(
                f"species {sid!r} has count {n} < 2: a half must end up empty"
            )
    rng = substream(seed, "split", index)
    half_a: dict[str, int] = {}
    half_b: dict[str, int] = {}
    for sid in net.species_ids:
        n = int(initial_counts.get(sid, 0))
        a = int(rng.binomial(n, 0.5)) if n else 0
        half_a[sid] = a
        half_b[sid] = n - a

    dec = find_sccs(species_digraph(net))
    cyclic_comps = [
        set(comp) for comp, cyc in zip(dec.components, dec.cyclic) if cyc
    ]

    halves = []
    for counts in (half_a, half_b):
        seeded = {sid for sid, n in counts.items() if n > 0}
        closure_complete = regenerates(seeded, net) and bool(seeded)
        coverage = all(seeded & comp for comp in cyclic_comps) if cyclic_comps else bool(seeded)
        regrown: bool | None = None
        if t_regrow is not None:
            sim = ChemicalSimulation(net, counts, seed=substream_seed(seed, "split", index + 1))
            traj = sim.run(t_regrow, sample_interval=max(t_regrow / 100.0, 1e-6))
            given = set(net.environment.abundant)
            given |= {r.catalyst_species for r in net.reactions if r.catalyst_species}
            regrown = all(
                traj.column(sid).max() > 0
                for sid in net.species_ids
                if sid not in given
            )
        halves.append(
            HalfReport(
                counts=dict(counts),
                closure_complete=closure_complete,
                generator_coverage=coverage,
                regrown=regrown,
            )
        )
    return SplitReport(halves=(halves[0], halves[1]), warnings=tuple(warnings))


def run_split_trials(
    net: ReactionNetwork,
    initial_counts: dict[str, int],
    n_trials: int,
    seed: int,
) -> dict:
    """Monte Carlo aggregate of split_test over seeded trials."""
    closure_ok = 0
    coverage_ok = 0
    for k in range(n_trials):
        rep = split_test(net, initial_counts, seed, index=k)
        closure_ok += rep.both_closure_complete
        coverage_ok += rep.both_generator_covered
    return {
        "n_trials": n_trials,
        "closure_fraction": closure_ok / n_trials,
        "coverage_fraction": coverage_ok / n_trials,
    }
