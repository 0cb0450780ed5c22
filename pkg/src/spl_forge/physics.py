"""Time-stepped simulation of balls on looped tracks.

Explicit first-order (symplectic-style: velocity first, then position)
integration of  dv/dt = -g * slope - mu * v  plus Poisson-timed energy
bursts, elastic same-mass collision swaps, and random routing at junctions.
The energy ledger (KE + PE + dissipated - injected) is recorded every sample
together with the integration residual, which is logged, never folded away.

The stepping kernel is JIT-compiled; one simulation is single-threaded and
deterministic given its seed, and independent runs share no mutable state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .rng import substream, substream_seed
from .track import PhysicalSystem, TrackGraph
from .trajio import Trajectory

__all__ = [
    "SimulationDiverged",
    "simulate_physical",
    "make_burst_schedule",
    "persistence_time",
    "compare_persistence",
    "measure_restart_energy",
    "DEFAULT_DT",
]

DEFAULT_DT = 1e-4
PERSISTENCE_THRESHOLD_FRACTION = 1e-4
PERSISTENCE_WINDOW_SAMPLES = 50


class SimulationDiverged(RuntimeError):
    pass


@dataclass
class FlatTrack:
    """Array form of a PhysicalSystem for the jitted kernel."""

    seg_ids: list[str]
    seg_src: np.ndarray
    seg_dst: np.ndarray
    seg_len: np.ndarray
    seg_mu: np.ndarray
    piece_off: np.ndarray
    piece_s0: np.ndarray
    piece_s1: np.ndarray
    piece_h0: np.ndarray
    piece_slope: np.ndarray
    out_off: np.ndarray
    out_seg: np.ndarray
    in_off: np.ndarray
    in_seg: np.ndarray


def _flatten(sys: PhysicalSystem) -> FlatTrack:
    track: TrackGraph = sys.track
    seg_ids = list(track.segments)
    seg_index = {sid: i for i, sid in enumerate(seg_ids)}
    nodes = list(track.node_heights)
    node_index = {n: i for i, n in enumerate(nodes)}

    n_seg = len(seg_ids)
    seg_src = np.zeros(n_seg, dtype=np.int32)
    seg_dst = np.zeros(n_seg, dtype=np.int32)
    seg_len = np.zeros(n_seg)
    seg_mu = np.zeros(n_seg)
    piece_off = np.zeros(n_seg + 1, dtype=np.int32)
    s0s: list[float] = []
    s1s: list[float] = []
    h0s: list[float] = []
    slopes: list[float] = []
    for i, sid in enumerate(seg_ids):
        seg = track.segments[sid]
        seg_src[i] = node_index[seg.src]
        seg_dst[i] = node_index[seg.dst]
        seg_len[i] = seg.length
        seg_mu[i] = sys.segment_friction(seg)
        for (a, ha), (b, hb) in zip(seg.profile, seg.profile[1:]):
            s0s.append(a)
            s1s.append(b)
            h0s.append(ha)
            slopes.append((hb - ha) / (b - a))
        piece_off[i + 1] = len(s0s)

    def csr(endpoint_of):
        off = np.zeros(len(nodes) + 1, dtype=np.int32)
        buckets: list[list[int]] = [[] for _ in nodes]
        for i, sid in enumerate(seg_ids):
            buckets[endpoint_of(track.segments[sid])].append(i)
        flat: list[int] = []
        for k, bucket in enumerate(buckets):
            flat.extend(bucket)
            off[k + 1] = len(flat)
        return off, np.array(flat, dtype=np.int32)

    out_off, out_seg = csr(lambda seg: node_index[seg.src])
    in_off, in_seg = csr(lambda seg: node_index[seg.dst])
    return FlatTrack(
        seg_ids, seg_src, seg_dst, seg_len, seg_mu, piece_off,
        np.array(s0s), np.array(s1s), np.array(h0s), np.array(slopes),
        out_off, out_seg, in_off, in_seg,
    )


@njit(cache=True)
def _height_at(seg, s, piece_off, piece_s0, piece_h0, piece_slope):
    lo = piece_off[seg]
    hi = piece_off[seg + 1]
    k = lo
    for p in range(lo, hi):
        if piece_s0[p] <= s:
            k = p
        else:
            break
    return piece_h0[k] + piece_slope[k] * (s - piece_s0[k])


@njit(cache=True)
def _slope_at(seg, s, piece_off, piece_s0, piece_slope):
    lo = piece_off[seg]
    hi = piece_off[seg + 1]
    k = lo
    for p in range(lo, hi):
        if piece_s0[p] <= s:
            k = p
        else:
            break
    return piece_slope[k]


@njit(cache=True)
def _crossing_time(a, v, c, h_max):
    """Smallest h in (0, h_max] with a*h^2 + v*h == c; -1.0 when none.

    This is the sub-step position law s(h) = s0 + (v + a*h) * h, so boundary
    hits land exactly on breakpoints.
    """
    tiny = 1e-15
    if abs(a) < 1e-14:
        if abs(v) < 1e-18:
            return -1.0
        h = c / v
        if tiny < h <= h_max:
            return h
        return -1.0
    disc = v * v + 4.0 * a * c
    if disc < 0.0:
        return -1.0
    sq = math.sqrt(disc)
    best = -1.0
    for h in ((-v - sq) / (2.0 * a), (-v + sq) / (2.0 * a)):
        if tiny < h <= h_max and (best < 0.0 or h < best):
            best = h
    return best


@njit(cache=True)
def _run_kernel(
    seg_src, seg_dst, seg_len, seg_mu,
    piece_off, piece_s0, piece_s1, piece_h0, piece_slope,
    out_off, out_seg, in_off, in_seg,
    b_seg, b_s, b_v, b_m, b_pi,
    burst_t, burst_ball_u, burst_dir_u, burst_e,
    g, dt, n_steps, sample_every, route_seed,
    samples, impulses,
):
    np.random.seed(route_seed)
    nb = b_seg.shape[0]
    dissipated = 0.0
    injected = 0.0

    ke = 0.0
    pe = 0.0
    for i in range(nb):
        ke += 0.5 * b_m[i] * b_v[i] * b_v[i]
        pe += b_m[i] * g * _height_at(b_seg[i], b_s[i], piece_off, piece_s0, piece_h0, piece_slope)
    e0 = ke + pe

    prev_seg = np.empty(nb, dtype=np.int32)
    prev_s = np.empty(nb)

    # sample row: t, (seg, s, v) per ball, ke, pe, dissipated, injected, correction
    samples[0, 0] = 0.0
    for i in range(nb):
        samples[0, 1 + 3 * i] = b_seg[i]
        samples[0, 2 + 3 * i] = b_s[i]
        samples[0, 3 + 3 * i] = b_v[i]
    samples[0, 1 + 3 * nb] = ke
    samples[0, 2 + 3 * nb] = pe
    samples[0, 3 + 3 * nb] = 0.0
    samples[0, 4 + 3 * nb] = 0.0
    samples[0, 5 + 3 * nb] = 0.0

    n_samples = 1
    n_impulses = 0
    burst_i = 0
    status = 0
    v_tiny = 1e-13

    for step in range(1, n_steps + 1):
        for i in range(nb):
            prev_seg[i] = b_seg[i]
            prev_s[i] = b_s[i]

        for i in range(nb):
            seg = b_seg[i]
            s = b_s[i]
            v = b_v[i]
            pi = b_pi[i]
            m = b_m[i]
            remaining = dt
            zero_hops = 0
            iters = 0
            while remaining > 1e-18:
                iters += 1
                if iters > 256:
                    status = 1
                    break
                mu = seg_mu[seg]
                slope = piece_slope[pi]
                a = -g * slope - mu * v
                p_lo = piece_s0[pi]
                p_hi = piece_s1[pi]

                # instantaneous exits when sitting on a boundary heading out
                lo0 = piece_off[seg]
                hi0 = piece_off[seg + 1]
                exit_low = s <= p_lo and (v < -v_tiny or (abs(v) <= v_tiny and a < 0.0))
                exit_high = s >= p_hi and (v > v_tiny or (abs(v) <= v_tiny and a > 0.0))
                if exit_low or exit_high:
                    zero_hops += 1
                    if zero_hops > 4:
                        v = 0.0   # pinned at a kink minimum: rest
                        break
                else:
                    v_end = v + a * remaining
                    s_end = s + v_end * remaining
                    if p_lo <= s_end <= p_hi:
                        dissipated += m * mu * v * v_end * remaining
                        v = v_end
                        s = s_end
                        break
                    h_lo = _crossing_time(a, v, p_lo - s, remaining)
                    h_hi = _crossing_time(a, v, p_hi - s, remaining)
                    h = -1.0
                    exit_high = False
                    if h_lo > 0.0 and (h_hi < 0.0 or h_lo <= h_hi):
                        h = h_lo
                    elif h_hi > 0.0:
                        h = h_hi
                        exit_high = True
                    if h < 0.0:
                        # numerically confined to the piece: commit and clamp
                        v_end = v + a * remaining
                        dissipated += m * mu * v * v_end * remaining
                        s = min(max(s + v_end * remaining, p_lo), p_hi)
                        v = v_end
                        break
                    v_end = v + a * h
                    dissipated += m * mu * v * v_end * h
                    v = v_end
                    remaining -= h
                    zero_hops = 0
                    s = p_hi if exit_high else p_lo

                # boundary hop: piece step or node transition
                if exit_high:
                    if pi + 1 < hi0:
                        pi += 1
                        s = piece_s0[pi]
                    else:
                        node = seg_dst[seg]
                        k0 = out_off[node]
                        cnt = out_off[node + 1] - k0
                        if cnt == 0:
                            v = -v   # reflect at an open end
                            s = seg_len[seg]
                        else:
                            pick = k0 + np.random.randint(0, cnt)
                            seg = out_seg[pick]
                            pi = piece_off[seg]
                            s = 0.0
                else:
                    if pi > lo0:
                        pi -= 1
                        s = piece_s1[pi]
                    else:
                        node = seg_src[seg]
                        k0 = in_off[node]
                        cnt = in_off[node + 1] - k0
                        if cnt == 0:
                            v = -v
                            s = 0.0
                        else:
                            pick = k0 + np.random.randint(0, cnt)
                            seg = in_seg[pick]
                            pi = piece_off[seg + 1] - 1
                            s = seg_len[seg]
            if status:
                break
            b_seg[i] = seg
            b_s[i] = s
            b_v[i] = v
            b_pi[i] = pi
        if status:
            break

        # elastic same-mass swap when two balls cross on the same segment
        for i in range(nb):
            for j in range(i + 1, nb):
                if (
                    b_seg[i] == b_seg[j]
                    and prev_seg[i] == prev_seg[j]
                    and prev_seg[i] == b_seg[i]
                ):
                    d0 = prev_s[i] - prev_s[j]
                    d1 = b_s[i] - b_s[j]
                    if d0 * d1 < 0.0:
                        tmp = b_v[i]
                        b_v[i] = b_v[j]
                        b_v[j] = tmp

        t = step * dt
        while burst_i < burst_t.shape[0] and burst_t[burst_i] <= t:
            e = burst_e[burst_i]
            bi = int(burst_ball_u[burst_i] * nb)
            if bi >= nb:
                bi = nb - 1
            v = b_v[bi]
            if v > 1e-12:
                sgn = 1.0
            elif v < -1e-12:
                sgn = -1.0
            else:
                sgn = 1.0 if burst_dir_u[burst_i] < 0.5 else -1.0
            b_v[bi] = sgn * math.sqrt(v * v + 2.0 * e / b_m[bi])
            injected += e
            impulses[n_impulses, 0] = t
            impulses[n_impulses, 1] = bi
            impulses[n_impulses, 2] = e
            n_impulses += 1
            burst_i += 1

        for i in range(nb):
            if not (math.isfinite(b_s[i]) and math.isfinite(b_v[i])) or abs(b_v[i]) > 1e9:
                status = 1
        if status:
            break

        if step % sample_every == 0:
            ke = 0.0
            pe = 0.0
            for i in range(nb):
                ke += 0.5 * b_m[i] * b_v[i] * b_v[i]
                pe += b_m[i] * g * _height_at(
                    b_seg[i], b_s[i], piece_off, piece_s0, piece_h0, piece_slope
                )
            samples[n_samples, 0] = t
            for i in range(nb):
                samples[n_samples, 1 + 3 * i] = b_seg[i]
                samples[n_samples, 2 + 3 * i] = b_s[i]
                samples[n_samples, 3 + 3 * i] = b_v[i]
            samples[n_samples, 1 + 3 * nb] = ke
            samples[n_samples, 2 + 3 * nb] = pe
            samples[n_samples, 3 + 3 * nb] = dissipated
            samples[n_samples, 4 + 3 * nb] = injected
            samples[n_samples, 5 + 3 * nb] = (ke + pe + dissipated - injected) - e0
            n_samples += 1

    return status, n_samples, n_impulses


def make_burst_schedule(rate: float, energy: float, t_end: float,
                        rng: np.random.Generator):
    """Poisson burst times on [0, t_end) with per-burst targeting draws."""
    times = []
    t = 0.0
    if rate > 0 and energy > 0:
        while True:
            t += rng.exponential(1.0 / rate)
            if t >= t_end:
                break
            times.append(t)
    n = len(times)
    return (
        np.array(times, dtype=float),
        rng.random(n),
        rng.random(n),
        np.full(n, float(energy)),
    )


def simulate_physical(
    sys: PhysicalSystem,
    t_max: float,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    sample_interval: float | None = None,
    burst_schedule: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> Trajectory:
    """Run the stepper and return the sampled trajectory.

    ``burst_schedule`` overrides the environment-derived Poisson schedule
    (used for schedule-matched comparisons); by default it is drawn from the
    seed's burst substream.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not t_max > dt:
        raise ValueError("t_max must exceed dt")
    if not sys.balls:
        raise ValueError("simulation needs at least one ball")

    flat = _flatten(sys)
    nb = len(sys.balls)
    b_seg = np.array([flat.seg_ids.index(b.segment) for b in sys.balls], dtype=np.int32)
    b_s = np.array([b.s for b in sys.balls], dtype=float)
    b_v = np.array([b.v for b in sys.balls], dtype=float)
    b_m = np.array([b.mass for b in sys.balls], dtype=float)
    b_pi = np.zeros(nb, dtype=np.int32)
    for i, b in enumerate(sys.balls):
        if not 0 <= b.s <= sys.track.segments[b.segment].length:
            raise ValueError(f"ball {i} position outside its segment")
        lo, hi = flat.piece_off[b_seg[i]], flat.piece_off[b_seg[i] + 1]
        b_pi[i] = hi - 1
        for p in range(lo, hi):
            if flat.piece_s0[p] <= b.s <= flat.piece_s1[p]:
                b_pi[i] = p
                break

    if burst_schedule is None:
        burst_schedule = make_burst_schedule(
            sys.environment.burst_rate, sys.environment.burst_energy,
            t_max, substream(seed, "bursts"),
        )
    burst_t, burst_ball_u, burst_dir_u, burst_e = burst_schedule

    n_steps = int(round(t_max / dt))
    if sample_interval is None:
        sample_every = max(1, n_steps // 1000)
    else:
        sample_every = max(1, int(round(sample_interval / dt)))
    n_samples_cap = n_steps // sample_every + 2
    width = 1 + 3 * nb + 5
    samples = np.zeros((n_samples_cap, width))
    impulses = np.zeros((max(len(burst_t), 1), 3))

    status, n_samples, n_impulses = _run_kernel(
        flat.seg_src, flat.seg_dst, flat.seg_len, flat.seg_mu,
        flat.piece_off, flat.piece_s0, flat.piece_s1, flat.piece_h0, flat.piece_slope,
        flat.out_off, flat.out_seg, flat.in_off, flat.in_seg,
        b_seg, b_s, b_v, b_m, b_pi,
        burst_t, burst_ball_u, burst_dir_u, burst_e,
        float(sys.gravity), float(dt), n_steps, sample_every,
        substream_seed(seed, "physical"),
        samples, impulses,
    )
    if status != 0:
        raise SimulationDiverged(
            f"physical simulation diverged (velocity blow-up or runaway routing) "
            f"near t={samples[n_samples - 1, 0]:.6g}; reduce dt"
        )

    columns = ["time"]
    int_cols = set()
    for i in range(nb):
        columns += [f"ball{i}_seg", f"ball{i}_s", f"ball{i}_v"]
        int_cols.add(f"ball{i}_seg")
    columns += ["ke", "pe", "dissipated", "injected", "correction"]
    traj = Trajectory(
        columns=columns,
        rows=samples[:n_samples],
        int_columns=int_cols,
        meta={
            "kind": "physical",
            "dt": dt,
            "seed": seed,
            "gravity": sys.gravity,
            "segment_ids": list(flat.seg_ids),
            "impulses": impulses[:n_impulses].copy(),
        },
    )
    return traj


def persistence_time(
    traj: Trajectory,
    threshold_fraction: float = PERSISTENCE_THRESHOLD_FRACTION,
    window_samples: int = PERSISTENCE_WINDOW_SAMPLES,
) -> float:
    """First time after which total KE stays below the threshold for a full
    window (threshold = fraction of the initial KE budget; window =
    ``window_samples`` sample intervals).  +inf if that never happens.
    """
    ke = traj.column("ke")
    t = traj.times
    budget = ke[0] if ke[0] > 0 else (float(np.max(ke)) if np.max(ke) > 0 else 0.0)
    if budget == 0.0:
        return 0.0
    theta = threshold_fraction * budget
    w = max(1, window_samples)
    if len(ke) < w:
        return math.inf
    above = (ke >= theta).astype(np.int64)
    csum = np.concatenate(([0], np.cumsum(above)))
    window_hits = csum[w:] - csum[:-w]  # count of >=theta samples per window
    idx = np.nonzero(window_hits == 0)[0]
    return float(t[idx[0]]) if len(idx) else math.inf


def compare_persistence(
    systems: dict[str, PhysicalSystem],
    n_seeds: int,
    master_seed: int,
    t_max: float,
    dt: float,
    burst_rate: float,
    burst_energy: float,
    t_burst_end: float | None = None,
    sample_interval: float | None = None,
) -> dict[str, np.ndarray]:
    """Persistence per design over seeds, with the burst schedule shared
    across designs within each seed (paired comparison)."""
    t_end = t_burst_end if t_burst_end is not None else t_max
    out = {name: np.empty(n_seeds) for name in systems}
    for k in range(n_seeds):
        schedule = make_burst_schedule(
            burst_rate, burst_energy, t_end, substream(master_seed, "bursts", k)
        )
        for name, sys in systems.items():
            traj = simulate_physical(
                sys, t_max, dt=dt, seed=master_seed,
                sample_interval=sample_interval, burst_schedule=schedule,
            )
            out[name][k] = persistence_time(traj)
    return out


def measure_restart_energy(
    sys: PhysicalSystem,
    energies: list[float],
    t_window: float,
    dt: float = 1e-3,
    seed: int = 0,
) -> float:
    """Smallest trial burst energy that re-achieves circulation (one full lap
    of the shortest cycle) for a single ball resting at the lowest stable
    point.  Returns +inf if none of the trial energies works.
    """
    points = sys.track.stable_points()
    if not points:
        raise ValueError("track has no stable point")
    low = min(points, key=lambda p: p.height)
    cycle_lengths = []
    for cyc in sys.track.cycles(cap=1000):
        cycle_lengths.append(sum(sys.track.segments[sid].length for sid in cyc))
    if not cycle_lengths:
        raise ValueError("track has no directed cycle")
    lap = min(cycle_lengths)

    from .track import Ball

    for e in sorted(energies):
        probe = sys.copy()
        if low.kind == "interior":
            probe.balls = [Ball(low.ref, low.s, 0.0)]
        else:
            seg = sorted(sys.track.outgoing(low.ref), key=lambda s: s.id)[0]
            probe.balls = [Ball(seg.id, 0.0, 0.0)]
        schedule = (
            np.array([dt]), np.array([0.0]), np.array([0.25]), np.array([float(e)])
        )
        traj = simulate_physical(
            probe, t_window, dt=dt, seed=seed, burst_schedule=schedule
        )
        speed = np.abs(traj.column("ball0_v"))
        travelled = float(np.trapezoid(speed, traj.times))
        if travelled >= lap:
            return float(e)
    return math.inf
