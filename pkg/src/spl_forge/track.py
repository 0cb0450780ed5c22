"""Looped-track construction: inclines, closed loops, valleys, sub-loops,
and the merge/link/iterate operators that grow the family.

A track is a directed multigraph of segments, each with a piecewise-linear
height profile.  Balls ride segments in the segment's positive direction
(negative velocity means rolling backward).  All constructors are pure:
they return new systems and never mutate their inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .core import EnergyEnvironment
from .graphs import count_simple_cycles, simple_cycles, strongly_connected_components

__all__ = [
    "Segment",
    "TrackGraph",
    "Ball",
    "PhysicalSystem",
    "StablePoint",
    "Transition",
    "TrackError",
    "OrientationError",
    "build_incline",
    "close_loop",
    "add_valleys",
    "valley_to_loop",
    "iterate_construction",
    "merge_systems",
    "link_systems",
    "place_balls",
]

SUBLOOP_FRICTION_FACTOR = 0.1  # well-lubricated sub-loops
MAX_ITERATE_DEPTH = 4

HEIGHT_TOL = 1e-9


class TrackError(ValueError):
    pass


class OrientationError(TrackError):
    """The requested graph surgery would leave a segment off every cycle."""


@dataclass(frozen=True)
class Segment:
    id: str
    src: str
    dst: str
    length: float
    profile: tuple[tuple[float, float], ...]  # (arc position, height) breakpoints
    friction: float | None = None  # None -> system default

    def __post_init__(self):
        if not self.length > 0:
            raise TrackError(f"segment {self.id!r}: length must be > 0")
        if len(self.profile) < 2:
            raise TrackError(f"segment {self.id!r}: profile needs >= 2 breakpoints")
        s_prev = None
        for s, h in self.profile:
            if not (math.isfinite(h) and h >= 0):
                raise TrackError(f"segment {self.id!r}: heights must be finite and >= 0")
            if s_prev is not None and s <= s_prev:
                raise TrackError(f"segment {self.id!r}: breakpoints must be increasing")
            s_prev = s
        if abs(self.profile[0][0]) > HEIGHT_TOL or abs(self.profile[-1][0] - self.length) > HEIGHT_TOL:
            raise TrackError(f"segment {self.id!r}: profile must span [0, length]")

    def height(self, s: float) -> float:
        pts = self.profile
        if s <= pts[0][0]:
            return pts[0][1]
        for (s0, h0), (s1, h1) in zip(pts, pts[1:]):
            if s <= s1:
                return h0 + (h1 - h0) * (s - s0) / (s1 - s0)
        return pts[-1][1]

    def interior_minima(self) -> list[tuple[float, float]]:
        """(s, h) of strict interior local minima (down-slope then up-slope)."""
        out = []
        pts = self.profile
        for i in range(1, len(pts) - 1):
            s0, h0 = pts[i - 1]
            s, h = pts[i]
            s1, h1 = pts[i + 1]
            left = (h - h0) / (s - s0)
            right = (h1 - h) / (s1 - s)
            if left < -HEIGHT_TOL and right > HEIGHT_TOL:
                out.append((s, h))
        return out


@dataclass(frozen=True)
class StablePoint:
    """A local height minimum: at a node or interior to a segment."""

    kind: str      # "node" | "interior"
    ref: str       # node id or segment id
    s: float       # arc position along the segment (0.0 for nodes)
    height: float


@dataclass(frozen=True)
class Transition:
    """Directed valley-to-valley arc with the barrier crossed on the way."""

    src: int   # stable point indices
    dst: int
    peak_height: float


@dataclass
class TrackGraph:
    node_heights: dict[str, float]
    segments: dict[str, Segment]

    def __post_init__(self):
        for seg in self.segments.values():
            for node in (seg.src, seg.dst):
                if node not in self.node_heights:
                    raise TrackError(f"segment {seg.id!r}: unknown node {node!r}")
            if abs(seg.profile[0][1] - self.node_heights[seg.src]) > 1e-6:
                raise TrackError(f"segment {seg.id!r}: height discontinuity at {seg.src!r}")
            if abs(seg.profile[-1][1] - self.node_heights[seg.dst]) > 1e-6:
                raise TrackError(f"segment {seg.id!r}: height discontinuity at {seg.dst!r}")

    # -- basic queries ------------------------------------------------------

    def outgoing(self, node: str) -> list[Segment]:
        return [s for s in self.segments.values() if s.src == node]

    def incoming(self, node: str) -> list[Segment]:
        return [s for s in self.segments.values() if s.dst == node]

    def edge_triples(self) -> list[tuple[str, str, str]]:
        return [(s.src, s.dst, s.id) for s in self.segments.values()]

    def cycle_count(self, cap: int = 10_000) -> int:
        n, _ = count_simple_cycles(self.edge_triples(), cap=cap)
        return n

    def cycles(self, cap: int = 10_000) -> list[tuple[str, ...]]:
        return list(simple_cycles(self.edge_triples(), cap=cap))

    def is_closed(self) -> bool:
        return self.cycle_count(cap=1) >= 1

    def total_length(self) -> float:
        return sum(s.length for s in self.segments.values())

    def dead_segments(self) -> list[str]:
        """Segments that lie on no directed cycle."""
        adj: dict[str, list[str]] = {n: [] for n in self.node_heights}
        for s in self.segments.values():
            adj[s.src].append(s.dst)
        comp_of: dict[str, int] = {}
        for i, comp in enumerate(strongly_connected_components(adj)):
            for n in comp:
                comp_of[n] = i
        return sorted(
            s.id for s in self.segments.values() if comp_of[s.src] != comp_of[s.dst]
        )

    # -- stable points and transitions --------------------------------------

    def stable_points(self) -> list[StablePoint]:
        """Local minima in deterministic order (segment insertion order, then
        node minima as they are first encountered as a segment source)."""
        node_min: dict[str, bool] = {}
        for node, h in self.node_heights.items():
            pieces = []
            for seg in self.outgoing(node):
                s1, h1 = seg.profile[1]
                pieces.append((h1 - seg.profile[0][1]) / (s1 - seg.profile[0][0]))
            for seg in self.incoming(node):
                s0, h0 = seg.profile[-2]
                # slope moving away from the node, against segment direction
                pieces.append((h0 - seg.profile[-1][1]) / (seg.profile[-1][0] - s0))
            node_min[node] = bool(pieces) and all(p > HEIGHT_TOL for p in pieces)

        out: list[StablePoint] = []
        seen_nodes: set[str] = set()
        for seg in self.segments.values():
            if node_min.get(seg.src) and seg.src not in seen_nodes:
                seen_nodes.add(seg.src)
                out.append(StablePoint("node", seg.src, 0.0, self.node_heights[seg.src]))
            for s, h in seg.interior_minima():
                out.append(StablePoint("interior", seg.id, s, h))
            if node_min.get(seg.dst) and seg.dst not in seen_nodes:
                seen_nodes.add(seg.dst)
                out.append(StablePoint("node", seg.dst, 0.0, self.node_heights[seg.dst]))
        return out

    def transitions(self) -> list[Transition]:
        """Distinct valley->valley arcs along directed paths with no valley in
        between; peak_height is the highest point on the lowest-peak such path."""
        points = self.stable_points()
        by_interior: dict[str, list[tuple[float, int]]] = {}
        by_node: dict[str, int] = {}
        for i, p in enumerate(points):
            if p.kind == "interior":
                by_interior.setdefault(p.ref, []).append((p.s, i))
            else:
                by_node[p.ref] = i
        for lst in by_interior.values():
            lst.sort()

        found: dict[tuple[int, int], float] = {}

        def walk(seg: Segment, s_from: float, origin: int, peak: float, visited: frozenset[str]):
            # next interior valley on this segment after s_from?
            for s, idx in by_interior.get(seg.id, ()):
                if s > s_from + HEIGHT_TOL:
                    p = max(peak, _max_height(seg, s_from, s))
                    key = (origin, idx)
                    if key not in found or p < found[key]:
                        found[key] = p
                    return
            p = max(peak, _max_height(seg, s_from, seg.length))
            if seg.dst in by_node:
                key = (origin, by_node[seg.dst])
                if key not in found or p < found[key]:
                    found[key] = p
                return
            if seg.id in visited:
                return
            for nxt in self.outgoing(seg.dst):
                walk(nxt, 0.0, origin, p, visited | {seg.id})

        for i, p in enumerate(points):
            if p.kind == "interior":
                seg = self.segments[p.ref]
                walk(seg, p.s, i, p.height, frozenset())
            else:
                for seg in self.outgoing(p.ref):
                    walk(seg, 0.0, i, p.height, frozenset())

        return [Transition(s, d, found[(s, d)]) for s, d in sorted(found)]


def _max_height(seg: Segment, s0: float, s1: float) -> float:
    hmax = max(seg.height(s0), seg.height(s1))
    for s, h in seg.profile:
        if s0 - HEIGHT_TOL <= s <= s1 + HEIGHT_TOL:
            hmax = max(hmax, h)
    return hmax


@dataclass
class Ball:
    segment: str
    s: float
    v: float
    mass: float = 1.0


@dataclass
class PhysicalSystem:
    track: TrackGraph
    balls: list[Ball] = field(default_factory=list)
    friction: float = 0.05
    gravity: float = 1.0
    environment: EnergyEnvironment = field(default_factory=EnergyEnvironment)

    def __post_init__(self):
        if self.friction < 0:
            raise TrackError("friction must be >= 0")
        if not self.gravity > 0:
            raise TrackError("gravity must be > 0")

    def segment_friction(self, seg: Segment) -> float:
        return self.friction if seg.friction is None else seg.friction

    def copy(self) -> "PhysicalSystem":
        return PhysicalSystem(
            track=TrackGraph(dict(self.track.node_heights), dict(self.track.segments)),
            balls=[replace(b) for b in self.balls],
            friction=self.friction,
            gravity=self.gravity,
            environment=self.environment,
        )


# ---------------------------------------------------------------------------
# constructors


def build_incline(length: float, drop_height: float, *, friction: float = 0.05,
                  gravity: float = 1.0) -> PhysicalSystem:
    """Open single-segment ramp from height ``drop_height`` down to 0."""
    if not length > 0:
        raise TrackError("length must be > 0")
    if drop_height < 0:
        raise TrackError("drop_height must be >= 0")
    track = TrackGraph(
        node_heights={"top": float(drop_height), "bot": 0.0},
        segments={
            "ramp": Segment(
                "ramp", "top", "bot", float(length),
                ((0.0, float(drop_height)), (float(length), 0.0)),
            )
        },
    )
    return PhysicalSystem(track=track, friction=friction, gravity=gravity)


def close_loop(sys: PhysicalSystem) -> PhysicalSystem:
    """Add a return segment turning the open track into one directed cycle.

    The result has a single global height minimum; add_valleys fixes that.
    """
    track = sys.track
    if track.is_closed():
        raise TrackError("track is already closed")
    # Identify the open chain ends: a node with no outgoing and one with no incoming.
    starts = [n for n in track.node_heights if not track.incoming(n)]
    ends = [n for n in track.node_heights if not track.outgoing(n)]
    if len(starts) != 1 or len(ends) != 1:
        raise TrackError("close_loop needs a single open chain")
    start, end = starts[0], ends[0]
    h_end = track.node_heights[end]
    h_start = track.node_heights[start]
    ret_len = track.total_length()
    ret = Segment(
        "return", end, start, ret_len, ((0.0, h_end), (ret_len, h_start))
    )
    out = sys.copy()
    out.track.segments["return"] = ret
    return out


def add_valleys(sys: PhysicalSystem, n: int, *, heights: list[float] | None = None,
                hill_height: float | None = None) -> PhysicalSystem:
    """Rewrite the loop profile as a roller coaster with ``n`` stable valleys.

    Valleys sit at nodes, at distinct descending heights by default
    (``H * (n + 1 - i) / (n + 1)`` for the i-th valley, H the track's max
    height); hills between them reach ``hill_height`` (default H).  The total
    cycle length is preserved.
    """
    if n < 2:
        raise TrackError("add_valleys needs n >= 2")
    track = sys.track
    if not track.is_closed():
        raise TrackError("add_valleys needs a closed track")
    if track.cycle_count(cap=2) != 1:
        raise TrackError("add_valleys operates on a single-cycle track")

    hmax = max(h for _, h in _all_profile_points(track))
    top = float(hill_height) if hill_height is not None else hmax
    if heights is None:
        heights = [hmax * (n + 1 - i) / (n + 1) for i in range(1, n + 1)]
    if len(heights) != n:
        raise TrackError("heights must list one height per valley")
    if any(h < 0 or h > top + HEIGHT_TOL for h in heights):
        raise TrackError("valley heights must lie in [0, hill_height]")

    total = track.total_length()
    arc = total / n
    nodes = {f"v{i}": float(heights[i]) for i in range(n)}
    segments: dict[str, Segment] = {}
    for i in range(n):
        j = (i + 1) % n
        prof = (
            (0.0, float(heights[i])),
            (arc / 2, top),
            (arc, float(heights[j])),
        )
        segments[f"arc{i}"] = Segment(f"arc{i}", f"v{i}", f"v{j}", arc, prof)
    out = sys.copy()
    out.track = TrackGraph(nodes, segments)
    out.balls = []  # profile rewrite invalidates ball positions
    return out


def _all_profile_points(track: TrackGraph):
    for seg in track.segments.values():
        yield from seg.profile


def _split_segment(track: TrackGraph, seg_id: str, s: float, node_id: str) -> None:
    """Split a segment at interior position s, inserting a node (in place)."""
    seg = track.segments[seg_id]
    h = seg.height(s)
    left_pts = [(p, q) for p, q in seg.profile if p < s - HEIGHT_TOL]
    right_pts = [(p - s, q) for p, q in seg.profile if p > s + HEIGHT_TOL]
    left = Segment(f"{seg_id}.a", seg.src, node_id, s,
                   tuple(left_pts + [(s, h)]), seg.friction)
    right = Segment(f"{seg_id}.b", node_id, seg.dst, seg.length - s,
                    tuple([(0.0, h)] + right_pts), seg.friction)
    track.node_heights[node_id] = h
    # preserve ordering: replace the split segment in place
    new_segments: dict[str, Segment] = {}
    for sid, old in track.segments.items():
        if sid == seg_id:
            new_segments[left.id] = left
            new_segments[right.id] = right
        else:
            new_segments[sid] = old
    track.segments = new_segments


def valley_to_loop(sys: PhysicalSystem, valley_index: int, *,
                   loop_length: float | None = None,
                   dip_depth: float | None = None) -> PhysicalSystem:
    """Replace one stable point with a small low-friction directed sub-loop.

    The valley node is split into an entry and an exit; a dipped segment runs
    entry -> exit and a level return runs exit -> entry, so a ball inside
    circulates in a single direction.  Sub-loop friction defaults to a tenth
    of the system friction.
    """
    out = sys.copy()
    track = out.track
    points = track.stable_points()
    if not 0 <= valley_index < len(points):
        raise TrackError(
            f"valley index {valley_index} out of range (track has {len(points)} stable points)"
        )
    point = points[valley_index]

    if point.kind == "interior":
        node_id = f"{point.ref}@min"
        _split_segment(track, point.ref, point.s, node_id)
    else:
        node_id = point.ref

    h = track.node_heights[node_id]
    hmax = max(q for _, q in _all_profile_points(track))
    ell = loop_length if loop_length is not None else max(track.total_length() / 50.0, 0.5)
    dip = dip_depth if dip_depth is not None else min(0.05 * hmax, h)
    dip = min(dip, h)  # keep heights >= 0

    a, b = f"{node_id}_in", f"{node_id}_out"
    track.node_heights[a] = h
    track.node_heights[b] = h
    del track.node_heights[node_id]
    sub_mu = sys.friction * SUBLOOP_FRICTION_FACTOR

    renamed: dict[str, Segment] = {}
    for sid, seg in track.segments.items():
        src = b if seg.src == node_id else seg.src  # departures leave from the exit
        dst = a if seg.dst == node_id else seg.dst  # arrivals land on the entry
        renamed[sid] = replace(seg, src=src, dst=dst)
    track.segments = renamed

    dip_prof = ((0.0, h), (ell / 2, h - dip), (ell, h)) if dip > HEIGHT_TOL else ((0.0, h), (ell, h))
    track.segments[f"dip_{node_id}"] = Segment(
        f"dip_{node_id}", a, b, ell, dip_prof, friction=sub_mu
    )
    track.segments[f"ret_{node_id}"] = Segment(
        f"ret_{node_id}", b, a, ell, ((0.0, h), (ell, h)), friction=sub_mu
    )
    return out


def _carve_valleys_into_segment(track: TrackGraph, seg_id: str, k: int,
                                depth_step: float) -> None:
    """Re-profile a segment with k interior dips at distinct depths."""
    seg = track.segments[seg_id]
    h0 = seg.profile[0][1]
    h1 = seg.profile[-1][1]
    base = min(h0, h1)
    pts: list[tuple[float, float]] = [(0.0, h0)]
    step = seg.length / (2 * k)
    for i in range(k):
        dip_h = max(base - depth_step * (i + 1), 0.0)
        pts.append((step * (2 * i + 1), dip_h))
        if i < k - 1:
            pts.append((step * (2 * i + 2), base))
    pts.append((seg.length, h1))
    track.segments[seg_id] = replace(seg, profile=tuple(pts))


def iterate_construction(sys: PhysicalSystem, depth: int, *,
                         max_depth: int = MAX_ITERATE_DEPTH,
                         valleys_per_loop: int = 2) -> PhysicalSystem:
    """Recursively convert stable points into sub-loops.

    Depth 1 applies valley_to_loop to every current stable point; each further
    level carves ``valleys_per_loop`` dips into every sub-loop created at the
    previous level and converts those into sub-sub-loops.
    """
    if depth < 1:
        raise TrackError("depth must be >= 1")
    if depth > max_depth:
        raise TrackError(f"depth {depth} exceeds cap {max_depth}")
    if not sys.track.is_closed():
        raise TrackError("iterate_construction needs a closed track")

    out = sys
    n_points = len(out.track.stable_points())
    created: list[str] = []  # dip segment ids created at the current level
    for _ in range(n_points):
        points = out.track.stable_points()
        if not points or (points[0].kind == "interior" and points[0].ref.startswith("dip_")):
            break  # only the original stable points get converted at level 1
        out = valley_to_loop(out, 0)
        created.append(_newest_dip(out.track))

    for _level in range(2, depth + 1):
        hmax = max(q for _, q in _all_profile_points(out.track))
        next_created: list[str] = []
        for dip_seg in created:
            _carve_valleys_into_segment(
                out.track, dip_seg, valleys_per_loop, depth_step=0.02 * hmax
            )
            for _ in range(valleys_per_loop):
                minima = out.track.segments[dip_seg].interior_minima()
                if not minima:
                    break
                target = _stable_point_index(out.track, dip_seg, minima[0][0])
                out = valley_to_loop(out, target)
                dip_seg = _renamed_after_split(out.track, dip_seg)
                next_created.append(_newest_dip(out.track))
        created = next_created
    return out


def _newest_dip(track: TrackGraph) -> str:
    return [sid for sid in track.segments if sid.startswith("dip_")][-1]


def _renamed_after_split(track: TrackGraph, seg_id: str) -> str:
    if seg_id in track.segments:
        return seg_id
    candidates = [sid for sid in track.segments if sid.startswith(seg_id + ".")]
    return candidates[-1]


def _stable_point_index(track: TrackGraph, seg_id: str, s: float) -> int:
    for i, p in enumerate(track.stable_points()):
        if p.kind == "interior" and p.ref == seg_id and abs(p.s - s) < 1e-9:
            return i
    raise TrackError(f"no stable point at {seg_id}:{s}")


def merge_systems(a: PhysicalSystem, b: PhysicalSystem,
                  identify: list[tuple[str, str]] | None = None) -> PhysicalSystem:
    """Fuse two closed systems by identifying nodes (default: their lowest
    nodes).  Identified nodes must have equal heights."""
    _require_closed(a, "merge")
    _require_closed(b, "merge")
    if identify is None:
        identify = [(_lowest_node(a.track), _lowest_node(b.track))]
    mapping: dict[str, str] = {}
    for a_node, b_node in identify:
        if a_node not in a.track.node_heights:
            raise TrackError(f"unknown node {a_node!r} in first system")
        if b_node not in b.track.node_heights:
            raise TrackError(f"unknown node {b_node!r} in second system")
        ha, hb = a.track.node_heights[a_node], b.track.node_heights[b_node]
        if abs(ha - hb) > 1e-9:
            raise TrackError(
                f"cannot fuse {a_node!r} (h={ha}) with {b_node!r} (h={hb}): height mismatch"
            )
        mapping[b_node] = a_node

    nodes = dict(a.track.node_heights)
    for n, h in b.track.node_heights.items():
        if n not in mapping:
            nodes[f"m.{n}"] = h
    segments = dict(a.track.segments)
    for sid, seg in b.track.segments.items():
        src = mapping.get(seg.src, f"m.{seg.src}")
        dst = mapping.get(seg.dst, f"m.{seg.dst}")
        segments[f"m.{sid}"] = replace(seg, id=f"m.{sid}", src=src, dst=dst)

    merged = PhysicalSystem(
        track=TrackGraph(nodes, segments),
        balls=[replace(bl) for bl in a.balls]
        + [replace(bl, segment=f"m.{bl.segment}") for bl in b.balls],
        friction=a.friction,
        gravity=a.gravity,
        environment=a.environment,
    )
    dead = merged.track.dead_segments()
    if dead:
        raise OrientationError(f"merge leaves segments off every cycle: {dead}")
    return merged


def link_systems(a: PhysicalSystem, b: PhysicalSystem,
                 junctions: tuple[str, str], *, connectors: int = 2,
                 connector_length: float | None = None) -> PhysicalSystem:
    """Join two closed systems with connector segments between named nodes.

    Two connectors (there and back) are required for a consistent flow; a
    single connector is refused because it leaves no return path.
    """
    _require_closed(a, "link")
    _require_closed(b, "link")
    node_a, node_b = junctions
    if node_a not in a.track.node_heights:
        raise TrackError(f"unknown junction node {node_a!r} in first system")
    if node_b not in b.track.node_heights:
        raise TrackError(f"unknown junction node {node_b!r} in second system")
    if connectors < 2:
        raise OrientationError("a single connector has no return path; need >= 2")

    nodes = dict(a.track.node_heights)
    for n, h in b.track.node_heights.items():
        nodes[f"m.{n}"] = h
    segments = dict(a.track.segments)
    for sid, seg in b.track.segments.items():
        segments[f"m.{sid}"] = replace(
            seg, id=f"m.{sid}", src=f"m.{seg.src}", dst=f"m.{seg.dst}"
        )

    ha = a.track.node_heights[node_a]
    hb = b.track.node_heights[node_b]
    length = connector_length if connector_length is not None else max(
        1.0, 0.1 * (a.track.total_length() + b.track.total_length())
    )
    for i in range(connectors):
        if i % 2 == 0:
            src, dst, h0, h1 = node_a, f"m.{node_b}", ha, hb
        else:
            src, dst, h0, h1 = f"m.{node_b}", node_a, hb, ha
        sid = f"link{i}"
        segments[sid] = Segment(sid, src, dst, length, ((0.0, h0), (length, h1)))

    linked = PhysicalSystem(
        track=TrackGraph(nodes, segments),
        balls=[replace(bl) for bl in a.balls]
        + [replace(bl, segment=f"m.{bl.segment}") for bl in b.balls],
        friction=a.friction,
        gravity=a.gravity,
        environment=a.environment,
    )
    dead = linked.track.dead_segments()
    if dead:
        raise OrientationError(f"link leaves segments off every cycle: {dead}")
    return linked


def _require_closed(sys: PhysicalSystem, op: str) -> None:
    if not sys.track.is_closed():
        raise TrackError(f"{op} requires closed tracks")


def _lowest_node(track: TrackGraph) -> str:
    return min(track.node_heights, key=lambda n: (track.node_heights[n], n))


def place_balls(sys: PhysicalSystem, n: int, *, speed: float = 0.0,
                mass: float = 1.0) -> PhysicalSystem:
    """Place n balls round-robin over the stable points (deterministic).

    Node stable points put the ball at the start of an outgoing segment;
    interior ones at the dip itself.
    """
    if n < 1:
        raise TrackError("need at least one ball")
    points = sys.track.stable_points()
    out = sys.copy()
    out.balls = []
    if not points:
        seg = next(iter(sys.track.segments.values()))
        out.balls = [Ball(seg.id, 0.0, speed, mass) for _ in range(n)]
        return out
    for i in range(n):
        p = points[i % len(points)]
        if p.kind == "interior":
            out.balls.append(Ball(p.ref, p.s, speed, mass))
        else:
            outgoing = sorted(sys.track.outgoing(p.ref), key=lambda s: s.id)
            if outgoing:
                out.balls.append(Ball(outgoing[0].id, 0.0, speed, mass))
            else:
                incoming = sorted(sys.track.incoming(p.ref), key=lambda s: s.id)
                if not incoming:
                    raise TrackError(f"stable node {p.ref!r} has no incident segment")
                out.balls.append(Ball(incoming[0].id, incoming[0].length, speed, mass))
    return out
