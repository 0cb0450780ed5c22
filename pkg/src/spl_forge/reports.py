"""Structured report documents: stable field order, JSON and line-oriented
text renderings, byte-stable JSON round-trips."""
from __future__ import annotations

import json
import math

from .analysis import (
    ComplexityScore,
    ExperimentStats,
    SCCDecomposition,
    SplitReport,
    SPLReport,
    enumerate_generators,
    find_sccs,
)
from .core import ReactionNetwork, species_digraph

SCHEMA_VERSION = 1

__all__ = [
    "emit_report",
    "render_text",
    "parse_report",
    "network_report",
    "spl_report_doc",
    "experiment_report_doc",
    "split_report_doc",
]


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def emit_report(doc: dict, fmt: str = "json") -> str:
    """Render a report document; JSON renderings parse back byte-identically."""
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    if fmt == "json":
        return json.dumps(_jsonable(doc), indent=2) + "\n"
    if fmt == "text":
        return render_text(doc)
    raise ValueError(f"unknown report format {fmt!r}")


def render_text(doc: dict, prefix: str = "") -> str:
    lines = []
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            lines.append(render_text(value, prefix=f"{name}."))
        elif isinstance(value, (list, tuple)):
            lines.append(f"{name} = {json.dumps(_jsonable(value))}")
        else:
            lines.append(f"{name} = {_jsonable(value)}")
    return "\n".join(lines) + ("" if prefix else "\n")


def parse_report(text: str) -> dict:
    return json.loads(text)


def network_report(net: ReactionNetwork, pumps=(),
                   complexity: ComplexityScore | None = None) -> dict:
    from .analysis import complexity_measure

    adj = species_digraph(net)
    dec: SCCDecomposition = find_sccs(adj)
    gens = enumerate_generators(net)
    comp = complexity or complexity_measure(net)
    return {
        "kind": "network",
        "species": list(net.species_ids),
        "n_reactions": len(net.reactions),
        "n_pumps": len(pumps),
        "scc_count": dec.count,
        "scc_components": [list(c) for c in dec.components],
        "cyclic_components": [list(c) for c in gens.cyclic_components],
        "generator_count": gens.count,
        "acyclic_species": list(gens.acyclic_species),
        "complexity": {
            "edges": comp.edges,
            "mean_out_degree": comp.mean_out_degree,
            "cycle_count": comp.cycle_count,
            "cycle_count_saturated": comp.saturated,
        },
    }


def spl_report_doc(report: SPLReport) -> dict:
    return {
        "kind": "spl_classification",
        "loops_found": report.loops_found,
        "parallel_interaction": report.parallel_interaction,
        "interaction_mode": report.interaction_mode,
        "stable": report.stable,
        "longevity_ratio": report.longevity_ratio,
        "recurrence_times": list(report.recurrence.times),
        "recurrence_periods": list(report.recurrence.periods),
        "period_drift": report.recurrence.drift,
        "epsilon": report.recurrence.epsilon,
        "inconclusive": report.inconclusive,
        "reason": report.reason,
        "verdict": report.verdict,
    }


def experiment_report_doc(stats: ExperimentStats) -> dict:
    return {
        "kind": "experiment",
        **stats.as_dict(),
        "looped_extinction_times": list(stats.looped_extinction),
        "control_extinction_times": list(stats.control_extinction),
        "looped_censored": list(stats.looped_censored),
        "control_censored": list(stats.control_censored),
    }


def split_report_doc(report: SplitReport) -> dict:
    return {
        "kind": "split_test",
        "halves": [
            {
                "counts": h.counts,
                "closure_complete": h.closure_complete,
                "generator_coverage": h.generator_coverage,
                "regrown": h.regrown,
            }
            for h in report.halves
        ],
        "both_closure_complete": report.both_closure_complete,
        "both_generator_covered": report.both_generator_covered,
        "warnings": list(report.warnings),
    }
