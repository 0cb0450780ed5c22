"""Line-oriented network file format.

    species <id> energy=<float> halflife=<float|inf>
    reaction <id>: <k*A + B> -> <C> ea=<float> rate=<float> catalyst=<id|pump:<id>|none>
    env bursts rate=<float> energy=<float>
    abundant <id>=<count>
    pump <id> design=<A|B|C|D> vmin= vmax= kappa= emech= ejs= \
         intake=<ids|all> exhaust=<ids|all> hosts=<rid,...> [fuel=<rid>]

Blank lines and ``#`` comments are ignored.  Parsing either returns a fully
validated network or raises with every diagnostic carrying file:line:column;
a partially valid object is never produced.  serialize -> parse is the
identity on valid networks, and canonical files round-trip byte for byte.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    EnergyEnvironment,
    PUMP_CATALYST_PREFIX,
    Reaction,
    ReactionNetwork,
    Species,
    format_multiset,
    parse_multiset,
    validate_network,
)
from .mapping import SpeciesCatalog
from .pumps import Pump, make_pump

__all__ = [
    "Diagnostic",
    "NetworkParseError",
    "parse_network_text",
    "parse_network",
    "serialize_network",
    "parse_catalog_text",
    "parse_catalog",
    "serialize_catalog",
]


@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    message: str

    def render(self, source: str) -> str:
        return f"{source}:{self.line}:{self.column}: {self.message}"


class NetworkParseError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic], source: str = "<network>"):
        self.diagnostics = diagnostics
        self.source = source
        super().__init__("\n".join(d.render(source) for d in diagnostics))


def _tokens(line: str) -> list[tuple[str, int]]:
    """(token, 1-based column) pairs."""
    out = []
    col = 0
    for raw in line.split(" "):
        if raw:
            out.append((raw, col + 1))
        col += len(raw) + 1
    return out


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


class _Parser:
    def __init__(self, text: str, source: str):
        self.source = source
        self.lines = text.splitlines()
        self.diags: list[Diagnostic] = []
        self.species: list[Species] = []
        self.species_lines: dict[str, int] = {}
        self.reactions: list[Reaction] = []
        self.reaction_lines: dict[str, int] = {}
        self.abundant: list[tuple[str, int]] = []
        self.burst_rate = 0.0
        self.burst_energy = 0.0
        self.env_seen = False
        self.pumps: list[Pump] = []
        self.pump_lines: dict[str, int] = {}
        self.pump_hosts: dict[str, tuple[str, ...]] = {}

    def err(self, line: int, col: int, msg: str) -> None:
        self.diags.append(Diagnostic(line, col, msg))

    def kv(self, tokens: list[tuple[str, int]], lineno: int,
           required: dict[str, type], optional: dict[str, type] | None = None) -> dict | None:
        """Parse key=value tokens against a schema; None on any diagnostic."""
        optional = optional or {}
        seen: dict[str, object] = {}
        ok = True
        for tok, col in tokens:
            if "=" not in tok:
                self.err(lineno, col, f"expected key=value, got {tok!r}")
                ok = False
                continue
            key, _, val = tok.partition("=")
            if key in seen:
                self.err(lineno, col, f"duplicate key {key!r}")
                ok = False
                continue
            if key not in required and key not in optional:
                self.err(lineno, col, f"unknown key {key!r}")
                ok = False
                continue
            typ = required.get(key, optional.get(key))
            try:
                if typ is float:
                    seen[key] = float(val)
                elif typ is int:
                    seen[key] = int(val)
                else:
                    seen[key] = val
            except ValueError:
                self.err(lineno, col, f"bad {typ.__name__} value {val!r} for {key!r}")
                ok = False
        for key in required:
            if key not in seen:
                self.err(lineno, 1, f"missing required key {key!r}")
                ok = False
        return seen if ok else None

    # -- line handlers --------------------------------------------------------

    def parse_species(self, tokens, lineno):
        if len(tokens) < 2:
            return self.err(lineno, 1, "species line needs an id")
        sid, col = tokens[1]
        kv = self.kv(tokens[2:], lineno, {"energy": float, "halflife": float})
        if kv is None:
            return
        if sid in self.species_lines:
            return self.err(
                lineno, col,
                f"duplicate species id {sid!r} (first defined at line {self.species_lines[sid]})",
            )
        try:
            sp = Species(sid, kv["energy"], kv["halflife"])
        except ValueError as exc:
            return self.err(lineno, col, str(exc))
        self.species.append(sp)
        self.species_lines[sid] = lineno

    def parse_reaction(self, tokens, lineno):
        if len(tokens) < 2 or not tokens[1][0].endswith(":"):
            return self.err(lineno, 1, "reaction line needs '<id>:'")
        rid = tokens[1][0][:-1]
        rid_col = tokens[1][1]
        if not rid:
            return self.err(lineno, rid_col, "empty reaction id")
        rest = tokens[2:]
        arrow = next((i for i, (tok, _) in enumerate(rest) if tok == "->"), None)
        if arrow is None:
            return self.err(lineno, rid_col, "reaction needs '->'")
        lhs_tokens = rest[:arrow]
        tail = rest[arrow + 1:]
        rhs_tokens = []
        for tok, col in tail:
            if "=" in tok:
                break
            rhs_tokens.append((tok, col))
        kv_tokens = tail[len(rhs_tokens):]
        kv = self.kv(
            kv_tokens, lineno,
            {"ea": float},
            {"rate": float, "catalyst": str},
        )
        if kv is None:
            return
        lhs_text = " ".join(t for t, _ in lhs_tokens)
        rhs_text = " ".join(t for t, _ in rhs_tokens)
        if not lhs_text or not rhs_text:
            return self.err(lineno, rid_col, "reaction needs reactants and products")
        try:
            reactants = parse_multiset(lhs_text)
            products = parse_multiset(rhs_text)
        except ValueError as exc:
            return self.err(lineno, rid_col, str(exc))
        catalyst = kv.get("catalyst", "none")
        cat = None if catalyst == "none" else str(catalyst)
        if rid in self.reaction_lines:
            return self.err(
                lineno, rid_col,
                f"duplicate reaction id {rid!r} (first defined at line {self.reaction_lines[rid]})",
            )
        try:
            rxn = Reaction(
                id=rid, reactants=reactants, products=products,
                activation_energy=kv["ea"], base_rate=kv.get("rate", 1.0),
                catalyst=cat,
            )
        except ValueError as exc:
            return self.err(lineno, rid_col, str(exc))
        self.reactions.append(rxn)
        self.reaction_lines[rid] = lineno

    def parse_env(self, tokens, lineno):
        if len(tokens) < 2 or tokens[1][0] != "bursts":
            return self.err(lineno, 1, "env line must read 'env bursts rate=.. energy=..'")
        if self.env_seen:
            return self.err(lineno, 1, "duplicate env line")
        kv = self.kv(tokens[2:], lineno, {"rate": float, "energy": float})
        if kv is None:
            return
        if kv["rate"] < 0 or kv["energy"] < 0:
            return self.err(lineno, 1, "burst rate and energy must be >= 0")
        self.burst_rate, self.burst_energy = kv["rate"], kv["energy"]
        self.env_seen = True

    def parse_abundant(self, tokens, lineno):
        if len(tokens) != 2 or "=" not in tokens[1][0]:
            return self.err(lineno, 1, "abundant line must read 'abundant <id>=<count>'")
        sid, _, count_s = tokens[1][0].partition("=")
        try:
            count = int(count_s)
        except ValueError:
            return self.err(lineno, tokens[1][1], f"bad count {count_s!r}")
        if count < 0:
            return self.err(lineno, tokens[1][1], "abundant count must be >= 0")
        if any(s == sid for s, _ in self.abundant):
            return self.err(lineno, tokens[1][1], f"duplicate abundant entry for {sid!r}")
        self.abundant.append((sid, count))

    def parse_pump(self, tokens, lineno):
        if len(tokens) < 2:
            return self.err(lineno, 1, "pump line needs an id")
        pid, col = tokens[1]
        kv = self.kv(
            tokens[2:], lineno,
            {
                "design": str, "vmin": float, "vmax": float, "kappa": float,
                "emech": float, "ejs": float, "intake": str, "exhaust": str,
                "hosts": str,
            },
            {"fuel": str},
        )
        if kv is None:
            return
        if pid in self.pump_lines:
            return self.err(lineno, col, f"duplicate pump id {pid!r}")

        def filt(spec: str):
            return None if spec == "all" else frozenset(spec.split(","))

        hosts = tuple(h for h in kv["hosts"].split(",") if h)
        try:
            pump = make_pump(
                pid, kv["design"], v_min=kv["vmin"], v_max=kv["vmax"],
                kappa=kv["kappa"], e_mech=kv["emech"], e_js=kv["ejs"],
                intake_species=filt(kv["intake"]), exhaust_species=filt(kv["exhaust"]),
                hosted=hosts, fuel=kv.get("fuel"),
            )
        except ValueError as exc:
            return self.err(lineno, col, str(exc))
        self.pumps.append(pump)
        self.pump_lines[pid] = lineno
        self.pump_hosts[pid] = hosts + ((kv["fuel"],) if kv.get("fuel") else ())

    # -- whole-file ------------------------------------------------------------

    def cross_validate(self) -> None:
        ids = {sp.id for sp in self.species}
        for sid, _count in self.abundant:
            if sid not in ids:
                self.err(self.line_of_abundant(sid), 1, f"abundant references unknown species {sid!r}")
        rids = {r.id for r in self.reactions}
        host_of: dict[str, str] = {}
        for pid, hosts in self.pump_hosts.items():
            for rid in hosts:
                if rid not in rids:
                    self.err(self.pump_lines[pid], 1, f"pump {pid!r} hosts unknown reaction {rid!r}")
                elif rid in host_of and host_of[rid] != pid:
                    self.err(self.pump_lines[pid], 1,
                             f"reaction {rid!r} is hosted by both {host_of[rid]!r} and {pid!r}")
                else:
                    host_of[rid] = pid
        # reconcile reaction catalyst=pump:X with pump hosts
        for i, r in enumerate(self.reactions):
            want = host_of.get(r.id)
            have = r.pump_host
            if have is not None and have not in self.pump_lines:
                self.err(self.reaction_lines[r.id], 1,
                         f"reaction {r.id!r} names unknown pump {have!r}")
            elif have is not None and host_of.get(r.id) != have:
                self.err(self.reaction_lines[r.id], 1,
                         f"reaction {r.id!r} names pump {have!r} but that pump does not host it")
            elif want is not None and have is None:
                if r.catalyst is not None:
                    self.err(self.pump_lines[want], 1,
                             f"reaction {r.id!r} already has catalyst {r.catalyst!r}; "
                             f"it cannot also run inside pump {want!r}")
                else:
                    from dataclasses import replace
                    self.reactions[i] = replace(r, catalyst=PUMP_CATALYST_PREFIX + want)

    def line_of_abundant(self, sid: str) -> int:
        for lineno, line in enumerate(self.lines, start=1):
            stripped = line.split("#", 1)[0]
            if stripped.strip().startswith("abundant") and f"{sid}=" in stripped:
                return lineno
        return 1

    def run(self) -> tuple[ReactionNetwork, list[Pump]]:
        handlers = {
            "species": self.parse_species,
            "reaction": self.parse_reaction,
            "env": self.parse_env,
            "abundant": self.parse_abundant,
            "pump": self.parse_pump,
        }
        for lineno, raw in enumerate(self.lines, start=1):
            line = raw.split("#", 1)[0].rstrip()
            if not line.strip():
                continue
            tokens = _tokens(line)
            word, col = tokens[0]
            handler = handlers.get(word)
            if handler is None:
                self.err(lineno, col, f"unknown directive {word!r}")
                continue
            handler(tokens, lineno)

        if not self.species and not self.diags:
            self.err(1, 1, "no species defined")
        if not self.diags:
            self.cross_validate()
        if self.diags:
            raise NetworkParseError(sorted(self.diags, key=lambda d: (d.line, d.column)), self.source)

        net = ReactionNetwork(
            catalog=tuple(self.species),
            reactions=tuple(self.reactions),
            environment=EnergyEnvironment(
                burst_rate=self.burst_rate,
                burst_energy=self.burst_energy,
                abundant_inputs=tuple(self.abundant),
            ),
        )
        violations = validate_network(net)
        if violations:
            diags = []
            for v in violations:
                lineno = self.reaction_lines.get(v.subject) or self.species_lines.get(v.subject) or 1
                diags.append(Diagnostic(lineno, 1, str(v)))
            raise NetworkParseError(sorted(diags, key=lambda d: d.line), self.source)
        return net, self.pumps


def parse_network_text(text: str, source: str = "<network>") -> tuple[ReactionNetwork, list[Pump]]:
    return _Parser(text, source).run()


def parse_network(path: str) -> tuple[ReactionNetwork, list[Pump]]:
    with open(path) as fh:
        return parse_network_text(fh.read(), source=path)


def serialize_network(net: ReactionNetwork, pumps: list[Pump] | tuple[Pump, ...] = ()) -> str:
    lines = []
    for sp in net.catalog:
        lines.append(f"species {sp.id} energy={_fmt(sp.energy)} halflife={_fmt(sp.half_life)}")
    for r in net.reactions:
        cat = r.catalyst if r.catalyst else "none"
        lines.append(
            f"reaction {r.id}: {format_multiset(r.reactants)} -> {format_multiset(r.products)} "
            f"ea={_fmt(r.activation_energy)} rate={_fmt(r.base_rate)} catalyst={cat}"
        )
    env = net.environment
    if env.burst_rate or env.burst_energy:
        lines.append(f"env bursts rate={_fmt(env.burst_rate)} energy={_fmt(env.burst_energy)}")
    for sid, count in env.abundant_inputs:
        lines.append(f"abundant {sid}={count}")
    for p in pumps:
        def spec_of(filters):
            f = filters[0]
            return "all" if f.species is None else ",".join(sorted(f.species))

        hosts = ",".join(h for h in p.hosted)
        fuel = f" fuel={p.fuel}" if p.fuel else ""
        lines.append(
            f"pump {p.id} design={p.design} vmin={_fmt(p.v_min)} vmax={_fmt(p.v_max)} "
            f"kappa={_fmt(p.kappa)} emech={_fmt(p.e_mech)} ejs={_fmt(p.e_js)} "
            f"intake={spec_of(p.intakes)} exhaust={spec_of(p.exhausts)} hosts={hosts}{fuel}"
        )
    return "\n".join(lines) + "\n"


# -- species catalogs (for the mapping search) --------------------------------


def parse_catalog_text(text: str, source: str = "<catalog>") -> SpeciesCatalog:
    species: list[Species] = []
    catalysts: list[str] = []
    diags: list[Diagnostic] = []
    parser = _Parser(text, source)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        tokens = _tokens(line)
        word, col = tokens[0]
        if word == "species":
            parser.parse_species(tokens, lineno)
        elif word == "catalyst":
            if len(tokens) != 2:
                diags.append(Diagnostic(lineno, col, "catalyst line needs exactly one id"))
            elif tokens[1][0] in catalysts:
                diags.append(Diagnostic(lineno, tokens[1][1], f"duplicate catalyst {tokens[1][0]!r}"))
            else:
                catalysts.append(tokens[1][0])
        else:
            diags.append(Diagnostic(lineno, col, f"unknown directive {word!r} in catalog"))
    diags.extend(parser.diags)
    species = parser.species
    if not species and not diags:
        diags.append(Diagnostic(1, 1, "no species defined"))
    if diags:
        raise NetworkParseError(sorted(diags, key=lambda d: (d.line, d.column)), source)
    try:
        return SpeciesCatalog(tuple(species), tuple(catalysts))
    except ValueError as exc:
        raise NetworkParseError([Diagnostic(1, 1, str(exc))], source) from exc


def parse_catalog(path: str) -> SpeciesCatalog:
    with open(path) as fh:
        return parse_catalog_text(fh.read(), source=path)


def serialize_catalog(catalog: SpeciesCatalog) -> str:
    lines = [
        f"species {sp.id} energy={_fmt(sp.energy)} halflife={_fmt(sp.half_life)}"
        for sp in catalog.species
    ]
    lines += [f"catalyst {cid}" for cid in catalog.catalysts]
    return "\n".join(lines) + "\n"
