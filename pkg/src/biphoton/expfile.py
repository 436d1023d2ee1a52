"""Experiment files: a versioned YAML (JSON-compatible) description of a setup.

Example::

    schema: biphoton-experiment/1
    name: two-crystal
    modes:
      - {label: s1}
      - {label: i1}
      - {label: i2, alias_of: i1}
    elements:
      - {type: crystal, name: BBO1, signal: s1, idler: i1}
      - {type: phase, mode: s1, param: phi_S}
      - {type: beamsplitter, in_a: s2, in_b: s1}
    detectors: {A: s2}
    couplings:
      BBO1: {magnitude: 0.1, phase: 0.0}
    scan:
      grid:
        phi_S: {start: 0.0, stop: 12.566370614359172, num: 257}
        phi_I: 0.0

Displacements may be given instead of radians (``{start_nm, stop_nm, num,
wavelength_nm}`` on a grid axis, ``displacement_nm`` + ``wavelength_nm`` on
a phase element); they are converted with ``phi = 2 pi d / lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .algebra import ModeRegistry, RegistryError
from .analysis import Axis, CoherenceMatrix, PhaseGrid, ScanConfig, TimeScan
from .network import (BeamSplitter, Coupling, Crystal, DetectorTap, Network,
                      PhaseShift, SQRT_HALF)

SCHEMA = "biphoton-experiment/1"


class ExperimentFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None,
                 source: str | None = None):
        self.message = message
        self.line = line
        self.field = field
        self.source = source
        where = ":".join(str(p) for p in (source, line) if p is not None)
        prefix = f"{where}: " if where else ""
        ctx = f"{field}: " if field else ""
        super().__init__(f"{prefix}{ctx}{message}")


@dataclass
class ExperimentFile:
    name: str
    network: Network
    scan: ScanConfig | None = None
    coherence: CoherenceMatrix | None = None


class _LineDict(dict):
    """Mapping that remembers the source line of each key."""

    line: int = 0
    key_lines: dict


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    loader.flatten_mapping(node)
    out = _LineDict()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ExperimentFileError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


class _Ctx:
    def __init__(self, source):
        self.source = source

    def fail(self, msg, node=None, key=None, field=None):
        line = None
        if isinstance(node, _LineDict):
            line = node.key_lines.get(key, node.line) if key is not None else node.line
        raise ExperimentFileError(msg, line, field, self.source)

    def mapping(self, node, field, required=(), optional=()):
        if not isinstance(node, dict):
            self.fail(f"expected a mapping, got {type(node).__name__}", field=field)
        unknown = set(node) - set(required) - set(optional)
        if unknown:
            key = sorted(unknown, key=str)[0]
            self.fail(f"unknown key {key!r}", node, key, field)
        for key in required:
            if key not in node:
                self.fail(f"missing required key {key!r}", node, None, field)
        return node

    def number(self, node, key, field, default=None, positive=False):
        if key not in node:
            if default is None:
                self.fail(f"missing required key {key!r}", node, None, field)
            return float(default)
        v = node[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"expected a number, got {v!r}", node, key, f"{field}.{key}")
        if not math.isfinite(v):
            self.fail("value must be finite", node, key, f"{field}.{key}")
        if positive and v <= 0:
            self.fail("value must be positive", node, key, f"{field}.{key}")
        return float(v)

    def text(self, node, key, field):
        v = node[key]
        if not isinstance(v, str) or not v:
            self.fail(f"expected a non-empty string, got {v!r}", node, key, f"{field}.{key}")
        return v


def loads(text: str, source: str | None = None) -> ExperimentFile:
    ctx = _Ctx(source)
    try:
        doc = yaml.load(text, Loader=_Loader)
    except ExperimentFileError as exc:
        raise ExperimentFileError(exc.message, exc.line, None, source) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ExperimentFileError(f"syntax error: {getattr(exc, 'problem', exc)}", line, None,
                                  source) from None
    top = ctx.mapping(doc, "document",
                      required=("schema", "modes", "elements", "couplings"),
                      optional=("name", "truncation_order", "paper_normalization",
                                "detectors", "scan", "coherence"))
    if top["schema"] != SCHEMA:
        ctx.fail(f"unsupported schema {top['schema']!r} (expected {SCHEMA!r})", top, "schema",
                 "schema")
    name = top.get("name", "")
    if not isinstance(name, str):
        ctx.fail("expected a string", top, "name", "name")

    order = top.get("truncation_order", 1)
    if isinstance(order, bool) or not isinstance(order, int) or order < 1:
        ctx.fail("expected an integer >= 1", top, "truncation_order", "truncation_order")
    paper_norm = top.get("paper_normalization", False)
    if not isinstance(paper_norm, bool):
        ctx.fail("expected true or false", top, "paper_normalization", "paper_normalization")

    registry = _parse_modes(ctx, top)
    couplings = _parse_couplings(ctx, top)
    elements = _parse_elements(ctx, top, registry, couplings)
    network = Network(registry, tuple(elements), truncation_order=order,
                      paper_normalization=paper_norm)
    crystal_names = [c.name for c in network.crystals]
    missing = [n for n in crystal_names if n not in couplings]
    if missing:
        ctx.fail(f"no coupling given for crystal(s) {missing}", top, "couplings", "couplings")
    extra = [n for n in couplings if n not in crystal_names]
    if extra:
        ctx.fail(f"coupling given for unknown crystal {extra[0]!r}", top["couplings"], extra[0],
                 f"couplings.{extra[0]}")
    scan = _parse_scan(ctx, top["scan"]) if "scan" in top else None
    coherence = _parse_coherence(ctx, top, crystal_names) if "coherence" in top else None
    return ExperimentFile(name, network, scan, coherence)


def load(path) -> ExperimentFile:
    """Read and parse a file. ``OSError`` propagates; content problems raise ExperimentFileError."""
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), source=str(path))


def _parse_modes(ctx, top):
    modes = top["modes"]
    if not isinstance(modes, list) or not modes:
        ctx.fail("expected a non-empty list", top, "modes", "modes")
    reg = ModeRegistry()
    for k, m in enumerate(modes):
        field = f"modes[{k}]"
        ctx.mapping(m, field, required=("label",), optional=("alias_of", "frequency"))
        label = ctx.text(m, "label", field)
        alias = m.get("alias_of")
        if alias is not None and not isinstance(alias, str):
            ctx.fail("expected a mode label", m, "alias_of", f"{field}.alias_of")
        freq = ctx.number(m, "frequency", field) if "frequency" in m else None
        if label in reg:
            ctx.fail(f"mode {label!r} declared twice", m, "label", f"{field}.label")
        try:
            reg.register(label, alias_of=alias, frequency=freq)
        except RegistryError as exc:
            ctx.fail(str(exc), m, "alias_of", f"{field}.alias_of")
    return reg


def _parse_couplings(ctx, top):
    node = top["couplings"]
    if node is None:
        node = {}
    if not isinstance(node, dict):
        ctx.fail("expected a mapping of crystal name to coupling", top, "couplings", "couplings")
    out = {}
    for name, spec in node.items():
        field = f"couplings.{name}"
        ctx.mapping(spec, field, required=("magnitude",), optional=("phase",))
        mag = ctx.number(spec, "magnitude", field)
        if mag < 0:
            ctx.fail("magnitude must be >= 0", spec, "magnitude", f"{field}.magnitude")
        out[name] = Coupling(mag, ctx.number(spec, "phase", field, default=0.0))
    return out


def _mode(ctx, node, key, field, registry):
    label = ctx.text(node, key, field)
    if label not in registry:
        ctx.fail(f"undeclared mode {label!r}", node, key, f"{field}.{key}")
    return label


def _parse_elements(ctx, top, registry, couplings):
    items = top["elements"]
    if not isinstance(items, list):
        ctx.fail("expected a list", top, "elements", "elements")
    out = []
    for k, el in enumerate(items):
        field = f"elements[{k}]"
        if not isinstance(el, dict) or "type" not in el:
            ctx.fail("each element needs a 'type'", el if isinstance(el, dict) else top,
                     None, field)
        kind = el["type"]
        if kind == "crystal":
            ctx.mapping(el, field, required=("type", "name", "signal", "idler"))
            name = ctx.text(el, "name", field)
            if any(isinstance(e, Crystal) and e.name == name for e in out):
                ctx.fail(f"crystal name {name!r} used twice", el, "name", f"{field}.name")
            out.append(Crystal(name, _mode(ctx, el, "signal", field, registry),
                               _mode(ctx, el, "idler", field, registry),
                               couplings.get(name, Coupling(0.0))))
        elif kind == "phase":
            ctx.mapping(el, field, required=("type", "mode"),
                        optional=("phase", "param", "displacement_nm", "wavelength_nm"))
            mode = _mode(ctx, el, "mode", field, registry)
            if "displacement_nm" in el:
                if "phase" in el:
                    ctx.fail("give either phase or displacement_nm, not both", el, "phase", field)
                lam = ctx.number(el, "wavelength_nm", field, positive=True)
                phi = 2 * math.pi * ctx.number(el, "displacement_nm", field) / lam
            else:
                if "wavelength_nm" in el:
                    ctx.fail("wavelength_nm only goes with displacement_nm", el, "wavelength_nm",
                             field)
                phi = ctx.number(el, "phase", field, default=0.0)
            param = el.get("param")
            if param is not None and not isinstance(param, str):
                ctx.fail("expected a parameter name", el, "param", f"{field}.param")
            out.append(PhaseShift(mode, phi, param))
        elif kind == "beamsplitter":
            ctx.mapping(el, field, required=("type", "in_a", "in_b"), optional=("transmission",))
            t = ctx.number(el, "transmission", field, default=SQRT_HALF)
            if not 0.0 <= t <= 1.0:
                ctx.fail("transmission must lie in [0, 1]", el, "transmission",
                         f"{field}.transmission")
            out.append(BeamSplitter(_mode(ctx, el, "in_a", field, registry),
                                    _mode(ctx, el, "in_b", field, registry), t))
        elif kind == "detector":
            ctx.mapping(el, field, required=("type", "mode", "label"))
            out.append(DetectorTap(_mode(ctx, el, "mode", field, registry),
                                   ctx.text(el, "label", field)))
        else:
            ctx.fail(f"unknown element type {kind!r}", el, "type", f"{field}.type")
    dets = top.get("detectors") or {}
    if not isinstance(dets, dict):
        ctx.fail("expected a mapping of detector label to mode", top, "detectors", "detectors")
    for label, mode in dets.items():
        if not isinstance(mode, str) or mode not in registry:
            ctx.fail(f"undeclared mode {mode!r}", dets, label, f"detectors.{label}")
        out.append(DetectorTap(mode, str(label)))
    labels = [e.label for e in out if isinstance(e, DetectorTap)]
    dup = {lab for lab in labels if labels.count(lab) > 1}
    if dup:
        ctx.fail(f"detector label {sorted(dup)[0]!r} used twice", top, "detectors", "detectors")
    return out


def _parse_axis(ctx, node, parent, key, field):
    if isinstance(node, (int, float)) and not isinstance(node, bool):
        return Axis(float(node))
    if not isinstance(node, dict):
        ctx.fail("expected a number or an axis mapping", parent, key, field)
    if "wavelength_nm" in node:
        ctx.mapping(node, field, required=("start_nm", "wavelength_nm"),
                    optional=("stop_nm", "num"))
        lam = ctx.number(node, "wavelength_nm", field, positive=True)
        start = 2 * math.pi * ctx.number(node, "start_nm", field) / lam
        stop = 2 * math.pi * ctx.number(node, "stop_nm", field, default=node["start_nm"]) / lam
    else:
        ctx.mapping(node, field, required=("start",), optional=("stop", "num"))
        start = ctx.number(node, "start", field)
        stop = ctx.number(node, "stop", field, default=start)
    num = node.get("num", 1)
    if isinstance(num, bool) or not isinstance(num, int) or num < 1:
        ctx.fail("num must be an integer >= 1", node, "num", f"{field}.num")
    return Axis(start, stop, num)


def _parse_scan(ctx, node):
    ctx.mapping(node, "scan", optional=("grid", "time"))
    if ("grid" in node) == ("time" in node):
        ctx.fail("scan needs exactly one of 'grid' or 'time'", node, None, "scan")
    if "grid" in node:
        g = ctx.mapping(node["grid"], "scan.grid", optional=("phi_S", "phi_I"))
        return PhaseGrid(_parse_axis(ctx, g.get("phi_S", 0.0), g, "phi_S", "scan.grid.phi_S"),
                         _parse_axis(ctx, g.get("phi_I", 0.0), g, "phi_I", "scan.grid.phi_I"))
    t = ctx.mapping(node["time"], "scan.time",
                    required=("v_S", "v_I", "lambda_S", "lambda_I", "duration", "step"),
                    optional=("start_S", "start_I", "geometry"))
    f = "scan.time"
    return TimeScan(
        v_S=ctx.number(t, "v_S", f), v_I=ctx.number(t, "v_I", f),
        lambda_S=ctx.number(t, "lambda_S", f, positive=True),
        lambda_I=ctx.number(t, "lambda_I", f, positive=True),
        duration=ctx.number(t, "duration", f, positive=True),
        step=ctx.number(t, "step", f, positive=True),
        start_S=ctx.number(t, "start_S", f, default=0.0),
        start_I=ctx.number(t, "start_I", f, default=0.0),
        geometry=ctx.number(t, "geometry", f, default=1.0, positive=True),
    )


def _parse_coherence(ctx, top, crystal_names):
    node = top["coherence"]
    if not isinstance(node, list):
        ctx.fail("expected a list of {pair, gamma} records", top, "coherence", "coherence")
    pairs = {}
    for k, rec in enumerate(node):
        field = f"coherence[{k}]"
        ctx.mapping(rec, field, required=("pair", "gamma"))
        pair = rec["pair"]
        if (not isinstance(pair, list) or len(pair) != 2
                or any(p not in crystal_names for p in pair) or pair[0] == pair[1]):
            ctx.fail("pair must name two distinct crystals", rec, "pair", f"{field}.pair")
        g = ctx.number(rec, "gamma", field)
        if not 0.0 <= g <= 1.0:
            ctx.fail("gamma must lie in [0, 1]", rec, "gamma", f"{field}.gamma")
        key = tuple(pair)
        if key in pairs or key[::-1] in pairs:
            ctx.fail("pair listed twice", rec, "pair", f"{field}.pair")
        pairs[key] = g
    return CoherenceMatrix.from_pairs(crystal_names, pairs)


def to_dict(exp: ExperimentFile) -> dict:
    net = exp.network
    doc: dict = {"schema": SCHEMA}
    if exp.name:
        doc["name"] = exp.name
    doc["truncation_order"] = net.truncation_order
    doc["paper_normalization"] = net.paper_normalization
    modes = []
    for label, alias, freq in net.registry.registrations():
        m = {"label": label}
        if alias is not None:
            m["alias_of"] = alias
        if freq is not None:
            m["frequency"] = freq
        modes.append(m)
    doc["modes"] = modes

    elements = list(net.elements)
    trailing = []
    while elements and isinstance(elements[-1], DetectorTap):
        trailing.insert(0, elements.pop())
    recs = []
    for e in elements:
        if isinstance(e, Crystal):
            recs.append({"type": "crystal", "name": e.name, "signal": e.signal, "idler": e.idler})
        elif isinstance(e, PhaseShift):
            r = {"type": "phase", "mode": e.mode, "phase": e.phase}
            if e.param is not None:
                r["param"] = e.param
            recs.append(r)
        elif isinstance(e, BeamSplitter):
            recs.append({"type": "beamsplitter", "in_a": e.in_a, "in_b": e.in_b,
                         "transmission": e.transmission})
        else:
            recs.append({"type": "detector", "mode": e.mode, "label": e.label})
    doc["elements"] = recs
    if trailing:
        doc["detectors"] = {d.label: d.mode for d in trailing}
    doc["couplings"] = {c.name: {"magnitude": c.coupling.magnitude, "phase": c.coupling.phase}
                        for c in net.crystals}
    if exp.coherence is not None:
        doc["coherence"] = [{"pair": list(p), "gamma": g} for p, g in exp.coherence.pairs().items()]
    if isinstance(exp.scan, PhaseGrid):
        doc["scan"] = {"grid": {
            ax: {"start": a.start, "stop": a.stop, "num": a.num}
            for ax, a in (("phi_S", exp.scan.phi_S), ("phi_I", exp.scan.phi_I))}}
    elif isinstance(exp.scan, TimeScan):
        s = exp.scan
        doc["scan"] = {"time": {k: getattr(s, k) for k in (
            "v_S", "v_I", "lambda_S", "lambda_I", "duration", "step",
            "start_S", "start_I", "geometry")}}
    return doc


def dumps(exp: ExperimentFile) -> str:
    return yaml.safe_dump(to_dict(exp), sort_keys=False, default_flow_style=None)
