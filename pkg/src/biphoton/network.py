"""Optical-table model and Heisenberg-picture propagation to detector fields."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from typing import Mapping, Union

import numpy as np

from .algebra import ModeRegistry, OperatorExpression

SQRT_HALF = math.sqrt(0.5)
LOW_GAIN_LIMIT = 0.3


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Coupling:
    """Pump coupling ``C = magnitude * exp(i * phase)`` of one crystal."""

    magnitude: float
    phase: float = 0.0

    @property
    def value(self) -> complex:
        return self.magnitude * cmath.exp(1j * self.phase)

    @classmethod
    def from_complex(cls, c: complex) -> "Coupling":
        c = complex(c)
        return cls(abs(c), cmath.phase(c) if c else 0.0)


@dataclass(frozen=True)
class Crystal:
    name: str
    signal: str
    idler: str
    coupling: Coupling


@dataclass(frozen=True)
class PhaseShift:
    """Mirror or delay line. ``param`` names a scan variable added to ``phase``."""

    mode: str
    phase: float = 0.0
    param: str | None = None


@dataclass(frozen=True)
class BeamSplitter:
    """Outputs ``(t a + i r b, i r a + t b)`` on ports ``(in_a, in_b)``."""

    in_a: str
    in_b: str
    transmission: float = SQRT_HALF

    @property
    def reflection(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.transmission ** 2))


@dataclass(frozen=True)
class DetectorTap:
    mode: str
    label: str


Element = Union[Crystal, PhaseShift, BeamSplitter, DetectorTap]


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    code: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.code}: {self.message}"


@dataclass(frozen=True)
class Network:
    registry: ModeRegistry
    elements: tuple = ()
    truncation_order: int = 1
    paper_normalization: bool = False

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def crystals(self) -> list[Crystal]:
        return [e for e in self.elements if isinstance(e, Crystal)]

    @property
    def detectors(self) -> dict[str, str]:
        return {e.label: e.mode for e in self.elements if isinstance(e, DetectorTap)}

    @property
    def params(self) -> set[str]:
        return {e.param for e in self.elements if isinstance(e, PhaseShift) and e.param}

    def crystal(self, name: str) -> Crystal:
        for c in self.crystals:
            if c.name == name:
                return c
        raise KeyError(name)

    def with_couplings(self, couplings: Mapping[str, Union[Coupling, complex]]) -> "Network":
        """Copy with some crystals' couplings replaced (by crystal name)."""
        unknown = set(couplings) - {c.name for c in self.crystals}
        if unknown:
            raise KeyError(f"unknown crystals: {sorted(unknown)}")
        elements = []
        for e in self.elements:
            if isinstance(e, Crystal) and e.name in couplings:
                c = couplings[e.name]
                if not isinstance(c, Coupling):
                    c = Coupling.from_complex(c)
                e = replace(e, coupling=c)
            elements.append(e)
        return replace(self, elements=tuple(elements))

    def pumped_only(self, names) -> "Network":
        """Copy in which every crystal not in ``names`` has zero coupling."""
        names = set(names)
        return self.with_couplings(
            {c.name: Coupling(0.0) for c in self.crystals if c.name not in names})


def validate(network: Network) -> list[Diagnostic]:
    """Structural checks. Never raises; problems come back as diagnostics."""
    reg = network.registry
    out: list[Diagnostic] = []

    def err(code, msg):
        out.append(Diagnostic("error", code, msg))

    def warn(code, msg):
        out.append(Diagnostic("warning", code, msg))

    if network.truncation_order < 1:
        err("truncation-order", f"truncation order must be >= 1, got {network.truncation_order}")

    def known(label, where):
        if label not in reg:
            err("undeclared-mode", f"{where} references undeclared mode {label!r}")
            return False
        return True

    names = set()
    labels = set()
    tapped: dict[int, str] = {}
    sources: dict[int, frozenset] = {m.id: frozenset() for m in reg.canonical_modes()}

    for idx, el in enumerate(network.elements):
        where = f"element {idx} ({type(el).__name__})"
        if isinstance(el, Crystal):
            ok = known(el.signal, where) & known(el.idler, where)
            if el.name in names:
                err("duplicate-crystal", f"crystal name {el.name!r} used twice")
            names.add(el.name)
            if el.coupling.magnitude < 0:
                err("coupling", f"crystal {el.name!r} has negative coupling magnitude")
            elif el.coupling.magnitude > LOW_GAIN_LIMIT:
                warn("low-gain", f"crystal {el.name!r} coupling {el.coupling.magnitude:g} exceeds "
                                 f"{LOW_GAIN_LIMIT}; first-order results lose accuracy")
            if ok:
                s, i = reg[el.signal].id, reg[el.idler].id
                if s == i:
                    err("degenerate-crystal", f"crystal {el.name!r}: signal and idler are the same mode")
                new = sources[s] | sources[i] | {el.name}
                sources[s] = sources[i] = new
                mode_ids = (s, i)
            else:
                mode_ids = ()
        elif isinstance(el, PhaseShift):
            mode_ids = (reg[el.mode].id,) if known(el.mode, where) else ()
        elif isinstance(el, BeamSplitter):
            ok = known(el.in_a, where) & known(el.in_b, where)
            if not 0.0 <= el.transmission <= 1.0:
                err("transmission", f"{where}: transmission {el.transmission} outside [0, 1]")
            mode_ids = ()
            if ok:
                a, b = reg[el.in_a].id, reg[el.in_b].id
                if a == b:
                    err("aliased-ports", f"{where}: ports {el.in_a!r} and {el.in_b!r} are the same canonical mode")
                else:
                    sources[a] = sources[b] = sources[a] | sources[b]
                    mode_ids = (a, b)
        elif isinstance(el, DetectorTap):
            mode_ids = ()
            if el.label in labels:
                err("duplicate-detector", f"detector label {el.label!r} used twice")
            labels.add(el.label)
            if known(el.mode, where):
                m = reg[el.mode].id
                if not sources[m]:
                    warn("unreachable", f"detector {el.label!r} receives no down-converted light")
                tapped.setdefault(m, el.label)
        else:
            err("element", f"{where}: unknown element type")
            mode_ids = ()
        for m in mode_ids:
            if m in tapped:
                err("after-tap", f"{where} acts on mode already absorbed by detector {tapped[m]!r}")
    return out


def check(network: Network) -> None:
    errors = [d for d in validate(network) if d.level == "error"]
    if errors:
        raise NetworkError("; ".join(str(d) for d in errors))


def propagate(network: Network, phases: Mapping[str, object] | None = None
              ) -> dict[str, OperatorExpression]:
    """Detector label -> positive-frequency field in terms of vacuum inputs.

    ``phases`` maps scan-parameter names to values (floats or 1-d arrays)
    that are added to the matching ``PhaseShift.phase``. Array values give
    batched coefficients.
    """
    check(network)
    phases = phases or {}
    reg = network.registry
    k = network.truncation_order
    fields = {m.id: OperatorExpression.annihilator(m) for m in reg.canonical_modes()}
    out: dict[str, OperatorExpression] = {}
    for el in network.elements:
        if isinstance(el, Crystal):
            c = el.coupling.value
            if c == 0:
                continue
            s, i = reg[el.signal].id, reg[el.idler].id
            es, ei = fields[s], fields[i]
            # simultaneous update: both sides use the pre-crystal fields
            fields[s] = (es + c * ei.adjoint().raised(1)).filter_by_order(k)
            fields[i] = (ei + c * es.adjoint().raised(1)).filter_by_order(k)
        elif isinstance(el, PhaseShift):
            phi = el.phase
            if el.param is not None and el.param in phases:
                phi = phi + np.asarray(phases[el.param], dtype=float)
            factor = np.exp(1j * phi)
            if np.ndim(factor) == 0:
                factor = complex(factor)
            m = reg[el.mode].id
            fields[m] = fields[m] * factor
        elif isinstance(el, BeamSplitter):
            if network.paper_normalization:
                t, r = 1.0, 1.0
            else:
                t, r = el.transmission, el.reflection
            a, b = reg[el.in_a].id, reg[el.in_b].id
            ea, eb = fields[a], fields[b]
            fields[a] = ea * t + eb * (1j * r)
            fields[b] = ea * (1j * r) + eb * t
        elif isinstance(el, DetectorTap):
            out[el.label] = fields[reg[el.mode].id]
    return out


def three_crystal_network(c1=1.0, c2=1.0, c3=1.0, *, transmission: float = SQRT_HALF,
                  paper_normalization: bool = False, truncation_order: int = 1,
                  phi_S: float = 0.0, phi_I: float = 0.0) -> Network:
    """The three-crystal induced-coherence layout.

    Modes i2 and s3 are aliases of i1 and s1. BBO1 pumps (s1, i1), BBO3
    (s3, i3) and BBO2 (s2, i2). The signal mirror ``phi_S`` sits on the
    s1 path before BS1; the idler mirror ``phi_I`` on the i1 path before BS2.
    Detector A is BS1's s2 port and D is BS2's i3 port.
    """
    reg = ModeRegistry()
    for label, alias in [("s1", None), ("s2", None), ("s3", "s1"),
                         ("i1", None), ("i2", "i1"), ("i3", None)]:
        reg.register(label, alias_of=alias)

    def coup(c):
        return c if isinstance(c, Coupling) else Coupling.from_complex(c)

    elements = (
        Crystal("BBO1", "s1", "i1", coup(c1)),
        Crystal("BBO3", "s3", "i3", coup(c3)),
        Crystal("BBO2", "s2", "i2", coup(c2)),
        PhaseShift("s1", phi_S, param="phi_S"),
        PhaseShift("i1", phi_I, param="phi_I"),
        BeamSplitter("s2", "s1", transmission),
        BeamSplitter("i3", "i1", transmission),
        DetectorTap("s2", "A"),
        DetectorTap("i3", "D"),
    )
    return Network(reg, elements, truncation_order=truncation_order,
                   paper_normalization=paper_normalization)
