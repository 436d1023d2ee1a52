"""Phase and time scans, fringe visibility, which-path contrast, pump coherence."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .network import Network
from .rates import Which, leading_rate

TWO_PI = 2 * math.pi


class NoSignal(ValueError):
    """Raised where a quantity is undefined because every rate is zero."""


@dataclass(frozen=True)
class Axis:
    """``num`` evenly spaced values from ``start`` to ``stop`` inclusive (radians)."""

    start: float
    stop: float | None = None
    num: int = 1

    def __post_init__(self):
        if self.num < 1:
            raise ValueError("axis needs at least one point")
        if self.stop is None:
            object.__setattr__(self, "stop", self.start)

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


@dataclass(frozen=True)
class PhaseGrid:
    """Outer product of a phi_S axis and a phi_I axis (phi_S varies slowest)."""

    phi_S: Axis
    phi_I: Axis

    def points(self):
        s, i = np.meshgrid(self.phi_S.values(), self.phi_I.values(), indexing="ij")
        return s.ravel(), i.ravel()


@dataclass(frozen=True)
class TimeScan:
    """Delay lines moving at constant speed.

    Positions are ``d(t) = start + v t`` in nm and phases
    ``geometry * 2 pi d / lambda``. Samples are ``t = k * step`` for
    ``k = 0 .. round(duration / step) - 1``.
    """

    v_S: float
    v_I: float
    lambda_S: float
    lambda_I: float
    duration: float
    step: float
    start_S: float = 0.0
    start_I: float = 0.0
    geometry: float = 1.0

    def __post_init__(self):
        if self.lambda_S <= 0 or self.lambda_I <= 0:
            raise ValueError("wavelengths must be positive")
        if self.step <= 0 or self.duration <= 0:
            raise ValueError("step and duration must be positive")

    def times(self) -> np.ndarray:
        n = int(round(self.duration / self.step))
        return np.arange(max(n, 1)) * self.step

    def points(self):
        t = self.times()
        phi_s = self.geometry * TWO_PI * (self.start_S + self.v_S * t) / self.lambda_S
        phi_i = self.geometry * TWO_PI * (self.start_I + self.v_I * t) / self.lambda_I
        return phi_s, phi_i


ScanConfig = Union[PhaseGrid, TimeScan]


def displacement_to_phase(d_nm, wavelength_nm: float, geometry: float = 1.0):
    return geometry * TWO_PI * np.asarray(d_nm) / wavelength_nm


@dataclass
class ScanTable:
    phi_S: np.ndarray
    phi_I: np.ndarray
    rate: np.ndarray
    time: np.ndarray | None = None

    def __len__(self):
        return len(self.rate)

    def rows(self):
        return zip(self.phi_S, self.phi_I, self.rate)


@dataclass(frozen=True)
class FringeStats:
    visibility: float
    contrast: float
    r_max: float
    r_min: float
    argmax_phase: float
    no_signal: bool = False

    @property
    def v2k2(self) -> float:
        return self.visibility ** 2 + self.contrast ** 2


class CoherenceMatrix:
    """Pairwise pump mutual-coherence factors, indexed by crystal name.

    Without an explicit matrix every pair is fully coherent (all ones);
    ``from_pairs`` likewise leaves unlisted pairs at 1.
    """

    def __init__(self, names: Sequence[str], gamma=None):
        self.names = tuple(names)
        n = len(self.names)
        g = np.ones((n, n)) if gamma is None else np.array(gamma, dtype=float)
        if g.shape != (n, n):
            raise ValueError(f"coherence matrix must be {n}x{n}")
        if not np.allclose(np.diag(g), 1.0):
            raise ValueError("coherence matrix needs a unit diagonal")
        if not np.allclose(g, g.T):
            raise ValueError("coherence matrix must be symmetric")
        if np.any(g < 0) or np.any(g > 1):
            raise ValueError("coherence factors must lie in [0, 1]")
        self.gamma = g

    @classmethod
    def from_pairs(cls, names: Sequence[str], pairs: Mapping[tuple, float]):
        names = list(names)
        g = np.ones((len(names), len(names)))
        for (a, b), val in pairs.items():
            i, j = names.index(a), names.index(b)
            if i == j:
                raise ValueError(f"diagonal entry {a!r} is fixed at 1")
            g[i, j] = g[j, i] = val
        return cls(names, g)

    def __getitem__(self, pair):
        a, b = pair
        return float(self.gamma[self.names.index(a), self.names.index(b)])

    def pairs(self) -> dict:
        """Off-diagonal entries that differ from 1."""
        out = {}
        for (i, a), (j, b) in itertools.combinations(enumerate(self.names), 2):
            if self.gamma[i, j] != 1.0:
                out[(a, b)] = float(self.gamma[i, j])
        return out

    def is_coherent(self) -> bool:
        return bool(np.all(self.gamma == 1.0))

    def __eq__(self, other):
        if not isinstance(other, CoherenceMatrix):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.gamma, other.gamma)

    def __repr__(self):
        return f"CoherenceMatrix({list(self.names)}, {self.gamma.tolist()})"


def apply_pump_coherence(rate_fn: Callable[[Network], object], network: Network,
                         gamma: CoherenceMatrix):
    """Re-weight inter-crystal interference terms of a leading-order rate.

    The leading-order rate is a Hermitian form in the couplings, so it splits
    into self terms ``R_j`` (only crystal j pumped) and cross terms
    ``R_jk - R_j - R_k``. Each cross term is scaled by ``gamma[j, k]``.
    """
    names = [c.name for c in network.crystals]
    if set(gamma.names) != set(names):
        raise ValueError("coherence matrix names must match the network's crystals")
    if gamma.is_coherent():
        return rate_fn(network)
    single = {n: rate_fn(network.pumped_only([n])) for n in names}
    total = sum(single.values(), 0.0)
    for a, b in itertools.combinations(names, 2):
        g = gamma[a, b]
        cross = rate_fn(network.pumped_only([a, b])) - single[a] - single[b]
        total = total + g * cross
    return total


def evaluate(network: Network, which: Which, phi_S, phi_I,
             coherence: CoherenceMatrix | None = None):
    """Leading-order rate at (arrays of) phase settings."""
    phases = {"phi_S": phi_S, "phi_I": phi_I}
    if coherence is None:
        return leading_rate(network, which, phases)
    return apply_pump_coherence(lambda n: leading_rate(n, which, phases), network, coherence)


def scan(network: Network, which: Which, config: ScanConfig,
         coherence: CoherenceMatrix | None = None) -> ScanTable:
    """Evaluate a singles (label) or coincidence ((label_A, label_D)) rate on a scan."""
    phi_s, phi_i = config.points()
    rate = np.broadcast_to(evaluate(network, which, phi_s, phi_i, coherence), phi_s.shape)
    time = config.times() if isinstance(config, TimeScan) else None
    return ScanTable(phi_s, phi_i, np.array(rate, dtype=float), time)


def fringe_stats(table: ScanTable, axis: str = "phi_S", contrast: float = math.nan,
                 zero_tol: float = 1e-300) -> FringeStats:
    """Extremal visibility ``(max - min) / (max + min)`` of a scan.

    The scan should resolve each fringe with at least 16 points per period.
    An all-zero table yields ``no_signal=True`` and NaN visibility.
    """
    rates = np.asarray(table.rate, dtype=float)
    if rates.size == 0:
        raise ValueError("empty scan table")
    phases = np.asarray(getattr(table, axis))
    r_max, r_min = float(rates.max()), float(rates.min())
    if r_max + r_min <= zero_tol:
        return FringeStats(math.nan, contrast, r_max, r_min, math.nan, no_signal=True)
    v = (r_max - r_min) / (r_max + r_min)
    return FringeStats(min(max(v, 0.0), 1.0), contrast, r_max, r_min,
                       float(phases[int(np.argmax(rates))]))


def visibility(c1: complex, c2: complex, c3: complex = 0.0) -> float:
    """Ideal singles visibility at A: ``2|C1 C2| / (|C1|^2 + |C2|^2 + |C3|^2)``."""
    den = abs(c1) ** 2 + abs(c2) ** 2 + abs(c3) ** 2
    if den == 0:
        raise NoSignal("all couplings are zero")
    return 2 * abs(c1 * c2) / den


def contrast(c1: complex, c2: complex) -> float:
    """Which-path contrast ``||C1|^2 - |C2|^2| / (|C1|^2 + |C2|^2)``."""
    p1, p2 = abs(c1) ** 2, abs(c2) ** 2
    if p1 + p2 == 0:
        raise NoSignal("contrast undefined when both couplings vanish")
    return abs(p1 - p2) / (p1 + p2)


def which_path_contrast(network: Network, which: Which, phi_S=0.0, phi_I=0.0,
                        rtol: float = 1e-12) -> float:
    """Contrast from the per-crystal rates seen by a detector (or pair).

    One contributing crystal gives K = 1; two give ``|R1 - R2| / (R1 + R2)``.
    With three or more the two-path quantity is undefined and NaN is returned.
    """
    rates = {c.name: float(np.max(evaluate(network.pumped_only([c.name]), which, phi_S, phi_I)))
             for c in network.crystals}
    scale = max(rates.values(), default=0.0)
    if scale <= 0:
        raise NoSignal("no crystal contributes to this detector")
    live = [r for r in rates.values() if r > rtol * scale]
    if len(live) == 1:
        return 1.0
    if len(live) == 2:
        r1, r2 = live
        return abs(r1 - r2) / (r1 + r2)
    return math.nan
