"""Random small networks for property tests and oracle sweeps."""

from __future__ import annotations

import math

import numpy as np

from .algebra import ModeRegistry
from .network import BeamSplitter, Coupling, Crystal, DetectorTap, Network, PhaseShift


def random_network(rng: np.random.Generator, max_crystals: int = 3, max_modes: int = 6,
                   max_coupling: float = 0.1, n_linear: int | None = None,
                   zero_couplings: bool = False) -> Network:
    """A random well-formed network with detectors "A" and "D" on distinct modes.

    Between 2 and ``max_modes`` canonical modes are declared; some extra
    labels alias them. Crystals, phase shifts (some tied to ``phi_S`` /
    ``phi_I``) and beam splitters are interleaved in random order.
    """
    n_modes = int(rng.integers(2, max_modes + 1))
    reg = ModeRegistry()
    labels = [f"m{k}" for k in range(n_modes)]
    for lab in labels:
        reg.register(lab)
    aliases = []
    for k in range(int(rng.integers(0, 3))):
        target = labels[int(rng.integers(n_modes))]
        alias = f"x{k}"
        reg.register(alias, alias_of=target)
        aliases.append(alias)
    all_labels = labels + aliases

    def pick_pair():
        while True:
            a, b = rng.choice(all_labels, 2, replace=False)
            if reg[str(a)].id != reg[str(b)].id:
                return str(a), str(b)

    elements = []
    for k in range(int(rng.integers(1, max_crystals + 1))):
        s, i = pick_pair()
        mag = 0.0 if zero_couplings else float(rng.uniform(0.0, max_coupling))
        elements.append(Crystal(f"C{k}", s, i, Coupling(mag, float(rng.uniform(0, 2 * math.pi)))))
    n_linear = int(rng.integers(1, 6)) if n_linear is None else n_linear
    for _ in range(n_linear):
        if rng.random() < 0.5:
            param = [None, "phi_S", "phi_I"][int(rng.integers(3))]
            elements.append(PhaseShift(str(rng.choice(all_labels)),
                                       float(rng.uniform(0, 2 * math.pi)), param))
        else:
            a, b = pick_pair()
            elements.append(BeamSplitter(a, b, float(rng.uniform(0.0, 1.0))))
    order = rng.permutation(len(elements))
    elements = [elements[k] for k in order]
    a, d = rng.choice(n_modes, 2, replace=False)
    elements += [DetectorTap(labels[int(a)], "A"), DetectorTap(labels[int(d)], "D")]
    return Network(reg, tuple(elements))
