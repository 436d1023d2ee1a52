"""Brute-force Schrödinger-picture check on a truncated occupation-number basis.

Deliberately independent of ``biphoton.algebra``: the state is a dense
tensor with one axis per canonical mode, crystals act through explicit
ladder-operator arithmetic, and linear elements are exact two-mode matrices
(matrix exponentials of their generators). Only the network description is
shared.

The state is kept graded by perturbative order, ``psi = sum_k psi_k`` with
``psi_k`` of k-th order in the couplings, so leading-order probabilities can
be read off without any normalization fudge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .network import BeamSplitter, Crystal, DetectorTap, Network, PhaseShift, check


class OccupationOverflow(RuntimeError):
    pass


@dataclass
class FockState:
    """Order-graded state on ``(n_max + 1) ** len(modes)`` amplitudes.

    ``components[k]`` is the k-th order part; ``modes`` lists the labels of
    the tensor axes; ``detectors`` maps detector labels to axes.
    """

    modes: tuple
    n_max: int
    components: list
    detectors: dict

    @classmethod
    def from_occupations(cls, modes, amplitudes: dict, n_max: int = 2, detectors=None):
        psi = np.zeros((n_max + 1,) * len(modes), dtype=complex)
        for occ, amp in amplitudes.items():
            if max(occ, default=0) > n_max:
                raise OccupationOverflow(f"occupation {occ} exceeds n_max={n_max}")
            psi[tuple(occ)] = amp
        dets = detectors if detectors is not None else {m: i for i, m in enumerate(modes)}
        return cls(tuple(modes), n_max, [psi], dict(dets))

    @property
    def vector(self) -> np.ndarray:
        """Full (unnormalized) state, summed over orders."""
        return sum(self.components)

    def normalized(self) -> np.ndarray:
        v = self.vector
        return v / np.sqrt(np.vdot(v, v).real)

    def amplitudes(self, tol: float = 0.0) -> dict:
        v = self.normalized()
        return {idx: v[idx] for idx in zip(*np.nonzero(np.abs(v) > tol))}


def _create(psi: np.ndarray, axis: int, n_max: int) -> np.ndarray:
    top = np.take(psi, n_max, axis=axis)
    if np.any(top != 0):
        raise OccupationOverflow(f"creation on axis {axis} would exceed n_max={n_max}")
    out = np.zeros_like(psi)
    src = [slice(None)] * psi.ndim
    dst = [slice(None)] * psi.ndim
    src[axis] = slice(0, n_max)
    dst[axis] = slice(1, n_max + 1)
    shape = [1] * psi.ndim
    shape[axis] = n_max
    out[tuple(dst)] = psi[tuple(src)] * np.sqrt(np.arange(1, n_max + 1)).reshape(shape)
    return out


def _annihilate(psi: np.ndarray, axis: int, n_max: int) -> np.ndarray:
    out = np.zeros_like(psi)
    src = [slice(None)] * psi.ndim
    dst = [slice(None)] * psi.ndim
    src[axis] = slice(1, n_max + 1)
    dst[axis] = slice(0, n_max)
    shape = [1] * psi.ndim
    shape[axis] = n_max
    out[tuple(dst)] = psi[tuple(src)] * np.sqrt(np.arange(1, n_max + 1)).reshape(shape)
    return out


@lru_cache(maxsize=None)
def _ladder(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), k=1)


@lru_cache(maxsize=256)
def _beamsplitter_matrix(n_max: int, t: float, r: float) -> np.ndarray:
    """Two-mode unitary for ``a -> t a + i r b``, ``b -> i r a + t b``.

    ``U = exp(i theta (a^dag b + b^dag a))`` with ``cos theta = t``. Acting on
    the truncated product space it is exact on every block of total photon
    number <= n_max (those blocks are closed under the generator).
    """
    a = _ladder(n_max)
    eye = np.eye(n_max + 1)
    A = np.kron(a, eye)
    B = np.kron(eye, a)
    gen = A.conj().T @ B + B.conj().T @ A
    theta = math.atan2(r, t)
    return expm(1j * theta * gen)


def _apply_two_mode(psi: np.ndarray, u: np.ndarray, ax_a: int, ax_b: int, n_max: int):
    d = n_max + 1
    na = np.arange(d).reshape([d if k == ax_a else 1 for k in range(psi.ndim)])
    nb = np.arange(d).reshape([d if k == ax_b else 1 for k in range(psi.ndim)])
    if np.any(psi[np.broadcast_to(na + nb > n_max, psi.shape)] != 0):
        raise OccupationOverflow(
            f"beam splitter input holds more than n_max={n_max} photons in its two modes")
    moved = np.moveaxis(psi, (ax_a, ax_b), (0, 1))
    shp = moved.shape
    out = (u @ moved.reshape(d * d, -1)).reshape(shp)
    return np.moveaxis(out, (0, 1), (ax_a, ax_b))


def _apply_phase(psi: np.ndarray, phi: float, axis: int, n_max: int):
    d = n_max + 1
    diag = np.exp(1j * phi * np.arange(d))
    return psi * diag.reshape([d if k == axis else 1 for k in range(psi.ndim)])


def _crystal_generator(psi, c: complex, ax_s: int, ax_i: int, n_max: int):
    """``K psi`` with ``K = C a_s^dag a_i^dag - C* a_s a_i``."""
    up = _create(_create(psi, ax_i, n_max), ax_s, n_max)
    down = _annihilate(_annihilate(psi, ax_i, n_max), ax_s, n_max)
    return c * up - np.conj(c) * down


def build_state(network: Network, perturbation_order: int = 1, n_max: int = 2,
                phases: dict | None = None) -> FockState:
    """Propagate the vacuum through the network to the given order in the couplings.

    Crystal ``k`` acts as ``exp(K_k)`` expanded to ``perturbation_order``;
    beam splitters and phase shifts are exact unitaries. Beam splitters
    always use the physical (unitary) transmission, whatever the network's
    normalization flag.
    """
    if perturbation_order not in (1, 2):
        raise ValueError("perturbation_order must be 1 or 2")
    if n_max < perturbation_order:
        raise ValueError("n_max must be at least the perturbation order")
    check(network)
    phases = phases or {}
    reg = network.registry
    canon = reg.canonical_modes()
    axis = {m.id: k for k, m in enumerate(canon)}
    shape = (n_max + 1,) * len(canon)
    vac = np.zeros(shape, dtype=complex)
    vac[(0,) * len(canon)] = 1.0
    comps = [vac] + [np.zeros(shape, dtype=complex) for _ in range(perturbation_order)]
    detectors = {}
    for el in network.elements:
        if isinstance(el, Crystal):
            c = el.coupling.value
            if c == 0:
                continue
            s, i = axis[reg[el.signal].id], axis[reg[el.idler].id]
            new = []
            for n in range(perturbation_order + 1):
                # psi_n <- sum_j K^j / j! psi_{n-j}
                acc = comps[n].copy()
                for j in range(1, n + 1):
                    kpsi = comps[n - j]
                    for _ in range(j):
                        kpsi = _crystal_generator(kpsi, c, s, i, n_max)
                    acc = acc + kpsi / math.factorial(j)
                new.append(acc)
            comps = new
        elif isinstance(el, PhaseShift):
            phi = el.phase + float(phases.get(el.param, 0.0)) if el.param else el.phase
            ax = axis[reg[el.mode].id]
            comps = [_apply_phase(p, phi, ax, n_max) for p in comps]
        elif isinstance(el, BeamSplitter):
            u = _beamsplitter_matrix(n_max, float(el.transmission), float(el.reflection))
            a, b = axis[reg[el.in_a].id], axis[reg[el.in_b].id]
            comps = [_apply_two_mode(p, u, a, b, n_max) for p in comps]
        elif isinstance(el, DetectorTap):
            detectors[el.label] = axis[reg[el.mode].id]
    return FockState(tuple(m.label for m in canon), n_max, comps, detectors)


def _axis(state: FockState, label: str) -> int:
    try:
        return state.detectors[label]
    except KeyError:
        raise KeyError(f"unknown detector label {label!r}") from None


def _number_weights(state: FockState, *axes) -> np.ndarray:
    d = state.n_max + 1
    nd = len(state.modes)
    w = np.ones((1,) * nd)
    for ax in axes:
        w = w * np.arange(d).reshape([d if k == ax else 1 for k in range(nd)])
    return w


def _graded(state: FockState, weights: np.ndarray) -> dict:
    out = {}
    for j, pj in enumerate(state.components):
        for k, pk in enumerate(state.components):
            val = np.vdot(pj, weights * pk).real
            out[j + k] = out.get(j + k, 0.0) + val
    return out


def graded_click(state: FockState, label: str) -> dict:
    """``<n_label>`` split by total perturbative order."""
    return _graded(state, _number_weights(state, _axis(state, label)))


def graded_pair(state: FockState, label_a: str, label_d: str) -> dict:
    """``<n_A n_D>`` split by total perturbative order."""
    a, d = _axis(state, label_a), _axis(state, label_d)
    if a == d:
        raise ValueError("coincidence needs two distinct detector modes")
    return _graded(state, _number_weights(state, a, d))


def click_probability(state: FockState, label: str) -> float:
    """``<psi| n_label |psi>`` on the normalized state."""
    v = state.normalized()
    return float(np.vdot(v, _number_weights(state, _axis(state, label)) * v).real)


def pair_probability(state: FockState, label_a: str, label_d: str) -> float:
    """``<psi| n_A n_D |psi>`` on the normalized state."""
    a, d = _axis(state, label_a), _axis(state, label_d)
    if a == d:
        raise ValueError("coincidence needs two distinct detector modes")
    v = state.normalized()
    return float(np.vdot(v, _number_weights(state, a, d) * v).real)


def leading_click(state: FockState, label: str) -> float:
    """Second-order part of ``<n_label>``; orders 0 and 1 vanish on the vacuum."""
    return graded_click(state, label).get(2, 0.0)


def leading_pair(state: FockState, label_a: str, label_d: str) -> float:
    return graded_pair(state, label_a, label_d).get(2, 0.0)


def product_expectation(factors, n_modes: int, n_max: int) -> complex:
    """``<0| f_1 f_2 ... f_k |0>`` for linear forms given as ``[(axis, dagger, coeff), ...]``.

    Factors are applied right to left to the vacuum tensor. ``n_max`` must
    cover the largest occupation reached; overflow raises.
    """
    shape = (n_max + 1,) * n_modes
    psi = np.zeros(shape, dtype=complex)
    psi[(0,) * n_modes] = 1.0
    for factor in reversed(list(factors)):
        out = np.zeros(shape, dtype=complex)
        for ax, dagger, coeff in factor:
            step = _create if dagger else _annihilate
            out = out + coeff * step(psi, ax, n_max)
        psi = out
    return complex(psi[(0,) * n_modes])
