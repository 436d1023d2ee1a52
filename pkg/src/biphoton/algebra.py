"""Mode registry, linear ladder-operator expressions and vacuum expectations.

Expressions are linear forms ``sum_m alpha_m a_m + beta_m a_m^dagger`` over
canonical modes. Every term carries an integer *order*: the number of pump
couplings folded into its coefficient. Coefficients are complex scalars or
1-d numpy arrays; arrays let a whole phase scan ride through one evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

PRUNE_TOL = 1e-15

Coeff = Union[complex, np.ndarray]


class RegistryError(ValueError):
    pass


class ModeRef:
    """Handle to a canonical vacuum input mode.

    Identity is the integer ``id`` only; two refs registered under different
    (aliased) labels compare equal.
    """

    __slots__ = ("id", "label", "frequency")

    def __init__(self, id: int, label: str, frequency: float | None = None):
        self.id = id
        self.label = label
        self.frequency = frequency

    def __eq__(self, other):
        if not isinstance(other, ModeRef):
            return NotImplemented
        return self.id == other.id

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return f"ModeRef({self.id}, {self.label!r})"


class ModeRegistry:
    """Label -> canonical mode table. Aliases are resolved at registration."""

    def __init__(self):
        self._refs: dict[str, ModeRef] = {}
        self._alias: dict[str, str | None] = {}
        self._canonical: list[ModeRef] = []
        self._freq_given: dict[str, float | None] = {}

    def register(self, label: str, alias_of: str | None = None,
                 frequency: float | None = None) -> ModeRef:
        if label in self._refs:
            if self._alias[label] != alias_of:
                raise RegistryError(
                    f"mode {label!r} already registered with alias_of="
                    f"{self._alias[label]!r}, not {alias_of!r}")
            return self._refs[label]
        if alias_of is not None:
            if alias_of not in self._refs:
                raise RegistryError(f"unknown alias target {alias_of!r} for mode {label!r}")
            target = self._refs[alias_of]
            canon = self._canonical[target.id]
            ref = ModeRef(canon.id, label,
                          frequency if frequency is not None else canon.frequency)
        else:
            ref = ModeRef(len(self._canonical), label, frequency)
            self._canonical.append(ref)
        self._refs[label] = ref
        self._alias[label] = alias_of
        self._freq_given[label] = frequency
        return ref

    def __getitem__(self, label: str) -> ModeRef:
        try:
            return self._refs[label]
        except KeyError:
            raise RegistryError(f"unregistered mode {label!r}") from None

    def __contains__(self, label) -> bool:
        return label in self._refs

    def __len__(self):
        return len(self._refs)

    def canonical(self, label: str) -> ModeRef:
        """The canonical ref (first-registered label) for ``label``."""
        return self._canonical[self[label].id]

    def canonical_modes(self) -> list[ModeRef]:
        return list(self._canonical)

    def labels(self) -> list[str]:
        return list(self._refs)

    def alias_of(self, label: str) -> str | None:
        self[label]
        return self._alias[label]

    def registrations(self) -> tuple[tuple[str, str | None, float | None], ...]:
        """Registration log ``(label, alias_of, frequency)`` in order."""
        return tuple((lab, self._alias[lab], self._freq_given[lab]) for lab in self._refs)

    def __eq__(self, other):
        if not isinstance(other, ModeRegistry):
            return NotImplemented
        return self.registrations() == other.registrations()

    def __repr__(self):
        return f"ModeRegistry({self.labels()})"


def register_mode(registry: ModeRegistry, label: str, alias_of: str | None = None,
                  frequency: float | None = None) -> ModeRef:
    return registry.register(label, alias_of=alias_of, frequency=frequency)


def _negligible(c: Coeff) -> bool:
    if isinstance(c, np.ndarray):
        return bool(np.all(np.abs(c) < PRUNE_TOL))
    return abs(c) < PRUNE_TOL


@dataclass(frozen=True)
class OperatorTerm:
    mode: ModeRef
    dagger: bool
    coeff: Coeff
    order: int = 0

    @property
    def key(self):
        return (self.mode.id, self.dagger, self.order)


class OperatorExpression:
    """Immutable linear combination of ladder operators with order grading.

    At most one term is kept per ``(mode, dagger, order)``; terms with
    coefficients below ``PRUNE_TOL`` are dropped.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Iterable[OperatorTerm] = ()):
        merged: dict[tuple, OperatorTerm] = {}
        for t in terms:
            if t.order < 0:
                raise ValueError("term order must be nonnegative")
            prev = merged.get(t.key)
            if prev is not None:
                t = OperatorTerm(t.mode, t.dagger, prev.coeff + t.coeff, t.order)
            merged[t.key] = t
        self._terms = tuple(merged[k] for k in sorted(merged)
                            if not _negligible(merged[k].coeff))

    @classmethod
    def annihilator(cls, mode: ModeRef, coeff: Coeff = 1.0, order: int = 0):
        return cls([OperatorTerm(mode, False, coeff, order)])

    @classmethod
    def creator(cls, mode: ModeRef, coeff: Coeff = 1.0, order: int = 0):
        return cls([OperatorTerm(mode, True, coeff, order)])

    @classmethod
    def zero(cls):
        return cls()

    @property
    def terms(self) -> tuple[OperatorTerm, ...]:
        return self._terms

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __add__(self, other):
        if not isinstance(other, OperatorExpression):
            return NotImplemented
        return OperatorExpression(self._terms + other._terms)

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        if not isinstance(other, OperatorExpression):
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, OperatorExpression):
            return NotImplemented
        return OperatorExpression(
            OperatorTerm(t.mode, t.dagger, t.coeff * scalar, t.order) for t in self._terms)

    __rmul__ = __mul__

    def adjoint(self) -> OperatorExpression:
        return OperatorExpression(
            OperatorTerm(t.mode, not t.dagger, np.conj(t.coeff), t.order)
            for t in self._terms)

    def raised(self, k: int) -> OperatorExpression:
        """Same expression with every term's order increased by ``k``."""
        return OperatorExpression(
            OperatorTerm(t.mode, t.dagger, t.coeff, t.order + k) for t in self._terms)

    def filter_by_order(self, max_total_order: int) -> OperatorExpression:
        return filter_by_order(self, max_total_order)

    @property
    def max_order(self) -> int:
        return max((t.order for t in self._terms), default=0)

    def coefficient(self, mode: ModeRef, dagger: bool, order: int | None = None) -> Coeff:
        """Coefficient of ``a_mode`` (or its adjoint), summed over orders unless given."""
        total = 0j
        for t in self._terms:
            if t.mode.id == mode.id and t.dagger == dagger and (order is None or t.order == order):
                total = total + t.coeff
        return total

    def modes(self) -> set[ModeRef]:
        return {t.mode for t in self._terms}

    def allclose(self, other: OperatorExpression, atol: float = 1e-12) -> bool:
        keys = {t.key for t in self._terms} | {t.key for t in other._terms}
        mine = {t.key: t.coeff for t in self._terms}
        theirs = {t.key: t.coeff for t in other._terms}
        return all(np.all(np.abs(mine.get(k, 0) - theirs.get(k, 0)) <= atol) for k in keys)

    def __eq__(self, other):
        if not isinstance(other, OperatorExpression):
            return NotImplemented
        if [t.key for t in self._terms] != [t.key for t in other._terms]:
            return False
        return all(np.array_equal(a.coeff, b.coeff) for a, b in zip(self._terms, other._terms))

    __hash__ = None

    def __repr__(self):
        if not self._terms:
            return "OperatorExpression(0)"
        parts = []
        for t in self._terms:
            op = f"a{'†' if t.dagger else ''}[{t.mode.label}]"
            parts.append(f"({t.coeff})*{op}" + (f"<{t.order}>" if t.order else ""))
        return " + ".join(parts)


def filter_by_order(item, max_total_order: int):
    """Drop terms (expression) or contributions (graded expectation) above an order."""
    if max_total_order < 0:
        raise ValueError("max_total_order must be >= 0")
    if isinstance(item, OperatorExpression):
        return OperatorExpression(t for t in item.terms if t.order <= max_total_order)
    if isinstance(item, Mapping):
        return {k: v for k, v in item.items() if k <= max_total_order}
    raise TypeError(f"cannot filter {type(item).__name__} by order")


def expectation_by_order(product: Sequence[OperatorExpression]) -> dict[int, Coeff]:
    """Vacuum expectation of an ordered operator product, graded by total order.

    Contraction proceeds from the left: the leftmost factor can only
    contribute annihilators (``<0| a^dagger = 0``); each ``a_m`` is moved to
    the right, picking up ``[a_m, a_n^dagger] = delta_mn`` from exactly one
    later factor. Sub-results are memoized on the tuple of remaining factors.
    An order key is present whenever some complete contraction exists at that
    order, even if the contributions cancel numerically.
    """
    n = len(product)
    if n == 0:
        raise ValueError("product must contain at least one factor")
    if n % 2:
        return {}
    ann: list[dict[int, list[tuple[int, Coeff]]]] = []
    cre: list[dict[int, list[tuple[int, Coeff]]]] = []
    for expr in product:
        a: dict[int, list] = {}
        c: dict[int, list] = {}
        for t in expr.terms:
            (c if t.dagger else a).setdefault(t.mode.id, []).append((t.order, t.coeff))
        ann.append(a)
        cre.append(c)

    memo: dict[tuple[int, ...], dict[int, Coeff]] = {(): {0: 1.0}}

    def contract(remaining: tuple[int, ...]) -> dict[int, Coeff]:
        if remaining in memo:
            return memo[remaining]
        first, rest = remaining[0], remaining[1:]
        out: dict[int, Coeff] = {}
        for mode_id, alist in ann[first].items():
            for pos, k in enumerate(rest):
                blist = cre[k].get(mode_id)
                if not blist:
                    continue
                sub = contract(rest[:pos] + rest[pos + 1:])
                for oa, ca in alist:
                    for ob, cb in blist:
                        w = ca * cb
                        for os_, cs in sub.items():
                            key = oa + ob + os_
                            out[key] = out.get(key, 0) + w * cs
        memo[remaining] = out
        return out

    return contract(tuple(range(n)))


def vacuum_expectation(product: Sequence[OperatorExpression]) -> Coeff:
    """``<0| prod_k expr_k |0>`` summed over all orders."""
    graded = expectation_by_order(product)
    return sum(graded.values(), 0j)
