"""Normally ordered singles and coincidence rates from detector fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .algebra import OperatorExpression, expectation_by_order
from .network import Network, propagate

BACKGROUND_GRID = 64
# One pair emitted: lowest order at which a normally ordered rate can be nonzero.
# Higher orders from first-order fields are incomplete and kept for diagnostics only.
LEADING_ORDER = 2

Which = Union[str, tuple]


@dataclass(frozen=True)
class RateResult:
    """A leading-order rate with its decomposition.

    ``by_order`` holds the contributions that make up ``value`` (order 2,
    a single emitted pair). ``all_orders`` keeps every order the truncated fields
    produce, for diagnostics. ``background_part`` is the mean over a uniform
    64-point grid of the scanned phase and ``interference_part`` the residual;
    with no phase family the whole rate counts as background.
    Fields are arrays when the inputs carry batched coefficients.
    """

    value: object
    by_order: dict = field(default_factory=dict)
    interference_part: object = 0.0
    background_part: object = 0.0
    all_orders: dict = field(default_factory=dict)
    leading_order: int | None = None


def _real(v):
    return np.real(v) if isinstance(v, np.ndarray) else float(np.real(v))


def graded_rate(product: Sequence[OperatorExpression]) -> tuple[int | None, dict]:
    """(leading order, real order-graded rate) of a normally ordered product.

    The leading order is ``LEADING_ORDER`` when any term reaches it, else None.
    """
    graded = {k: _real(v) for k, v in sorted(expectation_by_order(product).items())}
    leading = LEADING_ORDER if any(k <= LEADING_ORDER for k in graded) else None
    return leading, graded


def _leading_value(product):
    leading, graded = graded_rate(product)
    return 0.0 if leading is None else graded.get(leading, 0.0)


def _result(product, family_products=None) -> RateResult:
    leading, graded = graded_rate(product)
    value = 0.0 if leading is None else graded.get(leading, 0.0)
    if family_products is None:
        background = value
    else:
        lead_f, graded_f = graded_rate(family_products)
        background = 0.0 if lead_f is None else float(np.mean(graded_f.get(lead_f, 0.0)))
    return RateResult(
        value=value,
        by_order={} if leading is None else {leading: value},
        interference_part=value - background,
        background_part=background,
        all_orders=graded,
        leading_order=leading,
    )


def _grid():
    return np.linspace(0.0, 2 * np.pi, BACKGROUND_GRID, endpoint=False)


def singles_rate(expr: OperatorExpression,
                 family: Callable[[np.ndarray], OperatorExpression] | None = None) -> RateResult:
    """``<E^- E^+>`` at leading order in the couplings.

    ``family(theta)`` should return the same detector field with the scanned
    phase set to each entry of ``theta`` (batched coefficients); it is used
    only for the background/interference split.
    """
    fam = None
    if family is not None:
        e = family(_grid())
        fam = [e.adjoint(), e]
    return _result([expr.adjoint(), expr], fam)


def idler_singles_rate(expr: OperatorExpression,
                       family: Callable[[np.ndarray], OperatorExpression] | None = None) -> RateResult:
    """Singles rate at an idler detector; identical evaluation to ``singles_rate``."""
    return singles_rate(expr, family)


def coincidence_rate(expr_a: OperatorExpression, expr_d: OperatorExpression,
                     family: Callable[[np.ndarray], tuple] | None = None) -> RateResult:
    """``<E_A^- E_D^- E_D^+ E_A^+>`` at leading order in the couplings."""
    fam = None
    if family is not None:
        ea, ed = family(_grid())
        fam = [ea.adjoint(), ed.adjoint(), ed, ea]
    return _result([expr_a.adjoint(), expr_d.adjoint(), expr_d, expr_a], fam)


def _product(fields: Mapping[str, OperatorExpression], which: Which):
    if isinstance(which, str):
        e = fields[which]
        return [e.adjoint(), e]
    a, d = which
    ea, ed = fields[a], fields[d]
    return [ea.adjoint(), ed.adjoint(), ed, ea]


def _check_labels(network: Network, which: Which):
    labels = [which] if isinstance(which, str) else list(which)
    missing = [lab for lab in labels if lab not in network.detectors]
    if missing:
        raise KeyError(f"unknown detector label(s): {missing}")


def leading_rate(network: Network, which: Which, phases: Mapping[str, object] | None = None):
    """Leading-order rate value for a detector label or a (label_A, label_D) pair.

    Array-valued ``phases`` return an array of rates.
    """
    _check_labels(network, which)
    fields = propagate(network, phases)
    return _leading_value(_product(fields, which))


def network_rate(network: Network, which: Which, phases: Mapping[str, float] | None = None,
                 scan_param: str | None = None) -> RateResult:
    """Full ``RateResult`` for a detector (pair), with background over ``scan_param``."""
    _check_labels(network, which)
    phases = dict(phases or {})
    fields = propagate(network, phases)
    fam = None
    if scan_param is not None:
        grid = dict(phases)
        base = float(phases.get(scan_param, 0.0))
        grid[scan_param] = base + _grid()
        fam = _product(propagate(network, grid), which)
    return _result(_product(fields, which), fam)
