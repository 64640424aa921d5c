"""Closed-form effect computations at item and test level.

Everything here is exact (``fractions.Fraction``); rounding belongs to the
reporting layer. An estimand that cannot be computed because its
conditioning group is empty comes back as an undefined ``EffectResult``
with a reason rather than raising.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

from answerchange.response_model import ItemTally, ValidationError

NO_TREATED = "no treated units"
NO_CONTROL = "no control units"
EMPTY = "no responses"

Bound = tuple[Fraction, Fraction]


class Estimand(str, enum.Enum):
    ATE = "ATE"
    ATT = "ATT"
    ATU = "ATU"


@dataclass(frozen=True)
class EffectResult:
    """An estimand's value: a point, a bound, or undefined with a reason.

    Identified results carry ``point`` and a zero-width ``bound`` when one
    was requested as a bound. ``excluded`` counts items left out of a
    test-level average because the item-level estimand was undefined.
    """

    estimand: Estimand
    level: str
    identified: bool
    point: Fraction | None = None
    bound: Bound | None = None
    basis: str = ""
    reason: str | None = None
    excluded: int = 0

    def __post_init__(self) -> None:
        if self.level not in ("item", "test"):
            raise ValueError(f"bad level {self.level!r}")
        if self.reason is not None:
            return
        if self.identified and self.point is None:
            raise ValueError("identified result without a point")
        if not self.identified and self.bound is None:
            raise ValueError("unidentified result without a bound")
        values = [] if self.point is None else [self.point]
        if self.bound is not None:
            lo, hi = self.bound
            if lo > hi:
                raise ValueError(f"inverted bound {lo} > {hi}")
            values += [lo, hi]
        if any(not -1 <= v <= 1 for v in values):
            raise ValueError(f"effect outside [-1, 1]: {values}")

    @property
    def defined(self) -> bool:
        return self.reason is None

    @property
    def lower(self) -> Fraction | None:
        if self.bound is not None:
            return self.bound[0]
        return self.point

    @property
    def upper(self) -> Fraction | None:
        if self.bound is not None:
            return self.bound[1]
        return self.point

    @property
    def width(self) -> Fraction | None:
        if not self.defined:
            return None
        return self.upper - self.lower

    def contains(self, value: Fraction) -> bool:
        return self.defined and self.lower <= value <= self.upper


def _undefined(estimand: Estimand, level: str, reason: str, basis: str = "") -> EffectResult:
    return EffectResult(estimand, level, identified=False, basis=basis, reason=reason)


@dataclass(frozen=True)
class ItemEffects:
    item_id: str
    att: EffectResult
    ate: EffectResult
    atu: EffectResult
    treated_share: Fraction


def _treated_share(tally: ItemTally) -> Fraction:
    return Fraction(tally.n_treated, tally.n_total)


def effects_true_false(tally: ItemTally) -> ItemEffects:
    """Exact ATE, ATT and ATU for a two-choice item."""
    if tally.k != 2:
        raise ValidationError(f"item {tally.item_id}: expected k=2, got k={tally.k}")
    n = tally.n_total
    if n == 0:
        raise ValidationError(f"item {tally.item_id}: {EMPTY}")
    ww, wr, rw, rr = tally.n_ww_retained, tally.n_wr, tally.n_rw, tally.n_rr

    ate_point = Fraction(ww + wr - rw - rr, n)
    ate = EffectResult(Estimand.ATE, "item", True, ate_point, (ate_point, ate_point), "tf_exact_ate")
    if wr + rw:
        att = EffectResult(Estimand.ATT, "item", True, Fraction(wr - rw, wr + rw), basis="tf_exact_att")
    else:
        att = _undefined(Estimand.ATT, "item", NO_TREATED, "tf_exact_att")
    if ww + rr:
        p = Fraction(ww - rr, ww + rr)
        atu = EffectResult(Estimand.ATU, "item", True, p, (p, p), "tf_exact_atu")
    else:
        atu = _undefined(Estimand.ATU, "item", NO_CONTROL, "tf_exact_atu")
    return ItemEffects(tally.item_id, att, ate, atu, _treated_share(tally))


def att_item(tally: ItemTally) -> EffectResult:
    """Effect on changers: (WR - RW) / (all changers). Always identified."""
    if tally.n_total == 0:
        raise ValidationError(f"item {tally.item_id}: {EMPTY}")
    denom = tally.n_treated
    if denom == 0:
        return _undefined(Estimand.ATT, "item", NO_TREATED, "att_observed")
    return EffectResult(
        Estimand.ATT, "item", True, Fraction(tally.n_wr - tally.n_rw, denom), basis="att_observed"
    )


def ate_bound_item(tally: ItemTally) -> EffectResult:
    """Sharp ATE bound; the latent gain share of retained wrongs ranges over [0, all]."""
    n = tally.n_total
    if n == 0:
        raise ValidationError(f"item {tally.item_id}: {EMPTY}")
    if tally.k == 2:
        return effects_true_false(tally).ate
    base = tally.n_wr - tally.n_rw - tally.n_rr
    lo = Fraction(base, n)
    hi = Fraction(tally.n_ww_retained + base, n)
    return EffectResult(Estimand.ATE, "item", lo == hi, lo if lo == hi else None, (lo, hi), "ate_bound")


def atu_bound_item(tally: ItemTally) -> EffectResult:
    """Sharp bound on the effect for those who kept their first answer."""
    if tally.k == 2:
        if tally.n_total == 0:
            raise ValidationError(f"item {tally.item_id}: {EMPTY}")
        return effects_true_false(tally).atu
    denom = tally.n_untreated
    if denom == 0:
        return _undefined(Estimand.ATU, "item", NO_CONTROL, "atu_bound")
    lo = Fraction(-tally.n_rr, denom)
    hi = Fraction(tally.n_ww_retained - tally.n_rr, denom)
    return EffectResult(Estimand.ATU, "item", lo == hi, lo if lo == hi else None, (lo, hi), "atu_bound")


def item_effects(tally: ItemTally) -> ItemEffects:
    if tally.k == 2:
        return effects_true_false(tally)
    return ItemEffects(
        tally.item_id,
        att_item(tally),
        ate_bound_item(tally),
        atu_bound_item(tally),
        _treated_share(tally),
    )


def _mean(values: Sequence[Fraction]) -> Fraction:
    return sum(values, Fraction(0)) / len(values)


def _average(results: Sequence[EffectResult], estimand: Estimand) -> EffectResult:
    defined = [r for r in results if r.defined]
    excluded = len(results) - len(defined)
    if not defined:
        reason = results[0].reason if results else EMPTY
        return EffectResult(estimand, "test", False, basis="test_mean", reason=reason, excluded=excluded)
    if all(r.identified for r in defined):
        p = _mean([r.point for r in defined])
        bound = (p, p) if estimand is not Estimand.ATT else None
        return EffectResult(estimand, "test", True, p, bound, "test_mean", excluded=excluded)
    lo = _mean([r.lower for r in defined])
    hi = _mean([r.upper for r in defined])
    return EffectResult(estimand, "test", False, None, (lo, hi), "test_mean", excluded=excluded)


def test_level(items: Sequence[ItemEffects]) -> tuple[EffectResult, EffectResult, EffectResult]:
    """Test-level (ATT, ATE, ATU) as the average over items.

    Bounds are averaged endpoint by endpoint. Items whose estimand is
    undefined are skipped and counted in ``excluded``.
    """
    if not items:
        raise ValueError("test_level needs at least one item")
    return (
        _average([i.att for i in items], Estimand.ATT),
        _average([i.ate for i in items], Estimand.ATE),
        _average([i.atu for i in items], Estimand.ATU),
    )


test_level.__test__ = False  # keep pytest from collecting it


def collapsed_ate_bound(tally) -> EffectResult:
    """Test-level ATE bound from pooled counts, over N*J examinee-item cells.

    ``tally`` is an :class:`answerchange.ingest.CollapsedTally`. When the
    pooled wrong-to-wrong changers are known they tighten the upper end.
    """
    cells = tally.n_examinees * tally.n_items
    if cells <= 0:
        raise ValidationError("N*J must be positive")
    base = tally.n_wr - tally.n_rw - tally.n_rr
    retained = tally.n_ww - (tally.n_ww_changed or 0)
    lo = Fraction(base, cells)
    hi = Fraction(retained + base, cells)
    return EffectResult(
        Estimand.ATE, "test", lo == hi, lo if lo == hi else None, (lo, hi), "collapsed_ate_bound"
    )


class Envelope(NamedTuple):
    att: Bound | None
    atu: Bound | None


def _att_at(tally, w3: int) -> Fraction:
    return Fraction(tally.n_wr - tally.n_rw, w3 + tally.n_wr + tally.n_rw)


def _atu_at(tally, retained: int) -> Bound | None:
    denom = retained + tally.n_rr
    if denom == 0:
        return None
    return Fraction(-tally.n_rr, denom), Fraction(retained - tally.n_rr, denom)


def collapsed_envelope(tally) -> Envelope:
    """Extremes of pooled ATT and ATU over every feasible count of WW changers.

    The pooled ATT is monotone in the number of wrong-to-wrong changers and
    the ATU bound endpoints are monotone in the number of retainers, so both
    envelopes come from the two ends of the feasible range.
    """
    if tally.n_ww_changed is not None:
        w3_range = (tally.n_ww_changed, tally.n_ww_changed)
    else:
        w3_range = (0, tally.n_ww)

    att = None
    if tally.n_wr + tally.n_rw:
        ends = [_att_at(tally, w) for w in w3_range]
        att = (min(ends), max(ends))

    atu_ends = [b for b in (_atu_at(tally, tally.n_ww - w) for w in w3_range) if b is not None]
    atu = None
    if atu_ends:
        atu = (min(b[0] for b in atu_ends), max(b[1] for b in atu_ends))
    return Envelope(att, atu)
