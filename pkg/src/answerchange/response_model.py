"""Observed response classes, item tallies and potential-outcome imputation."""

from __future__ import annotations

import enum
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

Choice = str


class ValidationError(ValueError):
    """Input violates a data invariant (bad label, negative count, ...)."""


class ResponseType(str, enum.Enum):
    WW_RETAINED = "WW_retained"
    WW_CHANGED = "WW_changed"
    WR = "WR"
    RW = "RW"
    RR = "RR"


def canonical_labels(k: int) -> tuple[str, ...]:
    """First ``k`` uppercase letters, the default alternative set."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > len(string.ascii_uppercase):
        raise ValidationError(f"k={k} needs an explicit label list")
    return tuple(string.ascii_uppercase[:k])


def normalize_choice(label: str) -> Choice:
    # case-sensitive on purpose; only surrounding whitespace is dropped
    return label.strip()


@dataclass(frozen=True)
class ResponseRecord:
    examinee_id: str
    item_id: str
    initial: Choice
    final: Choice


@dataclass(frozen=True)
class ItemTally:
    """Counts of the five observable response classes for one item."""

    item_id: str
    k: int
    n_ww_retained: int = 0
    n_ww_changed: int = 0
    n_wr: int = 0
    n_rw: int = 0
    n_rr: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValidationError(f"item {self.item_id}: k must be >= 2")
        for name in ("n_ww_retained", "n_ww_changed", "n_wr", "n_rw", "n_rr"):
            if getattr(self, name) < 0:
                raise ValidationError(f"item {self.item_id}: {name} is negative")
        if self.k == 2 and self.n_ww_changed:
            raise ValidationError(
                f"item {self.item_id}: a 2-choice item cannot have wrong-to-wrong changes"
            )

    @property
    def n_total(self) -> int:
        return self.n_ww_retained + self.n_ww_changed + self.n_wr + self.n_rw + self.n_rr

    @property
    def n_ww(self) -> int:
        return self.n_ww_retained + self.n_ww_changed

    @property
    def n_treated(self) -> int:
        return self.n_ww_changed + self.n_wr + self.n_rw

    @property
    def n_untreated(self) -> int:
        return self.n_ww_retained + self.n_rr

    def count(self, rtype: ResponseType) -> int:
        return {
            ResponseType.WW_RETAINED: self.n_ww_retained,
            ResponseType.WW_CHANGED: self.n_ww_changed,
            ResponseType.WR: self.n_wr,
            ResponseType.RW: self.n_rw,
            ResponseType.RR: self.n_rr,
        }[rtype]


@dataclass(frozen=True)
class PotentialRow:
    """One row of the imputation table.

    ``latent`` distinguishes the two unobservable branches of retained
    wrong answers ("gain": changing would have fixed it, "null": it would
    not). ``y1``/``tau`` are None where the outcome cannot be imputed.
    """

    response_type: ResponseType
    t: int
    y1: int | None
    y0: int
    latent: str | None = None

    @property
    def f(self) -> int:
        return self.y0

    @property
    def tau(self) -> int | None:
        return None if self.y1 is None else self.y1 - self.y0

    @property
    def label(self) -> str:
        if self.latent is None:
            return self.response_type.value
        return f"{self.response_type.value}:{self.latent}"


def _check_member(label: Choice, alternatives: Sequence[str], what: str) -> None:
    if label not in alternatives:
        raise ValidationError(f"{what} choice {label!r} not in {list(alternatives)}")


def classify(
    initial: Choice,
    final: Choice,
    key: Choice,
    k: int,
    labels: Sequence[str] | None = None,
) -> tuple[ResponseType, int]:
    """Map one (initial, final) pair to its response type and change status."""
    alternatives = tuple(labels) if labels is not None else canonical_labels(k)
    if len(alternatives) != k:
        raise ValidationError(f"expected {k} labels, got {len(alternatives)}")
    initial, final, key = (normalize_choice(x) for x in (initial, final, key))
    _check_member(initial, alternatives, "initial")
    _check_member(final, alternatives, "final")
    _check_member(key, alternatives, "key")

    t = int(initial != final)
    first_right = initial == key
    final_right = final == key
    if first_right and final_right:
        return ResponseType.RR, 0
    if first_right:
        return ResponseType.RW, 1
    if final_right:
        return ResponseType.WR, 1
    return (ResponseType.WW_CHANGED if t else ResponseType.WW_RETAINED), t


def tally_from_matrix(
    counts: Sequence[Sequence[int]], key_index: int, k: int, item_id: str = ""
) -> ItemTally:
    """Collapse a k-by-k initial/final count matrix into the five classes.

    Rows index the initial choice, columns the final choice.
    """
    if len(counts) != k or any(len(row) != k for row in counts):
        raise ValidationError(f"matrix must be {k}x{k}")
    if not 0 <= key_index < k:
        raise ValidationError(f"key_index {key_index} outside 0..{k - 1}")
    if any(c < 0 for row in counts for c in row):
        raise ValidationError("matrix has a negative cell")

    retained = changed = wr = rw = 0
    for r in range(k):
        for c in range(k):
            n = int(counts[r][c])
            if r == key_index and c == key_index:
                continue
            if c == key_index:
                wr += n
            elif r == key_index:
                rw += n
            elif r == c:
                retained += n
            else:
                changed += n
    return ItemTally(
        item_id=item_id,
        k=k,
        n_ww_retained=retained,
        n_ww_changed=changed,
        n_wr=wr,
        n_rw=rw,
        n_rr=int(counts[key_index][key_index]),
    )


def tally_item(
    records: Iterable[ResponseRecord],
    key: Choice,
    k: int,
    labels: Sequence[str] | None = None,
    item_id: str | None = None,
) -> ItemTally:
    records = list(records)
    ids = {r.item_id for r in records}
    if len(ids) > 1:
        raise ValidationError(f"records span several items: {sorted(ids)}")
    seen: set[str] = set()
    for r in records:
        if r.examinee_id in seen:
            raise ValidationError(f"duplicate record for examinee {r.examinee_id!r}")
        seen.add(r.examinee_id)

    counter = Counter(classify(r.initial, r.final, key, k, labels)[0] for r in records)
    if item_id is None:
        item_id = next(iter(ids)) if ids else ""
    return ItemTally(
        item_id=item_id,
        k=k,
        n_ww_retained=counter[ResponseType.WW_RETAINED],
        n_ww_changed=counter[ResponseType.WW_CHANGED],
        n_wr=counter[ResponseType.WR],
        n_rw=counter[ResponseType.RW],
        n_rr=counter[ResponseType.RR],
    )


def impute_rows(k: int) -> list[PotentialRow]:
    """Potential outcomes for every response class.

    The retained answer is always the no-change outcome. For two choices,
    changing flips correctness, so every row is fully determined. With more
    choices a retained wrong answer may or may not have become right, so that
    class is split into its two latent branches.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k == 2:
        return [
            PotentialRow(ResponseType.WW_RETAINED, t=0, y1=1, y0=0),
            PotentialRow(ResponseType.WR, t=1, y1=1, y0=0),
            PotentialRow(ResponseType.RW, t=1, y1=0, y0=1),
            PotentialRow(ResponseType.RR, t=0, y1=0, y0=1),
        ]
    return [
        PotentialRow(ResponseType.WW_RETAINED, t=0, y1=1, y0=0, latent="gain"),
        PotentialRow(ResponseType.WW_RETAINED, t=0, y1=0, y0=0, latent="null"),
        PotentialRow(ResponseType.WW_CHANGED, t=1, y1=0, y0=0),
        PotentialRow(ResponseType.WR, t=1, y1=1, y0=0),
        PotentialRow(ResponseType.RW, t=1, y1=0, y0=1),
        PotentialRow(ResponseType.RR, t=0, y1=0, y0=1),
    ]
