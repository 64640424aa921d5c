"""Readers and writers for the four input shapes.

* responses: ``examinee_id,item_id,initial,final`` (long format, one row per
  examinee and item; a blank choice is a nonresponse)
* keys: ``item_id,key,k[,labels]`` with ``labels`` pipe-separated
* item matrix: a labelled k-by-k initial/final count grid, key marked ``*``
* collapsed: ``name = value`` lines (or a flat JSON object) holding pooled
  ``ww, wr, rw, rr, n_examinees, n_items`` and optionally ``ww_changed``

Row-level problems in a responses file are dropped and recorded in a
:class:`ValidationReport`; structural problems raise :class:`ParseError`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from answerchange.response_model import (
    Choice,
    ResponseRecord,
    ValidationError,
    canonical_labels,
    normalize_choice,
)

log = logging.getLogger(__name__)

RESPONSES_HEADER = ["examinee_id", "item_id", "initial", "final"]
KEYS_HEADER = ["item_id", "key", "k"]
COLLAPSED_FIELDS = ("ww", "wr", "rw", "rr", "n_examinees", "n_items")


class ParseError(ValidationError):
    """A file is structurally unusable."""


@dataclass(frozen=True)
class KeyEntry:
    item_id: str
    key: Choice
    k: int
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValidationError(f"item {self.item_id}: k must be >= 2")
        if not self.labels:
            object.__setattr__(self, "labels", canonical_labels(self.k))
        if len(self.labels) != self.k:
            raise ValidationError(
                f"item {self.item_id}: {len(self.labels)} labels for k={self.k}"
            )
        if len(set(self.labels)) != self.k:
            raise ValidationError(f"item {self.item_id}: repeated labels")
        if self.key not in self.labels:
            raise ValidationError(
                f"item {self.item_id}: key {self.key!r} not in {list(self.labels)}"
            )

    @property
    def key_index(self) -> int:
        return self.labels.index(self.key)

    @property
    def has_canonical_labels(self) -> bool:
        return self.labels == canonical_labels(self.k) if self.k <= 26 else False


@dataclass(frozen=True)
class CollapsedTally:
    """Wrong/right counts pooled over all items of a test."""

    n_ww: int
    n_wr: int
    n_rw: int
    n_rr: int
    n_examinees: int
    n_items: int
    n_ww_changed: int | None = None

    def __post_init__(self) -> None:
        for name in ("n_ww", "n_wr", "n_rw", "n_rr"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} is negative")
        if self.n_examinees <= 0 or self.n_items <= 0:
            raise ValidationError("n_examinees and n_items must be positive")
        if self.n_ww_changed is not None and not 0 <= self.n_ww_changed <= self.n_ww:
            raise ValidationError("ww_changed must lie in [0, ww]")
        if self.n_observed > self.n_cells:
            raise ValidationError(
                f"{self.n_observed} responses exceed N*J = {self.n_cells}"
            )

    @property
    def n_observed(self) -> int:
        return self.n_ww + self.n_wr + self.n_rw + self.n_rr

    @property
    def n_cells(self) -> int:
        return self.n_examinees * self.n_items

    @property
    def shortfall(self) -> int:
        return self.n_cells - self.n_observed

    @property
    def shortfall_warning(self) -> str | None:
        if self.shortfall == 0:
            return None
        return f"{self.shortfall} responses short of N×J"


@dataclass
class ValidationReport:
    rows_read: int = 0
    drop_reasons: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def rows_dropped(self) -> int:
        return len(self.drop_reasons)

    @property
    def rows_kept(self) -> int:
        return self.rows_read - self.rows_dropped

    def drop(self, line: int, reason: str) -> None:
        self.drop_reasons.append((line, reason))

    def reason_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(r for _, r in self.drop_reasons).items()))


def _lines(stream) -> Iterable[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _strip_bom(cells: list[str]) -> list[str]:
    if cells and cells[0].startswith("﻿"):
        cells[0] = cells[0][1:]
    return cells


def parse_responses(
    stream, declared_examinees: int | None = None
) -> tuple[list[ResponseRecord], ValidationReport]:
    """Read a responses file.

    Blank choices are dropped as ``nonresponse``, repeated (examinee, item)
    pairs as ``duplicate`` (first one wins), rows with the wrong shape as
    ``malformed``. With ``declared_examinees`` the report also warns about
    items holding fewer responses than examinees.
    """
    reader = csv.reader(_lines(stream))
    header = next(reader, None)
    if header is None or [h.strip() for h in _strip_bom(header)] != RESPONSES_HEADER:
        raise ParseError(f"responses header must be {','.join(RESPONSES_HEADER)}, got {header}")

    report = ValidationReport()
    records: list[ResponseRecord] = []
    seen: set[tuple[str, str]] = set()
    for row in reader:
        if not row:
            continue
        report.rows_read += 1
        line = reader.line_num
        if len(row) != 4:
            report.drop(line, "malformed")
            continue
        examinee, item, initial, final = (normalize_choice(c) for c in row)
        if not examinee or not item:
            report.drop(line, "malformed")
            continue
        if not initial or not final:
            report.drop(line, "nonresponse")
            continue
        if (examinee, item) in seen:
            report.drop(line, "duplicate")
            continue
        seen.add((examinee, item))
        records.append(ResponseRecord(examinee, item, initial, final))

    if declared_examinees is not None:
        per_item = Counter(r.item_id for r in records)
        for item, n in sorted(per_item.items()):
            if n < declared_examinees:
                report.warnings.append(
                    f"item {item}: {declared_examinees - n} responses missing "
                    f"against {declared_examinees} declared examinees"
                )
    return records, report


def parse_keys(stream) -> list[KeyEntry]:
    reader = csv.reader(_lines(stream))
    header = next(reader, None)
    if header is None:
        raise ParseError("keys file is empty")
    header = [h.strip() for h in _strip_bom(header)]
    if header not in (KEYS_HEADER, KEYS_HEADER + ["labels"]):
        raise ParseError(f"keys header must be item_id,key,k[,labels], got {header}")
    with_labels = len(header) == 4

    entries: list[KeyEntry] = []
    seen: set[str] = set()
    for row in reader:
        if not row:
            continue
        line = reader.line_num
        if len(row) not in (3, 4) or (len(row) == 4 and not with_labels):
            raise ParseError(f"line {line}: expected {len(header)} fields")
        item, key, k_text = (c.strip() for c in row[:3])
        if item in seen:
            raise ParseError(f"line {line}: duplicate item {item!r}")
        try:
            k = int(k_text)
        except ValueError:
            raise ParseError(f"line {line}: k is not an integer: {k_text!r}") from None
        labels: tuple[str, ...] = ()
        if len(row) == 4 and row[3].strip():
            labels = tuple(normalize_choice(x) for x in row[3].split("|"))
        try:
            entries.append(KeyEntry(item, normalize_choice(key), k, labels))
        except ValidationError as exc:
            raise ParseError(f"line {line}: {exc}") from None
        seen.add(item)
    return entries


class ItemMatrix(NamedTuple):
    counts: list[list[int]]
    key_index: int
    labels: tuple[str, ...]


def parse_item_matrix(stream) -> ItemMatrix:
    """Read a labelled initial-by-final count grid.

    The first row is ``initial\\final`` followed by the final-choice labels,
    the key label carrying a ``*`` suffix. Each following row is an initial
    label and its counts; row labels must repeat the column labels in order.
    """
    rows = [r for r in csv.reader(_lines(stream)) if r]
    if not rows:
        raise ParseError("matrix file is empty")
    header = [c.strip() for c in _strip_bom(rows[0])]
    col_labels = header[1:]
    k = len(col_labels)
    starred = [i for i, lab in enumerate(col_labels) if lab.endswith("*")]
    if len(starred) != 1:
        raise ParseError(f"exactly one key label must be marked '*', found {len(starred)}")
    key_index = starred[0]
    labels = tuple(lab.rstrip("*").strip() for lab in col_labels)
    if k < 2:
        raise ParseError("matrix needs at least two alternatives")

    body = rows[1:]
    if len(body) != k or any(len(r) != k + 1 for r in body):
        raise ParseError(f"matrix is not square: {len(body)} rows for {k} columns")
    counts: list[list[int]] = []
    for i, row in enumerate(body):
        row_label = row[0].strip()
        if row_label.endswith("*") and i != key_index:
            raise ParseError(f"row {row_label!r} marked as key but the key is {labels[key_index]!r}")
        if row_label.rstrip("*").strip() != labels[i]:
            raise ParseError(f"row {i + 1} label {row_label!r} does not match column {labels[i]!r}")
        try:
            values = [int(c.strip().replace("_", "")) for c in row[1:]]
        except ValueError:
            raise ParseError(f"row {row_label!r}: non-integer count") from None
        if any(v < 0 for v in values):
            raise ParseError(f"row {row_label!r}: negative count")
        counts.append(values)
    return ItemMatrix(counts, key_index, labels)


def format_item_matrix(counts: Sequence[Sequence[int]], key_index: int, labels: Sequence[str]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    cols = [lab + ("*" if i == key_index else "") for i, lab in enumerate(labels)]
    writer.writerow(["initial\\final", *cols])
    for lab, row in zip(labels, counts):
        writer.writerow([lab, *row])
    return out.getvalue()


def _parse_int(name: str, text) -> int:
    if isinstance(text, bool):
        raise ParseError(f"{name}: not an integer")
    if isinstance(text, int):
        return text
    try:
        return int(str(text).strip().replace("_", ""))
    except ValueError:
        raise ParseError(f"{name}: not an integer: {text!r}") from None


def parse_collapsed(stream) -> CollapsedTally:
    text = "".join(_lines(stream)).lstrip("﻿")
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"collapsed file: {exc}") from None
        if not isinstance(raw, dict):
            raise ParseError("collapsed file must hold a flat object")
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":"
            name, _, value = line.partition(sep)
            if not _:
                raise ParseError(f"line {lineno}: expected 'name = value'")
            name = name.strip()
            if name in raw:
                raise ParseError(f"line {lineno}: repeated field {name!r}")
            raw[name] = value.strip()

    missing = [f for f in COLLAPSED_FIELDS if f not in raw]
    if missing:
        raise ParseError(f"collapsed file lacks {missing}")
    unknown = sorted(set(raw) - set(COLLAPSED_FIELDS) - {"ww_changed"})
    if unknown:
        raise ParseError(f"collapsed file has unknown fields {unknown}")
    values = {f: _parse_int(f, raw[f]) for f in COLLAPSED_FIELDS}
    changed = raw.get("ww_changed")
    try:
        tally = CollapsedTally(
            n_ww=values["ww"],
            n_wr=values["wr"],
            n_rw=values["rw"],
            n_rr=values["rr"],
            n_examinees=values["n_examinees"],
            n_items=values["n_items"],
            n_ww_changed=None if changed in (None, "") else _parse_int("ww_changed", changed),
        )
    except ValidationError as exc:
        raise ParseError(str(exc)) from None
    if tally.shortfall_warning:
        log.warning(tally.shortfall_warning)
    return tally


def format_collapsed(tally: CollapsedTally) -> str:
    lines = [
        f"ww = {tally.n_ww}",
        f"wr = {tally.n_wr}",
        f"rw = {tally.n_rw}",
        f"rr = {tally.n_rr}",
        f"n_examinees = {tally.n_examinees}",
        f"n_items = {tally.n_items}",
    ]
    if tally.n_ww_changed is not None:
        lines.append(f"ww_changed = {tally.n_ww_changed}")
    return "\n".join(lines) + "\n"


def write_responses(records: Iterable[ResponseRecord], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RESPONSES_HEADER)
    for r in records:
        writer.writerow([r.examinee_id, r.item_id, r.initial, r.final])


def write_keys(keys: Iterable[KeyEntry], fh) -> None:
    keys = list(keys)
    with_labels = any(not k.has_canonical_labels for k in keys)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(KEYS_HEADER + (["labels"] if with_labels else []))
    for k in keys:
        row = [k.item_id, k.key, k.k]
        if with_labels:
            row.append("|".join(k.labels))
        writer.writerow(row)


def expand_matrix(counts: Sequence[Sequence[int]], labels: Sequence[str], item_id: str) -> list[ResponseRecord]:
    """One record per counted examinee, ids ``e1, e2, ...`` in row-major order."""
    records = []
    n = 0
    for r, row in enumerate(counts):
        for c, count in enumerate(row):
            for _ in range(count):
                n += 1
                records.append(ResponseRecord(f"e{n}", item_id, labels[r], labels[c]))
    return records
