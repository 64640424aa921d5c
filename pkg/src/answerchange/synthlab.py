"""Synthetic examinees with known potential outcomes.

Used to check the estimators end to end: every generated examinee-item cell
carries both potential outcomes, so true effects are plain averages and can
be compared exactly against what the estimators recover from the observed
choices alone.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from answerchange.estimators import item_effects, test_level
from answerchange.ingest import KeyEntry
from answerchange.response_model import (
    ItemTally,
    ResponseRecord,
    ResponseType,
    canonical_labels,
    impute_rows,
    tally_item,
)

TRUTH_HEADER = ["examinee_id", "item_id", "f", "t", "y1", "y0"]


@dataclass(frozen=True)
class LatentUnit:
    examinee_id: str
    item_id: str
    f: int
    t: int
    y1: int
    y0: int
    initial: str
    final: str

    @property
    def y(self) -> int:
        """Observed correctness implied by the potential outcomes."""
        return self.t * self.y1 + (1 - self.t) * self.y0

    @property
    def tau(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class GenConfig:
    n_examinees: int = 200
    n_items: int = 10
    k: int = 4
    p_first_correct: float | tuple[float, ...] = 0.7
    p_change_given_wrong: float = 0.08
    p_change_given_right: float = 0.02
    p_switch_success: float = 0.5
    seed: int = 0
    # False: everyone changes with p_change_given_wrong, independent of f
    confounded: bool = True

    def __post_init__(self) -> None:
        if self.n_examinees < 1 or self.n_items < 1:
            raise ValueError("need at least one examinee and one item")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if isinstance(self.p_first_correct, (list, tuple)):
            if len(self.p_first_correct) != self.n_items:
                raise ValueError("per-item p_first_correct needs one value per item")
            object.__setattr__(self, "p_first_correct", tuple(self.p_first_correct))
        for p in (
            *self.item_p_first_correct(),
            self.p_change_given_wrong,
            self.p_change_given_right,
            self.p_switch_success,
        ):
            if not 0 <= p <= 1:
                raise ValueError(f"probability {p} outside [0, 1]")
        if self.k == 2 and self.p_switch_success != 1:
            raise ValueError("with k=2 a changed wrong answer is always right; set p_switch_success=1")

    def item_p_first_correct(self) -> tuple[float, ...]:
        if isinstance(self.p_first_correct, tuple):
            return self.p_first_correct
        return (self.p_first_correct,) * self.n_items


def item_name(j: int) -> str:
    return f"i{j + 1}"


def generate(config: GenConfig) -> tuple[list[ResponseRecord], list[KeyEntry], list[LatentUnit]]:
    """Draw a population. Item ``j`` uses its own stream seeded by ``(seed, j)``."""
    labels = canonical_labels(config.k)
    records: list[ResponseRecord] = []
    keys: list[KeyEntry] = []
    units: list[LatentUnit] = []
    n = config.n_examinees
    for j, p_first in enumerate(config.item_p_first_correct()):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=(j,))))
        key_idx = int(rng.integers(config.k))
        item = item_name(j)
        keys.append(KeyEntry(item, labels[key_idx], config.k))

        f = rng.random(n) < p_first
        y1 = np.where(f, False, rng.random(n) < config.p_switch_success)
        p_change = np.where(f & config.confounded, config.p_change_given_right, config.p_change_given_wrong)
        t = rng.random(n) < p_change
        # wrong picks are offsets 1..k-1 from the key; the second one avoids the first
        first_wrong = rng.integers(1, config.k, size=n)
        second_wrong = rng.integers(1, max(config.k - 1, 2), size=n)

        for i in range(n):
            fi, ti, y1i = int(f[i]), int(t[i]), int(y1[i])
            wrong_a = (key_idx + int(first_wrong[i])) % config.k
            initial = key_idx if fi else wrong_a
            if not ti:
                final = initial
            elif y1i:
                final = key_idx
            elif fi:
                final = wrong_a
            else:
                # another wrong option, distinct from the initial one
                offs = int(second_wrong[i])
                if offs >= int(first_wrong[i]):
                    offs += 1
                final = (key_idx + offs) % config.k
            examinee = f"e{i + 1}"
            records.append(ResponseRecord(examinee, item, labels[initial], labels[final]))
            units.append(LatentUnit(examinee, item, fi, ti, y1i, fi, labels[initial], labels[final]))
    return records, keys, units


@dataclass(frozen=True)
class EffectTruth:
    ate: Fraction
    att: Fraction | None
    atu: Fraction | None
    treated_share: Fraction


@dataclass
class TruthSummary:
    pooled: EffectTruth
    items: dict[str, EffectTruth]
    # averages of item truths, comparable with the test-level estimates
    test_ate: Fraction
    test_att: Fraction | None
    test_atu: Fraction | None
    latent_shares: dict[str, Fraction] = field(default_factory=dict)


def _truth(units: Sequence[LatentUnit]) -> EffectTruth:
    n = len(units)
    treated = [u for u in units if u.t]
    control = [u for u in units if not u.t]
    return EffectTruth(
        ate=Fraction(sum(u.tau for u in units), n),
        att=Fraction(sum(u.tau for u in treated), len(treated)) if treated else None,
        atu=Fraction(sum(u.tau for u in control), len(control)) if control else None,
        treated_share=Fraction(len(treated), n),
    )


def latent_class(u: LatentUnit) -> str:
    if u.f:
        return "RW" if u.t else "RR"
    if u.t:
        return "WR" if u.y1 else "WW_changed"
    return "WW_retained:gain" if u.y1 else "WW_retained:null"


def _mean_defined(values: Iterable[Fraction | None]) -> Fraction | None:
    vals = [v for v in values if v is not None]
    return sum(vals, Fraction(0)) / len(vals) if vals else None


def true_effects(units: Sequence[LatentUnit]) -> TruthSummary:
    if not units:
        raise ValueError("true_effects needs at least one unit")
    by_item: dict[str, list[LatentUnit]] = defaultdict(list)
    for u in units:
        by_item[u.item_id].append(u)
    items = {item: _truth(us) for item, us in by_item.items()}
    counts: dict[str, int] = defaultdict(int)
    for u in units:
        counts[latent_class(u)] += 1
    order = ["WW_retained:gain", "WW_retained:null", "WW_changed", "WR", "RW", "RR"]
    return TruthSummary(
        pooled=_truth(units),
        items=items,
        test_ate=_mean_defined(t.ate for t in items.values()),
        test_att=_mean_defined(t.att for t in items.values()),
        test_atu=_mean_defined(t.atu for t in items.values()),
        latent_shares={c: Fraction(counts[c], len(units)) for c in order},
    )


def brute_force_bounds(tally: ItemTally):
    """Exact ATE and ATU ranges by enumerating every latent split.

    Each way of dividing the retained wrong answers into "would have gained"
    and "would not" gives a fully imputed population; effects are averaged
    straight from the per-row unit effects. Returns ``(ate_minmax,
    atu_minmax)``; the ATU range is None when there are no retainers.
    """
    if tally.n_total == 0:
        raise ValueError("empty tally")
    rows = impute_rows(tally.k)
    tau = {}
    for r in rows:
        tau[(r.response_type, r.latent)] = r.tau

    retained = tally.n_ww_retained
    splits = [(retained, 0)] if tally.k == 2 else [(g, retained - g) for g in range(retained + 1)]
    ate_values, atu_values = [], []
    for gain, null in splits:
        pop = {
            (ResponseType.WW_CHANGED, None): tally.n_ww_changed,
            (ResponseType.WR, None): tally.n_wr,
            (ResponseType.RW, None): tally.n_rw,
            (ResponseType.RR, None): tally.n_rr,
        }
        if tally.k == 2:
            pop[(ResponseType.WW_RETAINED, None)] = gain
        else:
            pop[(ResponseType.WW_RETAINED, "gain")] = gain
            pop[(ResponseType.WW_RETAINED, "null")] = null
        total = sum(pop.values())
        ate_values.append(Fraction(sum(n * tau[c] for c, n in pop.items() if n), total))
        untreated = [(c, n) for c, n in pop.items() if n and c[0] in (ResponseType.WW_RETAINED, ResponseType.RR)]
        n_untreated = sum(n for _, n in untreated)
        if n_untreated:
            atu_values.append(Fraction(sum(n * tau[c] for c, n in untreated), n_untreated))
    ate = (min(ate_values), max(ate_values))
    atu = (min(atu_values), max(atu_values)) if atu_values else None
    return ate, atu


@dataclass
class VerificationReport:
    failures: list[str] = field(default_factory=list)
    items_checked: int = 0
    units_checked: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures


def verify(
    records: Sequence[ResponseRecord],
    keys: Sequence[KeyEntry],
    units: Sequence[LatentUnit],
) -> VerificationReport:
    """Check estimators against ground truth on one synthetic population.

    Asserts that the estimated ATT equals the true ATT (per item and at test
    level), that true ATE and ATU lie in their estimated bounds, and that
    each unit's observed outcome agrees with its potential outcomes.
    """
    report = VerificationReport()
    key_of = {k.item_id: k for k in keys}
    observed = {(r.examinee_id, r.item_id): r for r in records}

    for u in units:
        report.units_checked += 1
        where = f"unit {u.examinee_id}/{u.item_id}"
        entry = key_of.get(u.item_id)
        rec = observed.get((u.examinee_id, u.item_id))
        if entry is None or rec is None:
            report.failures.append(f"{where}: no matching key or response")
            continue
        y_obs = int(rec.final == entry.key)
        f_obs = int(rec.initial == entry.key)
        t_obs = int(rec.initial != rec.final)
        if u.y != y_obs:
            report.failures.append(f"{where}: consistency broken (observed Y={y_obs}, implied {u.y})")
        if u.y0 != u.f or u.f != f_obs:
            report.failures.append(f"{where}: no-change outcome y0={u.y0} disagrees with first answer f={f_obs}")
        if u.t != t_obs:
            report.failures.append(f"{where}: change status t={u.t} but observed {t_obs}")
        if u.f and u.y1:
            report.failures.append(f"{where}: a changed right answer cannot stay right")

    truth = true_effects(units)
    by_item: dict[str, list[ResponseRecord]] = defaultdict(list)
    for r in records:
        by_item[r.item_id].append(r)

    effects = []
    for item in sorted(by_item, key=_natural):
        entry = key_of.get(item)
        if entry is None:
            report.failures.append(f"item {item}: no key")
            continue
        report.items_checked += 1
        tally = tally_item(by_item[item], entry.key, entry.k, entry.labels)
        eff = item_effects(tally)
        effects.append(eff)
        true = truth.items.get(item)
        if true is None:
            report.failures.append(f"item {item}: no latent units")
            continue
        est_att = eff.att.point if eff.att.defined else None
        if est_att != true.att:
            report.failures.append(f"item {item}: estimated ATT {est_att} != true ATT {true.att}")
        if not eff.ate.contains(true.ate):
            report.failures.append(f"item {item}: true ATE {true.ate} outside [{eff.ate.lower}, {eff.ate.upper}]")
        if true.atu is not None and not eff.atu.contains(true.atu):
            report.failures.append(f"item {item}: true ATU {true.atu} outside [{eff.atu.lower}, {eff.atu.upper}]")

    if effects:
        att, ate, atu = test_level(effects)
        est = att.point if att.defined else None
        if est != truth.test_att:
            report.failures.append(f"test: estimated ATT {est} != true ATT {truth.test_att}")
        if not ate.contains(truth.test_ate):
            report.failures.append(f"test: true ATE {truth.test_ate} outside estimated bound")
        if truth.test_atu is not None and not atu.contains(truth.test_atu):
            report.failures.append(f"test: true ATU {truth.test_atu} outside estimated bound")
    return report


def _natural(item_id: str):
    digits = "".join(ch for ch in item_id if ch.isdigit())
    return (int(digits) if digits else 0, item_id)


def write_truth(units: Iterable[LatentUnit], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRUTH_HEADER)
    for u in units:
        writer.writerow([u.examinee_id, u.item_id, u.f, u.t, u.y1, u.y0])


def read_truth(fh, records: Sequence[ResponseRecord]) -> list[LatentUnit]:
    """Rebuild latent units from a truth sidecar plus the observed responses."""
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != TRUTH_HEADER:
        raise ValueError(f"truth header must be {','.join(TRUTH_HEADER)}")
    observed = {(r.examinee_id, r.item_id): r for r in records}
    units = []
    for row in reader:
        if not row:
            continue
        examinee, item = row[0].strip(), row[1].strip()
        f, t, y1, y0 = (int(x) for x in row[2:6])
        rec = observed.get((examinee, item))
        initial, final = (rec.initial, rec.final) if rec else ("", "")
        units.append(LatentUnit(examinee, item, f, t, y1, y0, initial, final))
    return units

