"""Monte Carlo bounds on test-level ATT and ATU from pooled counts.

Pooled counts hide two things: how the wrong-to-wrong records split into
retained-gain / retained-null / changed, and how records spread over items.
Each iteration draws both at random, builds pseudo item tables, computes the
test-level effects, and the run keeps the global min and max.

Randomness is drawn in fixed-size blocks of iterations. Block ``b`` uses its
own generator seeded from ``(seed, b)``, so any iteration's draws depend only
on the seed and its index. Workers therefore cannot change the result, and a
run of R iterations is a prefix of any longer run with the same seed.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from answerchange.ingest import CollapsedTally

BLOCK_SIZE = 2048

# class order along the allocation axis
GAIN, NULL, CHANGED, WR, RW, RR = range(6)


class AtuMode(str, enum.Enum):
    EQ14_INTERVAL = "eq14_interval"
    EQ13_POINT = "eq13_point"


@dataclass(frozen=True)
class SimConfig:
    iterations: int
    seed: int = 0
    atu_mode: AtuMode = AtuMode.EQ14_INTERVAL
    parallel_width: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.parallel_width < 1:
            raise ValueError("parallel_width must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "atu_mode", AtuMode(self.atu_mode))


@dataclass(frozen=True)
class SimResult:
    att_interval: tuple[float, float] | None
    atu_interval: tuple[float, float] | None
    ate_interval: tuple[float, float]
    iterations_run: int
    items_skipped_total: int
    seed: int
    atu_mode: AtuMode


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def sample_split(n_ww: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform random composition of ``n_ww`` into three nonnegative parts.

    Two distinct bar positions are chosen among ``n_ww + 2`` slots; the gaps
    are the parts. Returns shape ``(3,)`` or ``(size, 3)``.
    """
    if n_ww < 0:
        raise ValueError("n_ww must be nonnegative")
    shape = () if size is None else (size,)
    a = rng.integers(0, n_ww + 2, size=shape)
    b = rng.integers(0, n_ww + 1, size=shape)
    b = np.where(b >= a, b + 1, b)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return np.stack([lo, hi - lo - 1, n_ww + 1 - hi], axis=-1).astype(np.int64)


def allocate(counts, n_items: int, rng: np.random.Generator) -> np.ndarray:
    """Spread each count uniformly at random over ``n_items`` cells.

    Multinomial with equal cell probabilities, by recursive binomial halving:
    O(J) binomial draws per count however large it is. ``counts`` may have
    any shape; the result gains a trailing axis of length ``n_items``.
    """
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    counts = np.asarray(counts, dtype=np.int64)
    segments = [(counts, n_items)]
    while any(size > 1 for _, size in segments):
        splittable = [s for s in segments if s[1] > 1]
        # one vectorised draw per level
        ns = np.stack([c for c, _ in splittable], axis=-1)
        ps = np.array([(size // 2) / size for _, size in splittable])
        left = rng.binomial(ns, ps)
        nxt = []
        j = 0
        for c, size in segments:
            if size == 1:
                nxt.append((c, 1))
                continue
            lc = left[..., j]
            nxt.append((lc, size // 2))
            nxt.append((c - lc, size - size // 2))
            j += 1
        segments = nxt
    return np.stack([c for c, _ in segments], axis=-1)


def _class_totals(tally: CollapsedTally, splits: np.ndarray) -> np.ndarray:
    rows = splits.shape[0]
    fixed = np.broadcast_to(np.array([tally.n_wr, tally.n_rw, tally.n_rr], dtype=np.int64), (rows, 3))
    return np.concatenate([splits, fixed], axis=1)


def _draw_splits(tally: CollapsedTally, rng: np.random.Generator, size: int) -> np.ndarray:
    if tally.n_ww_changed is None:
        return sample_split(tally.n_ww, rng, size)
    # changers known: only the retained part is split, into gain and null
    retained = tally.n_ww - tally.n_ww_changed
    gain = rng.integers(0, retained + 1, size=size)
    return np.stack([gain, retained - gain, np.full(size, tally.n_ww_changed)], axis=-1).astype(np.int64)


def _row_mean(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    n = mask.sum(axis=-1)
    total = np.where(mask, values, 0.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, total / np.maximum(n, 1), np.nan)


@dataclass(frozen=True)
class BlockStats:
    att: np.ndarray
    atu_lo: np.ndarray
    atu_hi: np.ndarray
    ate: np.ndarray
    skipped: np.ndarray


def simulate_block(tally: CollapsedTally, block: int, seed: int, atu_mode: AtuMode) -> BlockStats:
    """Per-iteration test-level statistics for one full block."""
    rng = block_rng(seed, block)
    splits = _draw_splits(tally, rng, BLOCK_SIZE)
    alloc = allocate(_class_totals(tally, splits), tally.n_items, rng).astype(np.float64)
    gain, null, changed, wr, rw, rr = (alloc[:, c, :] for c in range(6))

    treated = changed + wr + rw
    has_treated = treated > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        att_items = (wr - rw) / treated
    att = _row_mean(att_items, has_treated)
    skipped = (~has_treated).sum(axis=-1)

    retained = gain + null
    controls = retained + rr
    has_controls = controls > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        if atu_mode is AtuMode.EQ14_INTERVAL:
            lo_items = -rr / controls
            hi_items = (retained - rr) / controls
        else:
            lo_items = hi_items = (gain - rr) / controls
    atu_lo = _row_mean(lo_items, has_controls)
    atu_hi = _row_mean(hi_items, has_controls)

    cells = tally.n_examinees * tally.n_items
    ate = (splits[:, GAIN] + tally.n_wr - tally.n_rw - tally.n_rr) / cells
    return BlockStats(att, atu_lo, atu_hi, ate, skipped)


def _reduce_block(args) -> tuple:
    tally, block, seed, atu_mode, take = args
    s = simulate_block(tally, block, seed, atu_mode)
    att, lo, hi, ate, skipped = (x[:take] for x in (s.att, s.atu_lo, s.atu_hi, s.ate, s.skipped))
    return (
        _nan_extreme(att, np.nanmin),
        _nan_extreme(att, np.nanmax),
        _nan_extreme(lo, np.nanmin),
        _nan_extreme(hi, np.nanmax),
        float(ate.min()),
        float(ate.max()),
        int(skipped.sum()),
    )


def _nan_extreme(values: np.ndarray, fn) -> float:
    if np.all(np.isnan(values)):
        return math.nan
    return float(fn(values))


def _combine(parts: list[tuple]) -> tuple:
    def pick(idx, fn):
        vals = [p[idx] for p in parts if not math.isnan(p[idx])]
        return fn(vals) if vals else math.nan

    return (
        pick(0, min), pick(1, max), pick(2, min), pick(3, max),
        min(p[4] for p in parts), max(p[5] for p in parts), sum(p[6] for p in parts),
    )


def simulate(tally: CollapsedTally, config: SimConfig) -> SimResult:
    """Run the simulation and return global extremes over all iterations.

    The ATT interval is (min, max) of the per-iteration test-level ATT. In
    ``eq14_interval`` mode the ATU interval is (min of the per-iteration
    lower ends, max of the upper ends); in ``eq13_point`` mode it is the
    range of the per-iteration ATU computed with the drawn gain counts.
    """
    if tally.n_wr + tally.n_rw + tally.n_ww == 0:
        raise ValueError("nothing to simulate: no changers and no wrong-to-wrong records")
    n_blocks = -(-config.iterations // BLOCK_SIZE)
    jobs = []
    for b in range(n_blocks):
        take = min(BLOCK_SIZE, config.iterations - b * BLOCK_SIZE)
        jobs.append((tally, b, config.seed, config.atu_mode, take))

    if config.parallel_width > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=config.parallel_width) as pool:
            parts = list(pool.map(_reduce_block, jobs, chunksize=max(1, n_blocks // (4 * config.parallel_width))))
    else:
        parts = [_reduce_block(j) for j in jobs]

    att_min, att_max, lo, hi, ate_min, ate_max, skipped = _combine(parts)
    return SimResult(
        att_interval=None if math.isnan(att_min) else (att_min, att_max),
        atu_interval=None if math.isnan(lo) else (lo, hi),
        ate_interval=(ate_min, ate_max),
        iterations_run=config.iterations,
        items_skipped_total=skipped,
        seed=config.seed,
        atu_mode=config.atu_mode,
    )
