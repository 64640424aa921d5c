"""Number rendering, flat key/value documents and the effects chart."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

from answerchange.estimators import EffectResult, ItemEffects

MINUS = "−"


def round_half_away(x: Fraction, places: int) -> Fraction:
    scale = 10**places
    scaled = abs(x) * scale
    n = math.floor(scaled)
    if scaled - n >= Fraction(1, 2):
        n += 1
    return Fraction(n if x >= 0 else -n, scale)


def decimal_text(x: Fraction, places: int = 10) -> str:
    """Plain ASCII decimal rounded half away from zero."""
    r = round_half_away(Fraction(x), places)
    sign = "-" if r < 0 else ""
    r = abs(r)
    whole = math.floor(r)
    frac = (r - whole) * 10**places
    return f"{sign}{whole}.{int(frac):0{places}d}" if places else f"{sign}{whole}"


def fraction_text(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def fixed_number(x: Fraction, leading_zero: bool = True, places: int = 2) -> str:
    """Two-decimal rendering with a typographic minus, e.g. ``−0.85`` or ``−.52``."""
    text = decimal_text(x, places)
    negative = text.startswith("-")
    text = text.lstrip("-")
    if not leading_zero and text.startswith("0."):
        text = text[1:]
    if negative and float(text) != 0:
        text = MINUS + text
    return text


def percent_text(x: Fraction, places: int = 2) -> str:
    return decimal_text(Fraction(x) * 100, places) + "%"


def render_effect(result: EffectResult, leading_zero: bool = True) -> str:
    name = result.estimand.value
    if not result.defined:
        return f"{name} undefined ({result.reason})"
    if result.identified:
        return f"{name} = {fixed_number(result.point, leading_zero)}"
    lo = fixed_number(result.lower, leading_zero)
    hi = fixed_number(result.upper, leading_zero)
    return f"{lo} ≤ {name} ≤ {hi}"


def render_interval(name: str, lo: float, hi: float, leading_zero: bool = False) -> str:
    return (
        f"{fixed_number(Fraction(lo), leading_zero)} ≤ {name} ≤ "
        f"{fixed_number(Fraction(hi), leading_zero)}"
    )


def effect_fields(prefix: str, result: EffectResult) -> dict[str, str]:
    """Exact and decimal key/value entries for one result."""
    out = {f"{prefix}.defined": str(result.defined).lower()}
    if not result.defined:
        out[f"{prefix}.reason"] = result.reason
    else:
        out[f"{prefix}.identified"] = str(result.identified).lower()
        if result.identified:
            out[f"{prefix}.point"] = fraction_text(result.point)
            out[f"{prefix}.point_decimal"] = decimal_text(result.point)
        else:
            out[f"{prefix}.lower"] = fraction_text(result.lower)
            out[f"{prefix}.lower_decimal"] = decimal_text(result.lower)
            out[f"{prefix}.upper"] = fraction_text(result.upper)
            out[f"{prefix}.upper_decimal"] = decimal_text(result.upper)
    if result.level == "test":
        out[f"{prefix}.items_excluded"] = str(result.excluded)
    return out


def key_value_text(entries: Mapping[str, object] | Iterable[tuple[str, object]]) -> str:
    items = entries.items() if isinstance(entries, Mapping) else entries
    return "".join(f"{k} = {v}\n" for k, v in items)


EFFECTS_COLUMNS = [
    "item_id", "k", "n_total", "n_ww_retained", "n_ww_changed", "n_wr", "n_rw", "n_rr",
    "treated_share", "att", "att_defined", "ate_lo", "ate_hi", "atu_lo", "atu_hi",
    "identified_flags",
]
EXACT_COLUMNS = ["treated_share_exact", "att_exact", "ate_lo_exact", "ate_hi_exact", "atu_lo_exact", "atu_hi_exact"]


def effects_row(tally, eff: ItemEffects) -> list[str]:
    def dec(x):
        return "" if x is None else decimal_text(x)

    def exact(x):
        return "" if x is None else fraction_text(x)

    att = eff.att.point if eff.att.defined else None
    flags = [r.estimand.value for r in (eff.att, eff.ate, eff.atu) if r.defined and r.identified]
    return [
        tally.item_id, str(tally.k), str(tally.n_total), str(tally.n_ww_retained),
        str(tally.n_ww_changed), str(tally.n_wr), str(tally.n_rw), str(tally.n_rr),
        dec(eff.treated_share), dec(att), str(int(eff.att.defined)),
        dec(eff.ate.lower), dec(eff.ate.upper), dec(eff.atu.lower), dec(eff.atu.upper),
        "|".join(flags),
        exact(eff.treated_share), exact(att), exact(eff.ate.lower), exact(eff.ate.upper),
        exact(eff.atu.lower), exact(eff.atu.upper),
    ]


def effects_chart(items: Sequence[ItemEffects], title: str = "Item ATE bounds and ATT points") -> str:
    """SVG with one vertical ATE segment per item and a square per defined ATT."""
    left, right, top, bottom = 56, 20, 36, 40
    step = 16
    plot_h = 320
    width = left + right + step * max(len(items), 1)
    height = top + plot_h + bottom

    def y(v: Fraction) -> float:
        return round(top + (1 - float(v)) / 2 * plot_h, 3)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="20" font-family="sans-serif" font-size="12">{escape(title)}</text>',
    ]
    for v in (-1, -0.5, 0, 0.5, 1):
        yy = y(Fraction(v))
        stroke = "#888" if v == 0 else "#ddd"
        parts.append(
            f'<line class="grid" x1="{left}" y1="{yy}" x2="{width - right}" y2="{yy}" stroke="{stroke}"/>'
        )
        label = fixed_number(Fraction(v), leading_zero=True, places=1)
        parts.append(
            f'<text x="{left - 6}" y="{yy + 4}" text-anchor="end" font-family="sans-serif" '
            f'font-size="10">{escape(label)}</text>'
        )
    for i, eff in enumerate(items):
        x = left + step * i + step / 2
        if eff.ate.defined:
            parts.append(
                f'<line class="ate-bound" x1="{x}" y1="{y(eff.ate.upper)}" x2="{x}" '
                f'y2="{y(eff.ate.lower)}" stroke="black" stroke-width="2"/>'
            )
        if eff.att.defined:
            yy = y(eff.att.point)
            parts.append(
                f'<rect class="att-point" x="{x - 3}" y="{yy - 3}" width="6" height="6" fill="black"/>'
            )
        parts.append(
            f'<text x="{x}" y="{top + plot_h + 14}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="8">{escape(eff.item_id)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
