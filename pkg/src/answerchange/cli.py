"""Command-line entry point.

Exit codes: 0 ok, 1 usage error, 2 invalid input, 3 numeric failure,
4 synthetic verification failed. Outputs are written to a staging directory
and moved into ``--out`` only when the command succeeds.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import logging
import os
import shutil
import sys
import tempfile
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

from answerchange import __version__
from answerchange.estimators import (
    collapsed_ate_bound,
    collapsed_envelope,
    item_effects,
    test_level,
)
from answerchange.ingest import (
    KeyEntry,
    ParseError,
    parse_collapsed,
    parse_item_matrix,
    parse_keys,
    parse_responses,
    write_keys,
    write_responses,
)
from answerchange.mc_bounds import AtuMode, SimConfig, simulate
from answerchange.report import (
    EFFECTS_COLUMNS,
    EXACT_COLUMNS,
    decimal_text,
    effect_fields,
    effects_chart,
    effects_row,
    fraction_text,
    key_value_text,
    fixed_number,
    percent_text,
    render_effect,
    render_interval,
)
from answerchange.response_model import ValidationError, tally_from_matrix, tally_item
from answerchange.synthlab import GenConfig, generate, read_truth, verify, write_truth

log = logging.getLogger("answerchange")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3, 4
TOOL = f"answerchange {__version__}"


class UsageError(Exception):
    pass


class VerificationFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def staged_output(out_dir: Path):
    """Yield a scratch directory; move its files into ``out_dir`` on success."""
    out_dir = Path(out_dir)
    parent = out_dir.parent if out_dir.parent != Path("") else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=parent))
    try:
        yield stage
        out_dir.mkdir(parents=True, exist_ok=True)
        for f in sorted(stage.iterdir()):
            os.replace(f, out_dir / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _wants(fmt: str, kind: str) -> bool:
    return fmt in ("all", kind)


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None


def _item_sort_key(keys: list[KeyEntry]):
    order = {k.item_id: i for i, k in enumerate(keys)}
    return lambda item: order.get(item, len(order))


def _analysis_from_responses(args):
    keys = parse_keys(io.StringIO(_read(args.keys)))
    records, report = parse_responses(
        io.StringIO(_read(args.responses)), declared_examinees=args.declared_examinees
    )
    if not records:
        reasons = ", ".join(f"{r}={n}" for r, n in report.reason_counts().items()) or "no data rows"
        raise ValidationError(f"{args.responses}: no usable responses ({reasons})")
    key_of = {k.item_id: k for k in keys}
    by_item = defaultdict(list)
    for r in records:
        by_item[r.item_id].append(r)
    unknown = sorted(set(by_item) - set(key_of))
    if unknown:
        raise ValidationError(f"responses mention items without a key: {unknown[:5]}")
    for k in keys:
        if k.item_id not in by_item:
            report.warnings.append(f"item {k.item_id}: key given but no responses")
    tallies = []
    for item in sorted(by_item, key=_item_sort_key(keys)):
        entry = key_of[item]
        tallies.append(tally_item(by_item[item], entry.key, entry.k, entry.labels, item_id=item))
    inputs = {
        "input.responses": Path(args.responses).name,
        "input.keys": Path(args.keys).name,
        "input.key_items": len(keys),
    }
    return tallies, report, inputs


def _analysis_from_matrices(paths):
    tallies = []
    for p in paths:
        m = parse_item_matrix(io.StringIO(_read(p)))
        tallies.append(tally_from_matrix(m.counts, m.key_index, len(m.labels), item_id=Path(p).stem))
    inputs = {"input.matrices": ";".join(Path(p).name for p in paths)}
    return tallies, None, inputs


def cmd_analyze(args) -> int:
    if args.matrix:
        if args.responses or args.keys:
            raise UsageError("give either RESPONSES KEYS or --matrix, not both")
        tallies, report, inputs = _analysis_from_matrices(args.matrix)
    else:
        if not (args.responses and args.keys):
            raise UsageError("analyze needs RESPONSES and KEYS (or --matrix)")
        tallies, report, inputs = _analysis_from_responses(args)

    effects = [item_effects(t) for t in tallies]
    att, ate, atu = test_level(effects)

    summary: dict[str, object] = {"tool": TOOL}
    summary.update(inputs)
    if report is not None:
        summary["rows.read"] = report.rows_read
        summary["rows.kept"] = report.rows_kept
        summary["rows.dropped"] = report.rows_dropped
        for reason, n in report.reason_counts().items():
            summary[f"rows.dropped.{reason}"] = n
    if args.seed is not None:
        summary["seed"] = args.seed
    summary["items"] = len(effects)
    for res, name in ((att, "test.att"), (ate, "test.ate"), (atu, "test.atu")):
        summary.update(effect_fields(name, res))
        summary[f"{name}.rendered"] = render_effect(res, leading_zero=False)
    for eff in effects:
        rendered = "; ".join(render_effect(r) for r in (eff.att, eff.ate, eff.atu))
        summary[f"item.{eff.item_id}"] = rendered

    with staged_output(args.out) as stage:
        if _wants(args.format, "csv"):
            with open(stage / "effects.csv", "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(EFFECTS_COLUMNS + EXACT_COLUMNS)
                for t, eff in zip(tallies, effects):
                    w.writerow(effects_row(t, eff))
        if _wants(args.format, "report"):
            (stage / "summary.txt").write_text(key_value_text(summary), encoding="utf-8")
            if report is not None:
                (stage / "validation.txt").write_text(_validation_text(report), encoding="utf-8")
        if _wants(args.format, "svg"):
            (stage / "chart.svg").write_text(effects_chart(effects), encoding="utf-8")

    print(f"{len(effects)} items; {render_effect(att, False)}; {render_effect(ate, False)}; "
          f"{render_effect(atu, False)}")
    return EXIT_OK


def _validation_text(report) -> str:
    lines = [
        ("rows_read", report.rows_read),
        ("rows_kept", report.rows_kept),
        ("rows_dropped", report.rows_dropped),
    ]
    lines += [(f"dropped.{r}", n) for r, n in report.reason_counts().items()]
    lines += [(f"drop.line{line}", reason) for line, reason in report.drop_reasons]
    lines += [(f"warning.{i + 1}", w) for i, w in enumerate(report.warnings)]
    return key_value_text(lines)


def collapsed_report(path: str, args) -> str:
    tally = parse_collapsed(io.StringIO(_read(path)))
    ate = collapsed_ate_bound(tally)
    env = collapsed_envelope(tally)
    out: dict[str, object] = {
        "tool": TOOL,
        "input.collapsed": Path(path).name,
        "ww": tally.n_ww,
        "wr": tally.n_wr,
        "rw": tally.n_rw,
        "rr": tally.n_rr,
        "n_examinees": tally.n_examinees,
        "n_items": tally.n_items,
    }
    if tally.n_ww_changed is not None:
        out["ww_changed"] = tally.n_ww_changed
    out["cells"] = tally.n_cells
    out["observed"] = tally.n_observed
    out["shortfall"] = tally.shortfall
    if tally.shortfall_warning:
        out["warning"] = tally.shortfall_warning
    out.update(effect_fields("ate", ate))
    out["ate.rendered"] = render_effect(ate, leading_zero=False)
    if tally.n_observed:
        share = Fraction(tally.n_wr + tally.n_rw, tally.n_observed)
        out["obvious_changer_share"] = fraction_text(share)
        out["obvious_changer_share.decimal"] = decimal_text(share)
        out["obvious_changer_share.rendered"] = percent_text(share)
    for name, bound in (("att_envelope", env.att), ("atu_envelope", env.atu)):
        if bound is None:
            out[f"{name}.defined"] = "false"
            continue
        out[f"{name}.lower"] = fraction_text(bound[0])
        out[f"{name}.lower_decimal"] = decimal_text(bound[0])
        out[f"{name}.upper"] = fraction_text(bound[1])
        out[f"{name}.upper_decimal"] = decimal_text(bound[1])
        out[f"{name}.rendered"] = (
            f"[{fixed_number(bound[0], False)}, {fixed_number(bound[1], False)}]"
        )

    if args.simulate:
        config = SimConfig(
            iterations=args.iters, seed=args.seed or 0, atu_mode=args.atu_mode,
            parallel_width=args.workers,
        )
        sim = simulate(tally, config)
        out["sim.iterations"] = sim.iterations_run
        out["sim.seed"] = sim.seed
        out["sim.atu_mode"] = sim.atu_mode.value
        out["sim.items_skipped_total"] = sim.items_skipped_total
        for name, interval, label in (
            ("sim.att", sim.att_interval, "ATT"),
            ("sim.atu", sim.atu_interval, "ATU"),
            ("sim.ate", sim.ate_interval, "ATE"),
        ):
            if interval is None:
                out[f"{name}.defined"] = "false"
                continue
            out[f"{name}.min"] = repr(interval[0])
            out[f"{name}.max"] = repr(interval[1])
            out[f"{name}.rendered"] = render_interval(label, *interval)
    return key_value_text(out)


def cmd_collapsed(args) -> int:
    if args.iters < 1:
        raise UsageError("--iters must be >= 1")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    text = collapsed_report(args.collapsed, args)
    with staged_output(args.out) as stage:
        (stage / "collapsed_report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        config = GenConfig(
            n_examinees=args.examinees,
            n_items=args.items,
            k=args.k,
            p_first_correct=args.p_first_correct,
            p_change_given_wrong=args.p_change_wrong,
            p_change_given_right=args.p_change_right,
            p_switch_success=args.p_switch_success,
            seed=args.seed or 0,
            confounded=not args.unconfounded,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records, keys, units = generate(config)
    with staged_output(args.out) as stage:
        with open(stage / "responses.csv", "w", encoding="utf-8", newline="") as fh:
            write_responses(records, fh)
        with open(stage / "keys.csv", "w", encoding="utf-8", newline="") as fh:
            write_keys(keys, fh)
        with open(stage / "truth.csv", "w", encoding="utf-8", newline="") as fh:
            write_truth(units, fh)
        cfg = [(name, getattr(config, name)) for name in config.__dataclass_fields__]
        (stage / "synth_config.txt").write_text(key_value_text([("tool", TOOL), *cfg]), encoding="utf-8")
    print(f"wrote {len(records)} responses for {config.n_items} items to {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    d = Path(args.directory)
    keys = parse_keys(io.StringIO(_read(str(d / "keys.csv"))))
    records, report = parse_responses(io.StringIO(_read(str(d / "responses.csv"))))
    if report.rows_dropped:
        raise ValidationError(f"responses.csv: {report.rows_dropped} rows dropped {report.reason_counts()}")
    units = read_truth(io.StringIO(_read(str(d / "truth.csv"))), records)
    result = verify(records, keys, units)
    lines = [
        ("tool", TOOL),
        ("units_checked", result.units_checked),
        ("items_checked", result.items_checked),
        ("passed", str(result.passed).lower()),
    ]
    lines += [(f"failure.{i + 1}", f) for i, f in enumerate(result.failures)]
    text = key_value_text(lines)
    sys.stdout.write(text)
    if not result.passed:
        raise VerificationFailed(f"{len(result.failures)} verification failures")
    if args.out:
        with staged_output(args.out) as stage:
            (stage / "verification.txt").write_text(text, encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--out", default=None, help="output directory")
    shared.add_argument("--seed", type=int, default=None, help="random seed (unsigned 64-bit)")
    shared.add_argument("--format", choices=["csv", "report", "svg", "all"], default="all")

    parser = _Parser(prog="answerchange", description="Causal effects of answer changing.")
    parser.add_argument("--version", action="version", version=TOOL)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[shared], help="item and test effects from responses")
    p.add_argument("responses", nargs="?")
    p.add_argument("keys", nargs="?")
    p.add_argument("--matrix", action="append", default=[], help="item count matrix file (repeatable)")
    p.add_argument("--declared-examinees", type=int, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("collapsed", parents=[shared], help="test-level bounds from pooled counts")
    p.add_argument("collapsed")
    p.add_argument("--simulate", action="store_true")
    p.add_argument("--iters", type=int, default=1_000_000)
    p.add_argument("--atu-mode", choices=[m.value for m in AtuMode], default=AtuMode.EQ14_INTERVAL.value)
    p.add_argument("--workers", type=int, default=1, help="processes for the simulation")
    p.set_defaults(func=cmd_collapsed)

    p = sub.add_parser("synth", parents=[shared], help="write a synthetic population")
    p.add_argument("--examinees", type=int, default=200)
    p.add_argument("--items", type=int, default=10)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--p-first-correct", type=float, default=0.7)
    p.add_argument("--p-change-wrong", type=float, default=0.08)
    p.add_argument("--p-change-right", type=float, default=0.02)
    p.add_argument("--p-switch-success", type=float, default=0.5)
    p.add_argument("--unconfounded", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", parents=[shared], help="check estimators against a synthetic truth")
    p.add_argument("directory")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    if args.out is None and args.command != "verify":
        parser.error("--out is required")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"answerchange: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"answerchange: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except VerificationFailed as exc:
        print(f"answerchange: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ArithmeticError, ValueError) as exc:
        print(f"answerchange: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
