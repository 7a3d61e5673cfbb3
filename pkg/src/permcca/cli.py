"""Command-line interface: inference on CSV matrices and the simulation harness."""

from __future__ import annotations

import argparse
import json
import math
import os
import secrets
import sys

import numpy as np

from . import errors
from .infer import InferenceOptions, permcca
from .permute import BlockStructure
from .residualize import SelectionPlan
from .simulate import (
    DESK_PERMS,
    DESK_REPS,
    ScenarioSpec,
    Strategy,
    expand_scenario,
    get_scenario,
    run_scenario,
)

VALIDATION_ERRORS = (
    errors.ParseError,
    errors.DimensionMismatch,
    errors.InvalidDims,
    errors.InvalidOptions,
    errors.InvalidBlocks,
    errors.UnknownScenario,
    errors.TooLarge,
    errors.TooManyComponents,
    OSError,
)
NUMERIC_ERRORS = (
    errors.RankDeficient,
    errors.SingularMatrix,
    errors.NoConvergence,
    errors.NoValidSelection,
    np.linalg.LinAlgError,
    FloatingPointError,
)

_BAD_TOKENS = {"nan", "+nan", "-nan", "inf", "+inf", "-inf", "infinity",
               "+infinity", "-infinity"}


def _fmt(value):
    """Float to text at full round-trip precision (17 significant digits)."""
    return format(float(value), ".17g")


def _parse_token(token, line_no, col_no):
    text = token.strip()
    if not text:
        raise errors.ParseError("empty field", line=line_no, column=col_no)
    if text.lower() in _BAD_TOKENS:
        raise errors.ParseError(f"non-finite value {text!r}", line=line_no, column=col_no)
    try:
        value = float(text)
    except ValueError:
        raise errors.ParseError(f"not a number: {text!r}", line=line_no, column=col_no) from None
    if not math.isfinite(value):
        raise errors.ParseError(f"non-finite value {text!r}", line=line_no, column=col_no)
    return value


def read_matrix_csv(path):
    """Numeric CSV as a float matrix; one optional header row is auto-detected.

    Rows are data lines, fields are comma-separated, the decimal separator is
    always the point.  NaN/Inf tokens and ragged rows are rejected.
    """
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        raw = fh.read()
    lines = [ln.rstrip("\r") for ln in raw.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise errors.ParseError(f"{path}: empty file")

    start = 0
    try:
        for col, tok in enumerate(lines[0].split(","), start=1):
            _parse_token(tok, 1, col)
    except errors.ParseError:
        start = 1  # header row
        if len(lines) == 1:
            raise errors.ParseError(f"{path}: no data rows after header") from None

    width = None
    rows = []
    for line_no, line in enumerate(lines[start:], start=start + 1):
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise errors.RaggedRows(
                f"{path}: expected {width} fields, found {len(fields)}", line=line_no
            )
        rows.append([_parse_token(tok, line_no, col)
                     for col, tok in enumerate(fields, start=1)])
    return np.asarray(rows, dtype=np.float64)


def write_matrix_csv(path, m):
    """Write a matrix at full precision; inverse of :func:`read_matrix_csv`."""
    m = np.asarray(m, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in m:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_int_lines(path, what):
    values = []
    with open(path, "r", encoding="utf-8-sig") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(int(text))
            except ValueError:
                raise errors.ParseError(
                    f"{path}: {what} must be an integer, got {text!r}", line=line_no
                ) from None
    if not values:
        raise errors.ParseError(f"{path}: no {what} entries")
    return np.asarray(values, dtype=np.intp)


def read_blocks(path, mode="within"):
    return BlockStructure(labels=_read_int_lines(path, "block label"), mode=mode)


def read_selection(path):
    return SelectionPlan(keep=np.sort(_read_int_lines(path, "retained index")))


def _upper(text):
    return text.strip().upper()


def _lower(text):
    return text.strip().lower()


_SPEC_KEYS = {
    "scenario": ("scenario_id", _upper),
    "n": ("n_obs", int),
    "p": ("n_left", int),
    "q": ("n_right", int),
    "r": ("n_nuis_left", int),
    "s": ("n_nuis_right", int),
    "nuisance": ("nuisance", _lower),
    "pca": ("pca", int),
    "distribution": ("distribution", _lower),
    "df": ("df", float),
    "bernoulli_q": ("bernoulli_q", float),
    "signal": ("signal", _lower),
    "perms": ("n_perms", int),
    "reps": ("n_reps", int),
}


def read_spec_file(path):
    """Scenario spec from a ``key = value`` text file ('#' starts a comment)."""
    fields = {}
    with open(path, "r", encoding="utf-8-sig") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise errors.ParseError(f"{path}: expected 'key = value'", line=line_no)
            key, value = (part.strip() for part in text.split("=", 1))
            key = key.lower()
            if key not in _SPEC_KEYS:
                raise errors.ParseError(f"{path}: unknown key {key!r}", line=line_no)
            attr, conv = _SPEC_KEYS[key]
            if conv in (int, float) and value.lower() in ("none", ""):
                fields[attr] = None
                continue
            try:
                fields[attr] = conv(value)
            except ValueError:
                raise errors.ParseError(
                    f"{path}: bad value {value!r} for {key}", line=line_no
                ) from None
    if "scenario_id" in fields and len(fields) == 1:
        return get_scenario(fields["scenario_id"])
    base = get_scenario(fields.pop("scenario_id")) if "scenario_id" in fields else ScenarioSpec()
    from dataclasses import replace
    return replace(base, **fields)


def write_spec_file(path, spec):
    with open(path, "w", encoding="utf-8") as fh:
        for key, (attr, _) in _SPEC_KEYS.items():
            value = getattr(spec, attr)
            if key == "scenario" and not value:
                continue
            fh.write(f"{key} = {'none' if value is None else value}\n")


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def _echo(items):
    for key, value in items:
        print(f"# {key}={value}", file=sys.stderr)


def _default_threads(value):
    if value is not None:
        return value
    env = os.environ.get("PERMCCA_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise errors.InvalidOptions(f"PERMCCA_THREADS={env!r} is not an integer") from None
    return 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="permcca",
        description="Permutation inference for canonical correlation analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="inference on CSV matrices")
    run.add_argument("--y", required=True, metavar="CSV", help="left variable set (N x P)")
    run.add_argument("--x", required=True, metavar="CSV", help="right variable set (N x Q)")
    run.add_argument("--z", metavar="CSV", help="nuisance variables for the left side")
    run.add_argument("--w", metavar="CSV", help="nuisance variables for the right side")
    run.add_argument("--partial", action="store_true",
                     help="treat --z as nuisance for both sides")
    run.add_argument("--blocks", metavar="FILE",
                     help="exchangeability blocks, one integer label per line")
    run.add_argument("--block-mode", choices=["within", "whole"], default="within")
    run.add_argument("--selection", metavar="FILE",
                     help="retained observation indices (0-based, one per line) "
                          "for the Theil reduction")
    run.add_argument("--stat", choices=["wilks", "roy"], default="wilks")
    run.add_argument("--perms", type=int, default=1000, metavar="J")
    run.add_argument("--seed", type=int, default=None)
    method = run.add_mutually_exclusive_group()
    method.add_argument("--theil", action="store_true",
                        help="force the Theil (selection-based) reduction")
    method.add_argument("--huh-jhun", action="store_true",
                        help="force the Huh-Jhun (eigenbasis) reduction")
    run.add_argument("--pca-y", type=int, metavar="K",
                     help="reduce the left side to K principal components")
    run.add_argument("--pca-x", type=int, metavar="K")
    run.add_argument("--max-pvalues", action="store_true",
                     help="also report max-statistic adjusted p-values")
    run.add_argument("--parametric", action="store_true",
                     help="also report the chi-square approximation p-values")
    run.add_argument("--no-intercept", action="store_true",
                     help="data is already centered; do not add an intercept "
                          "to the nuisance sets")
    run.add_argument("--out", default="-", metavar="PATH", help="output path ('-' = stdout)")
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.add_argument("--threads", type=int, default=None,
                     help="permutation worker threads (default: $PERMCCA_THREADS or 1)")

    sim = sub.add_parser("simulate", help="error-rate / power studies")
    what = sim.add_mutually_exclusive_group(required=True)
    what.add_argument("--scenario", metavar="ID", help="scenario id (I..XVIII)")
    what.add_argument("--spec", metavar="FILE", help="scenario spec file (key = value)")
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--perms", type=int, default=None)
    sim.add_argument("--full", action="store_true",
                     help="run at paper scale instead of the desk-scale defaults "
                          f"(reps={DESK_REPS}, perms={DESK_PERMS})")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--stat", choices=["wilks", "roy"], default="wilks")
    sim.add_argument("--resid", choices=["simple", "huh-jhun", "theil"],
                     default="huh-jhun")
    sim.add_argument("--correction", choices=["unc", "closure", "maxdist"],
                     default="closure")
    sim.add_argument("--single-step", action="store_true",
                     help="disable stepwise estimation (invalid; for studies only)")
    sim.add_argument("--no-null-space", action="store_true",
                     help="skip the null-space augmentation (invalid; for studies only)")
    sim.add_argument("--out", default="-", metavar="PATH")
    sim.add_argument("--table", action="store_true",
                     help="print a human-readable table to stderr as well")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker processes (default: $PERMCCA_THREADS or 1)")
    return parser


def cmd_run(args):
    if args.blocks and args.huh_jhun:
        raise errors.InvalidOptions(
            "--blocks cannot be combined with --huh-jhun: the eigenbasis has no "
            "row-to-observation mapping, so block restrictions cannot be expressed; "
            "use --theil (optionally with --selection)"
        )
    y = read_matrix_csv(args.y)
    x = read_matrix_csv(args.x)
    if y.shape[0] != x.shape[0]:
        raise errors.DimensionMismatch(
            f"{args.y} has {y.shape[0]} rows but {args.x} has {x.shape[0]}"
        )
    z = read_matrix_csv(args.z) if args.z else None
    w = read_matrix_csv(args.w) if args.w else None
    for name, path, m in (("--z", args.z, z), ("--w", args.w, w)):
        if m is not None and m.shape[0] != y.shape[0]:
            raise errors.DimensionMismatch(
                f"{path} has {m.shape[0]} rows but {args.y} has {y.shape[0]}"
            )

    partial = args.partial
    if not args.no_intercept:
        ones = np.ones((y.shape[0], 1))
        z = ones if z is None else np.hstack([ones, z])
        if w is not None:
            w = np.hstack([ones, w])
        elif not partial:
            # The right side still carries the intercept; this makes an
            # explicit bipartial design out of a one-sided --z.
            w = ones if args.z else None
        if args.z is None and args.w is None:
            partial = True  # intercept shared by both sides

    blocks = read_blocks(args.blocks, args.block_mode) if args.blocks else None
    selection = read_selection(args.selection) if args.selection else None
    seed = args.seed if args.seed is not None else secrets.randbits(32)
    method = "auto"
    if args.theil:
        method = "theil"
    elif args.huh_jhun:
        method = "huh-jhun"

    opts = InferenceOptions(
        stat=args.stat,
        n_perms=args.perms,
        seed=seed,
        compute_max_pvalues=args.max_pvalues,
        compute_parametric=args.parametric,
        resid_method=method,
        pca_y=args.pca_y,
        pca_x=args.pca_x,
        threads=_default_threads(args.threads),
    )
    res = permcca(y, x, z, w, partial=partial, selection=selection,
                  blocks=blocks, opts=opts)

    config = [
        ("y", args.y), ("x", args.x), ("z", args.z or ""), ("w", args.w or ""),
        ("case", res.case), ("method", res.method), ("stat", res.stat),
        ("perms", res.n_perms), ("seed", seed),
        ("intercept", not args.no_intercept),
        ("pca_y", args.pca_y or ""), ("pca_x", args.pca_x or ""),
    ]
    _echo(config)

    header = ["k", "r", "stat", "p_unc", "p_fwer"]
    if res.p_max is not None:
        header.append("p_max")
    if res.p_param is not None:
        header.append("p_param")
    rows = []
    for k in range(res.n_components):
        row = [str(k + 1), _fmt(res.r[k]), _fmt(res.stat0[k]),
               _fmt(res.p_unc[k]), _fmt(res.p_fwer[k])]
        if res.p_max is not None:
            row.append(_fmt(res.p_max[k]))
        if res.p_param is not None:
            row.append(_fmt(res.p_param[k]))
        rows.append(row)

    out, close = _open_out(args.out)
    try:
        if args.format == "csv":
            out.write(",".join(header) + "\n")
            for row in rows:
                out.write(",".join(row) + "\n")
        else:
            payload = {
                "config": {key: value for key, value in config},
                "components": [dict(zip(header, [int(r[0])] + [float(v) for v in r[1:]]))
                               for r in rows],
            }
            json.dump(payload, out, indent=2)
            out.write("\n")
    finally:
        if close:
            out.close()
    return 0


def cmd_simulate(args):
    spec = get_scenario(args.scenario) if args.scenario else read_spec_file(args.spec)
    strategy = Strategy(
        stepwise=not args.single_step,
        null_space=not args.no_null_space,
        resid_method=args.resid,
        stat=args.stat,
        correction=args.correction,
    )
    invalid = []
    if args.single_step:
        invalid.append("single-step estimation")
    if args.no_null_space:
        invalid.append("omitting the null space")
    if args.correction == "unc":
        invalid.append("uncorrected p-values")
    if args.resid == "simple":
        invalid.append("simple residualization")
    if invalid:
        print(f"WARNING: known-invalid configuration requested ({', '.join(invalid)}); "
              "error rates will not be controlled", file=sys.stderr)

    n_reps = args.reps if args.reps is not None else (None if args.full else DESK_REPS)
    n_perms = args.perms if args.perms is not None else (None if args.full else DESK_PERMS)
    seed = args.seed if args.seed is not None else secrets.randbits(32)
    workers = _default_threads(args.threads)

    chunks = []
    for variant in expand_scenario(spec):
        report = run_scenario(variant, strategy, seed, n_reps=n_reps,
                              n_perms=n_perms, workers=workers, alpha=args.alpha)
        chunks.append(report.to_csv())
        if args.table:
            print(f"--- scenario {variant.scenario_id or 'custom'} "
                  f"{report.config_items()[1][1]}", file=sys.stderr)
            print(report.format_table(), file=sys.stderr)

    out, close = _open_out(args.out)
    try:
        out.write("\n".join(chunks))
    finally:
        if close:
            out.close()
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_simulate(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
