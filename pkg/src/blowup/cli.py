"""Command-line front end: ``blowup <command> [options]``.

Every command prints a table (CSV by default, JSON with ``--format json``).
CSV output is a header line, one line per row, then ``# key,value`` lines
carrying the parameters and summary. Exit codes: 0 success, 1 other library
error or bad usage, 2 Keller-Osserman divergence where a command needs
convergence, 3 numerical non-convergence, 4 malformed nonlinearity spec.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field

from . import criterion, expansion, powerlaw, shoot, threeterm
from .errors import BlowupError, DomainError, KellerOssermanError, NumericsError, SpecError
from .nonlinearity import parse_nonlinearity

SCHEMA_VERSION = 1
COMMANDS = ("ko", "expand", "profile", "criterion", "three-term", "power-coeffs", "shoot", "compare")
DEFAULT_D_GRID = "1e-2,1e-3,1e-4"

log = logging.getLogger("blowup")


@dataclass
class RunReport:
    command: str
    nl: str
    params: dict
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        data["rows"] = [list(r) for r in data["rows"]]
        return cls(**data)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(x) for x in row])
        meta = [("schema_version", self.schema_version), ("command", self.command), ("nl", self.nl)]
        meta += [(f"param.{k}", v) for k, v in self.params.items()]
        meta += [(f"summary.{k}", v) for k, v in self.summary.items()]
        for k, v in meta:
            buf.write(f"# {k},{_fmt(v)}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunReport":
        lines = text.splitlines()
        body = [ln for ln in lines if not ln.startswith("# ")]
        meta = [ln[2:] for ln in lines if ln.startswith("# ")]
        reader = list(csv.reader(body))
        columns, rows = reader[0], [[_parse(x) for x in r] for r in reader[1:]]
        info = {}
        params, summary = {}, {}
        for ln in meta:
            k, _, v = ln.partition(",")
            if k.startswith("param."):
                params[k[6:]] = _parse(v)
            elif k.startswith("summary."):
                summary[k[8:]] = _parse(v)
            else:
                info[k] = v
        return cls(info["command"], info["nl"], params, columns, rows, summary, int(info["schema_version"]))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.9g}"
    if isinstance(x, (list, tuple)):
        return ";".join(_fmt(y) for y in x)
    return str(x)


def _parse(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _num(x):
    """numpy scalars -> plain Python numbers for serialization."""
    if x is None or isinstance(x, (bool, str)):
        return x
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return int(x)
    try:
        return float(x)
    except (TypeError, ValueError):
        return x


def _rows(rows):
    return [[_num(x) for x in r] for r in rows]


def _d_grid(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise DomainError(f"--d-grid must be a comma list of reals, got {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise DomainError("--d-grid entries must be positive")
    return vals


# -- commands -----------------------------------------------------------------


def cmd_ko(args, nl):
    lo = nl.default_lo() if args.lo is None else args.lo
    res = nl.keller_osserman(lo, args.tol)
    params = {"lo": lo, "tol": args.tol}
    return RunReport("ko", nl.spec, params, ["status", "value", "error_estimate", "lo", "cutoff"],
                     _rows([[res.status, res.value, res.error_estimate, res.lo, res.cutoff_used]]),
                     {"status": res.status})


def _iteration(args, nl, kmax):
    return expansion.iterate_to_convergence(
        nl, args.N, args.u0, tol=args.tol, kmax=kmax, M=args.grid, Umax=args.umax
    )


def cmd_expand(args, nl):
    nl.require_keller_osserman()
    res = _iteration(args, nl, args.kmax)
    rows = []
    for vp in res.profiles:
        delta = res.deltas[vp.k - 1] if vp.k else None
        rows.append([vp.k, delta, float(abs(vp.w - 1).max()), float(vp.T[0]), float(vp.w[-1])])
    params = {"N": args.N, "U0": res.U0, "tol": args.tol, "kmax": args.kmax, "grid": args.grid,
              "umax": res.profiles[0].Umax}
    summary = {"converged": res.converged, "geometric": res.geometric, "retried": res.retried,
               "iterations": len(res.deltas)}
    return RunReport("expand", nl.spec, params, ["k", "delta", "sup_dev", "tail_at_U0", "w_top"],
                     _rows(rows), summary)


def cmd_profile(args, nl):
    nl.require_keller_osserman()
    res = _iteration(args, nl, args.kmax)
    profs = [expansion.BlowupProfile(vp) for vp in res.profiles]
    rows = []
    for d in _d_grid(args.d_grid):
        for bp in profs:
            rows.append([d, bp.k, bp(d)])
    params = {"N": args.N, "U0": res.U0, "kmax": args.kmax, "grid": args.grid, "d_grid": args.d_grid}
    return RunReport("profile", nl.spec, params, ["d", "k", "u"], _rows(rows), {"converged": res.converged})


def cmd_criterion(args, nl):
    nl.require_keller_osserman()
    u_lo = nl.default_lo() if args.lo is None else args.lo
    u_hi = 100 * u_lo if args.umax is None else args.umax
    rep = criterion.classify(nl, u_lo, u_hi, M=args.grid, base=args.base)
    params = {"u_lo": u_lo, "u_hi": u_hi, "samples": len(rep.u), "base": rep.base}
    summary = {"classification": rep.classification, "slope": rep.slope, "intercept": rep.intercept,
               "failed_u": rep.failed_u}
    return RunReport("criterion", nl.spec, params, ["u", "lambda"], _rows(rep.rows()), summary)


def cmd_three_term(args, nl):
    nl.require_keller_osserman()
    params = {"N": args.N, "base": args.base}
    if args.u0 is not None and args.d_grid is None:
        t = threeterm.remainder_terms(nl, args.N, args.u0, args.base)
        params["U"] = args.u0
        return RunReport("three-term", nl.spec, params, ["U", "R0", "R1", "R2"],
                         _rows([[t.U, t.R0, t.R1, t.R2]]), {"base": t.b})
    rows = []
    for d in _d_grid(args.d_grid or DEFAULT_D_GRID):
        u0 = threeterm.invert_three_term(nl, args.N, d, args.base, terms=1)
        u2 = threeterm.invert_three_term(nl, args.N, d, args.base)
        t = threeterm.remainder_terms(nl, args.N, u2, args.base)
        rows.append([d, u0, u2, t.R0, t.R1, t.R2])
    params["d_grid"] = args.d_grid or DEFAULT_D_GRID
    return RunReport("three-term", nl.spec, params, ["d", "u0", "u2", "R0", "R1", "R2"], _rows(rows), {})


def cmd_power_coeffs(args, nl):
    if args.p is None:
        raise DomainError("power-coeffs needs --p")
    se = powerlaw.power_coefficients(args.p, args.N, args.order)
    rows = [[k, se.a[k], se.b[k]] for k in range(se.n + 1)]
    params = {"p": args.p, "N": args.N, "order": args.order}
    summary = {"q": se.q, "singular_count": se.singular_count, "beyond_singular": se.beyond_singular,
               "remainder_order": se.remainder_order}
    return RunReport("power-coeffs", f"pow:{args.p:g}", params, ["k", "a_k", "b_k"], _rows(rows), summary)


def _shot(args, nl):
    u_cap = 1e6 if args.umax is None else args.umax
    tol = min(args.tol, 1e-10)
    if args.alpha is None:
        alpha = shoot.calibrate_alpha(nl, args.N, 1.0, tol=1e-10, u_cap=u_cap, shoot_tol=tol * 1e-2)
    else:
        alpha = args.alpha
    return shoot.shoot(nl, args.N, alpha, u_cap, tol * 1e-2)


def cmd_shoot(args, nl):
    nl.require_keller_osserman()
    res = _shot(args, nl)
    diag = shoot.diagnostics(res, base=args.base)
    cols = ["u", "g", "ratio", "g_over_F"] if diag.ratio is not None else ["u", "g", "g_over_F"]
    params = {"N": args.N, "alpha": res.alpha, "u_cap": res.u_cap, "tol": res.tol}
    summary = {"R_est": res.R_est, "status": res.status, "reason": res.reason, "samples": len(res.r)}
    return RunReport("shoot", nl.spec, params, cols, _rows(diag.rows()), summary)


def cmd_compare(args, nl):
    nl.require_keller_osserman()
    res = _shot(args, nl)
    it = _iteration(args, nl, args.kmax)
    profs = [expansion.BlowupProfile(vp) for vp in it.profiles]
    cmp = shoot.compare_to_expansion(res, profs, _d_grid(args.d_grid), base=args.base)
    rows = []
    for i, d in enumerate(cmp.d):
        for j, k in enumerate(cmp.ks):
            rows.append([d, k, cmp.u_shoot[i], cmp.u_k[i, j], cmp.gaps[i, j], cmp.normalized[i, j],
                         cmp.predicted[i], bool(cmp.flagged[i])])
    params = {"N": args.N, "alpha": res.alpha, "U0": it.U0, "kmax": args.kmax, "d_grid": args.d_grid}
    summary = {"R_est": res.R_est}
    cols = ["d", "k", "u_shoot", "u_k", "gap", "normalized_gap", "predicted_gap", "flagged"]
    return RunReport("compare", nl.spec, params, cols, _rows(rows), summary)


HANDLERS = {
    "ko": cmd_ko,
    "expand": cmd_expand,
    "profile": cmd_profile,
    "criterion": cmd_criterion,
    "three-term": cmd_three_term,
    "power-coeffs": cmd_power_coeffs,
    "shoot": cmd_shoot,
    "compare": cmd_compare,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blowup", description="Boundary blow-up asymptotics for Delta u = f(u) on the unit ball.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--nl", default=None, help="pow:<p> | exp | F:<expr in t> | expr:<expr in u>[;a=<real>]")
        s.add_argument("--N", type=int, default=3, help="space dimension")
        s.add_argument("--u0", type=float, default=None, help="iteration start U0 (three-term: evaluation point)")
        s.add_argument("--umax", type=float, default=None, help="grid top / criterion u_hi / shooting cap")
        s.add_argument("--grid", type=int, default=32 if name == "criterion" else expansion.DEFAULT_M, help="grid nodes (criterion: samples)")
        s.add_argument("--tol", type=float, default=1e-10)
        s.add_argument("--kmax", type=int, default=2)
        s.add_argument("--d-grid", dest="d_grid", default=None if name == "three-term" else DEFAULT_D_GRID)
        s.add_argument("--order", type=int, default=2)
        s.add_argument("--p", type=float, default=None, help="exponent for power-coeffs")
        s.add_argument("--alpha", type=float, default=None, help="center value (default: calibrate to R=1)")
        s.add_argument("--lo", type=float, default=None, help="KO lower limit / criterion u_lo")
        s.add_argument("--base", type=float, default=None, help="base point of indefinite integrals")
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        s.add_argument("--out", default=None)
    return p


def _configure_logging():
    level = os.environ.get("BLOWUP_LOG", "off").lower()
    levels = {"info": logging.INFO, "debug": logging.DEBUG}
    if level in levels:
        logging.basicConfig(stream=sys.stderr, level=levels[level], format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        nl = None
        if args.command != "power-coeffs":
            if args.nl is None:
                print(f"blowup {args.command}: --nl is required", file=sys.stderr)
                return 1
            try:
                nl = parse_nonlinearity(args.nl)
            except (SpecError, DomainError) as exc:
                print(f"invalid nonlinearity spec: {exc}", file=sys.stderr)
                return 4
        report = HANDLERS[args.command](args, nl)
    except KellerOssermanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except BlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = report.to_json() + "\n" if args.format == "json" else report.to_csv()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); silence the flush at exit
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
