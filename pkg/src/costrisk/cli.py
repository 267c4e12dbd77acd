"""Command-line entry point: ``costrisk {rcf,qra,ob,audit} ...``.

Every command prints a human-readable table and, with ``--out``, writes a
JSON report that embeds the run manifest. Reports contain no timestamps or
host details, so rerunning a manifest reproduces its report byte for byte.

Exit status: 0 success / audit pass, 2 audit flag, 3 audit fail, 1 usage,
input or domain error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from . import appraisal, optimism_bias as ob, qra, reference_class as rc

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAG = 2
EXIT_FAIL = 3
VERDICT_EXIT = {
    appraisal.Verdict.PASS: EXIT_OK,
    appraisal.Verdict.FLAG: EXIT_FLAG,
    appraisal.Verdict.FAIL: EXIT_FAIL,
}
MONEY_KEYS = {"base_cost", "risk_adjusted_cost", "residual_uplift", "benchmark", "margin",
              "total_estimate", "p_level_risk", "mean_risk", "funding", "estimate", "actual",
              "estimated", "benefits", "costs", "total", "contingency"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"probability out of range: {text} (need 0 < p < 1)")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _num(x: float, money: bool = False) -> str:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        return str(x)
    return f"{x:.1f}" if money else f"{x:.6g}"


def _print_table(rows: Sequence[tuple[str, Any]], out=None) -> None:
    out = out or sys.stdout
    width = max((len(k) for k, _ in rows), default=0)
    for key, value in rows:
        print(f"{key:<{width}}  {value}", file=out)


def _manifest(args, subcommand: str, inputs: dict, parameters: dict) -> dict:
    return {
        "tool": "costrisk",
        "version": __version__,
        "subcommand": subcommand,
        "inputs": inputs,
        "parameters": parameters,
        "outputs": {"out": str(args.out) if args.out else None},
    }


def _emit(args, report: dict) -> None:
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


# -- rcf ---------------------------------------------------------------------

def cmd_rcf(args) -> int:
    ref = rc.load_reference_class(args.class_file)
    query = args.query
    params: dict[str, Any] = {"query": query}
    result: dict[str, Any]
    if query == "cdf":
        params["x"] = args.x
        value = rc.empirical_cdf(ref, args.x)
        result = {"cdf": value}
        _print_table([("n", len(ref)), ("x", _num(args.x)), ("cdf", _num(value))])
    elif query == "quantile":
        params["p"] = args.p
        value = rc.quantile(ref, args.p)
        result = {"quantile": value}
        _print_table([("n", len(ref)), ("p", _num(args.p)), ("quantile", _num(value))])
    elif query == "uplift":
        params["p"] = args.p
        value = rc.required_uplift(ref, args.p)
        result = {"required_uplift": value}
        _print_table([("n", len(ref)), ("p", _num(args.p)), ("required_uplift", _num(value))])
    elif query == "outliers":
        report = rc.detect_outliers(ref)
        ids = sorted(report.outlier_ids)
        result = {"q1": report.q1, "q3": report.q3, "iqr": report.iqr, "threshold": report.threshold,
                  "outlier_ids": ids, "outlier_share": report.outlier_share}
        _print_table([("n", len(ref)), ("q1", _num(report.q1)), ("q3", _num(report.q3)),
                      ("iqr", _num(report.iqr)), ("threshold", _num(report.threshold)),
                      ("outliers", ",".join(ids) or "-"), ("outlier_share", _num(report.outlier_share))])
    else:
        params["resolution"] = args.resolution
        points = rc.s_curve(ref, args.resolution)
        result = {"points": [[pt.uplift, pt.cumulative_probability] for pt in points]}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["uplift", "probability"])
        for pt in points:
            writer.writerow([repr(pt.uplift), repr(pt.cumulative_probability)])
        sys.stdout.write(buf.getvalue())
    if len(ref) < rc.RECOMMENDED_MIN_SIZE:
        result["warning"] = f"reference class has {len(ref)} projects; 20-30 or more are recommended"
    _emit(args, {"manifest": _manifest(args, "rcf", {"class_file": str(args.class_file)}, params),
                 "result": result})
    return EXIT_OK


# -- qra ---------------------------------------------------------------------

def qra_report(register: qra.RiskRegister, correlation: qra.CorrelationSpec | None, trials: int, seed: int,
               p_levels: Sequence[float], base_cost: float | None = None, oracle: bool = False,
               workers: int = 1) -> dict:
    """Result section of a QRA report. Independent of ``workers``."""
    if oracle and correlation:
        raise UsageError("--oracle assumes independent risks; drop the correlation file")
    result = qra.simulate(register, correlation, qra.SimulationConfig(trials, seed), workers=workers)
    out: dict[str, Any] = {
        "risks": len(register),
        "modelled_risks": len(register.modelled),
        "excluded_catastrophic": list(result.excluded),
        "expected_value": qra.expected_value(register) if len(register) else 0.0,
        "trials": result.count,
        "simulated_mean": result.mean,
        "quantiles": {f"P{_plabel(p)}": result.quantile(p) for p in p_levels},
        "rng": qra.RNG_NAME,
    }
    if base_cost is not None:
        out["base_cost"] = base_cost
        out["risk_allowance"] = {f"P{_plabel(p)}": qra.risk_allowance(result, p, base_cost) for p in p_levels}
    if oracle:
        exact = qra.brute_force_enumerate(register)
        se = exact.std / trials ** 0.5
        out["oracle"] = {
            "exact_mean": exact.mean,
            "mean_delta": result.mean - exact.mean,
            "mean_delta_in_std_errors": (result.mean - exact.mean) / se if se > 0 else 0.0,
            "exact_quantiles": {f"P{_plabel(p)}": exact.quantile(p) for p in p_levels},
            "quantile_deltas": {f"P{_plabel(p)}": result.quantile(p) - exact.quantile(p) for p in p_levels},
        }
    return out


def _plabel(p: float) -> str:
    text = f"{p * 100:.6g}"
    return text


def cmd_qra(args) -> int:
    register = qra.load_register(args.register_file)
    correlation = qra.load_correlation(args.correlation) if args.correlation else None
    result = qra_report(register, correlation, args.trials, args.seed, args.p, args.base_cost,
                        args.oracle, args.workers)
    inputs = {"register_file": str(args.register_file),
              "correlation_file": str(args.correlation) if args.correlation else None}
    params = {"trials": args.trials, "seed": args.seed, "p_levels": list(args.p),
              "base_cost": args.base_cost, "oracle": args.oracle}
    rows = [("risks", result["risks"]), ("excluded (catastrophic)", ",".join(result["excluded_catastrophic"]) or "-"),
            ("trials", result["trials"]), ("seed", args.seed),
            ("expected value", _num(result["expected_value"])), ("simulated mean", _num(result["simulated_mean"]))]
    rows += [(k, _num(v)) for k, v in result["quantiles"].items()]
    if "risk_allowance" in result:
        rows += [(f"allowance {k}", f"{v:.2%}") for k, v in result["risk_allowance"].items()]
    if "oracle" in result:
        orc = result["oracle"]
        rows += [("exact mean", _num(orc["exact_mean"])), ("mean delta", _num(orc["mean_delta"])),
                 ("mean delta / s.e.", _num(orc["mean_delta_in_std_errors"]))]
        rows += [(f"exact {k}", f"{_num(orc['exact_quantiles'][k])} (delta {_num(d)})")
                 for k, d in orc["quantile_deltas"].items()]
    _print_table(rows)
    _emit(args, {"manifest": _manifest(args, "qra", inputs, params), "result": result})
    return EXIT_OK


# -- ob ----------------------------------------------------------------------

def _load_assessment(path) -> dict[str, ob.FactorMitigation]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise UsageError("assessment file must be an object keyed by factor name")
    out = {}
    for name, rec in data.items():
        if not isinstance(rec, dict) or set(rec) - {"managed", "evidence"} or "managed" not in rec:
            raise UsageError(f"assessment.{name}: expected {{managed, evidence}}")
        out[name] = ob.FactorMitigation(float(rec["managed"]), ob.Evidence(rec.get("evidence", "subjective")))
    return out


def cmd_ob(args) -> int:
    schedule = ob.load_schedule(args.schedule) if args.schedule else ob.default_schedule()
    inputs = {"schedule_file": str(args.schedule) if args.schedule else None}
    params: dict[str, Any] = {"query": args.query}
    if args.query == "stage":
        row = ob.lookup_stage_uplift(args.kind, args.stage)
        params.update(kind=args.kind, stage=args.stage)
        result = {"uplift": row.value, "unit": row.unit.value, "qra_required": row.qra_required}
    elif args.query == "confidence":
        params.update(type=args.type, metric=args.metric, p=args.p)
        result = {"uplift": ob.lookup_confidence_uplift(args.type, args.p, schedule, args.metric)}
    elif args.query == "bounds":
        params.update(type=args.type, metric=args.metric)
        b = schedule.bounds_for(args.type, args.metric)
        result = {"upper": b.upper, "lower": b.lower}
    elif args.query == "scenarios":
        params.update(type=args.type, metric=args.metric, base=args.base, central=args.central)
        s = ob.sensitivity_scenarios(args.base, schedule.bounds_for(args.type, args.metric), args.central)
        result = s._asdict()
    else:
        inputs["assessment_file"] = str(args.assessment)
        params.update(type=args.type, metric=args.metric, require_objective=not args.allow_subjective)
        bounds = schedule.bounds_for(args.type, args.metric)
        uplift = ob.mitigated_uplift(bounds, ob.NONSTANDARD_CIVIL_CAPEX_BREAKDOWN,
                                     _load_assessment(args.assessment), not args.allow_subjective)
        result = {"upper": bounds.upper, "lower": bounds.lower, "uplift": uplift}
    _print_table([(k, _num(v) if not isinstance(v, str) else v) for k, v in result.items()])
    _emit(args, {"manifest": _manifest(args, "ob", inputs, params), "result": result})
    return EXIT_OK


# -- audit -------------------------------------------------------------------

def cmd_audit(args) -> int:
    rule = args.rule
    if rule == "mean-plus-six":
        finding = appraisal.mean_plus_six_check(args.total, args.p_risk, args.mean_risk, args.uplift)
    elif rule == "bcr":
        finding = appraisal.bcr_check(args.benefits, args.costs, args.digits)
    elif rule == "headroom":
        finding = appraisal.headroom_check(args.funding, args.estimate)
    elif rule == "overrun":
        finding = appraisal.overrun_check(args.actual, args.estimated)
    elif rule == "gap":
        finding = appraisal.gap_check(args.inside, args.outside, args.ratio, args.p)
    else:
        finding = appraisal.contingency_readings(args.total, args.contingency, args.stated_share)
    rows = [("rule", finding.rule_id), ("verdict", finding.verdict.value)]
    rows += [(k, _num(v, k in MONEY_KEYS)) for k, v in finding.inputs.items()]
    rows += [(k, _num(v, k in MONEY_KEYS)) for k, v in finding.computed.items()]
    rows.append(("message", finding.message))
    rows += [("note", n) for n in finding.notes]
    _print_table(rows)
    params = {k.replace("-", "_"): v for k, v in vars(args).items()
              if k not in ("func", "out", "command", "rule")}
    _emit(args, {"manifest": _manifest(args, "audit", {}, {"rule": rule, **params}),
                 "finding": finding.to_dict()})
    return VERDICT_EXIT[finding.verdict]


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="costrisk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"costrisk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def out_flag(p):
        p.add_argument("--out", type=Path, help="write the JSON report here")

    # rcf
    p_rcf = sub.add_parser("rcf", help="reference class queries on an overrun CSV")
    rcf_sub = p_rcf.add_subparsers(dest="query", required=True, parser_class=_Parser)
    q = rcf_sub.add_parser("cdf", help="share of projects with overrun <= x")
    q.add_argument("--x", type=float, required=True)
    for name, hlp in (("quantile", "overrun at certainty p"), ("uplift", "required uplift at certainty p")):
        q = rcf_sub.add_parser(name, help=hlp)
        q.add_argument("--p", type=_probability, required=True)
    rcf_sub.add_parser("outliers", help="projects at or above Q3 + 1.5 IQR")
    q = rcf_sub.add_parser("scurve", help="S-curve as CSV uplift,probability")
    q.add_argument("--resolution", type=int, default=99)
    for q in rcf_sub.choices.values():
        q.add_argument("class_file", type=Path)
        out_flag(q)
        q.set_defaults(func=cmd_rcf)

    # qra
    p_qra = sub.add_parser("qra", help="Monte Carlo over a risk register")
    p_qra.add_argument("register_file", type=Path)
    p_qra.add_argument("--correlation", type=Path)
    p_qra.add_argument("--trials", type=_positive_int, default=10_000)
    p_qra.add_argument("--seed", type=_seed, required=True)
    p_qra.add_argument("--p", type=_probability, nargs="+", default=[0.5, 0.8, 0.9])
    p_qra.add_argument("--base-cost", type=float)
    p_qra.add_argument("--oracle", action="store_true", help="compare with exact enumeration")
    p_qra.add_argument("--workers", type=_positive_int, default=1, help="threads; does not change results")
    out_flag(p_qra)
    p_qra.set_defaults(func=cmd_qra)

    # ob
    p_ob = sub.add_parser("ob", help="optimism-bias uplift tables")
    ob_sub = p_ob.add_subparsers(dest="query", required=True, parser_class=_Parser)
    q = ob_sub.add_parser("stage", help="staged uplift by development level")
    q.add_argument("--kind", choices=[k.value for k in ob.CostKind], default="capex")
    q.add_argument("--stage", type=int, required=True)
    q = ob_sub.add_parser("confidence", help="uplift at a confidence level")
    q.add_argument("--p", type=_probability, required=True)
    q = ob_sub.add_parser("bounds", help="upper and lower uplift bounds")
    q = ob_sub.add_parser("scenarios", help="low/central/high adjusted cost")
    q.add_argument("--base", type=float, required=True)
    q.add_argument("--central", type=float, required=True)
    q = ob_sub.add_parser("mitigate", help="reduce the upper bound for managed factors")
    q.add_argument("--assessment", type=Path, required=True)
    q.add_argument("--allow-subjective", action="store_true",
                   help="count subjectively evidenced mitigation")
    for name, q in ob_sub.choices.items():
        if name != "stage":
            q.add_argument("--type", default="rail", choices=[c.value for c in rc.Category])
            q.add_argument("--metric", default="capex", choices=[m.value for m in ob.Metric])
        q.add_argument("--schedule", type=Path, help="replacement uplift schedule CSV")
        out_flag(q)
        q.set_defaults(func=cmd_ob)

    # audit
    p_audit = sub.add_parser("audit", help="business-case audit rules")
    a_sub = p_audit.add_subparsers(dest="rule", required=True, parser_class=_Parser)
    q = a_sub.add_parser("mean-plus-six", help="P-level risk vs mean risk + residual OB uplift")
    q.add_argument("--total", type=float, required=True)
    q.add_argument("--p-risk", type=float, required=True)
    q.add_argument("--mean-risk", type=float, required=True)
    q.add_argument("--uplift", type=float, default=appraisal.DEFAULT_RESIDUAL_UPLIFT)
    q = a_sub.add_parser("bcr", help="benefit-cost ratio")
    q.add_argument("--benefits", type=float, required=True)
    q.add_argument("--costs", type=float, required=True)
    q.add_argument("--digits", type=int, default=2)
    q = a_sub.add_parser("headroom", help="funding margin over the estimate")
    q.add_argument("--funding", type=float, required=True)
    q.add_argument("--estimate", type=float, required=True)
    q = a_sub.add_parser("overrun", help="outturn against estimate")
    q.add_argument("--actual", type=float, required=True)
    q.add_argument("--estimated", type=float, required=True)
    q = a_sub.add_parser("gap", help="inside-view allowance vs outside-view uplift")
    q.add_argument("--inside", type=float, required=True)
    q.add_argument("--outside", type=float, required=True)
    q.add_argument("--ratio", type=float, default=appraisal.DEFAULT_GAP_RATIO)
    q.add_argument("--p", type=_probability)
    q = a_sub.add_parser("contingency", help="stated contingency share vs total and base readings")
    q.add_argument("--total", type=float, required=True)
    q.add_argument("--contingency", type=float, required=True)
    q.add_argument("--stated-share", type=float, required=True)
    for q in a_sub.choices.values():
        out_flag(q)
        q.set_defaults(func=cmd_audit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"costrisk: error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
