import csv
import io
import json
import subprocess
import sys

import pytest

from costrisk.cli import main


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def table(out):
    rows = {}
    for line in out.splitlines():
        key, _, value = line.partition("  ")
        rows[key.strip()] = value.strip()
    return rows


# -- rcf ---------------------------------------------------------------------

def test_rcf_quantile(data_dir, capsys):
    code, out, _ = run(["rcf", "quantile", data_dir / "three_rows.csv", "--p", "0.8"], capsys)
    assert code == 0
    # n=3, p=0.8 -> position 2.9 -> 0.2 + 0.9 * 0.1
    assert float(table(out)["quantile"]) == pytest.approx(0.29)


def test_rcf_cdf_and_uplift(data_dir, capsys):
    code, out, _ = run(["rcf", "cdf", data_dir / "three_rows.csv", "--x", "0.2"], capsys)
    assert code == 0 and float(table(out)["cdf"]) == pytest.approx(2 / 3, abs=1e-6)
    code, out, _ = run(["rcf", "uplift", data_dir / "light_rail_sample.csv", "--p", "0.5"], capsys)
    assert code == 0 and float(table(out)["required_uplift"]) == pytest.approx(0.355)


def test_rcf_outliers_all_equal(data_dir, capsys, tmp_path):
    report = tmp_path / "r.json"
    code, out, _ = run(["rcf", "outliers", data_dir / "all_equal.csv", "--out", report], capsys)
    assert code == 0
    assert table(out)["outlier_share"] == "1"
    result = json.loads(report.read_text())["result"]
    assert result["outlier_share"] == 1.0
    assert result["outlier_ids"] == ["a", "b", "c", "d"]


def test_rcf_scurve_rows(data_dir, capsys):
    code, out, _ = run(["rcf", "scurve", data_dir / "light_rail_sample.csv", "--resolution", "99"], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["uplift", "probability"]
    assert len(rows) - 1 == 99
    assert float(rows[1][1]) == pytest.approx(0.01)


def test_rcf_parse_error_has_line_number(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("project_id,category,overrun,baseline\na,rail,0.1,unknown\nb,rail,oops,unknown\n")
    code, _, err = run(["rcf", "quantile", bad, "--p", "0.5"], capsys)
    assert code == 1
    assert "bad.csv:3" in err


def test_rcf_missing_file(tmp_path, capsys):
    code, _, err = run(["rcf", "outliers", tmp_path / "nope.csv"], capsys)
    assert code == 1 and "error" in err


# -- qra ---------------------------------------------------------------------

def test_qra_certain_risk(data_dir, capsys):
    code, out, _ = run(["qra", data_dir / "certain_risk.json", "--seed", "123", "--trials", "500"], capsys)
    assert code == 0
    rows = table(out)
    assert float(rows["P50"]) == 7.0 and float(rows["P90"]) == 7.0


def test_qra_report_byte_identical(data_dir, capsys, tmp_path):
    args = ["qra", data_dir / "tram_register.json", "--correlation", data_dir / "tram_correlation.json",
            "--seed", "7", "--trials", "20000", "--base-cost", "500"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(args + ["--out", a], capsys)
    run(args + ["--out", b], capsys)
    assert a.read_bytes().replace(b"a.json", b"b.json") == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["manifest"]["parameters"]["seed"] == 7
    assert report["result"]["excluded_catastrophic"] == ["TERROR"]
    assert set(report["result"]["risk_allowance"]) == {"P50", "P80", "P90"}


def test_qra_oracle_deltas(data_dir, capsys, tmp_path):
    out_path = tmp_path / "o.json"
    code, out, _ = run(["qra", data_dir / "ten_fixed.json", "--seed", "1", "--trials", "100000",
                        "--oracle", "--out", out_path], capsys)
    assert code == 0
    oracle = json.loads(out_path.read_text())["result"]["oracle"]
    assert abs(oracle["mean_delta_in_std_errors"]) < 4
    assert set(oracle["quantile_deltas"]) == {"P50", "P80", "P90"}
    assert "exact P90" in out


def test_qra_oracle_rejects_correlation(data_dir, capsys):
    code, _, err = run(["qra", data_dir / "tram_register.json", "--correlation", data_dir / "tram_correlation.json",
                        "--seed", "1", "--oracle"], capsys)
    assert code == 1 and "independent" in err


def test_qra_schema_error_names_field(tmp_path, capsys):
    reg = tmp_path / "r.json"
    reg.write_text(json.dumps({"risks": [{"id": "a", "name": "A", "probability": "high",
                                          "impact": {"kind": "fixed", "value": 1}}]}))
    code, _, err = run(["qra", reg, "--seed", "1"], capsys)
    assert code == 1
    assert "risks[0].probability" in err


def test_qra_requires_seed(data_dir, capsys):
    code = None
    with pytest.raises(SystemExit) as exc:
        main(["qra", str(data_dir / "certain_risk.json")])
    assert exc.value.code == 1


# -- ob ----------------------------------------------------------------------

def test_ob_queries(capsys, tmp_path):
    code, out, _ = run(["ob", "stage", "--kind", "capex", "--stage", "4"], capsys)
    assert code == 0 and table(out)["uplift"] == "0.18" and table(out)["qra_required"] == "True"
    code, out, _ = run(["ob", "confidence", "--type", "rail", "--p", "0.9"], capsys)
    assert table(out)["uplift"] == "0.68"
    code, out, _ = run(["ob", "scenarios", "--type", "standard_civil", "--base", "100", "--central", "0.24"], capsys)
    assert [float(table(out)[k]) for k in ("low", "central", "high")] == pytest.approx([103, 124, 144])


def test_ob_mitigate(capsys, tmp_path):
    from costrisk.optimism_bias import NONSTANDARD_CIVIL_CAPEX_BREAKDOWN as B
    path = tmp_path / "a.json"
    data = {n: {"managed": 0.0, "evidence": "objective"} for n in B.names}
    data["procurement"]["managed"] = 1.0
    path.write_text(json.dumps(data))
    code, out, _ = run(["ob", "mitigate", "--type", "nonstandard_civil", "--assessment", path], capsys)
    assert code == 0 and float(table(out)["uplift"]) == pytest.approx(0.6468)


def test_ob_schedule_override(capsys, tmp_path):
    sched = tmp_path / "s.csv"
    sched.write_text("type,metric,anchor,value\nrail,capex,0.5,0.45\nrail,capex,0.8,0.66\n")
    code, out, _ = run(["ob", "confidence", "--type", "rail", "--p", "0.8", "--schedule", sched], capsys)
    assert code == 0 and table(out)["uplift"] == "0.66"
    code, _, err = run(["ob", "confidence", "--type", "rail", "--p", "0.9", "--schedule", sched], capsys)
    assert code == 1 and "outside schedule anchors" in err


# -- audit -------------------------------------------------------------------

def test_audit_mean_plus_six_fails(capsys, tmp_path):
    out_path = tmp_path / "f.json"
    code, out, _ = run(["audit", "mean-plus-six", "--total", "580", "--p-risk", "51.6", "--mean-risk", "38.6",
                        "--out", out_path], capsys)
    assert code == 3
    assert table(out)["benchmark"] == "72.6"
    finding = json.loads(out_path.read_text())["finding"]
    assert finding["verdict"] == "fail"
    assert set(finding) == {"rule_id", "verdict", "inputs", "computed", "message", "notes"}


def test_audit_bcr(capsys):
    code, out, _ = run(["audit", "bcr", "--benefits", "592", "--costs", "335"], capsys)
    assert code == 0 and table(out)["bcr_rounded"] == "1.77"


def test_audit_overrun_zero(capsys):
    code, out, _ = run(["audit", "overrun", "--actual", "100", "--estimated", "100"], capsys)
    assert code == 0 and float(table(out)["overrun"]) == 0.0


def test_audit_exit_statuses(capsys):
    assert run(["audit", "gap", "--inside", "0.15", "--outside", "0.70", "--p", "0.9"], capsys)[0] == 2
    assert run(["audit", "gap", "--inside", "0.6", "--outside", "0.70"], capsys)[0] == 0
    assert run(["audit", "headroom", "--funding", "450", "--estimate", "500"], capsys)[0] == 3
    assert run(["audit", "headroom", "--funding", "545", "--estimate", "498"], capsys)[0] == 0
    assert run(["audit", "overrun", "--actual", "776", "--estimated", "498.1"], capsys)[0] == 2
    assert run(["audit", "contingency", "--total", "498.1", "--contingency", "49.1",
                "--stated-share", "0.15"], capsys)[0] == 2


def test_audit_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["audit", "bcr", "--benefits", "1"])
    assert exc.value.code == 1
    assert run(["audit", "bcr", "--benefits", "1", "--costs", "0"], capsys)[0] == 1
    assert run(["audit", "mean-plus-six", "--total", "10", "--p-risk", "20", "--mean-risk", "1"], capsys)[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "costrisk", "audit", "bcr", "--benefits", "592", "--costs", "335"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "1.77" in proc.stdout
