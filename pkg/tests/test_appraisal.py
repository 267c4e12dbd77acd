import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from costrisk import appraisal as ap
from costrisk.appraisal import AppraisalInput, Verdict
from costrisk.qra import SimulationResult
from costrisk.reference_class import ReferenceClass


def test_compose_final_business_case_stage():
    est = ap.compose_estimate(528.4, 38.6, 0.06, "risk_adjusted")
    assert round(est.ob_adjustment, 1) == 34.0
    assert round(est.total, 1) == 601.0


def test_compose_zero_uplift():
    est = ap.compose_estimate(200.0, 17.5, 0.0, "risk_adjusted")
    assert est.total == 217.5
    assert est.ob_adjustment == 0.0


def test_compose_base_only():
    est = ap.compose_estimate(100.0, 0.0, 0.40, "base_only")
    assert est.ob_adjustment == pytest.approx(40.0)
    assert est.total == pytest.approx(140.0)


def test_compose_base_only_ignores_risk_in_uplift():
    est = ap.compose_estimate(100.0, 10.0, 0.40, ap.ObBasis.BASE_ONLY)
    assert est.ob_adjustment == pytest.approx(40.0)


def test_compose_negative_rejected():
    with pytest.raises(ValueError):
        ap.compose_estimate(-1.0, 0.0, 0.1, "base_only")


money = st.floats(0.0, 1e6)


@given(money, money, st.floats(0.0, 1.0), st.sampled_from(list(ap.ObBasis)))
def test_compose_total_identity(base, risk, uplift, basis):
    est = ap.compose_estimate(base, risk, uplift, basis)
    assert abs(est.total - (est.base_cost + est.risk_adjustment + est.ob_adjustment)) <= 1e-6
    assert min(est.base_cost, est.risk_adjustment, est.ob_adjustment) >= 0


def test_mean_plus_six_hand_case():
    f = ap.mean_plus_six_check(100.0, 50.0, 10.0)
    c = f.computed
    assert c["base_cost"] == 50.0
    assert c["risk_adjusted_cost"] == 60.0
    assert c["residual_uplift"] == pytest.approx(3.6)
    assert c["benchmark"] == pytest.approx(13.6)
    assert f.verdict is Verdict.PASS


def test_mean_plus_six_parameterised_uplift():
    f = ap.mean_plus_six_check(100.0, 50.0, 10.0, uplift=0.03)
    assert f.computed["benchmark"] == pytest.approx(11.8)


def test_mean_plus_six_total_must_exceed_risk():
    with pytest.raises(ValueError):
        ap.mean_plus_six_check(50.0, 50.0, 10.0)


def test_finding_recomputable_from_inputs():
    f = ap.mean_plus_six_check(580, 51.6, 38.6)
    i = f.inputs
    base = i["total_estimate"] - i["p_level_risk"]
    assert f.computed["benchmark"] == i["mean_risk"] + i["uplift"] * (base + i["mean_risk"])
    d = f.to_dict()
    assert d["verdict"] == "fail" and d["rule_id"] == "mean-plus-six"


def test_bcr_values():
    assert ap.bcr(AppraisalInput(0, 335, 592), digits=2) == 1.77
    assert ap.bcr(AppraisalInput(0, 10, 10)) == 1.0
    assert ap.bcr(AppraisalInput(0, 10, 0)) == 0.0
    with pytest.raises(ValueError):
        ap.bcr(AppraisalInput(0, 0, 10))


def test_headroom_values():
    assert ap.headroom(545, 498) == pytest.approx(0.0944, abs=5e-5)
    assert ap.headroom(70, 70) == 0.0
    assert ap.headroom(450, 500) == pytest.approx(-0.10)
    with pytest.raises(ValueError):
        ap.headroom(10, 0)


def test_overrun_values():
    assert ap.overrun(776, 498.1) == pytest.approx(0.558, abs=5e-4)
    assert ap.overrun(3.3, 3.3) == 0.0
    assert ap.overrun(143, 100) == pytest.approx(0.43)
    with pytest.raises(ValueError):
        ap.overrun(1, -1)


def test_checks_verdicts():
    assert ap.bcr_check(592, 335).verdict is Verdict.PASS
    assert ap.bcr_check(300, 335).verdict is Verdict.FLAG
    assert ap.headroom_check(545, 498).verdict is Verdict.PASS
    assert ap.headroom_check(450, 500).verdict is Verdict.FAIL
    assert ap.overrun_check(100, 100).verdict is Verdict.PASS
    assert ap.overrun_check(776, 498.1).verdict is Verdict.FLAG


def test_headroom_finding_notes_unstated_basis():
    f = ap.headroom_check(545, 498)
    assert any("not reproducible" in n for n in f.notes)


def test_gap_fifteen_vs_seventy_flags():
    f = ap.gap_check(0.15, 0.70, p=0.9)
    assert f.verdict is Verdict.FLAG
    assert f.computed["outside_over_inside"] == pytest.approx(70 / 15)


def test_gap_equal_passes():
    assert ap.gap_check(0.4, 0.4).verdict is Verdict.PASS


def test_gap_sixty_vs_seventy_passes():
    assert ap.gap_check(0.60, 0.70).verdict is Verdict.PASS


def test_inside_outside_gap_from_components():
    result = SimulationResult([15.0] * 100)
    ref = ReferenceClass.from_overruns([0.70] * 20)
    f = ap.inside_outside_gap(result, 100.0, ref, 0.9)
    assert f.computed["inside"] == pytest.approx(0.15)
    assert f.computed["outside"] == pytest.approx(0.70)
    assert f.verdict is Verdict.FLAG
    same = ap.inside_outside_gap(SimulationResult([70.0] * 10), 100.0, ref, 0.9)
    assert same.verdict is Verdict.PASS


def test_contingency_reports_both_readings():
    f = ap.contingency_readings(498.1, 49.1, 0.15)
    assert f.computed["share_of_total"] == pytest.approx(49.1 / 498.1)
    assert f.computed["share_of_base"] == pytest.approx(49.1 / 449.0)
    assert f.verdict is Verdict.FLAG
    assert ap.contingency_readings(115.0, 15.0, 0.15).verdict is Verdict.PASS


scale = st.floats(1e-3, 1e3)


@given(st.floats(1.0, 1e4), st.floats(0.0, 1.0), st.floats(0.0, 1e3), scale)
def test_mean_plus_six_scale_invariant(total, risk_share, mean_risk, k):
    p_risk = total * risk_share * 0.99
    f = ap.mean_plus_six_check(total, p_risk, mean_risk)
    assume(abs(p_risk - f.computed["benchmark"]) > 1e-9 * max(1.0, p_risk))
    g = ap.mean_plus_six_check(total * k, p_risk * k, mean_risk * k)
    assert g.verdict is f.verdict
    for key, value in f.computed.items():
        assert g.computed[key] == pytest.approx(value * k, rel=1e-9, abs=1e-9 * k)


@given(st.floats(0.0, 1e4), st.floats(1e-2, 1e4), scale)
def test_ratios_scale_invariant(a, b, k):
    assert ap.bcr(AppraisalInput(0, b * k, a * k)) == pytest.approx(ap.bcr(AppraisalInput(0, b, a)), rel=1e-12, abs=1e-12)
    assert ap.headroom(a * k, b * k) == pytest.approx(ap.headroom(a, b), rel=1e-12, abs=1e-12)
    assert ap.overrun(a * k, b * k) == pytest.approx(ap.overrun(a, b), rel=1e-12, abs=1e-12)
