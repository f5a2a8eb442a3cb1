import math
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import WORKED_PHI, binary_pis, y_marginals
from vaxmed.effects import is_defined
from vaxmed.errors import PositivityError, PreconditionError, ValidationError
from vaxmed.identification import (
    StratifiedConditionalMeans,
    StratumData,
    check_testable_constraints,
    effects_from_expectations,
    identify_ey1m0_undetectable,
    identify_ey1m0_undetectable_detail,
    mediation_formula,
    theorem2_identify,
)
from vaxmed.levels import NEG
from vaxmed.popmodel import BinaryTypeDistribution, PhiTable, oracle_cross_world, phi_from_pi

WORKED_MEANS = StratifiedConditionalMeans.single(
    {(1, NEG): 0.004, (1, 1): 0.00025, (0, NEG): 0.01},
    {1: {NEG: 0.2, 1: 0.8}, 0: {NEG: 1.0}},
)


# -- mediation formula ------------------------------------------------------------


def test_mediation_formula_worked_example():
    assert mediation_formula(WORKED_MEANS, 1, 0) == pytest.approx(0.004, abs=1e-15)


def test_mediation_formula_own_arm_is_marginal_mean():
    # 0.2 * 0.004 + 0.8 * 0.00025 = 0.001
    assert mediation_formula(WORKED_MEANS, 1, 1) == pytest.approx(0.001, abs=1e-15)


def test_mediation_formula_averages_strata():
    data = StratifiedConditionalMeans({
        "a": StratumData(0.5, {(1, NEG): 0.2}, {0: {NEG: 1.0}}),
        "b": StratumData(0.5, {(1, NEG): 0.4}, {0: {NEG: 1.0}}),
    })
    assert mediation_formula(data, 1, 0) == pytest.approx(0.3)


def test_missing_cell_names_stratum_and_level():
    data = StratifiedConditionalMeans({
        "2": StratumData(1.0, {(0, NEG): 0.1}, {1: {NEG: 0.5, 1: 0.5}}),
    })
    with pytest.raises(PositivityError, match=r"x=2, m=neg"):
        mediation_formula(data, 1, 1)


def test_zero_weight_strata_are_dropped_before_positivity():
    data = StratifiedConditionalMeans({
        "a": StratumData(1.0, {(1, NEG): 0.2}, {0: {NEG: 1.0}}),
        "empty": StratumData(0.0, {}, {0: {NEG: 1.0}}),
    })
    assert mediation_formula(data, 1, 0) == pytest.approx(0.2)


def test_conditional_means_validation():
    with pytest.raises(ValidationError):
        StratifiedConditionalMeans({"a": StratumData(0.7, {}, {})})
    with pytest.raises(ValidationError):
        StratifiedConditionalMeans({"a": StratumData(1.0, {(1, NEG): 1.5}, {})})


# -- undetectable placebo ----------------------------------------------------------


def test_undetectable_identification_worked_example():
    assert identify_ey1m0_undetectable(WORKED_MEANS) == pytest.approx(0.004, abs=1e-15)


def test_undetectable_identification_two_strata():
    data = StratifiedConditionalMeans({
        "a": StratumData(0.5, {(1, NEG): 0.01, (1, 1): 0.0}, {0: {NEG: 1.0}}),
        "b": StratumData(0.5, {(1, NEG): 0.03, (1, 1): 0.0}, {0: {NEG: 1.0}}),
    })
    assert identify_ey1m0_undetectable(data) == pytest.approx(0.02)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6), st.floats(0.0, 1.0))
def test_undetectable_identification_constant_means(raw_weights, c):
    total = sum(raw_weights)
    strata = {
        str(i): StratumData(w / total, {(1, NEG): c}, {0: {NEG: 1.0}})
        for i, w in enumerate(raw_weights)
    }
    assert identify_ey1m0_undetectable(StratifiedConditionalMeans(strata)) == pytest.approx(c, abs=1e-12)


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.0, 1.0)), min_size=1, max_size=5))
def test_reduction_to_mediation_formula_is_exact(cells):
    total = sum(w for w, _ in cells)
    strata = {
        str(i): StratumData(w / total, {(1, NEG): mean}, {0: {NEG: 1.0}})
        for i, (w, mean) in enumerate(cells)
    }
    data = StratifiedConditionalMeans(strata)
    assert identify_ey1m0_undetectable(data) == mediation_formula(data, 1, 0)


def test_undetectable_identification_needs_vaccinated_undetectable_cell():
    data = StratifiedConditionalMeans.single({(1, 1): 0.01}, {0: {NEG: 1.0}})
    with pytest.raises(PositivityError, match="PosM1"):
        identify_ey1m0_undetectable(data)


def test_stratum_without_detectable_vaccinees_is_noted():
    data = StratifiedConditionalMeans.single({(1, NEG): 0.01}, {0: {NEG: 1.0}})
    detail = identify_ey1m0_undetectable_detail(data)
    assert detail.ey1m0 == pytest.approx(0.01)
    assert detail.notes and "no vaccinated participants with detectable" in detail.notes[0]


def test_placebo_with_detectable_mediator_rejected():
    data = StratifiedConditionalMeans.single({(1, NEG): 0.01}, {0: {NEG: 0.9, 1: 0.1}})
    with pytest.raises(PreconditionError):
        identify_ey1m0_undetectable(data)


# -- closed form --------------------------------------------------------------------


def test_closed_form_worked_example(worked_phi):
    res = theorem2_identify(worked_phi)
    assert res.ey1m0 == pytest.approx(0.004, abs=1e-15)
    assert res.theta_is == pytest.approx(0.25, abs=1e-12)
    assert round(res.lambda_s, 4) == 0.6021
    assert not res.constraint_violation
    comps = res.pi_components
    assert comps["00/0000"] == pytest.approx(0.99 * 0.2)
    assert comps["10/1111"] == pytest.approx(0.0002)


def _phi(vnf_rate, vaf_rate, pnf, vn=0.2):
    return PhiTable(
        vaf=(1 - vn) * vaf_rate, vas=(1 - vn) * (1 - vaf_rate),
        vnf=vn * vnf_rate, vns=vn * (1 - vnf_rate),
        pnf=pnf, pns=1 - pnf,
    )


def test_closed_form_no_antibody_effect():
    # non-responder event rate equals the whole vaccine arm's rate
    phi = _phi(0.02, 0.02, 0.05)
    res = theorem2_identify(phi)
    assert res.theta_is == pytest.approx(1.0, abs=1e-12)
    assert res.lambda_s == pytest.approx(0.0, abs=1e-12)


def test_closed_form_fully_mediated():
    phi = _phi(0.05, 0.01, 0.05)
    assert theorem2_identify(phi).lambda_s == pytest.approx(1.0, abs=1e-12)


def test_closed_form_requires_non_responders():
    phi = PhiTable(vaf=0.01, vas=0.99, vnf=0.0, vns=0.0, pnf=0.1, pns=0.9)
    with pytest.raises(PreconditionError):
        theorem2_identify(phi)


def test_closed_form_zero_non_responder_events_leaves_theta_undefined():
    phi = PhiTable(vaf=0.01, vas=0.79, vnf=0.0, vns=0.2, pnf=0.1, pns=0.9)
    res = theorem2_identify(phi)
    assert not is_defined(res.theta_is) and not is_defined(res.lambda_s)


def test_closed_form_no_total_effect_leaves_lambda_undefined():
    phi = _phi(0.02, 0.02, 0.02)
    assert not is_defined(theorem2_identify(phi).lambda_s)


def test_tiny_negative_component_clamped_with_warning():
    # 00/00x1 = vns - pns * vn = -5e-10
    vn = 0.2
    vns = 0.99 * vn - 5e-10
    phi = PhiTable(vaf=0.0002, vas=0.7998, vnf=vn - vns, vns=vns, pnf=0.01, pns=0.99)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = theorem2_identify(phi)
    assert res.pi_components["00/00x1"] == 0.0
    assert not res.constraint_violation
    assert caught


def test_large_negative_component_flags_violation():
    phi = _phi(0.02, 0.0002 / 0.8, 0.01)
    res = theorem2_identify(phi)
    assert res.constraint_violation


@given(y_marginals(), st.floats(0.05, 0.95))
def test_closed_form_matches_oracle_on_factorized_populations(y, p):
    pi = BinaryTypeDistribution.factorized(y, p)
    res = theorem2_identify(phi_from_pi(pi))
    assert res.ey1m0 == pytest.approx(oracle_cross_world(pi, 1, 0), abs=1e-12)
    assert not res.constraint_violation


@given(y_marginals(), st.floats(0.05, 0.95))
def test_closed_form_lies_between_vaccine_and_placebo_rates(y, p):
    phi = phi_from_pi(BinaryTypeDistribution.factorized(y, p))
    assert all(c.satisfied for c in check_testable_constraints(phi))
    ey1m0 = theorem2_identify(phi).ey1m0
    assert phi.vf - 1e-12 <= ey1m0 <= phi.pnf + 1e-12


@given(y_marginals(), st.floats(0.05, 0.95))
def test_closed_form_lambda_equals_report_lambda(y, p):
    phi = phi_from_pi(BinaryTypeDistribution.factorized(y, p))
    res = theorem2_identify(phi)
    rep = effects_from_expectations(phi.vf, phi.vnf / phi.vn, None, phi.pnf)
    if is_defined(res.lambda_s):
        assert rep.lambda_s == pytest.approx(res.lambda_s, abs=1e-12)


# -- testable constraints ---------------------------------------------------------------


def test_constraints_worked_example(worked_phi):
    checks = check_testable_constraints(worked_phi)
    assert [c.satisfied for c in checks] == [True, True]
    assert checks[0].lhs == pytest.approx(0.004) and checks[1].lhs == pytest.approx(0.00025)
    assert checks[0].rhs == 0.01


def test_constraint_violation_detected():
    phi = _phi(0.02, 0.00025, 0.01)
    checks = check_testable_constraints(phi)
    assert checks[0].lhs == pytest.approx(0.02)
    assert checks[0].satisfied is False and checks[1].satisfied is True


def test_zero_non_responder_events_trivially_satisfied():
    phi = PhiTable(vaf=0.001, vas=0.799, vnf=0.0, vns=0.2, pnf=0.01, pns=0.99)
    assert check_testable_constraints(phi)[0].satisfied


def test_zero_margin_not_evaluable():
    phi = PhiTable(vaf=0.01, vas=0.99, vnf=0.0, vns=0.0, pnf=0.1, pns=0.9)
    first = check_testable_constraints(phi)[0]
    assert first.evaluable is False and first.satisfied is None


# -- effects from expectations --------------------------------------------------------


def test_effects_from_worked_example_expectations():
    rep = effects_from_expectations(0.001, 0.004, None, 0.01)
    assert rep.theta_t == pytest.approx(0.10)
    assert rep.theta_is == pytest.approx(0.25)
    assert rep.theta_ds == pytest.approx(0.40)
    assert round(rep.lambda_s, 4) == 0.6021
    assert rep.provenance["theta_is"] == "identified-SI2"
    assert rep.provenance["theta_ia"] == "undefined"


def test_null_effects_make_lambdas_undefined():
    rep = effects_from_expectations(0.3, 0.3, 0.3, 0.3)
    assert rep.theta_t == rep.theta_is == rep.theta_ia == 1.0
    assert not rep.defined("lambda_s") and not rep.defined("lambda_a")


@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5), st.floats(0.5, 1.0))
def test_no_interaction_means_equal_lambdas(e10, e01, e00):
    e11 = e10 * e01 / e00
    rep = effects_from_expectations(e11, e10, e01, e00)
    assert rep.xi == pytest.approx(1.0, abs=1e-10)
    if rep.defined("lambda_s"):
        assert rep.lambda_s == pytest.approx(rep.lambda_a, abs=1e-9)


def test_nonpositive_placebo_mean_rejected():
    with pytest.raises(PreconditionError):
        effects_from_expectations(0.0, 0.0, None, 0.0)


@given(binary_pis())
def test_log_base_invariance_of_identified_lambda(pi):
    phi = phi_from_pi(pi)
    if phi.vn == 0 or phi.pnf in (0.0, 1.0) or phi.vf == 0:
        return
    res = theorem2_identify(phi)
    if is_defined(res.lambda_s):
        alt = math.log2(res.theta_is) / math.log2(phi.vf / phi.pnf)
        assert alt == pytest.approx(res.lambda_s, abs=1e-10)
