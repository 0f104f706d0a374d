import numpy as np
import pytest

from sensorattn import verify
from sensorattn.gradcheck import TARGETS, gradcheck, rel_error


@pytest.mark.parametrize("name", sorted(verify.ORACLE_CASES))
def test_oracle_suite(name):
    result = verify.oracle_check(name, seeds=100)
    assert result.passed, result.line()


@pytest.mark.parametrize("case", sorted(p.name for p in (verify.FIXTURE_ROOT / verify.FIXTURE_VERSION).iterdir()))
def test_shipped_conformance_vector(case):
    result = verify.check_fixture(verify.FIXTURE_ROOT / verify.FIXTURE_VERSION / case)
    assert result.passed, result.line()


def test_conformance_set_covers_each_module():
    ops = {c.op for c in verify._fixture_cases()}
    assert {"dual_forward", "triple_forward", "triple_branch", "mixed_forward", "conv2d_same"} <= ops


def test_missing_fixture_root_fails(tmp_path):
    results = verify.run_conformance(tmp_path)
    assert len(results) == 1 and not results[0].passed


@pytest.mark.parametrize("target", sorted(set(TARGETS) - set(verify.MODULE_GRADCHECKS)))
def test_primitive_gradchecks(target):
    report = gradcheck(target, trials=10)
    assert report.passed, report.line()


def test_linear_gradient_is_tight():
    report = gradcheck("linear", trials=20)
    assert report.worst_rel_err < 1e-8, report.line()


def test_gradcheck_detects_a_wrong_gradient():
    # a 1% error must stand out against the 1e-6 tolerance
    analytic, numeric = np.array([1.01, 0.0]), np.array([1.0, 0.0])
    assert rel_error(analytic, numeric).max() > 1e-6


def test_unknown_gradcheck_target():
    with pytest.raises(KeyError):
        gradcheck("nope")


def test_check_result_line():
    assert verify.CheckResult("oracle", "x", True, "ok").line() == "PASS oracle x: ok"
    assert verify.CheckResult("oracle", "x", False, "bad").line() == "FAIL oracle x: bad"
