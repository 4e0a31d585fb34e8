from __future__ import annotations

import numpy as np
import pytest

from koranyi.config import load_config
from koranyi.heisenberg import PoleError, gauge_norm
from koranyi.verification import (
    IDENTITY_CHECKS,
    UnknownCheckError,
    check_pole,
    run_identity_suite,
    sphere_area_h1,
)


def test_sphere_area_closed_form() -> None:
    assert sphere_area_h1() == pytest.approx(3.76406, abs=1e-3)


def test_check_pole_spreads_over_components() -> None:
    pole = check_pole(load_config(None, {"n": 2}))
    assert pole.z.shape == (2,)
    np.testing.assert_allclose(np.abs(pole.z) ** 2, [0.045, 0.045])
    assert gauge_norm(pole) == pytest.approx(gauge_norm(check_pole(load_config())))


def test_cheap_identities_hold_with_defaults() -> None:
    report = run_identity_suite(
        load_config(), only=["commutator", "harmonicity", "averaged-kernel", "compatibility"]
    )
    assert [check.passed for check in report.checks] == [True] * 4
    assert report.passed
    assert report.failures() == []


def test_checks_run_in_registry_order_without_duplicates() -> None:
    report = run_identity_suite(load_config(), only=["harmonicity", "commutator", "harmonicity"])
    assert [check.name for check in report.checks] == [
        "commutator [X,Y] = -4T",
        "L0 g_e = 0 off the pole",
    ]


def test_coarse_stencil_breaks_the_commutator() -> None:
    report = run_identity_suite(load_config(None, {"stencil": {"h": 0.5}}), only=["commutator"])
    assert not report.passed
    (failure,) = report.failures()
    assert failure.defect > failure.threshold


def test_flux_and_series_fit_hold() -> None:
    report = run_identity_suite(load_config(), only=["flux", "series-fit"])
    assert report.passed, report.to_document()


def test_rule_based_checks_are_skipped_beyond_h1() -> None:
    report = run_identity_suite(load_config(None, {"n": 2}), only=["compatibility", "uniqueness"])
    assert all(check.skipped and check.passed for check in report.checks)
    assert report.to_document()["passed"] is True


def test_unknown_checks_are_rejected() -> None:
    with pytest.raises(UnknownCheckError, match="known checks"):
        run_identity_suite(load_config(), only=["commutator", "riemann"])


def test_numerical_failures_become_failed_checks(monkeypatch) -> None:
    def broken(ctx):
        raise PoleError("evaluated at the pole")

    monkeypatch.setitem(IDENTITY_CHECKS, "flux", broken)
    report = run_identity_suite(load_config(), only=["flux"])
    (check,) = report.checks
    assert not check.passed
    assert check.details == {"error": "evaluated at the pole"}


def test_series_fit_is_skipped_beyond_h1() -> None:
    report = run_identity_suite(load_config(None, {"n": 2}), only=["series-fit"])
    (check,) = report.checks
    assert check.skipped and check.passed


@pytest.mark.slow
def test_jump_check_measures_all_three_relations() -> None:
    report = run_identity_suite(load_config(), only=["jumps"])
    (check,) = report.checks
    assert check.name == "layer potential jumps"
    assert check.passed, check.details
    for key in ("jump", "normal_jump", "single_normal_jump"):
        assert check.details[key] <= check.threshold


@pytest.mark.slow
def test_spectrum_check_holds_at_the_default_rule() -> None:
    report = run_identity_suite(load_config(), only=["spectrum"])
    assert report.passed, report.to_document()


@pytest.mark.slow
def test_full_suite_passes_with_defaults() -> None:
    report = run_identity_suite(load_config())
    assert len(report.checks) == len(IDENTITY_CHECKS)
    assert report.passed, [check.name for check in report.failures()]
