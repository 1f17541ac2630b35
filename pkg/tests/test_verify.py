import json
import math

import numpy as np
import pytest

from punctured_dynamics.dsl import compile_map
from punctured_dynamics.raster import CELL_DTYPE, ClassificationRaster, ViewWindow, pack_prefix
from punctured_dynamics.orbit import FAST, FATE_CODES, ClassifyParams
from punctured_dynamics.verify import (
    CHECKS,
    FAIL,
    PASS,
    SKIPPED,
    VerificationReport,
    run_suite,
    suite_exit_code,
    verify_En_inequality,
    verify_boundary_identities,
    verify_invariance_and_disjointness,
    verify_mmseq_lemma,
    verify_remark_counterexample,
)


def test_mmseq_lemma_passes_with_closed_form_margin(expz):
    rep = verify_mmseq_lemma(expz)
    assert rep.status == PASS
    assert rep.value("R_f") == 2.0
    assert rep.value("min_margin") == pytest.approx(2.5 - 2 * math.log(2), abs=1e-9)
    assert rep.value("terms_(0)*")[:3] == pytest.approx([math.log(2), 2.5, math.exp(2.5) + math.exp(-2.5)])


def test_mmseq_lemma_fails_for_identity(S0):
    rep = verify_mmseq_lemma(compile_map("z", S0))
    assert rep.status == FAIL and "(a)" in rep.reason


def test_z2_exp_margin_on_chart_zero(S0):
    # z^2 exp(z) is not transcendental at the puncture 0, so only the chart pair (0, 0) is checked
    from punctured_dynamics.modulus import estimate_max_modulus
    f = compile_map("z^2*exp(z)", S0)
    for r in (2.0, 5.0, 20.0):
        est = estimate_max_modulus(f, 0, 0, r)
        assert est.value_log == pytest.approx(r + 2 * math.log(r), rel=1e-9)
        assert est.value_log - 2 * math.log(r) > 0
    assert verify_mmseq_lemma(f).status == FAIL


def test_En_inequality_values(expz):
    rep = verify_En_inequality(expz, "(0)*", R=10.0, n_max=2)
    assert rep.status == PASS
    assert rep.value("measured_1") == pytest.approx(1.478, abs=1e-2)
    assert rep.value("measured_2") == pytest.approx(7.787, abs=1e-2)


def test_En_precondition_is_not_a_lemma_failure(expz):
    rep = verify_En_inequality(expz, "(0)*", R=3.0, n_max=2)
    assert rep.status == SKIPPED and rep.reason.startswith("precondition")
    # the raw value that would otherwise fail is still reported
    assert rep.value("measured_2") < math.e


def test_En_truncation(expz):
    rep = verify_En_inequality(expz, "(0)*", R=10.0, n_max=4)
    assert rep.status == SKIPPED and rep.reason.startswith("truncation")


def test_remark_counterexample():
    rep = verify_remark_counterexample()
    assert rep.status == PASS
    assert rep.value("f(-4)") == pytest.approx(0.03990717219703263, rel=1e-12)
    assert rep.value("loglog_f2(-4)") == pytest.approx(25.058152, abs=1e-5)
    assert rep.value("loglog_f2(-6)") == pytest.approx(173.03922, abs=1e-4)
    assert rep.value("base10_loglog(-4)") == pytest.approx(10.52, abs=1e-2)


def _synthetic_raster(window):
    cells = np.zeros((window.rows, window.cols), dtype=CELL_DTYPE)
    cells["fate"] = FATE_CODES[FAST]
    left = np.zeros((1, 16), dtype=np.int8)
    right = np.ones((1, 16), dtype=np.int8)
    cells["prefix"][:, : window.cols // 2] = pack_prefix(left, 1)[0]
    cells["prefix"][:, window.cols // 2:] = pack_prefix(right, 1)[0]
    return ClassificationRaster(window, cells, ClassifyParams(3.0), "synthetic", 1)


def test_boundary_identities_on_identical_rasters(expz):
    w = ViewWindow(0j, 2.0, 2.0, 32, 32)
    r = _synthetic_raster(w)
    rep = verify_boundary_identities(expz, w, p=2, rasters={1: r, 2: r})
    assert rep.status == PASS
    assert rep.value("hausdorff_e1_e1power") == 0.0
    assert rep.value("hausdorff_e1_e2") == 1.0


def test_boundary_identities_power_one_is_zero(expz):
    w = ViewWindow(0j, 6.0, 6.0, 64, 64)
    params = ClassifyParams(R_start=3.0, max_depth=16, bounded_threshold=2.5)
    rep = verify_boundary_identities(expz, w, p=1, params=params)
    assert rep.value("hausdorff_e1_e1power") == 0.0


def test_boundary_identities_empty_is_skipped(S0):
    f = compile_map("z", S0)
    w = ViewWindow(1 + 0j, 1.0, 1.0, 16, 16)
    rep = verify_boundary_identities(f, w, params=ClassifyParams(R_start=6.0, max_depth=4, bounded_threshold=5.5))
    assert rep.status == SKIPPED and "empty" in rep.reason


def test_invariance_and_disjointness(expz):
    rep = verify_invariance_and_disjointness(expz, n_points=200, seed=7)
    assert rep.status == PASS
    assert rep.value("shift_agreement") >= 0.99
    assert rep.value("radius_agreement") >= 0.99
    assert rep.value("uniqueness") == 1.0


def test_invariance_skipped_without_witnesses(S0):
    rep = verify_invariance_and_disjointness(compile_map("z", S0), n_points=100)
    assert rep.status == SKIPPED
    with pytest.raises(ValueError):
        verify_invariance_and_disjointness(compile_map("z", S0), n_points=10)


def test_report_record_and_suite_order():
    a = VerificationReport("zeta", "anchor z", PASS, [("x", 1.5), ("inf", math.inf)], tolerance=1)
    b = VerificationReport("alpha", "anchor a", FAIL, [("y", (1, 2))])
    rec = json.loads(a.to_record())
    assert rec["check"] == "zeta" and rec["anchor"] == "anchor z"
    assert rec["measured"] == {"x": 1.5, "inf": "inf"}
    out = run_suite([("zeta", lambda: a), ("alpha", lambda: b)], threads=2)
    assert [r.check_name for r in out] == ["alpha", "zeta"]
    assert suite_exit_code(out) == 1
    assert suite_exit_code([a, VerificationReport("s", "", SKIPPED)]) == 0
    assert sorted(CHECKS) == list(CHECKS)
