"""Acceptance criteria 1 to 11.

Each test prints one ``criterion N: PASS|FAIL`` line and records it for the
terminal summary, so ``pytest tests/test_acceptance.py`` ends with the full
list even when output capture is on.
"""
import math
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from punctured_dynamics.dsl import ParseError, compile_map, format_expr, parse
from punctured_dynamics.modulus import estimate_max_modulus, max_modulus_sequence
from punctured_dynamics.orbit import ClassifyParams
from punctured_dynamics.raster import (
    ViewWindow,
    classify_grid,
    fast_escaping_selector,
    fate_grid_bytes,
    label_components,
)
from punctured_dynamics.verify import (
    PASS,
    SKIPPED,
    verify_boundary_identities,
    verify_En_inequality,
    verify_invariance_and_disjointness,
    verify_mmseq_lemma,
    verify_remark_counterexample,
)

RESULTS = {}
CORPUS = Path(__file__).parent / "data" / "expr_corpus.txt"


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    RESULTS[number] = line
    print(line)


def test_criterion_01_modulus_oracle(expz):
    start = time.perf_counter()
    errors = []
    for r in (2.0, 3.0, 5.0):
        est = estimate_max_modulus(expz, 0, 0, r, n_samples=4096, refine_iters=30)
        # maximum of exp(Re(x + 1/x)) on |x| = r sits at x = r
        errors.append(abs(math.expm1(est.value_log - (r + 1 / r))))
    elapsed = time.perf_counter() - start
    ok = max(errors) <= 1e-6 and elapsed < 1.0
    report(1, ok, f"max rel err {max(errors):.2e} (tol 1e-6), {elapsed:.3f} s (limit 1 s)")
    assert ok


def test_criterion_02_sequence_oracle(expz):
    seq = max_modulus_sequence(expz, [0, 0, 0], 3.0, 2)
    got = list(seq.values_log)
    # L_0 = log 3, L_{n+1} = e^{L_n} + e^{-L_n}
    want = [math.log(3.0)]
    for _ in range(2):
        want.append(math.exp(want[-1]) + math.exp(-want[-1]))
    frozen = [1.098612, 3.333333, 28.067280]
    ok = all(abs(g - w) <= 1e-3 * w for g, w in zip(got, frozen)) and len(got) == 3
    ok &= got == pytest.approx(want, rel=1e-9)
    report(2, ok, "log R_n = " + ", ".join(f"{g:.6f}" for g in got))
    assert ok


def test_criterion_03_mmseq_lemma(expz, S0):
    good = verify_mmseq_lemma(expz, grid=tuple(float(r) for r in range(2, 51)))
    bad = verify_mmseq_lemma(compile_map("z", S0))
    ok = good.status == PASS and bad.status != PASS and "(a)" in bad.reason
    report(3, ok, f"exp(z+1/z) {good.status} (margin {good.value('min_margin'):.4f}); "
                  f"z {bad.status}: {bad.reason}")
    assert ok


def test_criterion_04_En_inequality(expz):
    rep = verify_En_inequality(expz, R=10.0, n_max=2)
    low = verify_En_inequality(expz, R=3.0, n_max=2)
    m1, m2 = rep.value("measured_1"), rep.value("measured_2")
    ok = (rep.status == PASS and abs(m1 - 1.478) <= 1e-2 and abs(m2 - 7.787) <= 1e-2
          and m1 >= 1.0 and m2 >= math.e)
    ok &= low.status == SKIPPED and "precondition" in low.reason
    report(4, ok, f"R=10 measured {m1:.4f}, {m2:.4f}; R=3 {low.status}: {low.reason}")
    assert ok


def test_criterion_05_remark_counterexample():
    rep = verify_remark_counterexample()
    at4, at6 = rep.value("loglog_f2(-4)"), rep.value("loglog_f2(-6)")
    first = rep.value("f(-4)")
    with mpmath.workdps(50):
        independent = float(mpmath.exp(mpmath.exp(mpmath.mpf(-0.25)) - 4))
    # literal targets as stated; the 50-digit oracle is recorded alongside
    ok = abs(at4 - 25.071) <= 1e-3 and abs(first - 0.039887) <= 1e-6
    ok &= at4 >= math.exp(2) and at6 >= math.exp(3) and abs(at6 - 173.3) <= 0.5
    report(5, ok, f"loglog|f^2(-4)| = {at4:.6f} (target 25.071 +- 1e-3), f(-4) = {first:.7f} "
                  f"(target 0.039887 +- 1e-6, 50-digit oracle {independent:.7f}), "
                  f"loglog|f^2(-6)| = {at6:.3f}; harness oracle check {rep.status}")
    assert ok


@pytest.fixture(scope="module")
def timed_raster(expz, acceptance_window, acceptance_params):
    start = time.perf_counter()
    raster = classify_grid(expz, acceptance_window, acceptance_params, 8)
    return raster, time.perf_counter() - start


def test_criterion_06_boundary_itineraries(expz, expz_rasters, acceptance_window,
                                           acceptance_params, timed_raster):
    raster, elapsed = timed_raster
    assert fate_grid_bytes(raster) == fate_grid_bytes(expz_rasters[1])
    rep = verify_boundary_identities(expz, acceptance_window, params=acceptance_params,
                                     rasters=dict(expz_rasters))
    h = rep.value("hausdorff_e1_e2")
    ok = h <= 4.0 and elapsed < 60.0
    report(6, ok, f"Hausdorff (0)* vs (1)* = {h:.3f} px (tol 4), raster {elapsed:.1f} s "
                  f"with 8 workers (limit 60 s)")
    assert ok


def test_criterion_07_boundary_power(expz, expz_rasters, acceptance_window, acceptance_params):
    rep = verify_boundary_identities(expz, acceptance_window, params=acceptance_params,
                                     rasters=dict(expz_rasters))
    h = rep.value("hausdorff_e1_e1power")
    ok = h <= 4.0
    report(7, ok, f"Hausdorff (0)* of f vs f^2 = {h:.3f} px (tol 4)")
    assert ok


def test_criterion_08_components_unbounded(expz, S0, expz_rasters):
    lab = label_components(expz_rasters[1], fast_escaping_selector("(0)*"), S0)
    big = [i for i, n in enumerate(lab.counts) if n >= 16]
    violations = [i for i in big if not lab.touches[i]]
    worst = max((lab.counts[i] for i in violations), default=0)
    ok = not violations
    report(8, ok, f"{len(violations)} of {len(big)} components with >= 16 px touch neither "
                  f"frame nor puncture disk (largest {worst} px)")
    assert ok


def test_criterion_09_invariance(expz):
    rep = verify_invariance_and_disjointness(expz, n_points=1000, seed=7)
    shift, radius, unique = (rep.value(k) for k in ("shift_agreement", "radius_agreement", "uniqueness"))
    ok = rep.status == PASS
    report(9, ok, f"shift {shift:.4f}, radius {radius:.4f} (need 0.99), uniqueness {unique:.2f}, "
                  f"{len(rep.exceptions)} exceptions logged")
    assert ok


def test_criterion_10_determinism_and_speed(expz):
    window = ViewWindow(0j, 6.0, 6.0, 1024, 1024)
    params = ClassifyParams(R_start=3.0, max_depth=64, bounded_threshold=2.5)
    outputs, times = {}, {}
    for threads in (1, 8):
        start = time.perf_counter()
        outputs[threads] = fate_grid_bytes(classify_grid(expz, window, params, threads))
        times[threads] = time.perf_counter() - start
    same = outputs[1] == outputs[8]
    ok = same and times[8] <= 60.0
    soft = "met" if times[8] <= 10.0 else "missed"
    report(10, ok, f"identical bytes across 1 and 8 workers: {same}; {times[1]:.1f} s / "
                   f"{times[8]:.1f} s (hard ceiling 60 s, 10 s soft target {soft})")
    assert ok


def test_criterion_11_parser():
    lines = [l.strip() for l in CORPUS.read_text().splitlines()]
    corpus = [l for l in lines if l and not l.startswith("#")]
    trips = 0
    for text in corpus:
        canon = format_expr(parse(text))
        trips += parse(canon) == parse(text) and format_expr(parse(canon)) == canon
    fixtures = ["exp(z+1/z)", "z^2*exp(z)", "exp(exp(1/z)+z)"]
    canon_fixtures = [format_expr(parse(t)) for t in fixtures]
    fixtures_ok = canon_fixtures == ["exp(z + 1/z)", "z^2*exp(z)", "exp(exp(1/z) + z)"]
    offsets = {}
    for text in ("z^1.5", "z^z", "z^(1/2)"):
        try:
            parse(text)
        except ParseError as exc:
            offsets[text] = exc.offset
    rejected = offsets == {"z^1.5": 2, "z^z": 2, "z^(1/2)": 4}
    ok = len(corpus) == 50 and trips == 50 and fixtures_ok and rejected
    report(11, ok, f"{trips}/{len(corpus)} corpus round trips, fixtures {fixtures_ok}, "
                   f"rejection offsets {offsets}")
    assert ok
