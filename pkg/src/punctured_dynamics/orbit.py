"""Orbits, itineraries and finite-depth escape classification.

An orbit stops when a value overflows (it then sits at infinity, chart 0) or
when an ``exp`` underflow lands it exactly on a finite puncture (chart ``j``).
Those stopping states are *terminal*: the point is treated as escaping towards
that puncture, and its log modulus is recovered from the symbolic log-modulus
of the previous point when available.  An overflow inside one application
whose log modulus is unknown leaves the image undetermined; such orbits end
without a terminal chart and cannot be certified.

After a definite overflow the value is still known as a complex logarithm.
For maps with a log-modulus form this fixes one more log modulus, the
*shadow* step; it is used when it heads to infinity again, confirming the
terminal chart.

Level-set comparisons ``|f^(l+n)(x)|_{e_n} >= R_n`` are made in log domain.
When the orbit is no longer known (past a terminal step) and the sequence term
is itself beyond the double range at the same symbol, the comparison is taken
to hold (dominant-escape convention).  All verdicts are "candidate at depth N".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dsl import EXP_CAP, OVERFLOW, UNDERFLOW, CompiledMap
from .modulus import LOG_OMEGA, SequenceCache
from .sphere import INF, SpherePoint, dominant_symbol, sphere_point

COMPLETED, OVERFLOWED, UNDERFLOWED = "completed", "overflow", "underflow"
INDETERMINATE = "indeterminate"

FAST, BOUNDED, UNDECIDED = "fast_escaping", "bounded", "undecided"
FATE_CODES = {UNDECIDED: 0, BOUNDED: 1, FAST: 2}

PREFIX_LEN = 16


@dataclass
class OrbitRecord:
    """``points[n] = f^n(x)``; ``moduli[n][j] = log |f^n(x)|_j``.

    ``terminated_at`` is the index of the last regular point (its image was the
    terminal one); ``terminal_symbol`` is the chart the orbit escaped into.
    """

    points: list
    moduli: list
    termination: str = COMPLETED
    terminated_at: Optional[int] = None
    terminal_symbol: Optional[int] = None
    # one step past a definite overflow, known only as log moduli
    shadow_moduli: Optional[list] = None
    shadow_symbol: Optional[int] = None


@dataclass
class ClassifyParams:
    R_start: float
    max_depth: int = 32
    bounded_threshold: Optional[float] = None
    max_offset: int = 8
    n_samples: int = 4096
    refine_iters: int = 30

    def validate(self, rho: float) -> None:
        bt = self.bounded_threshold if self.bounded_threshold is not None else rho
        if bt < rho:
            raise ValueError(f"bounded_threshold {bt} is below the separation radius {rho}")
        if not self.R_start > bt:
            raise ValueError("R_start must exceed bounded_threshold")
        if self.max_depth < 1 or self.max_offset < 0:
            raise ValueError("max_depth must be >= 1 and max_offset >= 0")

    def threshold(self, rho: float) -> float:
        return self.bounded_threshold if self.bounded_threshold is not None else rho


@dataclass
class Classification:
    fate: str
    itinerary: tuple = ()
    offset: int = 0
    certified_depth: int = 0
    bound: Optional[float] = None
    reason: str = ""
    params: Optional[ClassifyParams] = field(default=None, repr=False)


@dataclass(frozen=True)
class LevelSetVerdict:
    kind: str  # "yes", "no", "undecided"
    n: Optional[int] = None  # certified depth for yes, failing index for no


# ----------------------------------------------------------- chart moduli


def _chart_moduli(f: CompiledMap, v: np.ndarray) -> np.ndarray:
    """``|v|_j`` for regular finite values; shape ``(len(v), nu+1)``."""
    S = f.punctures
    out = np.empty((v.shape[0], S.nu + 1))
    with np.errstate(divide="ignore"):
        out[:, 0] = np.abs(v)
        for j, y in enumerate(S.finite, start=1):
            out[:, j] = 1.0 / np.abs(v - y)
    return out


def _chart_logs(f: CompiledMap, v: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(_chart_moduli(f, v))


def _terminal_logs(f: CompiledMap, prev: np.ndarray, v: np.ndarray, status: np.ndarray):
    """Chart logs and terminal symbol for values that just left the regular range.

    Overflows of an intermediate value get NaN logs and symbol -1.
    """
    S = f.punctures
    full = f.evaluate_full(prev)
    la = full.log_abs
    logs = np.empty((v.shape[0], S.nu + 1))
    sym = np.zeros(v.shape[0], dtype=np.int8)
    over = status == OVERFLOW
    l0 = np.where(np.isnan(la), np.inf, la)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs[:, 0] = np.where(over, l0, np.log(np.abs(v)))
        for j, y in enumerate(S.finite, start=1):
            hit = ~over & (v == y)
            if y == 0:
                near = np.where(np.isnan(la), np.inf, -la)
            else:
                near = np.full(v.shape, np.inf)
            logs[:, j] = np.where(over, -l0, np.where(hit, near, -np.log(np.abs(v - y))))
            sym[hit] = j
    lost = over & full.lost
    logs[lost] = np.nan
    sym[lost] = -1
    return logs, sym


def _shadow_logs(f: CompiledMap, prev: np.ndarray):
    """Chart logs one step past a definite overflow of ``f(prev)``.

    The overflowed value is carried as its complex logarithm, which fixes the
    next log modulus exactly when that is beyond the double range as well.
    Only a step that stays in chart 0 is used: it confirms the terminal chart
    instead of replacing it.  Symbol -1 where the step is not used.
    """
    S = f.punctures
    lam = f.log_abs_beyond(f.log_value_array(prev))
    logs = np.full((prev.shape[0], S.nu + 1), np.nan)
    sym = np.full(prev.shape[0], -1, dtype=np.int8)
    high = lam > EXP_CAP
    logs[high, 0] = lam[high]
    logs[high, 1:] = -lam[high, None]
    sym[high] = 0
    return logs, sym


def _puncture_hits(f: CompiledMap, v: np.ndarray) -> np.ndarray:
    """Chart index of the finite puncture equal to ``v`` (0 when none)."""
    idx = np.zeros(v.shape, dtype=np.int8)
    for j, y in enumerate(f.punctures.finite, start=1):
        idx[v == y] = j
    return idx


# --------------------------------------------------------------- orbits


def iterate_orbit(f: CompiledMap, x: SpherePoint, max_steps: int) -> OrbitRecord:
    S = f.punctures
    x = sphere_point(x)
    if S.index_of(x) is not None:
        raise ValueError(f"{x!r} is a puncture")
    z = np.array([complex(x)])
    rec = OrbitRecord([x], [list(_chart_logs(f, z)[0])])
    for n in range(max_steps):
        v, status = f.evaluate_array(z)
        hit = _puncture_hits(f, v)
        if status[0] == OVERFLOW or (status[0] == UNDERFLOW and hit[0]):
            logs, sym = _terminal_logs(f, z, v, status)
            if sym[0] < 0:
                rec.points.append(INF)
                rec.moduli.append(list(logs[0]))
                rec.termination, rec.terminated_at = INDETERMINATE, n
                return rec
            if status[0] == OVERFLOW:
                rec.points.append(INF)
                rec.termination = OVERFLOWED
            else:
                rec.points.append(complex(v[0]))
                rec.termination = UNDERFLOWED
            rec.moduli.append(list(logs[0]))
            rec.terminated_at, rec.terminal_symbol = n, int(sym[0])
            if status[0] == OVERFLOW and n + 1 < max_steps:
                slogs, ssym = _shadow_logs(f, z)
                if ssym[0] >= 0:
                    rec.shadow_moduli, rec.shadow_symbol = list(slogs[0]), int(ssym[0])
            return rec
        rec.points.append(complex(v[0]))
        rec.moduli.append(list(_chart_logs(f, v)[0]))
        z = v
    return rec


def extract_itinerary(f: CompiledMap, orbit: OrbitRecord, threshold: float) -> list:
    """Dominant chart per orbit point (None below ``threshold``); terminal points map to their chart."""
    S = f.punctures
    out = []
    for n, p in enumerate(orbit.points):
        if orbit.terminated_at is not None and n == orbit.terminated_at + 1:
            out.append(orbit.terminal_symbol)
        else:
            out.append(dominant_symbol(p, S, threshold))
    return out


# ----------------------------------------------------------- level sets


def _compare(orbit_log: float, seq_log: float, known: bool, regular: bool) -> Optional[bool]:
    """One comparison; None means undecidable at this step."""
    if not known:
        return True if seq_log > LOG_OMEGA else None
    if math.isnan(orbit_log):
        return None
    if not regular and math.isinf(seq_log):
        return True
    return orbit_log >= seq_log


def level_set_member(
    f: CompiledMap,
    x: SpherePoint,
    itinerary: Sequence[int],
    offset: int,
    R: float,
    depth: int,
    cache: Optional[SequenceCache] = None,
    n_samples: int = 4096,
    refine_iters: int = 30,
) -> LevelSetVerdict:
    """Is ``|f^(offset+n)(x)|_{e_n} >= R_n`` for ``n <= depth``?"""
    if len(itinerary) <= depth:
        raise ValueError("itinerary prefix must be longer than depth")
    if offset < 0:
        raise ValueError("offset must be non-negative")
    if cache is None:
        cache = SequenceCache(f, R, n_samples, refine_iters)
    elif cache.R != R:
        raise ValueError("sequence cache was built for a different starting radius")
    orbit = iterate_orbit(f, x, offset + depth)
    moduli = list(orbit.moduli)
    end_symbol = orbit.terminal_symbol
    term = orbit.terminated_at + 1 if orbit.terminated_at is not None else None
    if orbit.shadow_moduli is not None:
        moduli.append(orbit.shadow_moduli)
        end_symbol = orbit.shadow_symbol
        term += 1
    last = len(moduli) - 1
    for n in range(depth + 1):
        t = offset + n
        e_n = itinerary[n]
        L = cache.term(tuple(itinerary[: n + 1]))
        if t <= last:
            regular = term is None or t < term
            ok = _compare(moduli[t][e_n], L, True, regular)
        elif e_n == end_symbol:
            ok = _compare(math.nan, L, False, False)
        else:
            ok = None
        if ok is None:
            return LevelSetVerdict("undecided", n)
        if not ok:
            return LevelSetVerdict("no", n)
        if t > last:
            # past the terminal step with the sequence beyond range: all later steps hold
            if all(s == end_symbol for s in itinerary[n:depth + 1]):
                return LevelSetVerdict("yes", depth)
            return LevelSetVerdict("undecided", n + 1)
    return LevelSetVerdict("yes", depth)


# ------------------------------------------------------- batch classifier


@dataclass
class BatchResult:
    fate: np.ndarray  # int8 codes from FATE_CODES
    offset: np.ndarray  # int16
    depth: np.ndarray  # int16
    itinerary: np.ndarray  # int8, (N, max_depth+1), symbols from the offset
    bound: np.ndarray  # float64, largest chart modulus seen on completed orbits
    reason: np.ndarray  # int8 reason codes for undecided points


REASONS = {
    0: "",
    1: "no chart reached R_start within max_offset",
    2: "orbit left the representable range before the sequence did",
    3: "level-set comparison failed at every admissible offset",
    4: "an intermediate overflow left the orbit undetermined",
}


def _orbit_tables(f: CompiledMap, z0: np.ndarray, D: int):
    """Per step: dominant log modulus and its chart; terminal step and chart."""
    N = z0.shape[0]
    maxlog = np.full((N, D + 1), np.nan)
    sym = np.full((N, D + 1), -1, dtype=np.int8)
    term_step = np.full(N, -1, dtype=np.int32)
    term_sym = np.zeros(N, dtype=np.int8)
    bound = np.zeros(N)

    start_hit = _puncture_hits(f, z0)
    live = np.flatnonzero(start_hit == 0)
    at_p = np.flatnonzero(start_hit != 0)
    maxlog[at_p, 0] = np.inf
    sym[at_p, 0] = start_hit[at_p]
    term_step[at_p] = 0
    term_sym[at_p] = start_hit[at_p]

    z = z0[live]
    mods = _chart_moduli(f, z)
    bound[live] = mods.max(axis=1)
    with np.errstate(divide="ignore"):
        maxlog[live, 0] = np.log(bound[live])
    sym[live, 0] = mods.argmax(axis=1)
    for n in range(1, D + 1):
        if live.size == 0:
            break
        v, status = f.evaluate_array(z)
        hit = _puncture_hits(f, v)
        done = (status == OVERFLOW) | ((status == UNDERFLOW) & (hit != 0))
        if done.any():
            di = np.flatnonzero(done)
            tl, ts = _terminal_logs(f, z[di], v[di], status[di])
            pts = live[di]
            maxlog[pts, n] = np.where(ts >= 0, tl[np.arange(di.size), np.maximum(ts, 0)], np.nan)
            sym[pts, n] = ts
            term_step[pts] = n
            term_sym[pts] = ts
            definite = (status[di] == OVERFLOW) & (ts == 0)
            if n < D and definite.any():
                si = np.flatnonzero(definite)
                sl, ss = _shadow_logs(f, z[di[si]])
                ok = ss >= 0
                sp, si = pts[si[ok]], np.flatnonzero(ok)
                maxlog[sp, n + 1] = sl[si, ss[ok]]
                sym[sp, n + 1] = ss[ok]
                term_step[sp] = n + 1
                term_sym[sp] = ss[ok]
            keep = np.flatnonzero(~done)
            live, z, v = live[keep], z[keep], v[keep]
        mods = _chart_moduli(f, v)
        top = mods.max(axis=1)
        with np.errstate(divide="ignore"):
            maxlog[live, n] = np.log(top)
        sym[live, n] = mods.argmax(axis=1)
        bound[live] = np.maximum(bound[live], top)
        z = v
    return maxlog, sym, term_step, term_sym, bound


def classify_batch(
    f: CompiledMap,
    z0,
    params: ClassifyParams,
    cache: Optional[SequenceCache] = None,
) -> BatchResult:
    """Classify many starting points at once; per point identical to :func:`classify`."""
    S = f.punctures
    params.validate(S.rho)
    z0 = np.ascontiguousarray(np.asarray(z0, dtype=complex).ravel())
    N, D = z0.shape[0], params.max_depth
    if cache is None:
        cache = SequenceCache(f, params.R_start, params.n_samples, params.refine_iters)
    maxlog, sym, term_step, term_sym, bound = _orbit_tables(f, z0, D)

    fate = np.zeros(N, dtype=np.int8)
    offset = np.zeros(N, dtype=np.int16)
    depth = np.zeros(N, dtype=np.int16)
    reason = np.zeros(N, dtype=np.int8)
    itin = np.full((N, D + 1), -1, dtype=np.int8)

    completed = term_step < 0
    bounded = completed & (bound < params.threshold(S.rho))
    fate[bounded] = FATE_CODES[BOUNDED]

    # extended symbol table: past the terminal step repeat the terminal chart
    steps = np.arange(D + 1)
    past = (~completed)[:, None] & (steps[None, :] > term_step[:, None])
    ext_sym = np.where(past, term_sym[:, None], sym)
    known = ~past
    regular = known & ~((~completed)[:, None] & (steps[None, :] == term_step[:, None]))
    lost_from = np.where(~completed & (term_sym < 0), term_step, D + 1)

    log_R = math.log(params.R_start)
    pending = ~bounded
    reason[pending] = 1
    for m in range(min(params.max_offset, D) + 1):
        cand = np.flatnonzero(pending & known[:, m] & (maxlog[:, m] >= log_R))
        if cand.size == 0:
            continue
        status = _run_offset(cache, m, D, cand, maxlog, ext_sym, known, regular, lost_from)
        yes = cand[status == 1]
        und = cand[status == 2]
        no = cand[status == 0]
        fate[yes] = FATE_CODES[FAST]
        offset[yes] = m
        depth[yes] = D - m
        reason[yes] = 0
        if yes.size:
            w = D + 1 - m
            itin[yes, :w] = ext_sym[yes, m:]
            itin[yes, w:] = ext_sym[yes, D:D + 1]
        reason[und] = np.where(lost_from[und] <= D, 4, 2)
        reason[no] = 3
        pending[yes] = False
        pending[und] = False
    fate[pending] = FATE_CODES[UNDECIDED]
    reason[fate == FATE_CODES[BOUNDED]] = 0
    return BatchResult(fate, offset, depth, itin, bound, reason)


def _run_offset(cache, m, D, cand, maxlog, ext_sym, known, regular, lost_from) -> np.ndarray:
    """Comparison rounds for offset ``m``: 0 = no, 1 = yes, 2 = undecided."""
    out = np.full(cand.size, -1, dtype=np.int8)
    active = np.arange(cand.size)
    n = 0
    while active.size and m + n <= D:
        t = m + n
        gone = lost_from[cand[active]] <= t
        if gone.any():
            out[active[gone]] = 2
            active = active[~gone]
            if active.size == 0:
                break
        pts = cand[active]
        prefixes = ext_sym[pts, m:t + 1]
        uniq, inv = np.unique(prefixes, axis=0, return_inverse=True)
        terms = np.array([cache.term(tuple(int(s) for s in row)) for row in uniq])
        L = terms[inv.ravel()]
        kn = known[pts, t]
        rg = regular[pts, t]
        ol = maxlog[pts, t]
        beyond = L > LOG_OMEGA
        ok = np.where(kn, np.where(~rg & np.isinf(L), True, ol >= L), beyond)
        undecided = ~kn & ~beyond
        fail = kn & ~ok
        # unknown orbit with the sequence beyond range: every later step holds too
        settled_yes = ~kn & beyond
        out[active[undecided]] = 2
        out[active[fail]] = 0
        out[active[settled_yes]] = 1
        active = active[~(undecided | fail | settled_yes)]
        n += 1
    out[active] = 1
    return out


def classify(f: CompiledMap, x: SpherePoint, params: ClassifyParams,
             cache: Optional[SequenceCache] = None) -> Classification:
    x = sphere_point(x)
    if f.punctures.index_of(x) is not None:
        raise ValueError(f"{x!r} is a puncture")
    res = classify_batch(f, np.array([complex(x)]), params, cache)
    code = int(res.fate[0])
    if code == FATE_CODES[FAST]:
        d = int(res.depth[0])
        return Classification(FAST, tuple(int(s) for s in res.itinerary[0, :d + 1]),
                              int(res.offset[0]), d, params=params)
    if code == FATE_CODES[BOUNDED]:
        return Classification(BOUNDED, bound=float(res.bound[0]), params=params)
    return Classification(UNDECIDED, reason=REASONS[int(res.reason[0])], params=params)
