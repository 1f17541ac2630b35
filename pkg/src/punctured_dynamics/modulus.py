"""Generalised maximum modulus on chart circles and the sequences built from it.

Every modulus is carried as a natural logarithm: sequence terms leave the
double range after two or three steps for the maps of interest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dsl import OMEGA, OVERFLOW, UNDERFLOW, CompiledMap
from .sphere import check_index

LOG_OMEGA = math.log(OMEGA)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_SAMPLES = 4096
DEFAULT_REFINE = 30


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModulusEstimate:
    value_log: float
    argmax: complex
    samples: int
    refinement_depth: int

    @property
    def beyond_range(self) -> bool:
        return math.isinf(self.value_log) and self.value_log > 0


def circle_points(f: CompiledMap, j: int, r: float, theta: np.ndarray) -> np.ndarray:
    """Points ``x`` with ``|x|_j = r`` at chart angles ``theta``."""
    c, s = np.cos(theta), np.sin(theta)
    if j == 0:
        out = np.empty(theta.shape, dtype=complex)
        out.real = r * c
        out.imag = r * s
        return out
    y = f.punctures.finite[j - 1]
    # chart inverse: y + tau(w)/|w|^2 with w = r e^{i theta}
    out = np.empty(theta.shape, dtype=complex)
    out.real = y.real - c / r
    out.imag = y.imag + s / r
    return out


def log_chart_modulus(f: CompiledMap, x: np.ndarray, k: int) -> np.ndarray:
    """``log |f(x)|_k`` per element, using the symbolic log-modulus where it exists.

    An overflow whose log-modulus is unknown came from an intermediate value,
    so ``f(x)`` itself is undetermined; those elements report ``+inf``.
    """
    r = f.evaluate_full(x)
    v, la, lost = r.values, r.log_abs, r.lost
    over = r.status == OVERFLOW
    known = ~np.isnan(la)
    with np.errstate(all="ignore"):
        if k == 0:
            out = np.where(over, np.inf, np.log(np.abs(v)))
            out = np.where(known, la, out)
        else:
            y = f.punctures.finite[k - 1]
            out = np.where(over, -np.inf, -np.log(np.abs(v - y)))
            if y == 0:
                out = np.where(known, -la, out)
            else:
                out = np.where(over & known, -la, out)
    return np.where(lost, np.inf, out)


def _log_mod_at(f: CompiledMap, j: int, k: int, r: float, theta: float) -> float:
    x = circle_points(f, j, r, np.array([theta]))
    return float(log_chart_modulus(f, x, k)[0])


def estimate_max_modulus(
    f: CompiledMap,
    j: int,
    k: int,
    r: float,
    n_samples: int = DEFAULT_SAMPLES,
    refine_iters: int = DEFAULT_REFINE,
) -> ModulusEstimate:
    """Largest ``|f(x)|_k`` over the circle ``|x|_j = r``.

    Equispaced chart angles, then golden-section refinement inside the bracket
    around the best sample.  The result is the best value ever evaluated.
    """
    S = f.punctures
    check_index(j, S)
    check_index(k, S)
    if not r >= S.rho:
        raise ValueError(f"radius {r} is inside the separation radius {S.rho}")
    if n_samples < 64:
        raise ValueError("n_samples must be at least 64")
    step = 2.0 * math.pi / n_samples
    theta = np.arange(n_samples) * step
    x = circle_points(f, j, r, theta)
    vals = log_chart_modulus(f, x, k)
    if not f.has_log_abs:
        _, status = f.evaluate_array(x)
        if np.all(status == UNDERFLOW) and np.all(np.isinf(vals)):
            raise EstimationError("every sample underflowed onto a puncture")
    vals = np.where(np.isnan(vals), -np.inf, vals)
    i = int(np.argmax(vals))
    best, best_t = float(vals[i]), float(theta[i])
    evaluated = n_samples
    depth = 0
    if math.isfinite(best) and refine_iters > 0:
        a, b = best_t - step, best_t + step
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc = _log_mod_at(f, j, k, r, c)
        fd = _log_mod_at(f, j, k, r, d)
        evaluated += 2
        for t, v in ((c, fc), (d, fd)):
            if v > best:
                best, best_t = v, t
        for _ in range(refine_iters):
            depth += 1
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - GOLDEN * (b - a)
                fc = _log_mod_at(f, j, k, r, c)
                t, v = c, fc
            else:
                a, c, fc = c, d, fd
                d = a + GOLDEN * (b - a)
                fd = _log_mod_at(f, j, k, r, d)
                t, v = d, fd
            evaluated += 1
            if v > best:
                best, best_t = v, t
    argmax = complex(circle_points(f, j, r, np.array([best_t]))[0])
    return ModulusEstimate(best, argmax, evaluated, depth)


# ------------------------------------------------------------------ sequences


@dataclass
class MaxModSequence:
    itinerary_prefix: list
    start_log: float
    values_log: list
    truncated_at: Optional[int] = None
    reason: str = ""

    @property
    def strictly_increasing(self) -> bool:
        v = self.values_log
        return all(b > a for a, b in zip(v, v[1:]))


def max_modulus_sequence(
    f: CompiledMap,
    itinerary: Sequence[int],
    R: float,
    depth: int,
    n_samples: int = DEFAULT_SAMPLES,
    refine_iters: int = DEFAULT_REFINE,
) -> MaxModSequence:
    """``L_0 = log R`` and ``L_n = log max{|f(x)|_{e_n} : |x|_{e_{n-1}} = exp(L_{n-1})}``."""
    if len(itinerary) < depth + 1:
        raise ValueError(f"itinerary prefix of length {len(itinerary)} is too short for depth {depth}")
    seq = MaxModSequence(list(itinerary[: depth + 1]), math.log(R), [math.log(R)])
    for n in range(1, depth + 1):
        prev = seq.values_log[-1]
        if prev > LOG_OMEGA:
            seq.truncated_at, seq.reason = n, "radius beyond evaluation range"
            break
        est = estimate_max_modulus(f, itinerary[n - 1], itinerary[n], math.exp(prev), n_samples, refine_iters)
        if est.beyond_range:
            seq.truncated_at, seq.reason = n, "maximum beyond representable range"
            break
        seq.values_log.append(est.value_log)
    return seq


class SequenceCache:
    """Memoised sequence terms keyed by itinerary prefix; ``+inf`` marks beyond range."""

    def __init__(self, f: CompiledMap, R: float, n_samples: int = DEFAULT_SAMPLES,
                 refine_iters: int = DEFAULT_REFINE):
        self.f, self.R = f, R
        self.n_samples, self.refine_iters = n_samples, refine_iters
        self._terms: dict = {}

    def term(self, prefix: tuple) -> float:
        """``L_n`` for ``n = len(prefix) - 1``."""
        hit = self._terms.get(prefix)
        if hit is not None:
            return hit
        if len(prefix) == 1:
            value = math.log(self.R)
        else:
            prev = self.term(prefix[:-1])
            if prev > LOG_OMEGA:
                value = math.inf
            else:
                est = estimate_max_modulus(self.f, prefix[-2], prefix[-1], math.exp(prev),
                                           self.n_samples, self.refine_iters)
                value = est.value_log
        self._terms[prefix] = value
        return value


# -------------------------------------------------------------- thresholds


def _strictly_above_square(log_m: float, log_r: float) -> bool:
    # strictness with a rounding guard: z^2 must not pass on noise
    return log_m - 2.0 * log_r > 1e-9 * max(1.0, abs(log_m))


def escape_threshold(
    f: CompiledMap,
    r_grid: Sequence[float],
    n_samples: int = DEFAULT_SAMPLES,
    refine_iters: int = DEFAULT_REFINE,
) -> Optional[float]:
    """Smallest grid radius from which every grid radius above passes the growth tests.

    The tests, for all chart pairs: ``M > r^2`` and ``log M / log r >= e``.
    Returns None when no grid value qualifies.
    """
    grid = [float(r) for r in r_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("r_grid must be strictly increasing")
    S = f.punctures
    if grid and grid[0] < S.rho:
        raise ValueError(f"r_grid starts inside the separation radius {S.rho}")
    ok = []
    for r in grid:
        lr = math.log(r)
        good = True
        for j in S.indices:
            for k in S.indices:
                lm = estimate_max_modulus(f, j, k, r, n_samples, refine_iters).value_log
                if not (_strictly_above_square(lm, lr) and lm / lr >= math.e):
                    good = False
                    break
            if not good:
                break
        ok.append(good)
    answer = None
    for r, good in zip(reversed(grid), reversed(ok)):
        if not good:
            break
        answer = r
    return answer


@dataclass(frozen=True)
class GrowthEstimate:
    B_hat: float
    alpha_hat: float
    rho0_hat: float
    fit_residual: float
    slopes: tuple = field(default=())


def growth_exponent(
    f: CompiledMap,
    j: int,
    k: int,
    radii: Sequence[float],
    n_samples: int = DEFAULT_SAMPLES,
    refine_iters: int = DEFAULT_REFINE,
) -> GrowthEstimate:
    """Lower envelope of ``log(log M(r)/log M(s)) / log(r/s)`` over consecutive radii."""
    radii = [float(r) for r in radii]
    if len(radii) < 4:
        raise ValueError("at least four radii are required")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    logs = [estimate_max_modulus(f, j, k, r, n_samples, refine_iters).value_log for r in radii]
    if any(not math.isfinite(v) or v <= 0 for v in logs):
        raise EstimationError("log maximum modulus must be finite and positive on every radius")
    xs, ys = [], []
    for (s, ls), (r, lr) in zip(zip(radii, logs), zip(radii[1:], logs[1:])):
        xs.append(math.log(r / s))
        ys.append(math.log(lr / ls))
    slopes = tuple(y / x for x, y in zip(xs, ys))
    xa, ya = np.array(xs), np.array(ys)
    fit = float(xa @ ya / (xa @ xa))
    residual = float(np.sqrt(np.mean((ya - fit * xa) ** 2)))
    alpha = min(r / s for s, r in zip(radii, radii[1:]))
    return GrowthEstimate(min(slopes), alpha, radii[0], residual, slopes)


def growth_exponent_all(f: CompiledMap, radii: Sequence[float], **kw) -> GrowthEstimate:
    """:func:`growth_exponent` minimised over every chart pair."""
    S = f.punctures
    ests = [growth_exponent(f, j, k, radii, **kw) for j in S.indices for k in S.indices]
    return min(ests, key=lambda g: g.B_hat)


def iterated_exp(n: int) -> float:
    """1, e, e^e, e^(e^e); larger ``n`` overflows doubles."""
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    v = 1.0
    for _ in range(n - 1):
        v = math.exp(v)
    return v
