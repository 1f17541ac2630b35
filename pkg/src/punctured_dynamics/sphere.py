"""Points of the extended plane, puncture sets, generalised moduli and charts.

Finite points are plain Python ``complex`` values; the point at infinity is the
singleton :data:`INF`.  Chart ``j`` sends the puncture ``y_j`` to infinity
(chart 0 is the identity), and the generalised modulus ``|x|_j`` is the
Euclidean modulus read in that chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union


class _Infinity:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()

SpherePoint = Union[complex, _Infinity]


def is_inf(x) -> bool:
    return x is INF


def sphere_point(value) -> SpherePoint:
    """Normalise a number (or INF) into a SpherePoint.

    Non-finite components become INF; NaN is rejected.
    """
    if value is INF:
        return INF
    z = complex(value)
    if math.isnan(z.real) or math.isnan(z.imag):
        raise ValueError("NaN is not a point of the extended plane")
    if math.isinf(z.real) or math.isinf(z.imag):
        return INF
    return z


@dataclass(frozen=True)
class PunctureSet:
    """Finite punctures ``y_1..y_nu``; ``y_0`` is always infinity."""

    finite: tuple
    rho: float = field(init=False, compare=False)

    def __init__(self, finite_punctures: Sequence):
        pts = []
        for y in finite_punctures:
            p = sphere_point(y)
            if p is INF:
                raise ValueError("finite punctures must be finite; infinity is implicit")
            pts.append(p)
        if not pts:
            raise ValueError("at least one finite puncture is required")
        object.__setattr__(self, "finite", tuple(pts))
        object.__setattr__(self, "rho", compute_rho(self))

    @property
    def nu(self) -> int:
        return len(self.finite)

    @property
    def indices(self) -> range:
        return range(self.nu + 1)

    def puncture(self, j: int) -> SpherePoint:
        check_index(j, self)
        return INF if j == 0 else self.finite[j - 1]

    def index_of(self, x: SpherePoint) -> Optional[int]:
        """Chart index of ``x`` if it is a puncture, else None."""
        if x is INF:
            return 0
        for j, y in enumerate(self.finite, start=1):
            if x == y:
                return j
        return None


def check_index(j: int, S: PunctureSet) -> None:
    if not 0 <= j <= S.nu:
        raise ValueError(f"chart index {j} outside 0..{S.nu}")


def compute_rho(S: PunctureSet) -> float:
    """Separation radius: beyond it chart ``j`` sees no puncture but ``y_j``.

    Twice the smallest value that works for the crude bound
    ``max(1, |y_i|, 1/|y_i - y_k|)``.
    """
    m = 1.0
    pts = S.finite
    for y in pts:
        m = max(m, abs(y))
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            gap = abs(pts[a] - pts[b])
            if gap == 0.0:
                raise ValueError(f"punctures {pts[a]} and {pts[b]} coincide")
            m = max(m, 1.0 / gap)
    return 2.0 * m


def generalized_modulus(x: SpherePoint, j: int, S: PunctureSet) -> float:
    check_index(j, S)
    if j == 0:
        return math.inf if x is INF else abs(x)
    if x is INF:
        return 0.0
    d = abs(x - S.finite[j - 1])
    if d == 0.0:
        return math.inf
    return 1.0 / d


def _flip(re: float, im: float) -> tuple:
    return -re, im


def chart_map(x: SpherePoint, j: int, S: PunctureSet) -> SpherePoint:
    """``phi_j(x) = tau((x - y_j) / |x - y_j|^2)`` with ``tau`` negating the first coordinate."""
    check_index(j, S)
    if j == 0:
        return x
    if x is INF:
        return 0j
    y = S.finite[j - 1]
    dr, di = x.real - y.real, x.imag - y.imag
    s = dr * dr + di * di
    if s == 0.0:
        return INF
    if math.isinf(s):
        # |d|^2 overflowed; scale before squaring
        scale = max(abs(dr), abs(di))
        dr, di = dr / scale, di / scale
        s = (dr * dr + di * di) * scale
        re, im = _flip(dr / s, di / s)
        return complex(re, im)
    re, im = _flip(dr / s, di / s)
    return sphere_point(complex(re, im))


def chart_inverse(w: SpherePoint, j: int, S: PunctureSet) -> SpherePoint:
    """Inverse of :func:`chart_map`: ``x = y_j + tau(w) / |w|^2``."""
    check_index(j, S)
    if j == 0:
        return w
    y = S.finite[j - 1]
    if w is INF:
        return y
    wr, wi = _flip(w.real, w.imag)
    s = wr * wr + wi * wi
    if s == 0.0:
        return INF
    if math.isinf(s):
        scale = max(abs(wr), abs(wi))
        wr, wi = wr / scale, wi / scale
        s = (wr * wr + wi * wi) * scale
    return sphere_point(complex(y.real + wr / s, y.imag + wi / s))


def dominant_symbol(x: SpherePoint, S: PunctureSet, threshold: float) -> Optional[int]:
    """Chart index in which ``x`` is at least ``threshold`` large, if any."""
    if threshold < S.rho:
        raise ValueError(f"threshold {threshold} below separation radius {S.rho}")
    best, best_j = -1.0, None
    for j in S.indices:
        m = generalized_modulus(x, j, S)
        if m > best:
            best, best_j = m, j
    if best >= threshold:
        return best_j
    return None
