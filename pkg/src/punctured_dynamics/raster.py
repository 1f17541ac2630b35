"""Fate rasters over a view window, their boundaries, components and distances."""

from __future__ import annotations

import hashlib
import os
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .dsl import CompiledMap
from .modulus import SequenceCache
from .orbit import FAST, FATE_CODES, PREFIX_LEN, ClassifyParams, classify_batch

TILE = 64
CELL_DTYPE = np.dtype([("fate", "u1"), ("offset", "u1"), ("depth", "<u2"), ("prefix", "<u8")])
FATE_MAGIC = b"PDFATE\x00\x01"
PALETTE_VERSION = "1"
_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class ViewWindow:
    center: complex
    width: float
    height: float
    cols: int
    rows: int

    def __post_init__(self):
        if self.cols < 2 or self.rows < 2:
            raise ValueError("cols and rows must be at least 2")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("width and height must be positive")

    def xs(self) -> np.ndarray:
        c = complex(self.center)
        return c.real - self.width / 2 + (np.arange(self.cols) + 0.5) * (self.width / self.cols)

    def ys(self) -> np.ndarray:
        # row 0 is the top edge
        c = complex(self.center)
        return c.imag + self.height / 2 - (np.arange(self.rows) + 0.5) * (self.height / self.rows)

    def pixel_center(self, col: int, row: int) -> complex:
        return complex(self.xs()[col], self.ys()[row])

    def grid(self) -> np.ndarray:
        out = np.empty((self.rows, self.cols), dtype=complex)
        out.real = self.xs()[None, :]
        out.imag = self.ys()[:, None]
        return out


@dataclass
class ClassificationRaster:
    window: ViewWindow
    cells: np.ndarray  # (rows, cols) of CELL_DTYPE
    params: ClassifyParams
    map_text: str
    nu: int

    def fate_codes(self) -> np.ndarray:
        return self.cells["fate"]


@dataclass
class BoundaryRaster:
    window: ViewWindow
    cells: np.ndarray  # bool (rows, cols)


@dataclass
class ComponentLabeling:
    labels: np.ndarray
    counts: list  # pixels per component, index i -> label i+1
    touches: list  # set of "frame" / ("puncture", j) per component


# ------------------------------------------------------------ itineraries


def pack_prefix(itin: np.ndarray, nu: int) -> np.ndarray:
    """16-symbol prefix per row: 4-bit packing when ``nu <= 14``, else a 64-bit digest."""
    block = itin[:, :PREFIX_LEN]
    if block.shape[1] < PREFIX_LEN:
        pad = np.repeat(block[:, -1:], PREFIX_LEN - block.shape[1], axis=1)
        block = np.concatenate([block, pad], axis=1)
    if nu <= 14:
        sym = np.where(block < 0, 15, block).astype(np.uint64)
        shifts = (np.arange(PREFIX_LEN, dtype=np.uint64) * np.uint64(4))[None, :]
        return np.bitwise_or.reduce(sym << shifts, axis=1)
    out = np.empty(block.shape[0], dtype=np.uint64)
    for i, row in enumerate(block.astype(np.int16)):
        out[i] = int.from_bytes(hashlib.blake2b(row.tobytes(), digest_size=8).digest(), "little")
    return out


def unpack_prefix(code: int) -> tuple:
    code = int(code)
    return tuple((code >> (4 * i)) & 0xF for i in range(PREFIX_LEN))


def parse_itinerary(text: str) -> tuple:
    """``prefix(cycle)*`` -> ``(prefix, cycle)``; symbols are digits, optionally comma separated."""
    text = text.strip().replace(" ", "")
    if "(" in text:
        if not text.endswith(")*"):
            raise ValueError(f"bad itinerary literal {text!r}: expected prefix(cycle)*")
        head, cyc = text[:-2].split("(", 1)
    else:
        head, cyc = "", text
    def syms(s):
        if not s:
            return ()
        s = s.strip(",")
        parts = s.split(",") if "," in s else list(s)
        if not all(p.isdigit() for p in parts):
            raise ValueError(f"bad itinerary symbols {s!r}")
        return tuple(int(p) for p in parts)
    prefix, cycle = syms(head), syms(cyc)
    if not cycle:
        raise ValueError("itinerary needs a non-empty cycle")
    return prefix, cycle


def expand_itinerary(prefix: Sequence[int], cycle: Sequence[int], length: int) -> list:
    out = list(prefix[:length])
    while len(out) < length:
        out.append(cycle[(len(out) - len(prefix)) % len(cycle)])
    return out


def downsample_itinerary(prefix, cycle, p: int) -> tuple:
    """Every ``p``-th symbol of ``prefix(cycle)*`` as a new ``(prefix, cycle)``."""
    n_head = -(-len(prefix) // p) * p
    cyc_len = len(cycle) * p
    seq = expand_itinerary(prefix, cycle, n_head + cyc_len)
    head = tuple(seq[0:n_head:p])
    tail = tuple(seq[n_head:n_head + cyc_len:p])
    # reduce a repeated cycle to its primitive period
    for d in range(1, len(tail) + 1):
        if len(tail) % d == 0 and tail == tail[:d] * (len(tail) // d):
            tail = tail[:d]
            break
    return head, tail


def prefix_matches(prefix: Sequence[int], cycle: Sequence[int]) -> bool:
    """Does the second half of a stored 16-symbol prefix follow ``cycle`` periodically?"""
    tail = list(prefix[PREFIX_LEN // 2:])
    c = len(cycle)
    return any(all(tail[i] == cycle[(i + s) % c] for i in range(len(tail))) for s in range(c))


# -------------------------------------------------------------- selectors


def fast_escaping_selector(itinerary: str) -> Callable[[ClassificationRaster], np.ndarray]:
    """Cells that are fast-escaping candidates with itinerary equivalent to the literal."""
    _, cycle = parse_itinerary(itinerary)

    def select(raster: ClassificationRaster) -> np.ndarray:
        if raster.nu > 14:
            raise ValueError("itinerary equivalence needs packed prefixes (nu <= 14)")
        cells = raster.cells
        fast = cells["fate"] == FATE_CODES[FAST]
        codes = np.unique(cells["prefix"][fast])
        good = [c for c in codes if prefix_matches(unpack_prefix(c), cycle)]
        return fast & np.isin(cells["prefix"], np.array(good, dtype=np.uint64))
    return select


def fate_selector(fate: str) -> Callable[[ClassificationRaster], np.ndarray]:
    code = FATE_CODES[fate]
    return lambda raster: raster.cells["fate"] == code


# ---------------------------------------------------------- classification


def classify_grid(f: CompiledMap, window: ViewWindow, params: ClassifyParams,
                  threads: int = 1, cache: Optional[SequenceCache] = None) -> ClassificationRaster:
    """Classify every cell centre; the result does not depend on ``threads``."""
    params.validate(f.punctures.rho)
    if cache is None:
        cache = _LockedCache(f, params.R_start, params.n_samples, params.refine_iters)
    pts = window.grid()
    cells = np.zeros((window.rows, window.cols), dtype=CELL_DTYPE)
    tiles = [(r, c) for r in range(0, window.rows, TILE) for c in range(0, window.cols, TILE)]
    nu = f.punctures.nu

    def work(tile):
        r, c = tile
        block = pts[r:r + TILE, c:c + TILE]
        res = classify_batch(f, block.ravel(), params, cache)
        out = np.zeros(block.shape, dtype=CELL_DTYPE)
        out["fate"] = res.fate.reshape(block.shape)
        out["offset"] = res.offset.reshape(block.shape)
        out["depth"] = res.depth.reshape(block.shape)
        fast = res.fate == FATE_CODES[FAST]
        prefix = np.zeros(res.fate.shape, dtype=np.uint64)
        if fast.any():
            prefix[fast] = pack_prefix(res.itinerary[fast], nu)
        out["prefix"] = prefix.reshape(block.shape)
        cells[r:r + TILE, c:c + TILE] = out

    if threads <= 1:
        for t in tiles:
            work(t)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, tiles))
    return ClassificationRaster(window, cells, params, f.text if f.power == 1 else f"({f.text})^{f.power}", nu)


class _LockedCache(SequenceCache):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self._lock = threading.RLock()

    def term(self, prefix: tuple) -> float:
        with self._lock:
            return super().term(prefix)


# ------------------------------------------------------- boundaries & sets


def _neighbour_differs(values: np.ndarray) -> np.ndarray:
    out = np.zeros(values.shape, dtype=bool)
    dv = values[1:, :] != values[:-1, :]
    out[1:, :] |= dv
    out[:-1, :] |= dv
    dh = values[:, 1:] != values[:, :-1]
    out[:, 1:] |= dh
    out[:, :-1] |= dh
    return out


def extract_boundary(raster: ClassificationRaster, selector=None) -> BoundaryRaster:
    """Selected cells with an unselected 4-neighbour.

    Without a selector, every cell whose (fate, prefix) code differs from a
    4-neighbour is marked.
    """
    if selector is None:
        cells = raster.cells
        code = cells["prefix"].astype(np.uint64) * np.uint64(4) + cells["fate"].astype(np.uint64)
        return BoundaryRaster(raster.window, _neighbour_differs(code))
    mask = np.asarray(selector(raster), dtype=bool)
    return BoundaryRaster(raster.window, boundary_of_mask(mask))


def boundary_of_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    outside = np.zeros(mask.shape, dtype=bool)
    outside[1:, :] |= ~mask[:-1, :]
    outside[:-1, :] |= ~mask[1:, :]
    outside[:, 1:] |= ~mask[:, :-1]
    outside[:, :-1] |= ~mask[:, 1:]
    return mask & outside


def puncture_disks(window: ViewWindow, punctures) -> dict:
    """Pixels whose centre lies where ``|x|_j >= rho`` for each chart ``j``."""
    g = window.grid()
    rho = punctures.rho
    out = {0: np.abs(g) >= rho}
    with np.errstate(divide="ignore"):
        for j, y in enumerate(punctures.finite, start=1):
            out[j] = 1.0 / np.abs(g - y) >= rho
    return out


def label_components(raster: ClassificationRaster, selector, punctures) -> ComponentLabeling:
    mask = np.asarray(selector(raster), dtype=bool)
    return label_mask(mask, raster.window, punctures)


def label_mask(mask: np.ndarray, window: ViewWindow, punctures=None) -> ComponentLabeling:
    labels, n = ndimage.label(mask, structure=_FOUR)
    counts = np.bincount(labels.ravel(), minlength=n + 1)[1:].tolist()
    frame = np.zeros(mask.shape, dtype=bool)
    frame[0, :] = frame[-1, :] = frame[:, 0] = frame[:, -1] = True
    touch_sets = [set() for _ in range(n)]
    for lab in np.unique(labels[frame & mask]):
        touch_sets[lab - 1].add("frame")
    if punctures is not None:
        for j, disk in puncture_disks(window, punctures).items():
            for lab in np.unique(labels[disk & mask]):
                touch_sets[lab - 1].add(("puncture", j))
    return ComponentLabeling(labels, counts, touch_sets)


def raster_distance(a: BoundaryRaster, b: BoundaryRaster) -> tuple:
    """(symmetric Hausdorff distance in pixels, Jaccard index) of the set cells."""
    A, B = np.asarray(a.cells, dtype=bool), np.asarray(b.cells, dtype=bool)
    if A.shape != B.shape:
        raise ValueError(f"raster shapes differ: {A.shape} vs {B.shape}")
    na, nb = A.any(), B.any()
    if not na and not nb:
        return 0.0, 1.0
    if na != nb:
        return float("inf"), 0.0
    to_b = ndimage.distance_transform_edt(~B)
    to_a = ndimage.distance_transform_edt(~A)
    h = max(float(to_b[A].max()), float(to_a[B].max()))
    jac = float((A & B).sum()) / float((A | B).sum())
    return h, jac


# ---------------------------------------------------------------- file I/O


PALETTE = {
    "undecided": (128, 128, 128),
    "bounded": (16, 24, 96),
    "background": (0, 0, 0),
}
# fast-escaping colour by eventual chart, darkened with the offset
_CHART_COLOURS = [(250, 200, 60), (60, 200, 240), (230, 90, 200), (120, 230, 110), (240, 120, 70)]


def palette_colours(raster: ClassificationRaster) -> np.ndarray:
    cells = raster.cells
    img = np.zeros(cells.shape + (3,), dtype=np.uint8)
    fate = cells["fate"]
    img[fate == FATE_CODES["undecided"]] = PALETTE["undecided"]
    img[fate == FATE_CODES["bounded"]] = PALETTE["bounded"]
    fast = fate == FATE_CODES[FAST]
    if fast.any():
        if raster.nu <= 14:
            eventual = ((cells["prefix"] >> np.uint64(4 * (PREFIX_LEN - 1))) & np.uint64(0xF)).astype(int)
        else:
            eventual = (cells["prefix"] % np.uint64(len(_CHART_COLOURS))).astype(int)
        base = np.array(_CHART_COLOURS)[eventual % len(_CHART_COLOURS)]
        shade = 1.0 / (1.0 + 0.25 * cells["offset"].astype(float))
        img[fast] = (base[fast] * shade[fast][:, None]).astype(np.uint8)
    return img


def ppm_bytes(img: np.ndarray, comments: Sequence[str] = ()) -> bytes:
    """Binary PPM; ``comments`` become ``#`` header lines."""
    rows, cols, _ = img.shape
    head = b"P6\n"
    for c in comments:
        head += b"# " + c.replace("\n", " ").encode("utf-8") + b"\n"
    return head + b"%d %d\n255\n" % (cols, rows) + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def fate_grid_bytes(raster: ClassificationRaster) -> bytes:
    """Magic, then little-endian u32 cols, rows, record size, nu; then row-major records."""
    w = raster.window
    head = FATE_MAGIC + struct.pack("<IIII", w.cols, w.rows, CELL_DTYPE.itemsize, raster.nu)
    return head + np.ascontiguousarray(raster.cells).tobytes()


def read_fate_grid(data: bytes) -> tuple:
    """Inverse of :func:`fate_grid_bytes`: ``(cells, nu)``."""
    if data[:8] != FATE_MAGIC:
        raise ValueError("not a fate grid")
    cols, rows, size, nu = struct.unpack_from("<IIII", data, 8)
    if size != CELL_DTYPE.itemsize:
        raise ValueError(f"unexpected record size {size}")
    cells = np.frombuffer(data, dtype=CELL_DTYPE, offset=24, count=cols * rows).reshape(rows, cols)
    return cells.copy(), nu


def atomic_write(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"output directory {directory} does not exist")
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
