"""Command-line entry point: render, classify, mmseq, verify.

Configs are INI-style text (``[section]`` headers, ``key = value``, ``#``
comments).  Any key can be overridden with ``--section.key value``.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 precondition error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .dsl import ParseError, compile_map
from .modulus import escape_threshold, max_modulus_sequence
from .orbit import BOUNDED, FAST, ClassifyParams, classify
from .raster import (
    PALETTE_VERSION,
    ViewWindow,
    atomic_write,
    classify_grid,
    expand_itinerary,
    fate_grid_bytes,
    palette_colours,
    parse_itinerary,
    ppm_bytes,
)
from .sphere import PunctureSet
from . import verify as vh

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PRECONDITION = 0, 1, 2, 3

FATE_LABELS = {FAST: "FastEscapingCandidate", BOUNDED: "BoundedCandidate", "undecided": "Undecided"}

DEFAULTS = {
    "map": {"expr": "exp(z+1/z)", "punctures": "0"},
    "window": {"center": "0", "width": "6", "height": "6", "cols": "512", "rows": "512"},
    "classify": {"R_start": "3", "max_depth": "32", "bounded_threshold": "", "max_offset": "8",
                 "n_samples": "4096", "refine_iters": "30"},
    "itineraries": {"e1": "(0)*", "e2": "(1)*"},
    "output": {"dir": ".", "name": "render", "formats": "ppm, fate, meta"},
    "run": {"threads": "1", "seed": "7"},
    "verify": {"checks": "En_inequality, boundary_identities, invariance_disjointness, mmseq_lemma, "
                         "remark_counterexample",
               "power": "2", "tolerance_px": "4", "n_points": "1000",
               "En_R": "10", "En_n_max": "2", "grid": "2:50"},
}


class ConfigError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


def parse_complex(text: str) -> complex:
    t = text.strip().replace(" ", "").replace("i", "j")
    try:
        return complex(t)
    except ValueError:
        raise ConfigError(f"not a complex literal: {text!r}") from None


def _parse_grid(text: str) -> list:
    text = text.strip()
    if ":" in text:
        lo, hi = (float(x) for x in text.split(":"))
        return [float(r) for r in range(int(math.ceil(lo)), int(math.floor(hi)) + 1)]
    return [float(x) for x in text.split(",") if x.strip()]


@dataclass
class RunConfig:
    map: str
    punctures: list
    window: ViewWindow
    classify: ClassifyParams
    itineraries: dict
    output_dir: str
    output_name: str
    formats: list
    threads: int
    seed: int
    verify: dict = field(default_factory=dict)
    text: str = ""

    def puncture_set(self) -> PunctureSet:
        return PunctureSet(self.punctures)

    def compiled(self):
        return compile_map(self.map, self.puncture_set())


def load_config(text: str = "", overrides: Optional[dict] = None) -> RunConfig:
    """Parse config text, apply ``{(section, key): value}`` overrides, validate cross-field rules."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for (section, key), value in (overrides or {}).items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section {section!r}")
        cp[section][key] = value
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section {section!r}")
        for key in cp[section]:
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    try:
        m, w, c, o, r = cp["map"], cp["window"], cp["classify"], cp["output"], cp["run"]
        punctures = [parse_complex(p) for p in m["punctures"].split(",") if p.strip()]
        window = ViewWindow(parse_complex(w["center"]), float(w["width"]), float(w["height"]),
                            int(w["cols"]), int(w["rows"]))
        bt = c["bounded_threshold"].strip()
        params = ClassifyParams(float(c["R_start"]), int(c["max_depth"]), float(bt) if bt else None,
                                int(c["max_offset"]), int(c["n_samples"]), int(c["refine_iters"]))
        threads_text = r["threads"].strip().lower()
        threads = (os.cpu_count() or 1) if threads_text == "auto" else int(threads_text)
        itineraries = dict(cp["itineraries"])
        for lit in itineraries.values():
            parse_itinerary(lit)
        cfg = RunConfig(
            map=m["expr"].strip(),
            punctures=punctures,
            window=window,
            classify=params,
            itineraries=itineraries,
            output_dir=o["dir"].strip(),
            output_name=o["name"].strip(),
            formats=[x.strip() for x in o["formats"].split(",") if x.strip()],
            threads=max(1, threads),
            seed=int(r["seed"]),
            verify=dict(cp["verify"]),
            text=text,
        )
        S = cfg.puncture_set()
        params.validate(S.rho)
        compile_map(cfg.map, S)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    bad = set(cfg.formats) - {"ppm", "fate", "meta"}
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}")
    return cfg


def effective_config_text(cfg: RunConfig, overrides: dict) -> str:
    """Config text plus overrides; thread count and output directory cannot change the output."""
    lines = [cfg.text.rstrip()]
    kept = {k: v for k, v in overrides.items() if k not in (("run", "threads"), ("output", "dir"))}
    if kept:
        lines.append("# overrides")
        lines += [f"# --{s}.{k} {v}" for (s, k), v in sorted(kept.items())]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- commands


def cmd_render(cfg: RunConfig, overrides: dict, out=None) -> int:
    out = out or sys.stdout
    if not os.path.isdir(cfg.output_dir):
        raise ConfigError(f"output directory {cfg.output_dir!r} does not exist")
    f = cfg.compiled()
    raster = classify_grid(f, cfg.window, cfg.classify, cfg.threads)
    base = os.path.join(cfg.output_dir, cfg.output_name)
    files = {}
    config_text = effective_config_text(cfg, overrides)
    if "ppm" in cfg.formats:
        digest = hashlib.sha256(config_text.encode("utf-8")).hexdigest()
        notes = [f"punctured_dynamics {__version__}", f"config-sha256 {digest}", f"map {f.text}"]
        files[base + ".ppm"] = ppm_bytes(palette_colours(raster), notes)
    if "fate" in cfg.formats:
        files[base + ".fate"] = fate_grid_bytes(raster)
    if "meta" in cfg.formats:
        w, p = cfg.window, cfg.classify
        meta = [
            f"tool = punctured_dynamics {__version__}",
            f"map = {f.text}",
            f"punctures = {', '.join(repr(y) for y in f.punctures.finite)}",
            f"window = center {w.center!r} width {w.width!r} height {w.height!r} cols {w.cols} rows {w.rows}",
            f"classify = R_start {p.R_start!r} max_depth {p.max_depth} bounded_threshold {p.bounded_threshold!r}"
            f" max_offset {p.max_offset} n_samples {p.n_samples} refine_iters {p.refine_iters}",
            f"palette_version = {PALETTE_VERSION}",
            "[config]",
            config_text,
        ]
        files[base + ".meta.txt"] = "\n".join(meta).encode("utf-8")
    # everything is in memory before the first write
    for path, data in files.items():
        atomic_write(path, data)
        print(path, file=out)
    return EXIT_OK


def cmd_classify(cfg: RunConfig, point: complex, out=None) -> int:
    out = out or sys.stdout
    f = cfg.compiled()
    if f.punctures.index_of(point) is not None:
        raise PreconditionError(f"point {point!r} is a puncture")
    c = classify(f, point, cfg.classify)
    fields = [f"point={point!r}", f"fate={FATE_LABELS[c.fate]}"]
    if c.fate == FAST:
        fields += ["itinerary=" + ",".join(map(str, c.itinerary)), f"offset={c.offset}",
                   f"depth={c.certified_depth}"]
    elif c.fate == BOUNDED:
        fields.append(f"L={c.bound:.17g}")
    else:
        fields.append(f"reason={c.reason!r}")
    print(" ".join(fields), file=out)
    return EXIT_OK


def cmd_mmseq(cfg: RunConfig, itinerary: str, R: float, depth: int, out=None) -> int:
    out = out or sys.stdout
    f = cfg.compiled()
    p = cfg.classify
    prefix, cycle = parse_itinerary(itinerary)
    grid = [r for r in _parse_grid(cfg.verify["grid"]) if r >= f.punctures.rho]
    R_f = escape_threshold(f, grid, p.n_samples, p.refine_iters)
    if R_f is None:
        raise PreconditionError("no radius on the grid passes the growth tests; R(f) surrogate undefined")
    if R < R_f:
        raise PreconditionError(f"R = {R} is below the R(f) surrogate {R_f}")
    e = expand_itinerary(prefix, cycle, depth + 1)
    seq = max_modulus_sequence(f, e, R, depth, p.n_samples, p.refine_iters)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["n", "e_n", "log_R_n", "truncated"])
    for n in range(depth + 1):
        if n < len(seq.values_log):
            wr.writerow([n, e[n], repr(seq.values_log[n]), 0])
        else:
            wr.writerow([n, e[n], "", 1])
    out.write(buf.getvalue())
    return EXIT_OK


def build_checks(cfg: RunConfig) -> list:
    names = [n.strip() for n in cfg.verify["checks"].split(",") if n.strip()]
    unknown = [n for n in names if n not in vh.CHECKS]
    if unknown:
        raise ConfigError(f"unknown check names {unknown}; known: {sorted(vh.CHECKS)}")
    f = cfg.compiled()
    v = cfg.verify
    grid = [r for r in _parse_grid(v["grid"]) if r >= f.punctures.rho]
    p, its = cfg.classify, cfg.itineraries
    jobs = {
        "mmseq_lemma": lambda: vh.verify_mmseq_lemma(f, grid, n_samples=p.n_samples,
                                                     refine_iters=p.refine_iters),
        "En_inequality": lambda: vh.verify_En_inequality(f, its.get("e1", "(0)*"), float(v["En_R"]),
                                                         int(v["En_n_max"]), n_samples=p.n_samples,
                                                         refine_iters=p.refine_iters),
        "remark_counterexample": vh.verify_remark_counterexample,
        "boundary_identities": lambda: vh.verify_boundary_identities(
            f, cfg.window, its.get("e1", "(0)*"), its.get("e2", "(1)*"), int(v["power"]), p,
            float(v["tolerance_px"]), cfg.threads),
        "invariance_disjointness": lambda: vh.verify_invariance_and_disjointness(
            f, int(v["n_points"]), cfg.seed, cfg.window, p, grid=grid),
    }
    return [(n, jobs[n]) for n in names]


def cmd_verify(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    jobs = build_checks(cfg)
    reports = vh.run_suite(jobs, cfg.threads)
    for rep in reports:
        print(rep.to_record(), file=out)
    return vh.suite_exit_code(reports)


# ------------------------------------------------------------------- main


def _split_overrides(argv: list) -> tuple:
    """Pull ``--section.key value`` / ``--section.key=value`` pairs out of argv."""
    rest, overrides = [], {}
    i = 0
    while i < len(argv):
        a = argv[i]
        if a.startswith("--") and "." in a.split("=", 1)[0]:
            name, eq, value = a[2:].partition("=")
            if not eq:
                if i + 1 >= len(argv):
                    raise ConfigError(f"missing value for {a}")
                i += 1
                value = argv[i]
            section, key = name.split(".", 1)
            overrides[(section, key)] = value
        else:
            rest.append(a)
        i += 1
    return rest, overrides


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="punctured-dynamics", description=__doc__.splitlines()[0],
                                 epilog="Any config key can be overridden with --section.key VALUE.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", nargs="?", help="config file (defaults apply when omitted)")
        return p

    with_config(sub.add_parser("render", help="classify a window and write PPM, fate grid and metadata"))
    c = with_config(sub.add_parser("classify", help="classify one point"))
    c.add_argument("--point", required=True, help="complex literal, e.g. 30 or 1+2i")
    m = with_config(sub.add_parser("mmseq", help="maximum modulus sequence as CSV"))
    m.add_argument("--itinerary", default="(0)*")
    m.add_argument("--R", type=float, required=True)
    m.add_argument("--depth", type=int, default=4)
    m.add_argument("--out", help="CSV path (stdout when omitted)")
    with_config(sub.add_parser("verify", help="run the verification suite"))
    return ap


def main(argv: Optional[list] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        argv, overrides = _split_overrides(argv)
        try:
            args = ap.parse_args(argv)
        except SystemExit as exc:
            return EXIT_USAGE if exc.code else EXIT_OK
        text = ""
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        cfg = load_config(text, overrides)
        if args.command == "render":
            return cmd_render(cfg, overrides)
        if args.command == "classify":
            return cmd_classify(cfg, parse_complex(args.point))
        if args.command == "mmseq":
            if args.depth < 0:
                raise ConfigError("depth must be non-negative")
            if args.out:
                if not os.path.isdir(os.path.dirname(os.path.abspath(args.out))):
                    raise ConfigError(f"output directory for {args.out!r} does not exist")
                buf = io.StringIO()
                code = cmd_mmseq(cfg, args.itinerary, args.R, args.depth, buf)
                atomic_write(args.out, buf.getvalue().encode("utf-8"))
                return code
            return cmd_mmseq(cfg, args.itinerary, args.R, args.depth)
        return cmd_verify(cfg)
    except PreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ConfigError, ParseError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
