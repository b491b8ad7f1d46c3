"""Command-line driver: ``heightlab <command> --config cfg.json``.

Every report written here is a pure function of the config file and the
files it references.  Thread counts change wall time only, and reports
carry the config and form hashes for provenance.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .arith import Place, place_set
from .curves import ExclusionPredicate, detect_lines, line_on_surface, lines_report
from .errors import ConfigError, HeightLabError, InsufficientData, NoPairs
from .forms import BUNDLED_FORMS, HypersurfaceSpec, bundled_form, load_form
from .invariants import run_suite
from .repulsion import MAX_SCAN_PAIRS, count_scan_pairs, pair_scan, vojta_gap_check, write_scan_csv
from .search import SearchConfig, count_function, enumerate_points, fit_growth_exponent, manifest, write_points_file

log = logging.getLogger("heightlab")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("enumerate", "count", "lines", "repulsion", "vojta", "verify")


# JSON emission ---------------------------------------------------------------


def _emit(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return json.dumps(str(obj))
        return format(obj, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple)) for x in obj):
            return "[" + ", ".join(_emit(x, indent, level + 1) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(x, indent, level + 1) for x in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(obj: Any) -> str:
    """JSON with floats at 17 significant digits and a stable layout."""
    return _emit(obj, 2, 0) + "\n"


def write_report(path: Path, obj: Any) -> None:
    path.write_text(dumps_report(obj), encoding="utf-8")


# configuration ---------------------------------------------------------------


def _positive_int(value, name) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{name}: expected a positive integer, got {value!r}")
    return value


def _real(value, name) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigError(f"{name}: expected a finite number, got {value!r}")
    return float(value)


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected an object")
    return sec


def _check_keys(sec: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(sec) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


TOP_KEYS = {
    "surface", "bounds", "places", "epsilon_grid", "exclusion", "output_dir", "deterministic",
    "threads", "sieve_primes", "memory_cap", "lines", "repulsion", "verify",
}


@dataclass
class ExperimentConfig:
    surface: HypersurfaceSpec
    bounds: list[int]
    places: tuple[Place, ...]
    epsilon_grid: list[float]
    exclusion: str | None
    output_dir: Path
    base_dir: Path
    config_hash: str
    threads: int = 1
    sieve_primes: tuple[int, ...] | None = None
    memory_cap: int | None = None
    lines_bound: int = 20
    lines_min_points: int = 5
    repulsion_bound: int | None = None
    min_pair_height: float = 0.0
    trend_thresholds: list[float] = field(default_factory=list)
    verify: dict = field(default_factory=dict)

    @property
    def max_bound(self) -> int:
        return self.bounds[-1]

    def search(self, bound: int) -> SearchConfig:
        return SearchConfig(
            bound, self.sieve_primes, thread_partitions=self.threads,
            real_dimension=self.surface.ambient_dim - 1, memory_cap=self.memory_cap,
        )

    def provenance(self) -> dict:
        return {"config_hash": self.config_hash, "spec_hash": self.surface.spec_hash, "version": __version__}


def _load_surface(value, base: Path) -> HypersurfaceSpec:
    if not isinstance(value, str) or not value:
        raise ConfigError("surface: expected a form file path or 'bundled:<name>'")
    if value.startswith("bundled:"):
        name = value.split(":", 1)[1]
        if name not in BUNDLED_FORMS:
            raise ConfigError(f"surface: unknown bundled form {name!r}; choose from {', '.join(BUNDLED_FORMS)}")
        return bundled_form(name)
    path = base / value
    if not path.is_file():
        raise ConfigError(f"surface: file not found: {path}")
    return load_form(path)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a config file; every failure is a ConfigError or FormError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    _check_keys(raw, TOP_KEYS, "config")
    base = path.resolve().parent
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))

    if raw.get("deterministic", True) is not True:
        raise ConfigError("deterministic: runs are always deterministic; the flag cannot be disabled")
    surface = _load_surface(raw.get("surface"), base)

    bounds = raw.get("bounds")
    if not isinstance(bounds, list) or not bounds:
        raise ConfigError("bounds: expected a nonempty list of positive integers")
    bounds = [_positive_int(b, f"bounds[{i}]") for i, b in enumerate(bounds)]
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise ConfigError(f"bounds: must be strictly increasing, got {bounds}")

    try:
        places = place_set(raw.get("places", ["inf"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"places: {exc}") from None

    eps = raw.get("epsilon_grid", [1.0])
    if not isinstance(eps, list) or not eps:
        raise ConfigError("epsilon_grid: expected a nonempty list of positive reals")
    eps = [_real(e, f"epsilon_grid[{i}]") for i, e in enumerate(eps)]
    if any(e <= 0 for e in eps):
        raise ConfigError("epsilon_grid: entries must be positive")

    exclusion = raw.get("exclusion")
    if exclusion is not None:
        if not isinstance(exclusion, str):
            raise ConfigError("exclusion: expected a lines file path, 'detect', or null")
        if exclusion != "detect" and not (base / exclusion).is_file():
            raise ConfigError(f"exclusion: file not found: {base / exclusion}")

    out = raw.get("output_dir", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir: expected a path")

    cfg = ExperimentConfig(
        surface, bounds, places, eps, exclusion, base / out, base,
        hashlib.sha256(canonical.encode()).hexdigest(),
    )
    cfg.threads = _positive_int(raw.get("threads", 1), "threads")
    if raw.get("sieve_primes") is not None:
        sp = raw["sieve_primes"]
        if not isinstance(sp, list):
            raise ConfigError("sieve_primes: expected a list of primes")
        cfg.sieve_primes = tuple(_positive_int(p, f"sieve_primes[{i}]") for i, p in enumerate(sp))
    if raw.get("memory_cap") is not None:
        cfg.memory_cap = _positive_int(raw["memory_cap"], "memory_cap")

    sec = _section(raw, "lines")
    _check_keys(sec, {"bound", "min_points"}, "lines")
    cfg.lines_bound = _positive_int(sec.get("bound", min(20, cfg.max_bound)), "lines.bound")
    cfg.lines_min_points = _positive_int(sec.get("min_points", 5), "lines.min_points")
    if cfg.lines_min_points < 3:
        raise ConfigError("lines.min_points: must be at least 3")

    sec = _section(raw, "repulsion")
    _check_keys(sec, {"bound", "min_pair_height", "trend_thresholds"}, "repulsion")
    if "bound" in sec:
        cfg.repulsion_bound = _positive_int(sec["bound"], "repulsion.bound")
    cfg.min_pair_height = _real(sec.get("min_pair_height", 0.0), "repulsion.min_pair_height")
    thr = sec.get("trend_thresholds", [math.log(10), math.log(100), math.log(1000)])
    if not isinstance(thr, list):
        raise ConfigError("repulsion.trend_thresholds: expected a list of reals")
    cfg.trend_thresholds = [_real(t, f"repulsion.trend_thresholds[{i}]") for i, t in enumerate(thr)]

    sec = _section(raw, "verify")
    _check_keys(sec, {"bound", "brute_bound", "ultrametric_bound", "primes"}, "verify")
    v = {
        "bound": _positive_int(sec.get("bound", 20), "verify.bound"),
        "brute_bound": _positive_int(sec.get("brute_bound", 5), "verify.brute_bound"),
        "ultrametric_bound": _positive_int(sec.get("ultrametric_bound", 5), "verify.ultrametric_bound"),
        "primes": [_positive_int(p, "verify.primes") for p in sec.get("primes", [2, 3, 5])],
    }
    try:
        place_set(v["primes"])
    except ValueError as exc:
        raise ConfigError(f"verify.primes: {exc}") from None
    cfg.verify = v
    cfg.search(cfg.max_bound)  # validates sieve primes and memory cap
    return cfg


# commands --------------------------------------------------------------------


class ScanTooLarge(ConfigError):
    pass


def _exclusion(cfg: ExperimentConfig) -> ExclusionPredicate | None:
    if cfg.exclusion is None:
        return None
    if cfg.exclusion == "detect":
        pts = enumerate_points(cfg.surface, cfg.search(cfg.lines_bound))
        found = detect_lines(pts, cfg.lines_min_points, workers=cfg.threads)
        return ExclusionPredicate(tuple(line for line, _ in found if line_on_surface(line, cfg.surface)))
    with open(cfg.base_dir / cfg.exclusion, encoding="utf-8") as fh:
        try:
            return ExclusionPredicate.from_json(json.load(fh))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"exclusion: malformed lines file: {exc}") from None


def _guard_scan(points, exclusion, allow_large: bool) -> None:
    pairs = count_scan_pairs(points, exclusion)
    if pairs > MAX_SCAN_PAIRS and not allow_large:
        raise ScanTooLarge(
            f"pair scan would visit {pairs} pairs (limit {MAX_SCAN_PAIRS}); "
            "exclude lines, lower the bound, or pass --allow-large-scan"
        )


def _place_tag(v: Place) -> str:
    return str(v)


def cmd_enumerate(cfg: ExperimentConfig, args) -> int:
    search = cfg.search(cfg.max_bound)
    points = enumerate_points(cfg.surface, search)
    total = write_points_file(cfg.output_dir / "points.jsonl", points)
    write_report(cfg.output_dir / "manifest.json", {**cfg.provenance(), **manifest(cfg.surface, search, total)})
    log.info("enumerated %d points with H <= %d", total, cfg.max_bound)
    return EXIT_OK


def _fit(series) -> dict:
    try:
        return {"exponent": fit_growth_exponent(series), "reason": None}
    except InsufficientData as exc:
        return {"exponent": None, "reason": str(exc)}


def cmd_count(cfg: ExperimentConfig, args) -> int:
    points = enumerate_points(cfg.surface, cfg.search(cfg.max_bound))
    exclusion = _exclusion(cfg)
    full = count_function(points, None, cfg.bounds)
    cut = count_function(points, exclusion, cfg.bounds) if exclusion is not None else None
    with open(cfg.output_dir / "count.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["B", "count"] + (["count_excluded"] if cut else []))
        for k, (b, c) in enumerate(full.samples):
            w.writerow([b, c] + ([cut.counts[k]] if cut else []))
    report = {
        **cfg.provenance(),
        "bounds": cfg.bounds,
        "with_exclusion_applied": cut is not None,
        "all_points": {"counts": full.counts, **_fit(full)},
    }
    if cut is not None:
        report["excluded_lines"] = len(exclusion.lines)
        report["after_exclusion"] = {"counts": cut.counts, **_fit(cut)}
    write_report(cfg.output_dir / "count_fit.json", report)
    return EXIT_OK


def cmd_lines(cfg: ExperimentConfig, args) -> int:
    points = enumerate_points(cfg.surface, cfg.search(cfg.lines_bound))
    found = detect_lines(points, cfg.lines_min_points, workers=cfg.threads)
    write_report(
        cfg.output_dir / "lines.json",
        {
            **cfg.provenance(),
            "bound": cfg.lines_bound,
            "min_points": cfg.lines_min_points,
            "points": len(points),
            "lines": lines_report(found, cfg.surface),
        },
    )
    return EXIT_OK


def cmd_repulsion(cfg: ExperimentConfig, args) -> int:
    bound = cfg.repulsion_bound or cfg.max_bound
    points = enumerate_points(cfg.surface, cfg.search(bound))
    exclusion = _exclusion(cfg)
    _guard_scan(points, exclusion, args.allow_large_scan)
    for v in cfg.places:
        tag = _place_tag(v)
        with open(cfg.output_dir / f"repulsion_{tag}.csv", "w", newline="", encoding="utf-8") as fh:
            write_scan_csv(fh, points, v, exclusion, cfg.min_pair_height)
        scan = pair_scan(
            points, v, exclusion, cfg.min_pair_height,
            thresholds=cfg.trend_thresholds, keep_records=False, workers=cfg.threads,
        )
        summary = scan.summary.to_json(points, cfg.surface.ambient_dim - 1)
        write_report(
            cfg.output_dir / f"repulsion_{tag}_summary.json",
            {**cfg.provenance(), "bound": bound, "min_pair_height": cfg.min_pair_height, **summary},
        )
    return EXIT_OK


def _eps_tag(eps: float) -> str:
    # shortest round-trip form keeps file names readable
    return repr(float(eps)).replace(".", "p")


def cmd_vojta(cfg: ExperimentConfig, args) -> int:
    bound = cfg.repulsion_bound or cfg.max_bound
    points = enumerate_points(cfg.surface, cfg.search(bound))
    exclusion = _exclusion(cfg)
    _guard_scan(points, exclusion, args.allow_large_scan)
    for eps in cfg.epsilon_grid:
        body: dict = {**cfg.provenance(), "bound": bound}
        try:
            body.update(vojta_gap_check(points, cfg.surface, eps, cfg.places, exclusion, workers=cfg.threads).to_json())
        except NoPairs as exc:
            body.update({"epsilon": eps, "constant": None, "reason": str(exc)})
        write_report(cfg.output_dir / f"vojta_eps_{_eps_tag(eps)}.json", body)
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    v = cfg.verify
    exclusion = _exclusion(cfg) if cfg.exclusion is not None else None
    results = run_suite(
        cfg.surface,
        bound=v["bound"],
        brute_bound=v["brute_bound"],
        ultrametric_bound=v["ultrametric_bound"],
        primes=v["primes"],
        min_points=cfg.lines_min_points,
        epsilon_grid=cfg.epsilon_grid,
        exclusion=exclusion,
    )
    ok = all(r.passed for r in results)
    write_report(
        cfg.output_dir / "verify.json",
        {**cfg.provenance(), "passed": ok, "checks": [r.to_json() for r in results]},
    )
    for r in results:
        log.info("%-30s %s", r.name, "ok" if r.passed else "FAILED")
    return EXIT_OK if ok else EXIT_VIOLATION


HANDLERS = {
    "enumerate": cmd_enumerate,
    "count": cmd_count,
    "lines": cmd_lines,
    "repulsion": cmd_repulsion,
    "vojta": cmd_vojta,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heightlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"heightlab {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (overrides config)")
    parser.add_argument("--allow-large-scan", action="store_true", help="permit pair scans above the safety limit")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads: must be >= 1")
            cfg.threads = args.threads
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, args)
    except HeightLabError as exc:
        print(f"heightlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
