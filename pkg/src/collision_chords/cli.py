"""Command-line batch runner: ``collision-chords <mode> [--config PATH] [--out DIR] [--seed N] [--threads N]``.

Configuration files are ``key = value`` lines (``#`` starts a comment); ``--set
key=value`` overrides single keys.  Every run writes its tables, a
``manifest.json`` (config echo, versions, wall time, sha256 checksums) and a
``summary.txt`` into one directory.  The default output root is taken from the
``COLLISION_CHORDS_OUT`` environment variable, else ``./runs``.

Exit codes: 0 success, 1 failed acceptance criteria (``verify``), 2 configuration
error, 3 numerical failure, 4 partial results, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, acceptance, chords, indices, kepler_core, liouville_toy, openbook, specseq
from .flow import DEFAULT_TOL, BindingError, HorizonExceeded, IntegratorConfig, StepFailure, integrate
from .tables import read_table, write_table

ENV_OUT = "COLLISION_CHORDS_OUT"
MODES = ("regularize", "flow", "return-map", "chords", "indices", "specseq", "toy", "verify")

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


class PartialResults(RuntimeError):
    def __init__(self, message: str, items: list):
        super().__init__(message)
        self.items = items


# key -> (parser, default)
def _grid(text: str) -> tuple[int, int]:
    parts = text.replace("x", ",").replace("X", ",").split(",")
    if len(parts) != 2:
        raise ValueError("grid must look like RINGSxANGLES")
    return int(parts[0]), int(parts[1])


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


KEYS = {
    "c": (float, -2.0),
    "mu": (float, 0.0),
    "law": (str, "kepler"),
    "n_points": (int, 100),
    "duration": (float, 10.0),
    "tol_rel": (float, DEFAULT_TOL),
    "tol_abs": (float, DEFAULT_TOL),
    "max_time": (float, 100.0),
    "grid": (_grid, (8, 16)),
    "max_order": (int, 8),
    "max_period": (int, 0),
    "map_mode": (str, "closed_form"),
    "tol": (float, chords.CHORD_TOL),
    "planar_tol": (float, chords.PLANAR_TOL),
    "with_action": (_bool, True),
    "t_max": (float, 50.0),
    "n_arcs": (int, 25),
    "complex": (str, ""),
    "actions": (_floats, []),
    "widths": (_floats, []),
    "profile": (_floats, [0.0, 0.0, math.pi / 2, 2.0]),
    "chop": (float, 2.25),
    "quick": (_bool, False),
    "criteria": (lambda s: [int(v) for v in _floats(s)], list(range(1, 11))),
}

TOLERANCE_KEYS = ("tol_rel", "tol_abs", "tol", "planar_tol")

SAMPLE_COMPLEX = "gen x 0 1.0\ngen y 1 0.0\nd x y\n"


@dataclass
class RunConfig:
    mode: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: Path | None = None
    threads: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        for k in TOLERANCE_KEYS:
            if not self.params[k] > 0:
                raise ConfigError(f"{k} must be positive, got {self.params[k]}")
        if self.params["mu"] != 0.0 and self.mode in ("flow", "return-map", "chords", "indices"):
            raise ConfigError("only the rotating Kepler problem (mu = 0) is supported in this mode")
        if self.mode in ("flow", "return-map", "chords", "indices") and not self.params["c"] < kepler_core.OPEN_BOOK_C_MAX:
            raise ConfigError(f"c = {self.params['c']} is not below -3/2: the open book is not valid (mu = 0)")
        if self.params["law"] not in openbook.PERIOD_LAWS:
            raise ConfigError(f"law must be one of {openbook.PERIOD_LAWS}")
        if self.params["map_mode"] not in ("closed_form", "numeric"):
            raise ConfigError("map_mode must be closed_form or numeric")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.params["max_order"] < 1:
            raise ConfigError("max_order must be at least 1")

    def echo(self) -> dict:
        d = asdict(self)
        d["output_dir"] = str(self.output_dir)
        return d


def parse_config_text(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_params(raw: dict) -> dict:
    params = {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in KEYS.items()}
    for key, value in raw.items():
        if key not in KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        try:
            params[key] = KEYS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return params


def _cfg(p: dict) -> IntegratorConfig:
    return IntegratorConfig(tol_rel=p["tol_rel"], tol_abs=p["tol_abs"], max_time=p["max_time"])


# --- modes ---

def run_regularize(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    params = kepler_core.ProblemParams(p["c"], p["mu"])
    rng = np.random.default_rng(cfg.seed)
    rows, worst_q, worst_rt = [], 0.0, 0.0
    for s in kepler_core.random_states_on_level(rng, params, p["n_points"]):
        pt = kepler_core.moser_map(s, params)
        back = kepler_core.inverse_moser_map(pt, params)
        rt = float(np.max(np.abs(np.concatenate([back.q - s.q, back.p - s.p]))))
        q = kepler_core.regularized_hamiltonian(pt, params) if p["mu"] == 0 else float("nan")
        worst_q = max(worst_q, abs(q - 0.5)) if p["mu"] == 0 else worst_q
        worst_rt = max(worst_rt, rt)
        rows.append([*s.q, *s.p, kepler_core.hamiltonian_unregularized(s, params), *pt.xi, *pt.eta, q, rt])
    header = ["q1", "q2", "q3", "p1", "p2", "p3", "H"] + [f"xi{i}" for i in range(4)] + \
             [f"eta{i}" for i in range(4)] + ["Q", "roundtrip_error"]
    write_table(out / "regularize.csv", header, rows)
    return {"max |Q - 1/2|": worst_q, "max round-trip error": worst_rt, "states": len(rows)}


def run_flow(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    params = kepler_core.ProblemParams(p["c"])
    x = openbook.random_page_points(np.random.default_rng(cfg.seed), p["c"], 1)[0]
    traj = integrate(x.point, params, _cfg(p), duration=p["duration"])
    traj.export(out / "trajectory.csv")
    prof = openbook.transversality_profile(traj)
    return {"samples": len(traj), "energy drift": traj.energy_drift(),
            "constraint drift": traj.constraint_drift(), "min dtheta/dt": prof.minimum}


def _return_worker(args):
    arr, c, tol_rel, tol_abs, max_time = args
    params = kepler_core.ProblemParams(c)
    x = openbook.PagePoint(kepler_core.SphereCotangentPoint.from_array(arr), c)
    try:
        rec = openbook.first_return(x, params, IntegratorConfig(tol_rel=tol_rel, tol_abs=tol_abs, max_time=max_time))
    except (BindingError, HorizonExceeded, StepFailure) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return (rec.image.as_array(), rec.time, rec.min_speed), None


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def run_return_map(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    params = kepler_core.ProblemParams(p["c"])
    pts = openbook.random_page_points(np.random.default_rng(cfg.seed), p["c"], p["n_points"])
    jobs = [(x.as_array(), p["c"], p["tol_rel"], p["tol_abs"], p["max_time"]) for x in pts]
    results = _pmap(_return_worker, jobs, cfg.threads)
    rows, failures, worst = [], [], 0.0
    for i, (x, (res, err)) in enumerate(zip(pts, results)):
        if err:
            failures.append({"index": i, "status": err})
            continue
        img, t, speed = res
        ref = openbook.return_map_closed_form(x, params, p["law"]).as_array()
        worst = max(worst, float(np.max(np.abs(img - ref))))
        rows.append([*x.as_array(), *img, t, speed])
    header = ([f"in_xi{i}" for i in range(4)] + [f"in_eta{i}" for i in range(4)]
              + [f"out_xi{i}" for i in range(4)] + [f"out_eta{i}" for i in range(4)]
              + ["return_time", "min_dtheta_dt"])
    write_table(out / "return_map.csv", header, rows)
    summary = {"points": len(pts), "returned": len(rows),
               f"max |numeric - closed form ({p['law']} law)|": worst}
    if failures:
        raise PartialResults(f"{len(failures)} of {len(pts)} points failed", failures)
    return summary


def _chord_worker(args):
    u, c, order, period, tol, ptol, tol_rel, tol_abs, max_time, with_action = args
    res = chords.chord_search(kepler_core.ProblemParams(c), "numeric", order, [u], tol, ptol,
                              cfg=IntegratorConfig(tol_rel=tol_rel, tol_abs=tol_abs, max_time=max_time),
                              max_period=period, with_action=with_action)
    return res.records, [s[2] for s in res.skipped]


def run_chords(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    params = kepler_core.ProblemParams(p["c"])
    max_period = p["max_period"] or None
    if p["map_mode"] == "closed_form":
        res = chords.chord_search(params, "closed_form", p["max_order"], p["grid"], p["tol"], p["planar_tol"],
                                  p["law"], _cfg(p), max_period, p["with_action"])
        records, skipped = res.records, res.skipped
    else:
        pts = chords.concentric_grid(*p["grid"])
        jobs = [(u, p["c"], p["max_order"], max_period, p["tol"], p["planar_tol"], p["tol_rel"],
                 p["tol_abs"], p["max_time"], p["with_action"]) for u in pts]
        records, skipped = [], []
        for i, (recs, errs) in enumerate(_pmap(_chord_worker, jobs, cfg.threads)):
            records += recs
            skipped += [(i, pts[i], e) for e in errs]
    chords.export_chord_table(out / "chords.csv", records)
    by_start = {}
    for r in records:
        by_start.setdefault(r.start.u, r.period)
    periods = {}
    for u, per in by_start.items():
        if math.hypot(*u) > 0:
            periods[str(per)] = periods.get(str(per), 0) + 1
    origin = by_start.get((0.0, 0.0))
    summary = {"records": len(records), "grid points": len(by_start) + len(skipped),
               "origin period": origin, "non-origin periods": periods,
               "mixed chords": len(chords.mixed_chords(records, p["planar_tol"])),
               "rotation per return (turns)": chords.rotation_number(p["c"], p["law"])}
    if skipped:
        raise PartialResults(f"{len(skipped)} grid points skipped",
                             [{"index": i, "u": list(u), "status": s} for i, u, s in skipped])
    return summary


def run_indices(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    rows, deltas, path = acceptance.kepler_arc_indices(p["c"], p["t_max"], p["n_arcs"], rng, _cfg(p))
    reports = [indices.IndexReport(mu_rs, mu_cz, d, path.n, "lagrangian", path.frame, t)
               for (t, mu_rs, mu_cz), d in zip(rows, deltas)]
    indices.export_index_table(out / "indices.csv", reports)
    fit = indices.definiteness_fit([r[0] for r in rows], [r[1] for r in rows])
    (out / "definiteness_fit.txt").write_text("\n".join(fit.report_lines()) + "\n", encoding="utf-8")
    return {"arcs": len(rows), "slope": fit.slope, "stderr": fit.stderr, "offset": fit.offset,
            "certified": fit.certified}


def run_specseq(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    if p["complex"]:
        cx = specseq.FilteredComplex.read(p["complex"])
    else:
        cx = specseq.FilteredComplex.from_text(SAMPLE_COMPLEX)
    if p["actions"]:
        widths = p["widths"] or [0.5] * len(p["actions"])
        windows = specseq.build_windows(p["actions"], widths)
    else:
        acts = sorted({g.action for g in cx.generators})
        gap = min((b - a for a, b in zip(acts, acts[1:])), default=1.0)
        windows = specseq.build_windows(acts, [0.5 * gap] * len(acts))
    run = specseq.run_to_einfty(cx, windows)
    specseq.export_pages(out / "pages.csv", run.pages)
    return {"generators": len(cx), "pages": len(run.pages),
            "E_inf": run.e_infinity.total_by_degree() or 0, "H*": {k: v for k, v in run.cohomology.items() if v} or 0,
            "agrees": run.agrees}


def run_toy(cfg: RunConfig, out: Path) -> dict:
    p = cfg.params
    prof = p["profile"]
    if len(prof) != 4:
        raise ConfigError("profile needs four numbers: b alpha beta power")
    h = liouville_toy.RadialHamiltonian.power_profile(*prof)
    rep = liouville_toy.chord_set_equality(h, p["chop"])
    liouville_toy.export_toy_table(out / "toy_chords.csv", rep.full)
    liouville_toy.export_toy_table(out / "toy_chords_chopped.csv", rep.chopped)
    worst = max((abs(liouville_toy.collar_action_quadrature(h, c.radius) - c.action)
                 for c in rep.full if c.k >= 1), default=0.0)
    return {"action floor a": rep.floor, "chords": len(rep.full), "sets equal": rep.equal,
            "max quadrature error": worst}


def run_verify(cfg: RunConfig, out: Path) -> tuple[dict, bool]:
    p = cfg.params
    opts = acceptance.AcceptanceOptions(seed=cfg.seed, tol_rel=p["tol_rel"], tol_abs=p["tol_abs"])
    if p["quick"]:
        opts = acceptance.AcceptanceOptions(seed=cfg.seed, tol_rel=p["tol_rel"], tol_abs=p["tol_abs"],
                                            return_points=10, rotation_points=10, resonance_grid=(2, 4),
                                            nonresonant_grid=(4, 8), regularization_states=100,
                                            toy_profiles=5, complexes=100, random_paths=10,
                                            definiteness_t_max=20.0)
    wanted = [n for n in p["criteria"] if n in acceptance.CRITERIA]
    results, sums = acceptance.run_suite(opts, out, wanted)
    if 10 in p["criteria"]:
        det = acceptance.criterion_determinism(opts, sums, wanted)
        results.append(det)
    lines = [r.line() for r in results]
    for r in results:
        print(r.line())
        for d in r.details[1:]:
            print(f"        {d}")
    rows = [[r.number, r.title, r.passed, r.details[0] if r.details else ""] for r in results]
    write_table(out / "verify.csv", ["criterion", "title", "passed", "detail"], rows)
    return {"criteria": lines, "passed": sum(r.passed for r in results), "total": len(results)}, \
        all(r.passed for r in results)


RUNNERS = {
    "regularize": run_regularize,
    "flow": run_flow,
    "return-map": run_return_map,
    "chords": run_chords,
    "indices": run_indices,
    "specseq": run_specseq,
    "toy": run_toy,
}


# --- orchestration ---

def _default_out(mode: str, seed: int) -> Path:
    root = Path(os.environ.get(ENV_OUT, "runs"))
    return root / f"{mode}-seed{seed}"


def _checksums(out: Path) -> dict[str, str]:
    import hashlib

    sums = {}
    for f in sorted(out.iterdir()):
        if f.is_file() and f.name not in ("manifest.json", "summary.txt"):
            sums[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
    return sums


def _verify_tables(out: Path):
    """Every emitted table must round-trip through the reader."""
    for f in sorted(out.glob("*.csv")):
        header, rows = read_table(f)
        if not header:
            raise ValueError(f"table {f} has no header")
        for row in rows:
            if None in row or None in row.values():
                raise ValueError(f"table {f} has a ragged row")


def run(config: RunConfig) -> int:
    t0 = time.perf_counter()
    out = config.output_dir or _default_out(config.mode, config.seed)
    try:
        config.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        print(f"I/O error: cannot write to {out}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    status, items, code, summary = "ok", [], EXIT_OK, {}
    try:
        if config.mode == "verify":
            summary, ok = run_verify(config, out)
            if not ok:
                status, code = "criteria failed", EXIT_VERIFY_FAILED
        else:
            summary = RUNNERS[config.mode](config, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PartialResults as exc:
        status, code, items = f"partial: {exc}", EXIT_PARTIAL, exc.items
    except (StepFailure, HorizonExceeded, BindingError, indices.SymplecticDriftError,
            indices.NonRegularCrossingError, FloatingPointError, ArithmeticError) as exc:
        status, code = f"numerical failure: {type(exc).__name__}: {exc}", EXIT_NUMERIC
        print(status, file=sys.stderr)
    except (specseq.ComplexError, specseq.WindowOverlapError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {getattr(exc, 'filename', None) or out}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    try:
        _verify_tables(out)
        manifest = {
            "mode": config.mode,
            "config": config.echo(),
            "status": status,
            "exit_code": code,
            "items": items,
            "versions": {"package": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "wall_time_s": round(time.perf_counter() - t0, 3),
            "checksums": _checksums(out),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                                           encoding="utf-8")
        lines = [f"mode: {config.mode}", f"status: {status}", f"output: {out}"]
        for k, v in summary.items():
            if isinstance(v, list):
                lines.append(f"{k}:")
                lines += [f"  {x}" for x in v]
            else:
                lines.append(f"{k}: {v}")
        (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"I/O error: {getattr(exc, 'filename', None) or out}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    if config.mode != "verify":
        print((out / "summary.txt").read_text(encoding="utf-8"), end="")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collision-chords", description=__doc__.split("\n\n")[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", type=Path, help="key = value configuration file")
    ap.add_argument("--out", type=Path, help=f"output directory (default ${ENV_OUT}/<mode>-seed<N>)")
    ap.add_argument("--seed", type=int, default=None,
                    help="RNG seed (default 0; verify uses the acceptance seed)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    return ap


def config_from_args(args) -> RunConfig:
    raw = {}
    if args.config is not None:
        try:
            raw.update(parse_config_text(args.config.read_text(encoding="utf-8")))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror or exc}") from None
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    seed = args.seed
    if seed is None:
        seed = acceptance.AcceptanceOptions.seed if args.mode == "verify" else 0
    return RunConfig(args.mode, build_params(raw), seed, args.out, args.threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
