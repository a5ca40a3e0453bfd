"""Command-line orchestration, result persistence and replay.

Every run writes into ``<out>/<command>-<hash12>/`` where the hash digests
the canonical configuration together with the model file bytes.  Data
artifacts (JSON, CSV) are pure functions of that input; the manifest adds
a timestamp and the code version and is therefore not itself compared.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import shutil
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BudgetExceeded, ConfigError, LabError, MismatchedVersion
from .model import BoxDiscretization, load_model, preset_models, spectral_shift, validate_spec

OUT_ENV = "LIFSHITZ_LAB_OUT"
DEFAULT_OUT = "lifshitz-runs"
COMMANDS = ("bands", "ids", "lifshitz", "compare-k", "validate", "preset-list")
RANDOMIZED = ("ids", "lifshitz", "compare-k")
# settings that cannot change the data, so they stay out of the hash
_NOT_HASHED = ("out", "force", "workers")


@dataclass
class ExperimentConfig:
    command: str
    model: str | None = None
    L: int = 100
    m: int = 8
    energies: list = field(default_factory=list)
    n_theta: int = 32
    j_max: int = 3
    n_realizations: int = 1
    time_budget: float | None = None
    seed: int | None = None
    workers: int = 1
    window: list | None = None
    ks: list = field(default_factory=lambda: [2, 4, 8])
    reference_L: int = 50000
    delta: float = 0.3
    shift: bool = True
    allow_degenerate: bool = False
    figures: bool = True
    out: str | None = None
    force: bool = False

    def check(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.command != "preset-list" and not self.model:
            raise ConfigError(f"command {self.command} needs a model (preset:NAME or a JSON file)")
        if self.command in RANDOMIZED and self.seed is None:
            raise ConfigError("--seed is mandatory for Monte-Carlo commands")
        if self.command in ("ids", "lifshitz", "compare-k"):
            e = np.asarray(self.energies, dtype=float)
            if e.size == 0 or np.any(np.diff(e) <= 0) or not np.all(np.isfinite(e)):
                raise ConfigError("energy grid must be non-empty and strictly increasing")
        if self.n_realizations < 1 or self.workers < 1 or self.L < 0 or self.m < 1:
            raise ConfigError("n, workers and m must be positive and L non-negative")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ConfigError("time budget must be positive")
        if self.command == "lifshitz":
            if not self.window or len(self.window) != 2 or not 0 < self.window[0] < self.window[1]:
                raise ConfigError("lifshitz needs --window LO HI with 0 < LO < HI")
        if self.command == "compare-k" and (not self.ks or min(self.ks) < 0):
            raise ConfigError("--ks must list non-negative integers")

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        for key in _NOT_HASHED:
            d.pop(key)
        d["energies"] = [float(e) for e in d["energies"]]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)


def config_hash(cfg: ExperimentConfig, model_bytes: bytes) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(cfg.canonical(), sort_keys=True).encode())
    h.update(b"\0")
    h.update(model_bytes)
    return h.hexdigest()


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_spec(cfg: ExperimentConfig):
    spec, raw = load_model(cfg.model)
    return spec, raw


def _prepared(cfg: ExperimentConfig, spec):
    v = validate_spec(spec, strict=False)
    if cfg.shift:
        v, bottom = spectral_shift(v, mesh=cfg.m if spec.kind == "continuum" else 1)
        return v, bottom
    return v, None


# --------------------------------------------------------------------------
# pipelines; each returns (data artifacts, figure artifacts, summary text)


def _run_validate(cfg, spec, outdir):
    v = validate_spec(spec, strict=not cfg.allow_degenerate)
    s = ", ".join(f"{x:g}" for x in np.atleast_1d(v.s))
    return [], [], f"model {v.name or cfg.model} is valid (subcube side s = {s})"


def _run_preset_list(cfg, spec, outdir):
    presets = preset_models()
    path = outdir / "presets.json"
    _write_json(path, {name: p.to_dict() for name, p in presets.items()})
    lines = [f"{name}: d={p.d} D={p.D} kind={p.kind}" for name, p in presets.items()]
    return [("presets", path)], [], "\n".join(lines)


def _run_bands(cfg, spec, outdir):
    from .floquet import band_structure, locate_minima, nondegeneracy_check

    v, bottom = _prepared(cfg, spec)
    band = band_structure(v, None, 0, cfg.n_theta, cfg.j_max, cfg.m)
    report = locate_minima(band)
    checks = nondegeneracy_check(band, report, cfg.delta)
    csv_path = outdir / "bands.csv"
    band.write_csv(csv_path)
    js = outdir / "minima.json"
    _write_json(js, {"bottom_before_shift": bottom, "minima": report.to_dict(), "nondegeneracy": checks,
                     "delta": cfg.delta})
    figs = []
    if cfg.figures:
        from .plotting import plot_bands
        figs.append(("bands-figure", plot_bands(band, outdir / "bands.png")))
    text = [f"E_min = {report.E_min:.6g} at {len(report.Z)} minimum point(s)"]
    for c in checks:
        text.append(f"  theta0 = {c['theta0']}: C_lower = {c['C_lower']:.4f}, upper bound ok = {c['upper_ok']}")
    return [("bands", csv_path), ("minima", js)], figs, "\n".join(text)


def _ids(cfg, v):
    from .ids import empirical_ids

    disc = BoxDiscretization.for_spec(v, cfg.L, 1 if v.kind == "lattice" else cfg.m)
    return empirical_ids(v, disc, cfg.energies, cfg.n_realizations, cfg.seed, workers=cfg.workers,
                         time_budget=cfg.time_budget)


def _save_ids(est, outdir, figures, title):
    js, csv_path = outdir / "ids.json", outdir / "ids.csv"
    est.save_json(js)
    est.write_csv(csv_path)
    figs = []
    if figures:
        from .plotting import plot_ids
        figs.append(("ids-figure", plot_ids(est, outdir / "ids.png", title=title)))
    return [("ids", js), ("ids-table", csv_path)], figs


def _run_ids(cfg, spec, outdir):
    v, _ = _prepared(cfg, spec)
    try:
        est = _ids(cfg, v)
    except BudgetExceeded as exc:
        _save_ids(exc.partial, outdir, cfg.figures, v.name)
        raise
    arts, figs = _save_ids(est, outdir, cfg.figures, v.name)
    return arts, figs, f"IDS from {est.n_realizations} realizations at {len(est.energies)} energies"


def _run_lifshitz(cfg, spec, outdir):
    from .lifshitz import estimate_N0plus, fit_exponent, tail_points

    v, _ = _prepared(cfg, spec)
    try:
        est = _ids(cfg, v)
    except BudgetExceeded as exc:
        _save_ids(exc.partial, outdir, cfg.figures, v.name)
        raise
    arts, figs = _save_ids(est, outdir, cfg.figures, v.name)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        n0 = estimate_N0plus(est)
    fit = fit_exponent(tail_points(est, n0, cfg.window), d=v.d)
    js, pts = outdir / "fit.json", outdir / "fit_points.csv"
    doc = fit.to_dict()
    doc["N0plus"] = n0
    doc["warnings"] = [str(w.message) for w in caught]
    _write_json(js, doc)
    fit.write_points_csv(pts)
    arts += [("lifshitz-fit", js), ("lifshitz-points", pts)]
    if cfg.figures:
        from .plotting import plot_lifshitz
        figs.append(("lifshitz-figure", plot_lifshitz(fit, outdir / "lifshitz.png", title=v.name)))
    return arts, figs, fit.summary()


def _run_compare_k(cfg, spec, outdir):
    from .ids import approximation_convergence, empirical_ids

    v, _ = _prepared(cfg, spec)
    disc = BoxDiscretization.for_spec(v, cfg.reference_L, 1 if v.kind == "lattice" else cfg.m)
    ref = empirical_ids(v, disc, cfg.energies, cfg.n_realizations, cfg.seed, workers=cfg.workers)
    rows = approximation_convergence(v, cfg.ks, cfg.energies, cfg.n_realizations, cfg.seed + 1, ref,
                                     n_theta=cfg.n_theta, m=cfg.m, workers=cfg.workers)
    js, csv_path = outdir / "convergence.json", outdir / "convergence.csv"
    _write_json(js, {"rows": rows, "reference": ref.to_dict()})
    with open(csv_path, "w") as fh:
        cols = ["k", "E", "mean", "stderr", "reference", "reference_stderr", "deviation"]
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) for c in cols) + "\n")
    figs = []
    if cfg.figures:
        from .plotting import plot_convergence
        figs.append(("convergence-figure", plot_convergence(rows, outdir / "convergence.png")))
    text = [f"k={r['k']} E={r['E']:g}: deviation {r['deviation']:.3e} (stderr {r['stderr']:.1e})" for r in rows]
    return [("convergence", js), ("convergence-table", csv_path)], figs, "\n".join(text)


PIPELINES = {
    "validate": _run_validate,
    "preset-list": _run_preset_list,
    "bands": _run_bands,
    "ids": _run_ids,
    "lifshitz": _run_lifshitz,
    "compare-k": _run_compare_k,
}


# --------------------------------------------------------------------------


def out_root(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _relative(paths, outdir):
    return [{"kind": kind, "path": str(Path(p).relative_to(outdir)), "sha256": _sha256(p)} for kind, p in paths]


def _cache_hit(outdir: Path, chash: str) -> bool:
    mpath = outdir / "manifest.json"
    if not mpath.exists():
        return False
    try:
        man = json.loads(mpath.read_text())
    except json.JSONDecodeError:
        return False
    if man.get("config_hash") != chash or man.get("status") != 0:
        return False
    return all((outdir / a["path"]).exists() and _sha256(outdir / a["path"]) == a["sha256"]
               for a in man["artifacts"])


def execute(cfg: ExperimentConfig, outdir: Path, chash: str, spec) -> tuple[int, dict]:
    """Run the pipeline into ``outdir`` and write its manifest."""
    outdir.mkdir(parents=True, exist_ok=True)
    status, message, arts, figs = 0, "", [], []
    try:
        arts, figs, message = PIPELINES[cfg.command](cfg, spec, outdir)
    except BudgetExceeded as exc:
        status, message = exc.exit_status, str(exc)
        arts = [(k, outdir / n) for k, n in (("ids", "ids.json"), ("ids-table", "ids.csv"))
                if (outdir / n).exists()]
    except LabError as exc:
        status, message = exc.exit_status, str(exc)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        status, message = 2, f"runner.{cfg.command}: {type(exc).__name__}: {exc}"
    manifest = {
        "config": dataclasses.asdict(cfg) | {"out": None, "force": False},
        "config_hash": chash,
        "code_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "status": status,
        "message": message,
        "artifacts": _relative(arts, outdir),
        "figures": _relative(figs, outdir),
    }
    _write_json(outdir / "manifest.json", manifest)
    return status, manifest


def run(cfg: ExperimentConfig, stream=None) -> int:
    """Run one configured command; returns the process exit status."""
    stream = stream or sys.stdout
    try:
        cfg.check()
        spec, raw = (None, b"") if cfg.command == "preset-list" else _load_spec(cfg)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_status
    chash = config_hash(cfg, raw)
    outdir = out_root(cfg) / f"{cfg.command}-{chash[:12]}"
    if not cfg.force and _cache_hit(outdir, chash):
        print(f"cache hit: {outdir}", file=stream)
        return 0
    status, manifest = execute(cfg, outdir, chash, spec)
    if manifest["message"]:
        print(manifest["message"], file=stream if status == 0 else sys.stderr)
    print(f"artifacts in {outdir}", file=stream)
    return status


def reproduce(manifest_path, stream=None) -> int:
    """Re-run a recorded configuration and byte-compare its data artifacts.

    Missing payloads are restored from the recomputation.  Exit 0 iff every
    recorded artifact is identical.
    """
    stream = stream or sys.stdout
    manifest_path = Path(manifest_path)
    try:
        man = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: runner.reproduce: cannot read manifest: {exc}", file=sys.stderr)
        return 1
    outdir = manifest_path.parent
    try:
        cfg = ExperimentConfig.from_dict(man["config"])
        cfg.check()
        spec, raw = (None, b"") if cfg.command == "preset-list" else _load_spec(cfg)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_status
    if man.get("code_version") != __version__:
        recorded = man.get("code_version")
        print(f"warning: {MismatchedVersion(f'manifest from {recorded}, running {__version__}')}", file=sys.stderr)
    chash = config_hash(cfg, raw)
    if chash != man.get("config_hash"):
        print("config hash differs from the recorded one", file=stream)
    with tempfile.TemporaryDirectory() as tmp:
        status, fresh = execute(cfg, Path(tmp), chash, spec)
        fresh_by_path = {a["path"]: a for a in fresh["artifacts"]}
        ok = status == man.get("status")
        for art in man["artifacts"]:
            rel = art["path"]
            target = outdir / rel
            new = fresh_by_path.get(rel)
            if new is None:
                print(f"MISSING from recomputation: {rel}", file=stream)
                ok = False
                continue
            if not target.exists():
                shutil.copyfile(Path(tmp) / rel, target)
                print(f"restored {rel}", file=stream)
            same = _sha256(target) == new["sha256"] == art["sha256"]
            print(f"{'identical' if same else 'DIFFERS'}: {rel}", file=stream)
            ok = ok and same
        for fig in man.get("figures", []):
            if not (outdir / fig["path"]).exists() and (Path(tmp) / fig["path"]).exists():
                shutil.copyfile(Path(tmp) / fig["path"], outdir / fig["path"])
    return 0 if ok else 4


# --------------------------------------------------------------------------
# argument parsing


def _energies(args) -> list:
    if args.energies:
        return [float(x) for x in args.energies.split(",")]
    if args.emin is None or args.emax is None:
        return []
    if args.log_grid:
        return np.geomspace(args.emin, args.emax, args.ne).tolist()
    return np.linspace(args.emin, args.emax, args.ne).tolist()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifshitz-lab", description="IDS and Lifshitz-tail experiments "
                                "for matrix-valued random Schroedinger operators")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="action", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("command", choices=COMMANDS)
    r.add_argument("model", nargs="?", help="preset:NAME, FILE.json or FILE.json:NAME")
    r.add_argument("--L", type=int, default=100, help="box half-width (cells)")
    r.add_argument("--m", type=int, default=8, help="grid points per unit length (continuum)")
    r.add_argument("--energies", help="comma separated energy grid")
    r.add_argument("--emin", type=float)
    r.add_argument("--emax", type=float)
    r.add_argument("--ne", type=int, default=50)
    r.add_argument("--log-grid", action="store_true", help="geometric instead of linear spacing")
    r.add_argument("--ntheta", type=int, default=32)
    r.add_argument("--jmax", type=int, default=3)
    r.add_argument("--n", type=int, default=1, help="number of disorder realizations")
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--time-budget", type=float, help="wall-time cap in seconds")
    r.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    r.add_argument("--ks", type=lambda s: [int(x) for x in s.split(",")], default=[2, 4, 8])
    r.add_argument("--reference-L", type=int, default=50000)
    r.add_argument("--delta", type=float, default=0.3)
    r.add_argument("--no-shift", action="store_true", help="skip the spectral normalization")
    r.add_argument("--allow-degenerate", action="store_true")
    r.add_argument("--no-figures", action="store_true")
    r.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    r.add_argument("--force", action="store_true", help="recompute even on a cache hit")

    q = sub.add_parser("reproduce", help="re-run a manifest and compare artifacts")
    q.add_argument("manifest")
    return p


def config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        command=args.command, model=args.model, L=args.L, m=args.m, energies=_energies(args),
        n_theta=args.ntheta, j_max=args.jmax, n_realizations=args.n, time_budget=args.time_budget,
        seed=args.seed, workers=args.workers, window=list(args.window) if args.window else None,
        ks=args.ks, reference_L=args.reference_L, delta=args.delta, shift=not args.no_shift,
        allow_degenerate=args.allow_degenerate, figures=not args.no_figures, out=args.out, force=args.force,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.action == "reproduce":
        return reproduce(args.manifest)
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
