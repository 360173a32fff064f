"""Batch command line front end.

Each subcommand reads a YAML run configuration, computes one data product and
writes CSV files plus a ``<command>.meta.json`` sidecar into the output
directory.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .atom import MissingDataError
from .bands import EigenSolverError, band_path
from .config import ConfigError, RunConfig, load_config
from .crystal import SingularPermittivityError
from .ensemble import (
    EnsembleSpec,
    SamplingError,
    mini_band,
    sample_positions,
    write_atoms_csv,
    write_histogram_csv,
)
from .lsrf import InsufficientBandsError, find_gap, write_lsrf_csv
from .pipeline import LsrfBuild, build_lsrf, make_problem, mesh_bands, resolve_n_bands
from .quadrature import BetaValue, beta_values, beta_vacuum, write_beta_csv
from .solver import SOLVERS, NoRootError, lineshape, tan_grid, write_shift_csv
from .units import to_mhz, to_reduced

log = logging.getLogger("pclamb")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
NUMERICAL_ERRORS = (NoRootError, InsufficientBandsError, EigenSolverError, SingularPermittivityError,
                    SamplingError, FloatingPointError, np.linalg.LinAlgError)
# bands used for complete-gap detection
GAP_BANDS = 16
# 2p-1s wavelength scale used to place default lattice constants, meters
LYMAN_ALPHA = 121.567e-9


def _rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _write_meta(out: Path, command: str, cfg: RunConfig, started: float, outputs, summary) -> Path:
    meta = {
        "command": command,
        "version": __version__,
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": [p.name for p in outputs],
        "summary": summary,
        "config": cfg.to_dict(),
    }
    path = out / f"{command}.meta.json"
    path.write_text(json.dumps(meta, indent=2, default=float) + "\n")
    return path


def _build(cfg: RunConfig, positions=None, mesh_dims=None) -> LsrfBuild:
    problem = make_problem(cfg.crystal(), cfg.basis.g_max)
    pos = cfg.positions if positions is None else positions
    log.info("BZ sweep: basis %d, mesh %s, %d positions", len(problem.basis),
             mesh_dims or cfg.mesh.dims, len(pos))
    return build_lsrf(problem, cfg.bz_mesh(mesh_dims), pos, cfg.frequency_grid(), cfg.smoothing(),
                      cfg.basis.n_bands, cfg.run.workers)


def _gap_rows(gap, transition=LYMAN_ALPHA):
    if gap is None:
        return []
    # lattice constants that put a transition of this wavelength in the gap
    return [(gap.lower_band, gap.u_lo, gap.u_hi, gap.width, gap.u_lo * transition * 1e9,
             gap.u_hi * transition * 1e9)]


_GAP_HEADER = ["lower_band", "u_lo", "u_hi", "width", "a_lo_nm_lyman_alpha", "a_hi_nm_lyman_alpha"]


def _gap_summary(gap):
    return None if gap is None else {"lower_band": gap.lower_band, "u_lo": gap.u_lo, "u_hi": gap.u_hi}


def run_bands(cfg: RunConfig, out: Path):
    problem = make_problem(cfg.crystal(), cfg.basis.g_max)
    nb = min(GAP_BANDS, problem.size)
    kpts, dist, ticks = band_path()
    from .bands import sweep

    path_bands = list(sweep(problem, kpts, nb, workers=cfg.run.workers, eigenvalues_only=True))
    rows = [(i, dist[i], n + 1, w[n]) for i, w in enumerate(path_bands) for n in range(nb)]
    f1 = _rows(out / "bands.csv", ["k_index", "distance", "band", "u"], rows)
    gap = find_gap(mesh_bands(problem, cfg.bz_mesh(), nb, cfg.run.workers))
    f2 = _rows(out / "gap.csv", _GAP_HEADER, _gap_rows(gap))
    return [f1, f2], {"gap": _gap_summary(gap), "ticks": list(map(float, ticks))}


def run_lsrf(cfg: RunConfig, out: Path):
    b = _build(cfg)
    f1 = out / "lsrf.csv"
    write_lsrf_csv(b.sf, f1)
    gap = b.gap()
    f2 = _rows(out / "gap.csv", _GAP_HEADER, _gap_rows(gap))
    return [f1, f2], {"gap": _gap_summary(gap), "n_bands": b.n_bands}


def run_beta(cfg: RunConfig, out: Path):
    b = _build(cfg)
    a = cfg.beta.a_nm * 1e-9
    qc = cfg.quadrature_config(a)
    n = cfg.beta.n_points
    u_op = qc.omega_op_reduced
    pos_grid = cfg.beta.u_min + (np.arange(n) + 0.5) / n * (u_op - cfg.beta.u_min)
    detunings = np.concatenate((-pos_grid[::-1], pos_grid))
    vac = beta_vacuum(detunings, qc.u_rel)
    rows = []
    for p in range(len(cfg.positions)):
        vals = beta_values(b.sf, p, detunings, qc)
        rows += [(p, BetaValue(float(d), float(v)), vv) for d, v, vv in zip(detunings, vals, vac)]
    f = out / "beta.csv"
    write_beta_csv(rows, f)
    return [f], {"u_rel": qc.u_rel, "a_nm": cfg.beta.a_nm}


def _solve_all(cfg: RunConfig, sf, lattice_constants, levels, positions, u_op=None):
    model = cfg.atom_model()
    solve = SOLVERS[cfg.solver.method]
    results = []
    for a in lattice_constants:
        scfg = cfg.solver_config(a, u_op)
        for level in levels:
            for p in positions:
                results.append(solve(sf, p, model, level, scfg))
    return results


def run_shift(cfg: RunConfig, out: Path):
    b = _build(cfg)
    results = _solve_all(cfg, b.sf, cfg.sweep.lattice_constants, cfg.atom.levels, range(len(cfg.positions)))
    f1 = out / "shift.csv"
    write_shift_csv(results, f1)
    gap = b.gap()
    f2 = _rows(out / "gap.csv", _GAP_HEADER, _gap_rows(gap))
    split = [dataclasses.asdict(r) for r in results if r.split]
    return [f1, f2], {"gap": _gap_summary(gap), "n_results": len(results), "split": split}


def _default_a(gap, fallback_nm: float, where: str = "mid") -> float:
    if gap is None:
        return fallback_nm * 1e-9
    u = gap.midgap if where == "mid" else gap.u_hi * 1.01
    return u * LYMAN_ALPHA


def run_ensemble(cfg: RunConfig, out: Path):
    e = cfg.ensemble
    structure = cfg.crystal()
    spec = EnsembleSpec(n_atoms=e.n_atoms, sampling_region=e.region, rng_seed=e.seed, level=e.level)
    sampled = sample_positions(spec, structure)
    b = _build(cfg, positions=sampled.positions)
    gap = b.gap()
    a = e.a_nm * 1e-9 if e.a_nm is not None else _default_a(gap, 100.0)
    scfg = cfg.solver_config(a)
    model = cfg.atom_model()
    solve = SOLVERS[cfg.solver.method]
    band, per_atom = mini_band(lambda i: solve(b.sf, i, model, e.level, scfg).shift, e.n_atoms, e.bins)
    f1 = out / "ensemble_atoms.csv"
    write_atoms_csv(sampled.positions, per_atom, a, f1)
    f2 = out / "ensemble_histogram.csv"
    write_histogram_csv(band, f2, scale=1e-6 / (2 * math.pi))
    summary = {
        "a_nm": a * 1e9,
        "acceptance_rate": sampled.acceptance_rate,
        "failures": band.failures,
        "width_MHz": float(to_mhz(band.width)),
        "quantiles_MHz": {str(q): float(to_mhz(v)) for q, v in band.quantiles.items()},
        "rng": "numpy PCG64",
    }
    f3 = _rows(out / "ensemble_summary.csv", ["key", "value"],
               [("a_nm", a * 1e9), ("acceptance_rate", sampled.acceptance_rate), ("failures", band.failures),
                ("width_MHz", summary["width_MHz"])] +
               [(f"q{q}", v) for q, v in summary["quantiles_MHz"].items()])
    return [f1, f2, f3], summary


def run_lineshape(cfg: RunConfig, out: Path):
    b = _build(cfg)
    ls = cfg.lineshape
    a = ls.a_nm * 1e-9 if ls.a_nm is not None else _default_a(b.gap(), 100.0, where="edge")
    scfg = cfg.solver_config(a)
    model = cfg.atom_model()
    l = model.index(ls.level)
    wl = float(model.omega[l])
    shape = lineshape(b.sf, ls.position, model, l, None, scfg, ls.method)
    if len(shape.omega) != ls.points:
        width = 0.5 * float(np.max(shape.gamma)) or abs(shape.omega[len(shape.omega) // 2] - wl) or 1e-9 * wl
        center = float(shape.omega[len(shape.omega) // 2])
        shape = lineshape(b.sf, ls.position, model, l, tan_grid(center, width, ls.points), scfg, ls.method)
    f1 = out / "lineshape.csv"
    shape.to_csv(f1)
    f2 = _rows(out / "lineshape_poles.csv", ["omega", "weight"], shape.poles)
    return [f1, f2], {"a_nm": a * 1e9, "integral": shape.integral(), "total_weight": shape.total_weight()}


def run_convergence(cfg: RunConfig, out: Path):
    problem = make_problem(cfg.crystal(), cfg.basis.g_max)
    nb = min(GAP_BANDS, problem.size)
    gaps = []
    for dims in (cfg.mesh.dims, cfg.convergence.fine_dims):
        g = find_gap(mesh_bands(problem, cfg.bz_mesh(dims), nb, cfg.run.workers))
        gaps.append((dims, g))
    rows = []
    base = gaps[0][1]
    for dims, g in gaps:
        if g is None:
            rows.append(("x".join(map(str, dims)), "", "", "", "", ""))
            continue
        d_lo = abs(g.u_lo - base.u_lo) / base.u_lo if base else float("nan")
        d_hi = abs(g.u_hi - base.u_hi) / base.u_hi if base else float("nan")
        rows.append(("x".join(map(str, dims)), g.lower_band, g.u_lo, g.u_hi, d_lo, d_hi))
    f1 = _rows(out / "convergence_gap.csv", ["mesh", "lower_band", "u_lo", "u_hi", "rel_change_lo",
                                             "rel_change_hi"], rows)

    b = _build(cfg)
    positions = range(len(cfg.positions))
    lattice = cfg.sweep.lattice_constants
    base_res = _solve_all(cfg, b.sf, lattice, cfg.atom.levels, positions)
    rows = []
    worst = 0.0
    # pointwise ratios blow up where a shift crosses zero, so changes are also
    # reported against the largest shift of the same level
    scale_of = {lev: max((abs(r.shift) for r in base_res if r.level == lev), default=0.0)
                for lev in cfg.atom.levels}
    worst_scaled = 0.0
    for scale in cfg.convergence.u_op_scale:
        u_op = scale * cfg.quadrature.u_op
        res = _solve_all(cfg, b.sf, lattice, cfg.atom.levels, positions, u_op)
        for r0, r in zip(base_res, res):
            change = abs(r.shift - r0.shift)
            rel = change / abs(r0.shift) if r0.shift != 0 else (0.0 if change == 0 else math.inf)
            ref = scale_of[r.level]
            scaled = change / ref if ref > 0 else (0.0 if change == 0 else math.inf)
            worst = max(worst, rel)
            worst_scaled = max(worst_scaled, scaled)
            rows.append((r.level, r.position_index, r.lattice_constant * 1e9, u_op, r0.shift_mhz, r.shift_mhz,
                         rel, scaled))
    f2 = _rows(out / "convergence_uop.csv", ["level", "position_index", "a_nm", "u_op", "shift_MHz_base",
                                             "shift_MHz", "rel_change", "change_over_max_shift"], rows)
    return [f1, f2], {"gaps": [_gap_summary(g) for _, g in gaps], "max_rel_change_uop": worst,
                      "max_change_over_max_shift_uop": worst_scaled}


COMMANDS = {
    "bands": run_bands,
    "lsrf": run_lsrf,
    "beta": run_beta,
    "shift": run_shift,
    "ensemble": run_ensemble,
    "lineshape": run_lineshape,
    "convergence": run_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pclamb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__name__.replace("run_", "compute ").replace("_", " "))
        p.add_argument("--config", type=Path, help="YAML run configuration (defaults if omitted)")
        p.add_argument("--out", type=Path, help="output directory (overrides run.out)")
        p.add_argument("--workers", type=int, help="process count for the k sweep")
        p.add_argument("--seed", type=int, help="ensemble RNG seed (unsigned 64-bit)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = time.time()
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(workers=args.workers, out=args.out, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.run.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, summary = COMMANDS[args.command](cfg, out)
        _write_meta(out, args.command, cfg, started, outputs, summary)
    except (ConfigError, MissingDataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
