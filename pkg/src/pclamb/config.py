"""Run configuration: a YAML file with one flat group of keys per stage.

Every group maps onto a frozen dataclass; unknown keys and out-of-range
values raise :class:`ConfigError` with the offending key path.  ``to_dict``
followed by ``from_dict`` reproduces the configuration exactly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .atom import AtomModel, hydrogen_model, load_atom_csv
from .crystal import MAX_FILLING, CrystalStructure
from .lsrf import FrequencyGrid, SmoothingConfig
from .mesh import BZMesh
from .quadrature import QuadratureConfig
from .solver import SolverConfig

PAPER_POSITIONS = ((0.0, 0.0, 0.0), (0.34, 0.0, 0.0), (0.24, 0.24, 0.0))


class ConfigError(ValueError):
    """Invalid run configuration."""


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {msg}")


@dataclass(frozen=True)
class StructureSection:
    eps_sphere: float = 1.0
    eps_background: float = 12.96
    filling_fraction: float = 0.74

    def validate(self):
        _check(self.eps_sphere >= 1.0, "structure.eps_sphere", "must be >= 1")
        _check(self.eps_background >= 1.0, "structure.eps_background", "must be >= 1")
        _check(0.0 < self.filling_fraction <= MAX_FILLING, "structure.filling_fraction",
               f"must lie in (0, {MAX_FILLING}] (fcc close packing)")


@dataclass(frozen=True)
class BasisSection:
    g_max: float = math.sqrt(48.0)
    n_bands: int | str = "auto"

    def validate(self):
        _check(self.g_max >= 1.0, "basis.g_max", "must be >= 1 (units of 2 pi / a)")
        _check(self.n_bands == "auto" or (isinstance(self.n_bands, int) and self.n_bands >= 1),
               "basis.n_bands", "must be 'auto' or a positive integer")


@dataclass(frozen=True)
class MeshSection:
    dims: tuple[int, int, int] = (16, 16, 16)

    def validate(self):
        _check(len(self.dims) == 3 and all(isinstance(n, int) and n >= 1 for n in self.dims),
               "mesh.dims", "must be three positive integers")


@dataclass(frozen=True)
class LsrfSection:
    u_max: float = 4.0
    n_bins: int = 800
    spreading: str = "linear"
    sigma_bins: float = 1.5

    def validate(self):
        _check(self.u_max > 0, "lsrf.u_max", "must be positive")
        _check(self.n_bins >= 2, "lsrf.n_bins", "must be >= 2")
        _check(self.spreading in ("linear", "histogram"), "lsrf.spreading", "must be 'linear' or 'histogram'")
        _check(self.sigma_bins >= 0, "lsrf.sigma_bins", "must be >= 0")


@dataclass(frozen=True)
class QuadratureSection:
    u_op: float = 3.5
    method: str = "linear"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-6

    def validate(self):
        _check(self.u_op > 0, "quadrature.u_op", "must be positive")
        _check(self.method in ("linear", "trapezoid"), "quadrature.method", "must be 'linear' or 'trapezoid'")
        _check(self.abs_tol > 0 and self.rel_tol > 0, "quadrature", "tolerances must be positive")


@dataclass(frozen=True)
class AtomSection:
    model: str = "hydrogen"
    n_max: int = 4
    omega_bar_ry: float | None = 19.8
    levels_csv: str | None = None
    alpha_csv: str | None = None
    levels: tuple[str, ...] = ("2s", "2p")

    def validate(self):
        _check(self.model in ("hydrogen", "table"), "atom.model", "must be 'hydrogen' or 'table'")
        if self.model == "hydrogen":
            _check(2 <= self.n_max <= 4, "atom.n_max", "must lie in [2, 4]")
            _check(self.omega_bar_ry is None or self.omega_bar_ry > 1.0, "atom.omega_bar_ry",
                   "must exceed 1 Ry (above every bound level)")
        else:
            _check(bool(self.levels_csv) and bool(self.alpha_csv), "atom",
                   "model 'table' needs levels_csv and alpha_csv")
        _check(len(self.levels) >= 1, "atom.levels", "needs at least one level")


@dataclass(frozen=True)
class SolverSection:
    method: str = "decomposed"
    virtual: str = "lumped"
    scan_points: int = 100_000
    window: float | None = None

    def validate(self):
        _check(self.method in ("decomposed", "full"), "solver.method", "must be 'decomposed' or 'full'")
        _check(self.virtual in ("lumped", "explicit", "none"), "solver.virtual",
               "must be 'lumped', 'explicit' or 'none'")
        _check(self.scan_points >= 3, "solver.scan_points", "must be >= 3")
        _check(self.window is None or self.window > 0, "solver.window", "must be positive")


@dataclass(frozen=True)
class SweepSection:
    a_min_nm: float = 85.0
    a_max_nm: float = 115.0
    steps: int = 20

    def validate(self):
        _check(0 < self.a_min_nm <= self.a_max_nm, "sweep", "need 0 < a_min_nm <= a_max_nm")
        _check(self.steps >= 1, "sweep.steps", "must be >= 1")

    @property
    def lattice_constants(self) -> list[float]:
        if self.steps == 1:
            return [self.a_min_nm * 1e-9]
        step = (self.a_max_nm - self.a_min_nm) / (self.steps - 1)
        return [(self.a_min_nm + i * step) * 1e-9 for i in range(self.steps)]


@dataclass(frozen=True)
class EnsembleSection:
    n_atoms: int = 200
    region: str = "air_pores"
    seed: int = 20240501
    level: str = "2p"
    a_nm: float | None = None
    bins: int = 20

    def validate(self):
        _check(self.n_atoms >= 1, "ensemble.n_atoms", "must be >= 1")
        _check(self.region in ("air_pores", "full_cell"), "ensemble.region", "must be 'air_pores' or 'full_cell'")
        _check(0 <= self.seed < 2**64, "ensemble.seed", "must be an unsigned 64-bit integer")
        _check(self.a_nm is None or self.a_nm > 0, "ensemble.a_nm", "must be positive")
        _check(self.bins >= 1, "ensemble.bins", "must be >= 1")


@dataclass(frozen=True)
class LineshapeSection:
    level: str = "2p"
    position: int = 0
    a_nm: float | None = None
    points: int = 20001
    method: str = "full"

    def validate(self):
        _check(self.position >= 0, "lineshape.position", "must be a position index")
        _check(self.a_nm is None or self.a_nm > 0, "lineshape.a_nm", "must be positive")
        _check(self.points >= 11, "lineshape.points", "must be >= 11")
        _check(self.method in ("full", "decomposed"), "lineshape.method", "must be 'full' or 'decomposed'")


@dataclass(frozen=True)
class BetaSection:
    n_points: int = 400
    u_min: float = 0.01
    a_nm: float = 100.0

    def validate(self):
        _check(self.n_points >= 2, "beta.n_points", "must be >= 2")
        _check(self.a_nm > 0, "beta.a_nm", "must be positive")
        _check(self.u_min > 0, "beta.u_min", "must be positive")


@dataclass(frozen=True)
class ConvergenceSection:
    fine_dims: tuple[int, int, int] = (20, 20, 20)
    u_op_scale: tuple[float, ...] = (0.9, 1.1)

    def validate(self):
        _check(len(self.fine_dims) == 3 and all(isinstance(n, int) and n >= 1 for n in self.fine_dims),
               "convergence.fine_dims", "must be three positive integers")
        _check(all(s > 0 for s in self.u_op_scale), "convergence.u_op_scale", "must be positive")


@dataclass(frozen=True)
class RunSection:
    workers: int = 1
    out: str = "out"

    def validate(self):
        _check(self.workers >= 1, "run.workers", "must be >= 1")


_SECTIONS = {
    "structure": StructureSection,
    "basis": BasisSection,
    "mesh": MeshSection,
    "lsrf": LsrfSection,
    "quadrature": QuadratureSection,
    "atom": AtomSection,
    "solver": SolverSection,
    "sweep": SweepSection,
    "ensemble": EnsembleSection,
    "lineshape": LineshapeSection,
    "beta": BetaSection,
    "convergence": ConvergenceSection,
    "run": RunSection,
}


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _listify(v):
    if isinstance(v, tuple):
        return [_listify(x) for x in v]
    return v


def _coerce(section: str, cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected a mapping")
    names = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(sorted(unknown))}")
    kwargs = {}
    for k, v in data.items():
        default = getattr(cls(), k)
        v = _tuplify(v)
        if isinstance(default, float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if isinstance(default, tuple) and default and isinstance(default[0], float):
            v = tuple(float(x) for x in v) if isinstance(v, tuple) else v
        kwargs[k] = v
    try:
        obj = cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None
    try:
        obj.validate()
    except TypeError as exc:
        raise ConfigError(f"{section}: wrong value type ({exc})") from None
    return obj


@dataclass(frozen=True)
class RunConfig:
    structure: StructureSection = field(default_factory=StructureSection)
    basis: BasisSection = field(default_factory=BasisSection)
    mesh: MeshSection = field(default_factory=MeshSection)
    lsrf: LsrfSection = field(default_factory=LsrfSection)
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)
    positions: tuple[tuple[float, float, float], ...] = PAPER_POSITIONS
    atom: AtomSection = field(default_factory=AtomSection)
    solver: SolverSection = field(default_factory=SolverSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    lineshape: LineshapeSection = field(default_factory=LineshapeSection)
    beta: BetaSection = field(default_factory=BetaSection)
    convergence: ConvergenceSection = field(default_factory=ConvergenceSection)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> "RunConfig":
        for name in _SECTIONS:
            getattr(self, name).validate()
        _check(len(self.positions) >= 1, "positions", "need at least one position")
        _check(all(len(p) == 3 for p in self.positions), "positions", "each position needs three coordinates")
        _check(self.quadrature.u_op <= self.lsrf.u_max, "quadrature.u_op",
               f"must not exceed lsrf.u_max={self.lsrf.u_max} (no spectral data above it)")
        top = max(self.convergence.u_op_scale, default=1.0) * self.quadrature.u_op
        _check(top <= self.lsrf.u_max, "convergence.u_op_scale",
               f"scaled u_op={top:.4g} exceeds lsrf.u_max={self.lsrf.u_max}")
        _check(self.lineshape.position < len(self.positions), "lineshape.position",
               f"index beyond the {len(self.positions)} configured positions")
        return self

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None) -> "RunConfig":
        data = dict(data or {})
        unknown = set(data) - set(_SECTIONS) - {"positions"}
        if unknown:
            raise ConfigError(f"unknown section(s) {', '.join(sorted(unknown))}")
        kwargs: dict[str, Any] = {}
        for name, sec in _SECTIONS.items():
            if name in data:
                kwargs[name] = _coerce(name, sec, data[name] or {})
        if "positions" in data:
            try:
                kwargs["positions"] = tuple(tuple(float(x) for x in p) for p in data["positions"])
            except (TypeError, ValueError):
                raise ConfigError("positions: expected a list of [x, y, z] triples") from None
        return cls(**kwargs).validate()

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                out[f.name] = {k: _listify(x) for k, x in dataclasses.asdict(v).items()}
            else:
                out[f.name] = _listify(v)
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def with_overrides(self, workers=None, out=None, seed=None) -> "RunConfig":
        run = self.run
        if workers is not None:
            run = dataclasses.replace(run, workers=workers)
        if out is not None:
            run = dataclasses.replace(run, out=str(out))
        ens = self.ensemble
        if seed is not None:
            ens = dataclasses.replace(ens, seed=seed)
        return dataclasses.replace(self, run=run, ensemble=ens).validate()

    # builders for the library objects

    def crystal(self) -> CrystalStructure:
        s = self.structure
        return CrystalStructure(eps_sphere=s.eps_sphere, eps_background=s.eps_background,
                                filling_fraction=s.filling_fraction)

    def bz_mesh(self, dims=None) -> BZMesh:
        return BZMesh(*(dims or self.mesh.dims))

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid(u_max=self.lsrf.u_max, n_bins=self.lsrf.n_bins)

    def smoothing(self) -> SmoothingConfig:
        return SmoothingConfig(spreading=self.lsrf.spreading, sigma_bins=self.lsrf.sigma_bins)

    def quadrature_config(self, lattice_constant: float, u_op: float | None = None) -> QuadratureConfig:
        q = self.quadrature
        return QuadratureConfig(omega_op_reduced=q.u_op if u_op is None else u_op, lattice_constant=lattice_constant,
                                method=q.method, abs_tol=q.abs_tol, rel_tol=q.rel_tol)

    def solver_config(self, lattice_constant: float, u_op: float | None = None) -> SolverConfig:
        s = self.solver
        return SolverConfig(quadrature=self.quadrature_config(lattice_constant, u_op), window=s.window,
                            scan_points=s.scan_points, virtual=s.virtual)

    def atom_model(self) -> AtomModel:
        a = self.atom
        if a.model == "hydrogen":
            return hydrogen_model(a.n_max, a.omega_bar_ry)
        return load_atom_csv(a.levels_csv, a.alpha_csv)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return RunConfig.from_dict(data)
