"""Run and campaign configuration: JSON parsing, validation, presets and content hashes."""

from __future__ import annotations

import copy
import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .engine import (LIGAMENT_NOTCH, PROTOCOLS, SpecimenGeometry, dd_geometry, large_geometry, ld_geometry,
                     ligament_geometry)
from .grains import GradingSpec
from .material import MaterialTable, PhaseSpec, elastic_from_moduli, moduli_from_elastic

PRESETS = ("ld-40x160", "dd-40x160", "specimen-90x60", "ligament-L", "ligament-M", "ligament-S", "ligament-XS")
CAMPAIGN_KINDS = ("path_a", "path_b", "path_c", "ligament", "mesh_size")
FPZ_ENERGIES = ("e_actual", "e_nominal")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def _num(d: dict, key: str, path: str, default=None, *, positive=False, integer=False, allow_none=False):
    v = d.get(key, default)
    if v is None and allow_none:
        return None
    p = f"{path}.{key}" if path else key
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(p, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(p, f"expected an integer, got {v!r}")
    if v != v or v in (float("inf"), float("-inf")):
        raise ConfigError(p, "must be finite")
    if positive and not v > 0:
        raise ConfigError(p, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _check_keys(d: dict, allowed, path: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(path or "<root>", f"expected an object, got {type(d).__name__}")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")


def preset_geometry(name: str) -> SpecimenGeometry:
    if name == "ld-40x160":
        return ld_geometry()
    if name == "dd-40x160":
        return dd_geometry()
    if name == "specimen-90x60":
        return large_geometry()
    if name.startswith("ligament-") and name[9:] in LIGAMENT_NOTCH:
        return ligament_geometry(name[9:])
    raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


PRESET_MESH = {"ld-40x160": 2.0, "dd-40x160": 2.0, "specimen-90x60": 2.0}


def parse_geometry(d: dict, path: str = "geometry") -> SpecimenGeometry:
    if isinstance(d, str):
        return preset_geometry(d)
    _check_keys(d, ("width", "height", "notches", "protocol", "bar_width", "glue_fraction",
                    "grip_margin"), path)
    notches = d.get("notches", [])
    if not isinstance(notches, list):
        raise ConfigError(f"{path}.notches", "expected a list of [x0, y0, x1, y1]")
    for i, n in enumerate(notches):
        if not (isinstance(n, (list, tuple)) and len(n) == 4):
            raise ConfigError(f"{path}.notches[{i}]", "expected [x0, y0, x1, y1]")
        for j, v in enumerate(n):
            _num({"v": v}, "v", f"{path}.notches[{i}][{j}]")
        if not (n[0] < n[2] and n[1] < n[3]):
            raise ConfigError(f"{path}.notches[{i}]", "need x0 < x1 and y0 < y1")
    protocol = d.get("protocol", "LD")
    if protocol not in PROTOCOLS:
        raise ConfigError(f"{path}.protocol", f"expected one of {PROTOCOLS}, got {protocol!r}")
    try:
        return SpecimenGeometry(width=_num(d, "width", path, positive=True),
                                height=_num(d, "height", path, positive=True),
                                notches=tuple(tuple(n) for n in notches), protocol=protocol,
                                bar_width=_num(d, "bar_width", path, 2.0, positive=True),
                                glue_fraction=_num(d, "glue_fraction", path, 0.25, positive=True),
                                grip_margin=_num(d, "grip_margin", path, 0.25, allow_none=True))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None


def parse_grading(d: dict | None, path: str = "grading") -> GradingSpec | None:
    if d is None:
        return None
    names = [f.name for f in fields(GradingSpec)]
    _check_keys(d, names, path)
    kw = {}
    for k in names:
        if k == "kind" or k not in d:
            continue
        kw[k] = _num(d, k, path, integer=k in ("count", "n_classes"), allow_none=True)
    try:
        return GradingSpec(kind=d.get("kind", "monodisperse"), **kw)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def parse_material(d: dict | None, three_phase: bool, path: str = "material") -> MaterialTable:
    if d is None:
        return MaterialTable.default(three_phase=three_phase)
    _check_keys(d, ("n", "matrix", "inclusion", "itz", "bar", "E", "nu"), path)
    base = MaterialTable.default(three_phase=three_phase)
    kw = {}
    if "n" in d:
        kw["n"] = _num(d, "n", path, positive=True)
    phases = {}
    for name in ("matrix", "inclusion", "itz", "bar"):
        if name not in d:
            continue
        p = d[name]
        sub = f"{path}.{name}"
        _check_keys(p, ("name", "kn", "kt", "sn0", "st0", "breakable"), sub)
        ref = getattr(base, name)
        try:
            phases[name] = PhaseSpec(name=name,
                                     kn=_num(p, "kn", sub, ref.kn, positive=True),
                                     kt=_num(p, "kt", sub, ref.kt, positive=True),
                                     sn0=_num(p, "sn0", sub, ref.sn0), st0=_num(p, "st0", sub, ref.st0),
                                     breakable=bool(p.get("breakable", ref.breakable)))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(sub, str(exc)) from None
    if "E" in d or "nu" in d:
        # matrix stiffness given as (E, nu); other phases keep their ratios
        try:
            kn, kt = moduli_from_elastic(_num(d, "E", path, positive=True), _num(d, "nu", path))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{path}.nu", str(exc)) from None
        m = replace(phases.get("matrix", base.matrix), kn=kn, kt=kt)
        base = MaterialTable.default(three_phase, matrix=m)
        phases["matrix"] = m
    try:
        return MaterialTable(**{n: phases.get(n, getattr(base, n)) for n in ("matrix", "inclusion", "itz", "bar")},
                             n=kw.get("n", base.n))
    except ValueError as exc:
        raise ConfigError(f"{path}.n", str(exc)) from None


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(obj) -> str:
    return hashlib.sha256(_canonical_json(obj).encode()).hexdigest()


@dataclass(frozen=True)
class AnalysisOptions:
    fpz_energy: str = "e_actual"
    macro_threshold: float = 0.5
    with_dd: bool = False          # run the companion distributed-damage test for lc

    def __post_init__(self):
        if self.fpz_energy not in FPZ_ENERGIES:
            raise ConfigError("analysis.fpz_energy", f"expected one of {FPZ_ENERGIES}")
        if not 0 < self.macro_threshold <= 1:
            raise ConfigError("analysis.macro_threshold", "must lie in (0, 1]")


@dataclass(frozen=True)
class RunConfig:
    """Everything a single simulation needs; defaults fill a homogeneous LD run."""

    geometry: SpecimenGeometry = field(default_factory=ld_geometry)
    l_m: float = 2.0
    perturbation: float = 0.4
    mesh_seed: int = 1
    grain_seed: int = 1
    grading: GradingSpec | None = None
    gap_min: float | None = None          # None: a quarter of l_m
    rescale_d: float | None = None        # after placement, resize every disk to this d (centers kept)
    three_phase: bool = True
    material: MaterialTable | None = None
    max_events: int | None = None
    reaction_ratio: float = 1e-6
    dd_reaction_ratio: float = 0.01
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)

    def __post_init__(self):
        if self.material is None:
            object.__setattr__(self, "material", MaterialTable.default(three_phase=self.three_phase))
        g = self.geometry
        if not self.l_m > 0:
            raise ConfigError("l_m", "must be positive")
        if min(g.width, g.height) < 3 * self.l_m:
            raise ConfigError("l_m", f"{self.l_m} mm is too coarse for a {g.width:g}x{g.height:g} mm specimen")
        if not 0 <= self.perturbation < 0.5:
            raise ConfigError("perturbation", "must lie in [0, 0.5)")
        if self.gap_min is not None and self.gap_min < 0:
            raise ConfigError("gap_min", "must be non-negative")
        if not 0 < self.reaction_ratio < 1:
            raise ConfigError("reaction_ratio", "must lie in (0, 1)")
        if not 0 < self.dd_reaction_ratio < 1:
            raise ConfigError("dd_reaction_ratio", "must lie in (0, 1)")
        if self.max_events is not None and self.max_events < 1:
            raise ConfigError("max_events", "must be at least 1")
        if self.grading is not None and self.grading.kind == "monodisperse":
            if self.grading.d >= min(g.width, g.height) / 2:
                raise ConfigError("grading.d", "inclusions do not fit the specimen")
        if self.rescale_d is not None:
            if self.grading is None or self.grading.kind != "monodisperse":
                raise ConfigError("rescale_d", "needs a monodisperse grading")
            if not self.rescale_d > 0:
                raise ConfigError("rescale_d", "must be positive")
        for s in ("mesh_seed", "grain_seed"):
            if not 0 <= getattr(self, s) < 2**64:
                raise ConfigError(s, "seeds are unsigned 64-bit integers")

    @property
    def effective_gap(self) -> float:
        return 0.25 * self.l_m if self.gap_min is None else self.gap_min

    @property
    def derived_elastic(self) -> tuple[float, float]:
        return elastic_from_moduli(self.material.matrix.kn, self.material.matrix.kt)

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_dict(), "l_m": self.l_m, "perturbation": self.perturbation,
            "mesh_seed": self.mesh_seed, "grain_seed": self.grain_seed,
            "grading": self.grading.to_dict() if self.grading else None, "gap_min": self.gap_min,
            "rescale_d": self.rescale_d,
            "three_phase": self.three_phase, "material": self.material.to_dict(),
            "max_events": self.max_events, "reaction_ratio": self.reaction_ratio,
            "dd_reaction_ratio": self.dd_reaction_ratio, "analysis": asdict(self.analysis),
        }

    def config_hash(self) -> str:
        return content_hash(self.to_dict())

    def with_(self, **kw) -> "RunConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        if "three_phase" in kw and "material" not in kw:
            d["material"] = None
        d.update(kw)
        return RunConfig(**d)


RUN_KEYS = ("preset", "geometry", "l_m", "perturbation", "mesh_seed", "grain_seed", "grading", "gap_min", "rescale_d",
            "three_phase", "material", "max_events", "reaction_ratio", "dd_reaction_ratio", "analysis")


def run_config_from_dict(d: dict, path: str = "") -> RunConfig:
    """Validated :class:`RunConfig` from a JSON-like dict; missing fields take defaults."""
    _check_keys(d, RUN_KEYS, path)
    sub = (lambda k: f"{path}.{k}" if path else k)
    kw = {}
    preset = d.get("preset")
    if preset is not None:
        kw["geometry"] = preset_geometry(preset)
        if preset.startswith("ligament-"):
            kw["l_m"] = 1.5
        else:
            kw["l_m"] = PRESET_MESH[preset]
    if "geometry" in d:
        kw["geometry"] = parse_geometry(d["geometry"], sub("geometry"))
    for k in ("l_m", "perturbation", "reaction_ratio", "dd_reaction_ratio"):
        if k in d:
            kw[k] = _num(d, k, path, positive=k != "perturbation")
    for k in ("mesh_seed", "grain_seed"):
        if k in d:
            kw[k] = _num(d, k, path, integer=True)
    for k in ("gap_min", "rescale_d"):
        if k in d:
            kw[k] = _num(d, k, path, allow_none=True)
    if "max_events" in d:
        kw["max_events"] = _num(d, "max_events", path, integer=True, allow_none=True)
    if "three_phase" in d:
        if not isinstance(d["three_phase"], bool):
            raise ConfigError(sub("three_phase"), "expected true or false")
        kw["three_phase"] = d["three_phase"]
    kw["grading"] = parse_grading(d.get("grading"), sub("grading"))
    kw["material"] = parse_material(d.get("material"), kw.get("three_phase", True), sub("material"))
    if "analysis" in d:
        a = d["analysis"]
        _check_keys(a, ("fpz_energy", "macro_threshold", "with_dd"), sub("analysis"))
        kw["analysis"] = AnalysisOptions(fpz_energy=a.get("fpz_energy", "e_actual"),
                                         macro_threshold=_num(a, "macro_threshold", sub("analysis"), 0.5),
                                         with_dd=bool(a.get("with_dd", False)))
    try:
        cfg = RunConfig(**kw)
    except ConfigError as exc:
        raise ConfigError(sub(exc.path), str(exc).split(": ", 1)[1]) from None
    n_nodes = cfg.geometry.width * cfg.geometry.height / (0.866 * cfg.l_m**2)
    if n_nodes > 30000:
        warnings.warn(f"l_m={cfg.l_m:g} mm on a {cfg.geometry.width:g}x{cfg.geometry.height:g} mm specimen "
                      f"(about {n_nodes:.0f} nodes): expect long runtimes", RuntimeWarning, stacklevel=2)
    return cfg


def _load_json(path) -> dict:
    p = Path(path)
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(p), f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def parse_config(path) -> RunConfig:
    return run_config_from_dict(_load_json(path))


@dataclass(frozen=True)
class SweepPoint:
    index: int
    label: str
    params: dict
    grain_stream: int     # points sharing this index share their grain seeds


@dataclass(frozen=True)
class CampaignSpec:
    """A base run swept along one path, with replicates per point.

    kinds: ``path_a`` (d values, centers fixed per replicate, placed at the
    largest d and ``fraction``), ``path_b`` (d values at fixed ``fraction``),
    ``path_c`` (fraction values at fixed ``d``), ``ligament`` (notch labels x
    ``d_max`` values, Fuller grading) and ``mesh_size`` (l_m values).
    ``phases`` lists the three_phase settings to run at every point.
    """

    base: RunConfig
    kind: str
    values: tuple
    replicates: int = 3
    master_seed: int = 2024
    phases: tuple = (True,)
    fraction: float = 0.40
    d: float = 8.0
    labels: tuple = ("L", "XS")
    d_min: float = 3.15
    name: str = "campaign"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "phases", tuple(bool(p) for p in self.phases))
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.kind not in CAMPAIGN_KINDS:
            raise ConfigError("kind", f"expected one of {CAMPAIGN_KINDS}, got {self.kind!r}")
        if self.replicates < 1:
            raise ConfigError("replicates", "must be at least 1")
        if not self.values:
            raise ConfigError("values", "need at least one sweep value")
        if any(v <= 0 for v in self.values):
            raise ConfigError("values", "sweep values must be positive")
        if self.kind == "path_c" and any(v >= 1 for v in self.values):
            raise ConfigError("values", "fractions must lie in (0, 1)")
        if not 0 <= self.fraction < 1:
            raise ConfigError("fraction", "must lie in [0, 1)")
        if self.kind == "ligament":
            bad = [lab for lab in self.labels if lab not in LIGAMENT_NOTCH]
            if bad:
                raise ConfigError("labels", f"unknown ligament label {bad[0]!r}")
            if any(v <= self.d_min for v in self.values):
                raise ConfigError("values", "d_max values must exceed d_min")

    def points(self) -> list[SweepPoint]:
        pts = []
        idx = 0
        if self.kind == "ligament":
            grid = [(lab, v) for lab in self.labels for v in self.values]
        else:
            grid = [(None, v) for v in self.values]
        for phase in self.phases:
            for g, (lab, v) in enumerate(grid):
                tag = "3ph" if phase else "2ph"
                if self.kind == "path_a":
                    params, label, stream = {"d": v}, f"{tag}_d{v:g}", 0
                elif self.kind == "path_b":
                    params, label, stream = {"d": v, "fraction": self.fraction}, f"{tag}_d{v:g}", g
                elif self.kind == "path_c":
                    params, label, stream = {"d": self.d, "fraction": v}, f"{tag}_P{v:g}", g
                elif self.kind == "ligament":
                    params, label, stream = {"ligament": lab, "d_max": v}, f"{tag}_{lab}_dmax{v:g}", g
                else:
                    params, label, stream = {"l_m": v}, f"lm{v:g}", g
                params["three_phase"] = phase
                pts.append(SweepPoint(idx, label, params, stream))
                idx += 1
        return pts

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "kind": self.kind, "values": list(self.values),
                "replicates": self.replicates, "master_seed": self.master_seed, "phases": list(self.phases),
                "fraction": self.fraction, "d": self.d, "labels": list(self.labels), "d_min": self.d_min,
                "name": self.name}

    def config_hash(self) -> str:
        return content_hash(self.to_dict())


CAMPAIGN_KEYS = ("base", "kind", "values", "replicates", "master_seed", "phases", "fraction", "d", "labels",
                 "d_min", "name")


def campaign_from_dict(d: dict) -> CampaignSpec:
    _check_keys(d, CAMPAIGN_KEYS, "")
    base = run_config_from_dict(copy.deepcopy(d.get("base", {})), "base")
    if "kind" not in d:
        raise ConfigError("kind", "missing sweep kind")
    if not isinstance(d.get("values"), list):
        raise ConfigError("values", "expected a list of numbers")
    values = [_num({"v": v}, "v", f"values[{i}]") for i, v in enumerate(d["values"])]
    kw = {}
    for k in ("fraction", "d", "d_min"):
        if k in d:
            kw[k] = _num(d, k, "")
    for k in ("replicates", "master_seed"):
        if k in d:
            kw[k] = _num(d, k, "", integer=True)
    if "phases" in d:
        if not (isinstance(d["phases"], list) and all(isinstance(p, bool) for p in d["phases"])):
            raise ConfigError("phases", "expected a list of booleans")
        kw["phases"] = d["phases"]
    if "labels" in d:
        kw["labels"] = d["labels"]
    if "name" in d:
        kw["name"] = str(d["name"])
    return CampaignSpec(base=base, kind=d["kind"], values=values, **kw)


def parse_campaign(path) -> CampaignSpec:
    return campaign_from_dict(_load_json(path))


__all__ = [
    "ConfigError", "RunConfig", "AnalysisOptions", "CampaignSpec", "SweepPoint", "parse_config",
    "run_config_from_dict", "parse_campaign", "campaign_from_dict", "preset_geometry", "PRESETS",
    "content_hash", "parse_geometry", "parse_grading", "parse_material",
]
