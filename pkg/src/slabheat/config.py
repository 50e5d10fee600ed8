"""Run configuration: JSON schema, unit handling and presets.

Configs are JSON objects whose numeric leaves are either plain SI numbers
or strings with an explicit unit suffix ("170um", "0.8m/s"); mixing scales
silently is how benchmark parameters usually get mangled, so unknown units
and unknown keys are both hard errors with the offending path spelled out.

``parse_config`` resolves everything into frozen dataclasses;
``config_to_dict`` writes the canonical all-SI form back, and the two
compose to the identity on canonical dicts.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass

from .grid import BaseGrid
from .physics import Beam, LaserPath, Material
from .refinement import COARSE_SCHEDULE, FINE_SCHEDULE, SourceSchedule
from .solver import NewtonSettings

__all__ = [
    "ConfigError",
    "RunConfig",
    "OutputSettings",
    "parse_quantity",
    "parse_config",
    "config_to_dict",
    "load_config",
    "preset_config",
    "preset_names",
    "deep_merge",
    "apply_overrides",
    "hatched_square_path",
]


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending path."""


_UNIT_SCALE = {
    "m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9,
    "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "min": 60.0,
    "m/s": 1.0, "cm/s": 1e-2, "mm/s": 1e-3,
    "W": 1.0, "kW": 1e3,
    "C": 1.0, "degC": 1.0,
    "J/kg": 1.0, "kJ/kg": 1e3,
    "kg/m3": 1.0, "kg/m^3": 1.0,
    "J/kgC": 1.0, "J/(kgC)": 1.0,
    "W/mC": 1.0, "W/(mC)": 1.0,
}

_NUMBER = re.compile(r"([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(.*)")


def parse_quantity(value, where: str) -> float:
    """Number in SI units from a plain number or a suffixed string."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a quantity, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _NUMBER.fullmatch(value.strip())
        if m:
            suffix = m.group(2).strip()
            if suffix == "":
                return float(m.group(1))
            scale = _UNIT_SCALE.get(suffix)
            if scale is not None:
                return float(m.group(1)) * scale
            raise ConfigError(f"{where}: unknown unit {suffix!r} in {value!r}")
        raise ConfigError(f"{where}: cannot parse quantity {value!r}")
    raise ConfigError(f"{where}: expected number or quantity string, "
                      f"got {type(value).__name__}")


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return data[key]


def _check_keys(data: dict, where: str, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer")
    return value


def _bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true or false")
    return value


def _quantity_list(value, n, where: str):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ConfigError(f"{where}: expected a list of {n} quantities")
    return tuple(parse_quantity(v, f"{where}[{i}]") for i, v in enumerate(value))


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "out"
    vtk_times_per_slab: int = 0
    metrics_cadence: float = 0.0        # s between melt-pool samples; 0 = off
    melt_spacing: float = 5e-6          # lattice spacing around the pool
    melt_back: float = 600e-6           # lattice reach behind the beam
    melt_front: float = 200e-6
    melt_half_width: float = 200e-6
    melt_depth: float = 120e-6
    save_state: bool = True


@dataclass(frozen=True)
class RunConfig:
    grid: BaseGrid
    degrees: tuple
    trunk: bool
    material: Material
    beam: Beam | None
    path: LaserPath | None
    schedule: SourceSchedule | None
    quadrature: str
    settings: NewtonSettings
    samples_per_axis: int
    initial_temperature: float
    output: OutputSettings


def hatched_square_path(side: float, hatch_distance: float, speed: float,
                        origin=(0.0, 0.0), start_time: float = 0.0) -> LaserPath:
    """Boundary loop followed by a serpentine interior fill.

    Interior lines run at offsets ``(i + 1/2) * hatch`` from the lower edge,
    so ``side == hatch`` degenerates to the boundary plus a single pass.
    Total length is about ``4 * side + side^2 / hatch_distance``.
    """
    if not side >= hatch_distance > 0:
        raise ConfigError("need side >= hatch_distance > 0")
    x0, y0 = float(origin[0]), float(origin[1])
    a = float(side)
    pts = [(x0, y0), (x0 + a, y0), (x0 + a, y0 + a), (x0, y0 + a), (x0, y0)]
    n_lines = int(round(a / hatch_distance))
    for i in range(n_lines):
        y = y0 + (i + 0.5) * hatch_distance
        if i % 2 == 0:
            pts.extend([(x0, y), (x0 + a, y)])
        else:
            pts.extend([(x0 + a, y), (x0, y)])
    return LaserPath.from_polyline(pts, speed, start_time)


def _parse_path(data, where: str) -> LaserPath | None:
    if data is None:
        return None
    _check_keys(data, where, {"vertices", "speed", "start", "hatch"})
    start = parse_quantity(data.get("start", 0.0), f"{where}.start")
    if "hatch" in data:
        if "vertices" in data:
            raise ConfigError(f"{where}: give either vertices or hatch, not both")
        h = data["hatch"]
        _check_keys(h, f"{where}.hatch", {"side", "hatch_distance", "origin"})
        side = parse_quantity(_require(h, "side", f"{where}.hatch"),
                              f"{where}.hatch.side")
        dist = parse_quantity(_require(h, "hatch_distance", f"{where}.hatch"),
                              f"{where}.hatch.hatch_distance")
        origin = _quantity_list(h.get("origin", (0.0, 0.0)), 2,
                                f"{where}.hatch.origin")
        speed = parse_quantity(_require(data, "speed", where), f"{where}.speed")
        return hatched_square_path(side, dist, speed, origin, start)
    vertices = _require(data, "vertices", where)
    if not isinstance(vertices, (list, tuple)) or len(vertices) < 2:
        raise ConfigError(f"{where}.vertices: expected at least two waypoints")
    d = len(vertices[0])
    pts = [_quantity_list(v, d, f"{where}.vertices[{i}]")
           for i, v in enumerate(vertices)]
    speed = parse_quantity(_require(data, "speed", where), f"{where}.speed")
    return LaserPath.from_polyline(pts, speed, start)


def _parse_schedule(data, where: str) -> SourceSchedule | None:
    if data is None:
        return None
    if isinstance(data, str):
        named = {"coarse": COARSE_SCHEDULE, "fine": FINE_SCHEDULE}
        if data not in named:
            raise ConfigError(f"{where}: unknown schedule preset {data!r}")
        return named[data]
    _check_keys(data, where, {"delays", "depths", "sigmas", "depth_stretch"})
    rows = {}
    for key in ("delays", "depths", "sigmas", "depth_stretch"):
        seq = _require(data, key, where)
        if not isinstance(seq, (list, tuple)):
            raise ConfigError(f"{where}.{key}: expected a list")
        unit = key in ("delays", "sigmas")
        rows[key] = tuple(
            parse_quantity(v, f"{where}.{key}[{i}]") if unit else float(v)
            for i, v in enumerate(seq))
    try:
        return SourceSchedule(**rows)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_MATERIAL_PRESETS = {"IN625": {}}       # defaults of Material are IN625


def _parse_material(data, where: str) -> Material:
    _check_keys(data, where, {"preset", "density", "latent_heat", "solidus",
                              "liquidus", "mushy_scale", "specific_heat_ref",
                              "specific_heat_slope", "conductivity_ref",
                              "conductivity_slope"})
    kwargs = {}
    preset = data.get("preset", "IN625")
    if preset not in _MATERIAL_PRESETS:
        raise ConfigError(f"{where}.preset: unknown material {preset!r}")
    kwargs.update(_MATERIAL_PRESETS[preset])
    for key in ("density", "latent_heat", "solidus", "liquidus",
                "specific_heat_ref", "specific_heat_slope",
                "conductivity_ref", "conductivity_slope"):
        if key in data:
            kwargs[key] = parse_quantity(data[key], f"{where}.{key}")
    if "mushy_scale" in data:
        kwargs["mushy_scale"] = float(
            parse_quantity(data["mushy_scale"], f"{where}.mushy_scale"))
    try:
        return Material(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_beam(data, where: str) -> Beam | None:
    if data is None:
        return None
    _check_keys(data, where, {"power", "absorptivity", "spot_d4sigma",
                              "depth_sigma_factor", "surface", "cutoff_sigmas"})
    kwargs = {}
    for key in ("power", "absorptivity", "spot_d4sigma",
                "depth_sigma_factor", "surface", "cutoff_sigmas"):
        if key in data:
            kwargs[key] = parse_quantity(data[key], f"{where}.{key}")
    return Beam(**kwargs)


def _parse_degrees(data, where: str) -> tuple:
    if not isinstance(data, (list, tuple)) or not data:
        raise ConfigError(f"{where}: expected a non-empty list")
    out = []
    for i, entry in enumerate(data):
        if isinstance(entry, (list, tuple)):
            if len(entry) != 2:
                raise ConfigError(f"{where}[{i}]: expected [space, time]")
            out.append((_int(entry[0], f"{where}[{i}][0]"),
                        _int(entry[1], f"{where}[{i}][1]")))
        else:
            out.append((_int(entry, f"{where}[{i}]"), 1))
        if out[-1][0] < 1 or out[-1][1] < 1:
            raise ConfigError(f"{where}[{i}]: degrees must be at least 1")
    return tuple(out)


def parse_config(data: dict) -> RunConfig:
    """Resolve a raw config dict into validated SI dataclasses."""
    _check_keys(data, "config", {"domain", "time", "material", "beam", "path",
                                 "refinement", "solver", "quadrature",
                                 "initial_temperature", "output"})
    dom = _require(data, "domain", "config")
    _check_keys(dom, "domain", {"origin", "extent", "cells"})
    cells = _require(dom, "cells", "domain")
    if not isinstance(cells, (list, tuple)) or not cells:
        raise ConfigError("domain.cells: expected a non-empty list")
    d = len(cells)
    origin = _quantity_list(_require(dom, "origin", "domain"), d, "domain.origin")
    extent = _quantity_list(_require(dom, "extent", "domain"), d, "domain.extent")
    counts = tuple(_int(c, f"domain.cells[{i}]") for i, c in enumerate(cells))

    tm = _require(data, "time", "config")
    _check_keys(tm, "time", {"slab_duration", "slab_count",
                             "elements_per_slab", "start"})
    try:
        grid = BaseGrid(
            spatial_origin=origin, spatial_extent=extent, spatial_counts=counts,
            slab_duration=parse_quantity(_require(tm, "slab_duration", "time"),
                                         "time.slab_duration"),
            slab_count=_int(_require(tm, "slab_count", "time"),
                            "time.slab_count"),
            elements_per_slab=_int(tm.get("elements_per_slab", 1),
                                   "time.elements_per_slab"),
            start_time=parse_quantity(tm.get("start", 0.0), "time.start"))
    except ValueError as exc:
        raise ConfigError(f"domain/time: {exc}") from exc

    material = _parse_material(_require(data, "material", "config"), "material")
    beam = _parse_beam(data.get("beam"), "beam")
    path = _parse_path(data.get("path"), "path")

    ref = _require(data, "refinement", "config")
    _check_keys(ref, "refinement", {"schedule", "degrees", "trunk",
                                    "samples_per_axis"})
    degrees = _parse_degrees(_require(ref, "degrees", "refinement"),
                             "refinement.degrees")
    schedule = _parse_schedule(ref.get("schedule"), "refinement.schedule")
    trunk = _bool(ref.get("trunk", True), "refinement.trunk")
    samples = _int(ref.get("samples_per_axis", 5), "refinement.samples_per_axis")

    sol = data.get("solver", {})
    _check_keys(sol, "solver", {"rtol", "abs_floor", "max_iterations",
                                "max_bisections", "continuation"})
    settings = NewtonSettings(
        rtol=parse_quantity(sol.get("rtol", 1e-4), "solver.rtol"),
        abs_floor=parse_quantity(sol.get("abs_floor", 1e-14),
                                 "solver.abs_floor"),
        max_iterations=_int(sol.get("max_iterations", 25),
                            "solver.max_iterations"),
        max_bisections=_int(sol.get("max_bisections", 20),
                            "solver.max_bisections"),
        continuation=_bool(sol.get("continuation", True),
                           "solver.continuation"))

    quadrature = data.get("quadrature", "over")
    if quadrature not in ("over", "sufficient", "auto"):
        raise ConfigError(f"quadrature: unknown mode {quadrature!r}")

    out = data.get("output", {})
    _check_keys(out, "output", {"directory", "vtk_times_per_slab",
                                "metrics_cadence", "melt_lattice", "save_state"})
    lattice = out.get("melt_lattice", {})
    _check_keys(lattice, "output.melt_lattice",
                {"spacing", "back", "front", "half_width", "depth"})
    output = OutputSettings(
        directory=str(out.get("directory", "out")),
        vtk_times_per_slab=_int(out.get("vtk_times_per_slab", 0),
                                "output.vtk_times_per_slab"),
        metrics_cadence=parse_quantity(out.get("metrics_cadence", 0.0),
                                       "output.metrics_cadence"),
        melt_spacing=parse_quantity(lattice.get("spacing", 5e-6),
                                    "output.melt_lattice.spacing"),
        melt_back=parse_quantity(lattice.get("back", 600e-6),
                                 "output.melt_lattice.back"),
        melt_front=parse_quantity(lattice.get("front", 200e-6),
                                  "output.melt_lattice.front"),
        melt_half_width=parse_quantity(lattice.get("half_width", 200e-6),
                                       "output.melt_lattice.half_width"),
        melt_depth=parse_quantity(lattice.get("depth", 120e-6),
                                  "output.melt_lattice.depth"),
        save_state=_bool(out.get("save_state", True), "output.save_state"))

    if len(degrees) < 1:
        raise ConfigError("refinement.degrees: need at least level 0")
    return RunConfig(
        grid=grid, degrees=degrees, trunk=trunk, material=material, beam=beam,
        path=path, schedule=schedule, quadrature=quadrature, settings=settings,
        samples_per_axis=samples,
        initial_temperature=parse_quantity(
            data.get("initial_temperature", 25.0), "initial_temperature"),
        output=output)


def config_to_dict(cfg: RunConfig) -> dict:
    """Canonical all-SI dict form; parse_config inverts it exactly."""
    g = cfg.grid
    mat = cfg.material
    data = {
        "domain": {"origin": list(g.spatial_origin),
                   "extent": list(g.spatial_extent),
                   "cells": list(g.spatial_counts)},
        "time": {"slab_duration": g.slab_duration,
                 "slab_count": g.slab_count,
                 "elements_per_slab": g.elements_per_slab,
                 "start": g.start_time},
        "material": {f.name: getattr(mat, f.name)
                     for f in dataclasses.fields(mat)},
        "beam": None if cfg.beam is None else
                {f.name: getattr(cfg.beam, f.name)
                 for f in dataclasses.fields(cfg.beam)},
        "path": None if cfg.path is None else
                {"vertices": [list(p) for p in cfg.path.points],
                 "speed": _path_speed(cfg.path),
                 "start": cfg.path.times[0]},
        "refinement": {
            "schedule": None if cfg.schedule is None else
                        {"delays": list(cfg.schedule.delays),
                         "depths": list(cfg.schedule.depths),
                         "sigmas": list(cfg.schedule.sigmas),
                         "depth_stretch": list(cfg.schedule.depth_stretch)},
            "degrees": [list(dd) for dd in cfg.degrees],
            "trunk": cfg.trunk,
            "samples_per_axis": cfg.samples_per_axis},
        "solver": {"rtol": cfg.settings.rtol,
                   "abs_floor": cfg.settings.abs_floor,
                   "max_iterations": cfg.settings.max_iterations,
                   "max_bisections": cfg.settings.max_bisections,
                   "continuation": cfg.settings.continuation},
        "quadrature": cfg.quadrature,
        "initial_temperature": cfg.initial_temperature,
        "output": {"directory": cfg.output.directory,
                   "vtk_times_per_slab": cfg.output.vtk_times_per_slab,
                   "metrics_cadence": cfg.output.metrics_cadence,
                   "melt_lattice": {"spacing": cfg.output.melt_spacing,
                                    "back": cfg.output.melt_back,
                                    "front": cfg.output.melt_front,
                                    "half_width": cfg.output.melt_half_width,
                                    "depth": cfg.output.melt_depth},
                   "save_state": cfg.output.save_state},
    }
    return data


def _path_speed(path: LaserPath) -> float:
    import numpy as np
    p = np.asarray(path.points)
    seg = np.linalg.norm(p[1] - p[0])
    return float(seg / (path.times[1] - path.times[0]))


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data)


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; override wins, sub-dicts merge key by key."""
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def apply_overrides(data: dict, assignments) -> dict:
    """Apply dotted ``section.key=json-value`` strings onto a config dict."""
    out = json.loads(json.dumps(data))
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected path=value")
        dotted, _, raw = item.partition("=")
        keys = dotted.strip().split(".")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {key} is not an object")
        node[keys[-1]] = value
    return out


def _amb_base(resolution: str) -> dict:
    if resolution == "coarse":
        cells, slabs, degrees, schedule = [12, 12, 3], 8, [2, 2, 4, 4, 3, 3], "coarse"
    elif resolution == "fine":
        cells, slabs, degrees, schedule = [64, 64, 9], 32, [1, 2, 2, 2, 2, 2, 2], "fine"
    else:
        raise ConfigError(f"unknown resolution {resolution!r}")
    track = 14e-3
    x0 = (24.08e-3 - track) / 2.0
    return {
        "domain": {"origin": [0.0, 0.0, -3.18e-3],
                   "extent": [24.08e-3, 24.82e-3, 3.18e-3],
                   "cells": cells},
        "time": {"slab_duration": 17.5e-3 / slabs, "slab_count": slabs},
        "material": {"preset": "IN625"},
        "beam": {"power": "179.2W", "absorptivity": 0.32,
                 "spot_d4sigma": "170um", "depth_sigma_factor": 0.28},
        "path": {"vertices": [[x0, 12.41e-3], [x0 + track, 12.41e-3]],
                 "speed": "0.8m/s"},
        "refinement": {"schedule": schedule, "degrees": degrees, "trunk": True},
        "quadrature": "over",
        "initial_temperature": "25C",
        "output": {"metrics_cadence": "0.05ms",
                   "melt_lattice": {"spacing": "5um", "back": "600um",
                                    "front": "200um", "half_width": "200um",
                                    "depth": "120um"}},
    }


def _hatched_square() -> dict:
    data = _amb_base("coarse")
    side = 10e-3
    data["path"] = {"hatch": {"side": side, "hatch_distance": "100um",
                              "origin": [(24.08e-3 - side) / 2.0,
                                         (24.82e-3 - side) / 2.0]},
                    "speed": "0.8m/s"}
    data["time"] = {"slab_duration": "2.4ms", "slab_count": 1250}
    data["output"] = {"metrics_cadence": 0.0}
    return data


def preset_names():
    return ("amb2018-02-coarse", "amb2018-02-fine", "hatched-square")


def preset_config(name: str) -> dict:
    """Raw config dict for a named preset."""
    if name == "amb2018-02-coarse":
        return _amb_base("coarse")
    if name == "amb2018-02-fine":
        return _amb_base("fine")
    if name == "hatched-square":
        return _hatched_square()
    raise ConfigError(f"unknown preset {name!r}; "
                      f"available: {', '.join(preset_names())}")
