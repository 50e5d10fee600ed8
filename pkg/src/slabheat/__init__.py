"""Space-time finite elements for moving-laser heat conduction.

The package discretizes the nonlinear heat equation with an apparent heat
capacity phase-change model on multi-level hp meshes that span space and
time.  The time axis is split into conforming slabs marched one after the
other, each refined toward the recent laser path, so the cost per slab
follows the process physics instead of the total domain size.

Typical entry points:

* :func:`slabheat.march` / :class:`slabheat.MarchProblem`: solve slab by slab.
* :mod:`slabheat.config`: JSON run configs with units and presets.
* :mod:`slabheat.verify`: manufactured solutions and convergence tables.
* ``python -m slabheat.cli`` or the ``slabheat`` script: run/verify/bench.

Attributes resolve lazily so that importing the package stays free of
numpy/scipy; the command line uses this to pin the BLAS thread count
through environment variables before any linear algebra loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "grid": ["BaseGrid", "SlabMesh", "TreeCell", "build_slab_mesh"],
    "hpbasis": ["DofMap", "build_basis", "eval_integrated_legendre",
                "trunk_mask"],
    "physics": ["Beam", "LaserPath", "Material", "beam_source",
                "conductivity", "heat_capacity", "phase_fraction"],
    "refinement": ["COARSE_SCHEDULE", "FINE_SCHEDULE", "SourceSchedule",
                   "source_target"],
    "assembly": ["SlabSystem", "project_plane", "quadrature_counts"],
    "solver": ["MarchProblem", "NewtonError", "NewtonSettings",
               "SingularSystemError", "SlabState", "load_state", "march",
               "newton_solve", "save_state"],
    "postprocess": ["MeltPoolMetrics", "export_vtk", "melt_pool_dimensions",
                    "sample_field", "spatial_integral", "steady_window_stats",
                    "write_metrics_csv"],
    "config": ["ConfigError", "OutputSettings", "RunConfig", "config_to_dict",
               "hatched_square_path", "load_config", "parse_config",
               "parse_quantity", "preset_config", "preset_names"],
    "runner": ["execute_run", "problem_from_config", "sample_melt_metrics"],
}

_ATTR_MODULE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = ["__version__", *_ATTR_MODULE]


def __getattr__(name: str):
    mod = _ATTR_MODULE.get(name)
    if mod is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(__all__)
