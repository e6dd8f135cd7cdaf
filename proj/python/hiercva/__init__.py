"""Hierarchically simulated CVA learning (C++ core, pybind11 surface)."""

try:
    # Installed layout: the extension lives inside the package.
    from ._hiercva import *  # noqa: F401,F403
    from . import _hiercva as _impl
except ImportError:
    # Build-tree layout: the extension sits on PYTHONPATH.
    from _hiercva import *  # noqa: F401,F403
    import _hiercva as _impl

__doc__ = _impl.__doc__

__all__ = [
    "ConfigError",
    "DefaultBlock",
    "MarketBlock",
    "MtMCube",
    "NumericError",
    "PipelineConfig",
    "RandomStream",
    "defaults_label",
    "estimate_p",
    "estimate_qr",
    "features",
    "heuristic_m",
    "intensity_label",
    "load_config",
    "optimal_n",
    "parse_config",
    "run",
    "simulate",
    "twin_l2_error",
    "twin_relative_rmse",
]
