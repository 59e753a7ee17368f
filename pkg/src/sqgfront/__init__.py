"""Pseudospectral simulation and analysis of the SQG front equation.

Submodules are imported lazily so that thread settings for the compiled
kernels can be fixed (for example by the command line front end) before
numba is loaded.
"""
import importlib

__version__ = "0.1.0"

_LAZY = {
    "backend": "._accel",
    "BlowUp": ".errors",
    "InvalidArgument": ".errors",
    "NumericalFailure": ".errors",
    "Field": ".spectral",
    "GridSpec": ".spectral",
    "make_grid": ".spectral",
}

__all__ = sorted(_LAZY) + ["__version__"]


def __getattr__(name):
    mod = _LAZY.get(name)
    if mod is None:
        raise AttributeError(f"module 'sqgfront' has no attribute {name!r}")
    return getattr(importlib.import_module(mod, __name__), name)


def __dir__():
    return __all__
