"""Backend selection for the damage-probability kernel.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used.  Both backends return bit-identical results, so backend
choice never changes run output.  Set ``QUAKEIMPACT_KERNEL=numpy`` or
``=cython`` to force one (the latter raises if the extension is missing).
"""

import os

from . import _numpy

try:
    from . import _core
except ImportError:
    _core = None

_BACKENDS = {"numpy": _numpy}
if _core is not None:
    _BACKENDS["cython"] = _core

_active = None


def set_backend(name):
    """Select a backend by name ('auto', 'numpy', 'cython')."""
    global _active
    if name == "auto":
        name = "cython" if _core is not None else "numpy"
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(_BACKENDS)}")
    _active = name
    return _active


def backend_name():
    return _active


def available_backends():
    return tuple(sorted(_BACKENDS))


def damage_probabilities(*args, **kwargs):
    return _BACKENDS[_active].damage_probabilities(*args, **kwargs)


set_backend(os.environ.get("QUAKEIMPACT_KERNEL", "auto"))
