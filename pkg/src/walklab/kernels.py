"""Selects the walk kernels at import time.

The compiled ``_ckernels`` extension is used when it is importable;
otherwise (or with ``WALKLAB_PURE=1``) the bit-identical pure-Python
``_pykernels`` module is used.  ``load(name)`` returns a specific backend.
"""

import importlib
import os

from . import _pykernels

_BACKENDS = {"python": "walklab._pykernels", "cython": "walklab._ckernels"}


def load(name):
    return importlib.import_module(_BACKENDS[name])


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.append("cython")
    return names


if os.environ.get("WALKLAB_PURE"):
    backend = _pykernels
else:
    try:
        backend = load("cython")
    except ImportError:
        backend = _pykernels

IMPLEMENTATION = backend.IMPLEMENTATION
