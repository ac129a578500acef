"""Compute kernel backends.

Two interchangeable implementations of the classifier forward/backward/SGD
core live here: ``_fast`` (Cython, built at install time) and ``pure``
(numpy, always available). The compiled one is selected at import when
present; set ``BOTUQ_BACKEND=python`` or ``BOTUQ_BACKEND=cython`` to force a
choice. ``benchmarks/benchmark_backends.py`` times one against the other.
"""

import os

from . import pure

_forced = os.environ.get("BOTUQ_BACKEND", "").lower()

if _forced == "python":
    backend = pure
    BACKEND_NAME = "python"
elif _forced == "cython":
    from . import _fast as backend  # hard import: fail loudly when forced

    BACKEND_NAME = "cython"
elif _forced:
    raise ImportError(f"BOTUQ_BACKEND={_forced!r}: expected 'python' or 'cython'")
else:
    try:
        from . import _fast as backend

        BACKEND_NAME = "cython"
    except ImportError:
        backend = pure
        BACKEND_NAME = "python"

KIND_LSTM = pure.KIND_LSTM
KIND_CNN_LSTM = pure.KIND_CNN_LSTM
PROB_FLOOR = pure.PROB_FLOOR
weight_shapes = pure.weight_shapes
Kernel = backend.Kernel


def available_backends():
    names = ["python"]
    try:
        from . import _fast  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names
