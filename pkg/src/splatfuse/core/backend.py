"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``SPLATFUSE_BACKEND=python`` forces the fallback and
``SPLATFUSE_BACKEND=compiled`` makes a missing extension an error.
"""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled


def available():
    return sorted(BACKENDS)


def default_name():
    choice = os.environ.get("SPLATFUSE_BACKEND", "auto").lower()
    if choice == "auto":
        return "compiled" if _compiled is not None else "python"
    if choice not in ("python", "compiled"):
        raise ValueError(f"unknown SPLATFUSE_BACKEND {choice!r}")
    if choice == "compiled" and _compiled is None:
        raise ImportError("SPLATFUSE_BACKEND=compiled but splatfuse.core._kernels is not built")
    return choice


def get(name=None):
    name = name or default_name()
    try:
        return name, BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available()}") from None
