"""Closure-kernel backend selection.

The hot operations of the explorer are the `parts`/`analz` fixpoints and
synthesis-membership checks, evaluated once or more per visited state.
A Cython extension implements them over the term arena's integer
columns; this module selects it at import time and falls back to the
pure-Python twin when the extension is unavailable.

Set SYMTLS_KERNEL=python (or =c) to force a backend.
"""

from __future__ import annotations

import os

from . import _pykernel

_forced = os.environ.get("SYMTLS_KERNEL", "").strip().lower()

if _forced in ("python", "py"):
    _impl = _pykernel
elif _forced in ("c", "cython", "ext"):
    from . import _ckernel as _impl  # noqa: F401  (raises if not built)
else:
    try:
        from . import _ckernel as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernel

BACKEND: str = _impl.BACKEND
parts = _impl.parts
analz = _impl.analz
synthesizable = _impl.synthesizable
