"""Kernel backend selection.

The compiled extension (`_native`, Cython) is preferred when present; the
pure-numpy fallback is otherwise used. Set CONVEXT_BACKEND=python or
CONVEXT_BACKEND=native to force one (forcing a missing native backend is an
error so benchmarks cannot silently compare a backend against itself).
"""

import os

from . import _fallback

_forced = os.environ.get("CONVEXT_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _fallback
elif _forced == "native":
    from . import _native as _impl  # ImportError here is intentional
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _fallback

BACKEND = _impl.BACKEND
logsumexp_1d = _impl.logsumexp_1d
logsumexp_rows = _impl.logsumexp_rows
mixture_lse = _impl.mixture_lse
tilted_lse = _impl.tilted_lse
conjugate_lines = _impl.conjugate_lines
interp_eval = _impl.interp_eval
