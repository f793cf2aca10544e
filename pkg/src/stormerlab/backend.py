"""Numerical backend selection.

The hot loops live in the compiled extension ``stormerlab._core``; when it
is unavailable (no C toolchain at install time) the pure-Python twin
``stormerlab._purepy`` is used instead. Both expose the same API and the
same floating-point semantics.

Set ``STORMERLAB_BACKEND=python`` to force the fallback, or ``=compiled``
to require the extension (ImportError if missing).
"""

import os

_requested = os.environ.get("STORMERLAB_BACKEND", "auto").strip().lower()

if _requested in ("auto", ""):
    try:
        from . import _core as kernel
    except ImportError:
        from . import _purepy as kernel
elif _requested == "compiled":
    from . import _core as kernel
elif _requested in ("python", "purepy"):
    from . import _purepy as kernel
else:
    raise ImportError(f"unknown STORMERLAB_BACKEND value: {_requested!r}")


def active_backend():
    """Name of the kernel in use: 'compiled' or 'python'."""
    return kernel.BACKEND
