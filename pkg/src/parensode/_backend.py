"""Backend selection: compiled kernels when importable, pure Python otherwise.

Set ``PARENSODE_BACKEND=python`` to force the fallback even when the
extension is built.
"""

from __future__ import annotations

import os

native = None
if os.environ.get("PARENSODE_BACKEND", "").lower() != "python":
    try:
        from . import _native as native  # type: ignore[no-redef]
    except ImportError:  # extension not built
        native = None

NAME = "native" if native is not None else "python"


def available() -> bool:
    return native is not None
