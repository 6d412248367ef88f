"""Selects the numeric kernel implementation at import time.

The compiled extension is preferred when present; the pure-Python module is
a drop-in replacement.  Set ``WLAN_GAME_BACKEND=python`` or ``=compiled`` to
force a choice (forcing ``compiled`` raises if the extension is missing).
"""

import os

_choice = os.environ.get("WLAN_GAME_BACKEND", "auto").strip().lower()

if _choice in ("auto", "", "compiled"):
    try:
        from wlangame import _speed as kernels
        NAME = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        from wlangame import _purepy as kernels
        NAME = "python"
elif _choice in ("python", "pure"):
    from wlangame import _purepy as kernels
    NAME = "python"
else:
    raise RuntimeError(
        f"WLAN_GAME_BACKEND={_choice!r}: expected 'auto', 'compiled' or 'python'"
    )

MOD_MQAM = kernels.MOD_MQAM
MOD_DPSK = kernels.MOD_DPSK
