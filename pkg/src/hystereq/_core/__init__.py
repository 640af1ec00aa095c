"""Backend selection for the tape interpreter.

The compiled extension is preferred when importable; HYSTEREQ_BACKEND
("compiled" or "python") forces one explicitly, which the benchmark and
the parity tests rely on.
"""

import os

from . import _tapepy

_requested = os.environ.get("HYSTEREQ_BACKEND", "").strip().lower()

if _requested == "python":
    BACKEND = "python"
    forward_sweep = _tapepy.forward_sweep
    backward_sweep = _tapepy.backward_sweep
else:
    try:
        from . import _tapecore

        BACKEND = "compiled"
        forward_sweep = _tapecore.forward_sweep
        backward_sweep = _tapecore.backward_sweep
    except ImportError:
        if _requested == "compiled":
            raise
        BACKEND = "python"
        forward_sweep = _tapepy.forward_sweep
        backward_sweep = _tapepy.backward_sweep

__all__ = ["BACKEND", "forward_sweep", "backward_sweep"]
