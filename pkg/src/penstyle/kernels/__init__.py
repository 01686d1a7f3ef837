"""Hot-path kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
pure-numpy reference implementation is used. Override with the
PENSTYLE_BACKEND environment variable ("auto", "cython", or "python");
"cython" fails loudly if the extension is missing. Both backends satisfy
the same contracts and are cross-checked by the test suite.
"""

import os

from . import reference

_choice = os.environ.get("PENSTYLE_BACKEND", "auto")
if _choice not in ("auto", "cython", "python"):
    raise ValueError(f"PENSTYLE_BACKEND must be auto/cython/python, got {_choice!r}")

_impl = reference
if _choice in ("auto", "cython"):
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _choice == "cython":
            raise
        _impl = reference

BACKEND = _impl.NAME

gru_cell_forward = _impl.gru_cell_forward
gru_cell_backward = _impl.gru_cell_backward
gru_layer_forward = _impl.gru_layer_forward
gru_layer_backward = _impl.gru_layer_backward
softmax_nll_forward = _impl.softmax_nll_forward
softmax_nll_backward = _impl.softmax_nll_backward


def available_backends() -> list:
    """Importable backend modules, reference first."""
    out = [reference]
    try:
        from . import _ckernels

        out.append(_ckernels)
    except ImportError:
        pass
    return out
