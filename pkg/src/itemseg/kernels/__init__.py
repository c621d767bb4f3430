"""Linear-chain inference kernels.

The compiled extension is preferred when its build artifact is importable;
otherwise the numpy implementation takes over with identical semantics.
"""

try:
    from ._cchain import forward_backward, viterbi

    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    from ._pychain import forward_backward, viterbi

    BACKEND = "python"

__all__ = ["forward_backward", "viterbi", "BACKEND"]
