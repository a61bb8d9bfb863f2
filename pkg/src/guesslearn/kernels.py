"""Hot-kernel dispatch: compiled Cython when available, numpy otherwise.

Set ``GUESSLEARN_PURE=1`` to force the numpy fallback.
"""
import os

from guesslearn import _fallback

BACKEND = "python"
_impl = _fallback
if not os.environ.get("GUESSLEARN_PURE"):
    try:
        from guesslearn import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

knn_topk_insert = _impl.knn_topk_insert
knn_vote = _impl.knn_vote
knn_query = _impl.knn_query
perceptron_pass = _impl.perceptron_pass
softmax_pass = _impl.softmax_pass
mapping_errors = _impl.mapping_errors

__all__ = [
    "BACKEND",
    "knn_topk_insert",
    "knn_vote",
    "knn_query",
    "perceptron_pass",
    "softmax_pass",
    "mapping_errors",
]
