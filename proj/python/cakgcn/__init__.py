"""CA-KGCN: context-aware knowledge-graph recommendations with explanations.

Thin python surface over the C++ engine. The heavy lifting (training loops,
autograd, evaluation protocols) lives in the compiled `_core` module; this
package just re-exports it.
"""

from ._core import (
    __version__,
    auc,
    evaluate,
    explain,
    kmeans,
    prepare,
    synth,
    train,
)

__all__ = [
    "__version__",
    "auc",
    "evaluate",
    "explain",
    "kmeans",
    "prepare",
    "synth",
    "train",
]
