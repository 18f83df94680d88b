"""Kernel backend selection.

The hot inner loops (activations, softmaxes, segment reductions, optimizer
updates) exist twice: a Cython extension (``_fastops``) and a pure-numpy
fallback (``numpy_ops``). The compiled module is preferred when importable;
set ``EDGEFAULT_BACKEND=numpy`` to force the fallback or
``EDGEFAULT_BACKEND=compiled`` to fail loudly if the extension is missing.

Matrix products are delegated to numpy/BLAS in both backends.
"""

import os

from . import numpy_ops

_requested = os.environ.get("EDGEFAULT_BACKEND", "auto")

if _requested == "numpy":
    _impl = numpy_ops
elif _requested == "compiled":
    from . import _fastops as _impl  # ImportError here is intentional
else:
    try:
        from . import _fastops as _impl
    except ImportError:
        _impl = numpy_ops

ACTIVE_BACKEND = _impl.NAME

sigmoid_fwd = _impl.sigmoid_fwd
sigmoid_bwd = _impl.sigmoid_bwd
leaky_relu_fwd = _impl.leaky_relu_fwd
leaky_relu_bwd = _impl.leaky_relu_bwd
row_softmax_fwd = _impl.row_softmax_fwd
row_softmax_bwd = _impl.row_softmax_bwd
segment_softmax_fwd = _impl.segment_softmax_fwd
segment_softmax_bwd = _impl.segment_softmax_bwd
segment_sum_fwd = _impl.segment_sum_fwd
segment_sum_bwd = _impl.segment_sum_bwd
adamw_update = _impl.adamw_update
