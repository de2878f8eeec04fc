"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementation in ``_pykernels``. Set ``GREENFL_PURE_PYTHON=1`` to force
the fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if not os.environ.get("GREENFL_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

_INT = np.dtype("long")


def _ints(x):
    return np.ascontiguousarray(x, dtype=_INT)


def local_sgd(params, prev, nxt, order, vocab, lr, batch_size, epochs, backend=None):
    impl = _pykernels if backend == "python" else _impl
    params = np.ascontiguousarray(params, dtype=np.float64)
    return impl.local_sgd(params, _ints(prev), _ints(nxt), _ints(order), int(vocab), float(lr), int(batch_size), int(epochs))


def token_log_probs(params, prev, nxt, vocab, backend=None):
    impl = _pykernels if backend == "python" else _impl
    params = np.ascontiguousarray(params, dtype=np.float64)
    return impl.token_log_probs(params, _ints(prev), _ints(nxt), int(vocab))


loss_and_grad = _pykernels.loss_and_grad
