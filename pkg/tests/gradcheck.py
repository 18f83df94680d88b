"""Central finite-difference gradient oracle shared by the test modules.

Independent of the tape: it only re-runs a forward function with perturbed
parameter entries, so it cannot inherit a backward-pass bug.
"""

import numpy as np

from edgefault.autodiff import Tape


def finite_diff_grad(forward, param, h=1e-5):
    """d forward() / d param via central differences, entry by entry.

    ``forward`` must return a plain float and must not depend on any mutable
    state besides ``param.data``.
    """
    grad = np.zeros(param.shape)
    it = np.nditer(param.data, flags=["multi_index"])
    while not it.finished:
        ij = it.multi_index
        orig = param.data[ij]
        param.data[ij] = orig + h
        f_plus = forward()
        param.data[ij] = orig - h
        f_minus = forward()
        param.data[ij] = orig
        grad[ij] = (f_plus - f_minus) / (2.0 * h)
        it.iternext()
    return grad


def max_rel_error(analytic, numeric, floor=1e-3):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build_loss, params, h=1e-5, floor=1e-3):
    """Run tape backward once, then compare every parameter's gradient
    against central differences. Returns the worst relative error."""
    with Tape() as tape:
        loss = build_loss()
    tape.backward(loss)
    analytic = {id(p): (p.grad.copy() if p.grad is not None else np.zeros(p.shape))
                for p in params}
    for p in params:
        p.grad = None

    worst = 0.0
    for p in params:
        numeric = finite_diff_grad(lambda: build_loss().item(), p, h=h)
        worst = max(worst, max_rel_error(analytic[id(p)], numeric, floor=floor))
    return worst
