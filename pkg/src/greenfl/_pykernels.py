"""Pure numpy implementation of the softmax next-token kernels.

Parameter layout (shared with ``_ckernels``): a flat float64 vector holding
the ``V x V`` transition logits row-major, followed by a length-``V`` bias.
"""
import numpy as np


def _split(params, vocab):
    w = params[: vocab * vocab].reshape(vocab, vocab)
    b = params[vocab * vocab :]
    return w, b


def _probs(w, b, prev):
    logits = w[prev] + b
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def local_sgd(params, prev, nxt, order, vocab, lr, batch_size, epochs):
    """Mini-batch SGD in place; ``order`` holds ``epochs`` concatenated permutations."""
    w, b = _split(params, vocab)
    n = len(prev)
    for ep in range(epochs):
        perm = order[ep * n : (ep + 1) * n]
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            pa, pn = prev[idx], nxt[idx]
            g = _probs(w, b, pa)
            g[np.arange(len(idx)), pn] -= 1.0
            scale = -lr / len(idx)
            np.add.at(w, pa, scale * g)
            b += scale * g.sum(axis=0)
    return params


def token_log_probs(params, prev, nxt, vocab):
    w, b = _split(params, vocab)
    logits = w[prev] + b
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return logits[np.arange(len(prev)), nxt] - lse


def loss_and_grad(params, prev, nxt, vocab):
    """Mean cross-entropy over the pairs and its gradient w.r.t. ``params``."""
    w, b = _split(params, vocab)
    n = len(prev)
    loss = -token_log_probs(params, prev, nxt, vocab).mean()
    g = _probs(w, b, prev)
    g[np.arange(n), nxt] -= 1.0
    g /= n
    grad = np.zeros_like(params)
    gw, gb = _split(grad, vocab)
    np.add.at(gw, prev, g)
    gb += g.sum(axis=0)
    return loss, grad
