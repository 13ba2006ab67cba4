"""Shared test helpers: finite-difference oracles against the tensor engine."""

import numpy as np

from relexpl.autodiff import Tensor, grad


def numeric_grad(f, arrays, h=1e-5):
    """Central finite differences of scalar f(*arrays) w.r.t. each array.

    f receives plain numpy arrays and must return a python float. This is
    the independent oracle: it never touches the autodiff machinery.
    """
    arrays = [np.asarray(a, dtype=np.float64).copy() for a in arrays]
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        while not it.finished:
            ix = it.multi_index
            orig = a[ix]
            a[ix] = orig + h
            fp = f(*arrays)
            a[ix] = orig - h
            fm = f(*arrays)
            a[ix] = orig
            g[ix] = (fp - fm) / (2.0 * h)
            it.iternext()
        grads.append(g)
    return grads


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a.ravel()), np.linalg.norm(b.ravel()), 1e-12)
    return np.linalg.norm((a - b).ravel()) / denom


def check_param_grads(forward, params, h=1e-5, tol=1e-4):
    """FD-check gradients of a scalar forward() w.r.t. live parameter tensors.

    forward rebuilds the graph on each call and reads the params' current
    .data, so central differences can perturb them in place.
    """
    targets = list(params.values())
    engine = [g.data.copy() for g in grad(forward(), targets)]
    for p, eng in zip(targets, engine):
        num = np.zeros_like(p.data)
        it = np.nditer(p.data, flags=["multi_index"])
        while not it.finished:
            ix = it.multi_index
            orig = p.data[ix]
            p.data[ix] = orig + h
            fp = float(forward().data)
            p.data[ix] = orig - h
            fm = float(forward().data)
            p.data[ix] = orig
            num[ix] = (fp - fm) / (2.0 * h)
            it.iternext()
        assert rel_err(eng, num) < tol, (
            f"param gradient mismatch: rel err {rel_err(eng, num):.3e}"
        )


def check_grads(build, arrays, h=1e-5, tol=1e-4):
    """Compare engine gradients of build(*tensors) against finite differences.

    build maps Tensor inputs to a scalar Tensor. Asserts relative error
    below tol for every input.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    root = build(*tensors)
    engine = [g.data for g in grad(root, tensors)]

    def f(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    numeric = numeric_grad(f, arrays, h=h)
    for e, n in zip(engine, numeric):
        assert rel_err(e, n) < tol, f"gradient mismatch: rel err {rel_err(e, n):.3e}"
