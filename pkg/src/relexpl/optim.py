"""Adam optimizer over named parameter dicts, plus checkpoint save/load."""

from __future__ import annotations

import json
import os

import numpy as np

from .autodiff import Tensor

CHECKPOINT_FORMAT = 1


class Adam:
    """Adam with bias correction over a dict of named parameter tensors.

    Parameter order is fixed by sorted name so state updates are
    reproducible regardless of dict construction order.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0.0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self):
        """Apply one update from the accumulated .grad fields, then zero them."""
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name in sorted(self.params):
            p = self.params[name]
            if p.grad is None:
                raise ValueError(f"parameter {name!r} has no gradient; call backward first")
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
            p.grad[...] = 0.0

    def zero_grad(self):
        for p in self.params.values():
            if p.grad is not None:
                p.grad[...] = 0.0


def save_checkpoint(path: str, params: dict[str, Tensor], extra: dict | None = None):
    """Write parameters as JSON: name -> {shape, flat float list}. Byte-stable."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "params": {
            name: {"shape": list(p.data.shape), "data": p.data.ravel().tolist()}
            for name, p in params.items()
        },
    }
    if extra:
        payload["extra"] = extra
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as plain arrays plus the extra metadata dict."""
    with open(path) as fh:
        payload = json.load(fh)
    fmt = payload.get("format")
    if fmt != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {fmt!r}, expected {CHECKPOINT_FORMAT}")
    arrays = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    return arrays, payload.get("extra", {})


def restore_params(params: dict[str, Tensor], arrays: dict[str, np.ndarray]):
    """Copy loaded arrays into an existing parameter dict, shape-checked."""
    missing = sorted(set(params) - set(arrays))
    unexpected = sorted(set(arrays) - set(params))
    if missing or unexpected:
        raise ValueError(f"checkpoint mismatch: missing {missing}, unexpected {unexpected}")
    for name, p in params.items():
        a = arrays[name]
        if a.shape != p.data.shape:
            raise ValueError(f"parameter {name!r}: checkpoint shape {a.shape} != model {p.data.shape}")
        p.data[...] = a
