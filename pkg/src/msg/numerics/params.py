"""Named parameter storage, adaptive-gradient updates and checkpoints."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor, get_default_dtype

CHECKPOINT_FORMAT = "msg-checkpoint/1"


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__("non-finite gradient in parameter(s): " + ", ".join(self.names))


class ParamStore:
    """Ordered map of named trainable tensors plus their squared-gradient accumulators."""

    def __init__(self, dtype=None):
        self.dtype = np.dtype(get_default_dtype() if dtype is None else dtype).type
        self._params: dict[str, Tensor] = {}
        self.accumulators: dict[str, np.ndarray] = {}

    def add(self, name: str, shape, rng: np.random.Generator | None = None,
            init_range: float = 0.05, value=None) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already defined")
        if value is None:
            value = rng.uniform(-init_range, init_range, size=shape)
        value = np.asarray(value, dtype=self.dtype)
        if tuple(value.shape) != tuple(shape):
            raise ValueError(f"parameter {name!r}: value shape {value.shape} != declared {tuple(shape)}")
        t = Tensor(value, requires_grad=True, name=name, dtype=self.dtype)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {n: (p.grad if p.grad is not None else np.zeros_like(p.data)) for n, p in self._params.items()}

    def num_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def copy(self) -> "ParamStore":
        other = ParamStore(self.dtype)
        for n, p in self._params.items():
            other.add(n, p.shape, value=p.data.copy())
        other.accumulators = {n: a.copy() for n, a in self.accumulators.items()}
        return other

    def astype(self, dtype) -> "ParamStore":
        other = ParamStore(dtype)
        for n, p in self._params.items():
            other.add(n, p.shape, value=p.data)
        other.accumulators = {n: a.astype(other.dtype) for n, a in self.accumulators.items()}
        return other

    # -- checkpoint -----------------------------------------------------------

    def save(self, path, meta: dict | None = None) -> None:
        """Write an ``.npz`` archive: header, names, shapes, values, accumulators."""
        arrays = {
            "__format__": np.array(CHECKPOINT_FORMAT),
            "__names__": np.array(self.names()),
            "__meta__": np.array(json.dumps(meta or {})),
        }
        for n, p in self._params.items():
            arrays[f"param/{n}"] = p.data
            if n in self.accumulators:
                arrays[f"acc/{n}"] = self.accumulators[n]
        path = Path(path)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> tuple["ParamStore", dict]:
        with np.load(path, allow_pickle=False) as z:
            fmt = str(z["__format__"])
            if fmt != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: unsupported checkpoint format {fmt!r}")
            names = [str(n) for n in z["__names__"]]
            meta = json.loads(str(z["__meta__"]))
            first = z[f"param/{names[0]}"] if names else np.zeros(0, np.float32)
            store = cls(first.dtype)
            for n in names:
                v = z[f"param/{n}"]
                store.add(n, v.shape, value=v)
                if f"acc/{n}" in z.files:
                    store.accumulators[n] = z[f"acc/{n}"].copy()
        return store, meta


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; return the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


def adagrad_step(params: ParamStore, grads: dict[str, np.ndarray], lr: float, init_acc: float) -> None:
    """acc += g**2; p -= lr * g / sqrt(acc).  Accumulators start at ``init_acc``."""
    bad = [n for n, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(bad)
    for name, g in grads.items():
        p = params[name]
        acc = params.accumulators.get(name)
        if acc is None:
            acc = np.full(p.shape, init_acc, dtype=p.dtype)
            params.accumulators[name] = acc
        acc += g * g
        p.data -= (lr * g / np.sqrt(acc)).astype(p.dtype, copy=False)
