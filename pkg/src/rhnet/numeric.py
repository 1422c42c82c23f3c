"""Dense fp64 substrate: activations, parameters, Adam, gradient checking,
seeded random streams and the checkpoint container.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Gradients are
produced by hand-written backward functions in each model module; this module
only provides the pieces they share.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterator, Mapping, Optional, Tuple, Union

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """A non-finite value crossed an operation boundary."""


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def as_tensor(x, shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    arr = np.asarray(x, dtype=DTYPE)
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matmul_backward(a: np.ndarray, b: np.ndarray, grad_out: np.ndarray):
    """Gradients of ``sum(grad_out * (a @ b))`` with respect to ``a`` and ``b``."""
    return grad_out @ b.T, a.T @ grad_out


# ---------------------------------------------------------------- activations

def sigmoid(x):
    x = np.asarray(x, dtype=DTYPE)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x):
    """Softmax over the last axis with max-subtraction."""
    x = np.asarray(x, dtype=DTYPE)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(x):
    x = np.asarray(x, dtype=DTYPE)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def hinge(x):
    return np.maximum(0.0, np.asarray(x, dtype=DTYPE))


_ACTIVATIONS: Dict[str, Callable] = {
    "sigmoid": sigmoid,
    "tanh": lambda x: np.tanh(np.asarray(x, dtype=DTYPE)),
    "softmax": softmax,
    "hinge": hinge,
}


def activate(x, kind: str) -> np.ndarray:
    if kind not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}")
    check_finite(np.asarray(x, dtype=DTYPE), kind + " input")
    return _ACTIVATIONS[kind](x)


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax over the last axis."""
    return p * (grad_p - np.sum(grad_p * p, axis=-1, keepdims=True))


# ----------------------------------------------------------------- parameters

@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = None
    adam_m: np.ndarray = None
    adam_v: np.ndarray = None
    step_count: int = 0

    def __post_init__(self):
        self.value = np.array(self.value, dtype=DTYPE)
        shape = self.value.shape
        if self.grad is None:
            self.grad = np.zeros(shape)
        if self.adam_m is None:
            self.adam_m = np.zeros(shape)
        if self.adam_v is None:
            self.adam_v = np.zeros(shape)
        for slot in (self.grad, self.adam_m, self.adam_v):
            if slot.shape != shape:
                raise DimensionError(f"{self.name}: slot shape {slot.shape} != {shape}")

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


class ParameterStore:
    """Ordered collection of uniquely named parameters."""

    def __init__(self, params: Optional[Mapping[str, np.ndarray]] = None):
        self._params: Dict[str, Parameter] = {}
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def subset(self, prefix) -> "ParameterStore":
        """A store sharing the Parameter objects whose names start with ``prefix``
        (a string or a tuple of strings)."""
        view = ParameterStore()
        view._params = {k: p for k, p in self._params.items() if k.startswith(prefix)}
        return view

    def value(self, name: str) -> np.ndarray:
        return self._params[name].value

    def zero_grad(self):
        for p in self:
            p.zero_grad()

    def accumulate(self, grads: Mapping[str, np.ndarray], scale: float = 1.0):
        for name, g in grads.items():
            self._params[name].grad += scale * g

    def values(self) -> Dict[str, np.ndarray]:
        return {p.name: p.value for p in self}

    def copy(self) -> "ParameterStore":
        out = ParameterStore()
        for p in self:
            q = out.add(p.name, p.value.copy())
            q.grad = p.grad.copy()
            q.adam_m = p.adam_m.copy()
            q.adam_v = p.adam_v.copy()
            q.step_count = p.step_count
        return out


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def step(self, params: ParameterStore):
        # validate everything first so a bad gradient leaves all values untouched
        for p in params:
            check_finite(p.grad, f"gradient of {p.name}")
        for p in params:
            adam_step(p, self.lr, self.beta1, self.beta2, self.eps)


def adam_step(p: Parameter, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Parameter:
    """One bias-corrected Adam update in place; clears the gradient."""
    g = p.grad
    check_finite(g, f"gradient of {p.name}")
    p.step_count += 1
    t = p.step_count
    p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
    p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * g * g
    m_hat = p.adam_m / (1.0 - beta1 ** t)
    v_hat = p.adam_v / (1.0 - beta2 ** t)
    p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)
    p.grad = np.zeros_like(p.value)
    return p


# ------------------------------------------------------------ gradient check

def grad_check(loss_fn: Callable[[ParameterStore], Tuple[float, Mapping[str, np.ndarray]]],
               params: ParameterStore, h: float = 1e-5,
               names: Optional[list] = None) -> float:
    """Maximum relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` must return ``(loss, grads)`` where ``grads`` maps
    parameter names to analytic gradients (missing names count as zero).
    Every coordinate of every selected parameter is perturbed.
    """
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    worst = 0.0
    for p in params:
        if names is not None and p.name not in names:
            continue
        analytic = np.asarray(grads.get(p.name, np.zeros(p.shape)), dtype=DTYPE)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_fn(params)[0]
            flat[i] = orig - h
            f_minus = loss_fn(params)[0]
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError("non-finite loss during perturbation")
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------- RNG

def rng(seed: int, label: str = "") -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(seed, label)``.

    Streams with different labels are independent, so consumers never depend
    on the order in which other modules drew numbers.
    """
    if not 0 <= int(seed) < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    digest = hashlib.blake2b(
        int(seed).to_bytes(8, "little") + label.encode("utf-8"), digest_size=16
    ).digest()
    key = np.frombuffer(digest, dtype="<u8").copy()
    return np.random.Generator(np.random.Philox(key=key))


# --------------------------------------------------------------- checkpoints

def save_tensors(path: Union[str, Path], tensors: Mapping[str, np.ndarray],
                 meta: Optional[dict] = None) -> None:
    """Write a JSON manifest line followed by a little-endian fp64 payload."""
    entries = []
    offset = 0
    chunks = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        raw = arr.tobytes(order="C")
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": "rhnet-ckpt/1", "tensors": entries, "meta": meta or {}}
    header = json.dumps(manifest, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(b"\n")
        for raw in chunks:
            fh.write(raw)


def load_tensors(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    cut = blob.index(b"\n")
    manifest = json.loads(blob[:cut].decode("utf-8"))
    if manifest.get("format") != "rhnet-ckpt/1":
        raise ValueError(f"{path}: not an rhnet checkpoint")
    payload = memoryview(blob)[cut + 1:]
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        arr = np.frombuffer(payload[start:start + 8 * count], dtype="<f8")
        tensors[entry["name"]] = arr.astype(DTYPE).reshape(shape)
    return tensors, manifest["meta"]
