"""Dense feed-forward networks in plain numpy with exact reverse-mode gradients.

Batches are row-major: ``x`` is ``(in,)`` or ``(batch, in)`` and a layer computes
``x @ W.T + b`` with ``W`` shaped ``(out, in)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class DivergenceError(FloatingPointError):
    """Non-finite values appeared in a loss or gradient."""


def _softplus(z):
    # overflow-safe log(1 + e^z); several times faster than np.logaddexp
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    # name: (f(z), f'(z) expressed via z)
    "linear": (lambda z: z, lambda z: np.ones_like(z)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(float)),
    "softplus": (_softplus, _sigmoid),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
}


@dataclass(frozen=True)
class Head:
    """Output head: ``linear`` or ``bounded`` (tanh scaled into ``[low, high]``)."""

    kind: str = "linear"
    low: tuple[float, ...] = ()
    high: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("linear", "bounded"):
            raise ValueError(f"unknown head kind {self.kind!r}")
        if self.kind == "bounded" and (len(self.low) != len(self.high) or any(l >= h for l, h in zip(self.low, self.high))):
            raise ValueError("bounded head needs matching low < high")

    @classmethod
    def bounded(cls, low, high) -> "Head":
        return cls("bounded", tuple(float(v) for v in np.atleast_1d(low)), tuple(float(v) for v in np.atleast_1d(high)))

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (np.array(self.high) + np.array(self.low))

    @property
    def half(self) -> np.ndarray:
        return 0.5 * (np.array(self.high) - np.array(self.low))


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    head: Head = field(default_factory=Head)

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("one weight, bias and activation per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input {w.shape[1]} != layer {i - 1} output {self.weights[i - 1].shape[0]}")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.head.kind == "bounded":
            if len(self.head.low) != self.out_dim:
                raise ValueError("bounded head size must equal the output dimension")
            if self.activations[-1] != "linear":
                raise ValueError("bounded head expects a linear last layer")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MlpParams":
        return MlpParams(list(arrays[0::2]), list(arrays[1::2]), list(self.activations), self.head)

    def copy(self) -> "MlpParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "MlpParams":
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    activation: str = "softplus",
    head: Head | None = None,
    final_scale: float = 3e-3,
) -> MlpParams:
    """Uniform fan-in initialization; the last layer starts near zero."""
    weights, biases = [], []
    n_layers = len(sizes) - 1
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = final_scale if i == n_layers - 1 else 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(rng.uniform(-bound, bound, size=n_out))
    acts = [activation] * (n_layers - 1) + ["linear"]
    return MlpParams(weights, biases, acts, head or Head())


@dataclass
class Cache:
    inputs: list[np.ndarray]   # input to each layer
    pre: list[np.ndarray]      # pre-activation of each layer
    squeeze: bool


def forward(params: MlpParams, x) -> tuple[np.ndarray, Cache]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != params.in_dim:
        raise ValueError(f"input dimension {h.shape[1]} does not match network input {params.in_dim}")
    inputs, pre = [], []
    for w, b, act in zip(params.weights, params.biases, params.activations):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = ACTIVATIONS[act][0](z)
    if params.head.kind == "bounded":
        h = params.head.mid + params.head.half * np.tanh(h)
    return (h[0] if squeeze else h), Cache(inputs, pre, squeeze)


def predict(params: MlpParams, x) -> np.ndarray:
    return forward(params, x)[0]


def backward(params: MlpParams, cache: Cache, upstream, head_upstream=None) -> tuple[MlpParams, np.ndarray]:
    """Gradients of ``sum(upstream * y)`` w.r.t. every parameter and the input.

    ``head_upstream`` optionally adds a gradient taken w.r.t. the last layer's
    pre-head output (the tanh argument of a bounded head). Parameter gradients
    are summed over batch rows.
    """
    if len(cache.pre) != len(params.weights) or cache.inputs[0].shape[1] != params.in_dim:
        raise ValueError("cache does not belong to these parameters")
    g = np.asarray(upstream, dtype=float)
    g = g[None, :] if cache.squeeze else g
    if g.shape != cache.pre[-1].shape:
        raise ValueError(f"upstream gradient shape {g.shape} != output shape {cache.pre[-1].shape}")
    n = len(params.weights)
    if params.head.kind == "bounded":
        # pre[-1] feeds a linear activation, so it is the tanh argument
        g = g * params.head.half * (1.0 - np.tanh(cache.pre[-1]) ** 2)
    if head_upstream is not None:
        h = np.asarray(head_upstream, dtype=float)
        g = g + (h[None, :] if cache.squeeze else h)
    dW, db = [None] * n, [None] * n
    for i in reversed(range(n)):
        g = g * ACTIVATIONS[params.activations[i]][1](cache.pre[i])
        dW[i] = g.T @ cache.inputs[i]
        db[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    grads = MlpParams(dW, db, list(params.activations), params.head)
    return grads, (g[0] if cache.squeeze else g)


def _loss(kind: str, y: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray]:
    if kind == "linear":
        return float(np.sum(v * y)), v
    if kind == "quadratic":
        return float(0.5 * np.sum((y - v) ** 2)), y - v
    raise ValueError(f"unknown loss kind {kind!r}")


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """``|a - b| / (|a| + |b|)`` in the Euclidean norm, 0 when both vanish."""
    num = np.linalg.norm(a - b)
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if den < floor else float(num / den)


def grad_check(
    params: MlpParams,
    x,
    loss: str = "quadratic",
    target=None,
    eps: float = 1e-5,
    backward_fn: Callable = backward,
) -> float:
    """Max relative error between ``backward_fn`` and central differences.

    Each parameter tensor and the input are compared separately; the worst
    tensor is reported. ``loss`` is ``linear`` (``sum(target * y)``) or
    ``quadratic`` (``0.5 * |y - target|^2``).
    """
    x = np.array(x, dtype=float)
    y, cache = forward(params, x)
    v = np.ones_like(y) if target is None else np.broadcast_to(np.asarray(target, dtype=float), y.shape)
    _, upstream = _loss(loss, y, v)
    grads, gx = backward_fn(params, cache, upstream)

    def f(p, xin):
        return _loss(loss, forward(p, xin)[0], v)[0]

    worst = 0.0
    work = [a.copy() for a in params.arrays()]
    for idx, analytic in enumerate(grads.arrays()):
        numeric = np.zeros_like(work[idx])
        for j in np.ndindex(work[idx].shape):
            orig = work[idx][j]
            work[idx][j] = orig + eps
            plus = f(params.with_arrays(work), x)
            work[idx][j] = orig - eps
            minus = f(params.with_arrays(work), x)
            work[idx][j] = orig
            numeric[j] = (plus - minus) / (2 * eps)
        worst = max(worst, relative_error(analytic, numeric))
    numeric_x = np.zeros_like(x)
    for j in np.ndindex(x.shape):
        orig = x[j]
        x[j] = orig + eps
        plus = f(params, x)
        x[j] = orig - eps
        minus = f(params, x)
        x[j] = orig
        numeric_x[j] = (plus - minus) / (2 * eps)
    return max(worst, relative_error(gx, numeric_x))


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, **kw) -> "OptimizerState":
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls([z.copy() for z in zeros], zeros, lr=lr, **kw)

    def to_dict(self) -> dict:
        return {
            "t": self.t, "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "m": [_encode(a) for a in self.m], "v": [_encode(a) for a in self.v],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerState":
        return cls(
            [_decode(a) for a in d["m"]], [_decode(a) for a in d["v"]],
            t=d["t"], lr=d["lr"], beta1=d["beta1"], beta2=d["beta2"], eps=d["eps"],
        )


def adam_update(params: MlpParams, grads: MlpParams, opt: OptimizerState) -> tuple[MlpParams, OptimizerState]:
    """One bias-corrected Adam step (gradient *descent*)."""
    g_arrays = grads.arrays()
    p_arrays = params.arrays()
    if len(g_arrays) != len(p_arrays) or any(g.shape != p.shape for g, p in zip(g_arrays, p_arrays)):
        raise ValueError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise DivergenceError("non-finite gradient")
    t = opt.t + 1
    b1, b2 = opt.beta1, opt.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, opt.m, opt.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        step = opt.lr * (m / corr1) / (np.sqrt(v / corr2) + opt.eps)
        new_p.append(p - step)
        new_m.append(m)
        new_v.append(v)
    return params.with_arrays(new_p), OptimizerState(new_m, new_v, t, opt.lr, b1, b2, opt.eps)


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    t_arr, o_arr = target.arrays(), online.arrays()
    if len(t_arr) != len(o_arr) or any(a.shape != b.shape for a, b in zip(t_arr, o_arr)):
        raise ValueError("target and online networks differ in shape")
    return target.with_arrays([(1.0 - tau) * a + tau * b for a, b in zip(t_arr, o_arr)])


# -- serialization -----------------------------------------------------------

def _encode(a: np.ndarray) -> dict:
    # repr of a Python float round-trips exactly
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _decode(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def mlp_to_dict(params: MlpParams) -> dict:
    return {
        "layers": [
            {"weight": _encode(w), "bias": _encode(b), "activation": a}
            for w, b, a in zip(params.weights, params.biases, params.activations)
        ],
        "head": {"kind": params.head.kind, "low": list(params.head.low), "high": list(params.head.high)},
    }


def mlp_from_dict(d: dict) -> MlpParams:
    head = Head(d["head"]["kind"], tuple(d["head"]["low"]), tuple(d["head"]["high"]))
    layers = d["layers"]
    return MlpParams(
        [_decode(l["weight"]) for l in layers],
        [_decode(l["bias"]) for l in layers],
        [l["activation"] for l in layers],
        head,
    )


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def save_mlp(params: MlpParams, path, config: dict | None = None) -> None:
    doc = {"format": "sessmarl-mlp/1", "config_hash": config_hash(config or {}), **mlp_to_dict(params)}
    Path(path).write_text(json.dumps(doc))


def load_mlp(path) -> MlpParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "sessmarl-mlp/1":
        raise ValueError(f"{path} is not a network checkpoint")
    return mlp_from_dict(doc)
