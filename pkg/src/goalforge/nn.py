"""Fixed-architecture MLPs with hand-written backprop, Adam, and input normalization.

Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from goalforge.errors import ContractError

CHECKPOINT_VERSION = 1

OUTPUT_ACTIVATIONS = ("identity", "tanh")


class Mlp:
    """ReLU MLP with a linear or scaled-tanh output layer.

    ``params`` is a flat list ``[W0, b0, W1, b1, ...]`` with ``W_i`` of shape
    ``(fan_in, fan_out)``. Hidden layers use fan-in uniform init; the output
    layer's init is additionally scaled by ``final_scale``.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        output: str = "identity",
        output_scale: float = 1.0,
        rng: np.random.Generator | None = None,
        final_scale: float = 1e-3,
    ):
        if len(sizes) < 2:
            raise ContractError("an MLP needs at least input and output sizes")
        if output not in OUTPUT_ACTIVATIONS:
            raise ContractError(f"unknown output activation {output!r}")
        rng = np.random.default_rng() if rng is None else rng
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        self.output_scale = float(output_scale)
        self.params: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if i == n_layers - 1:
                bound *= final_scale
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def copy(self) -> "Mlp":
        clone = object.__new__(Mlp)
        clone.sizes = self.sizes
        clone.output = self.output
        clone.output_scale = self.output_scale
        clone.params = [p.copy() for p in self.params]
        return clone

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.sizes[0]:
            raise ContractError(f"input has {x.shape[-1]} features, expected {self.sizes[0]}")
        return x

    def _activate(self, pre):
        if self.output == "tanh":
            return self.output_scale * np.tanh(pre)
        return pre

    def forward(self, x) -> np.ndarray:
        h = self._check_input(x)
        last = self.n_layers - 1
        for i in range(last):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            np.maximum(h, 0.0, out=h)
        return self._activate(h @ self.params[2 * last] + self.params[2 * last + 1])

    def forward_cache(self, x):
        """Forward pass that keeps what :meth:`backward` needs.

        Returns ``(output, cache)``; ``cache["pre"]`` is the output layer's
        pre-activation.
        """
        h = self._check_input(x)
        if h.ndim == 1:
            h = h[None, :]
        hidden = [h]
        last = self.n_layers - 1
        for i in range(last):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            np.maximum(h, 0.0, out=h)
            hidden.append(h)
        pre = h @ self.params[2 * last] + self.params[2 * last + 1]
        out = self._activate(pre)
        return out, {"hidden": hidden, "pre": pre, "out": out}

    def backward(self, cache, d_out=None, d_pre=None, param_grads: bool = True):
        """Reverse-mode pass.

        ``d_out`` is dL/d(output), ``d_pre`` an extra dL/d(pre-activation)
        term; either may be omitted. Returns ``(grads, d_input)`` where
        ``grads`` is None when ``param_grads`` is False.
        """
        pre = cache["pre"]
        delta = np.zeros_like(pre)
        if d_out is not None:
            d_out = np.asarray(d_out, dtype=np.float64).reshape(pre.shape)
            if self.output == "tanh":
                t = cache["out"] / self.output_scale
                delta += d_out * self.output_scale * (1.0 - t * t)
            else:
                delta += d_out
        if d_pre is not None:
            delta += d_pre
        hidden = cache["hidden"]
        grads = [None] * len(self.params) if param_grads else None
        for i in range(self.n_layers - 1, -1, -1):
            h = hidden[i]
            if param_grads:
                grads[2 * i] = h.T @ delta
                grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.params[2 * i].T
            if i > 0:
                delta *= h > 0.0
        return grads, delta


def gradient(mlp: Mlp, loss: Callable, x):
    """Parameter gradients of ``loss`` at ``mlp(x)``.

    ``loss(output)`` returns ``(value, d_value/d_output)``. Returns
    ``(value, grads)``.
    """
    out, cache = mlp.forward_cache(x)
    value, d_out = loss(out)
    grads, _ = mlp.backward(cache, d_out)
    return value, grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 1e-3) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.t,
                         [m.copy() for m in self.m], [v.copy() for v in self.v])


def adam_apply(params: list, grads: list, state: AdamState) -> list:
    """One bias-corrected Adam step, in place on ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("params, grads and optimizer state differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


# Fixed-point quanta for the normalizer's integer accumulators. Integer sums
# are associative, so merging partials and reordering updates are exact.
_SUM_SCALE = 2.0**32
_SUMSQ_SCALE = 2.0**24


class RunningNormalizer:
    """Per-dimension running mean/std with clipping on both sides.

    Raw inputs are clipped to ``[-clip_obs, clip_obs]`` before accumulation;
    normalized outputs are clipped to ``[-clip_norm, clip_norm]``. The std is
    floored at ``eps_std``.
    """

    def __init__(self, size: int, clip_obs: float = 200.0, clip_norm: float = 5.0,
                 eps_std: float = 1e-2):
        self.size = int(size)
        self.clip_obs = float(clip_obs)
        self.clip_norm = float(clip_norm)
        self.eps_std = float(eps_std)
        self.count = 0
        self._sum = [0] * self.size
        self._sumsq = [0] * self.size
        self._mean = np.zeros(self.size)
        self._std = np.ones(self.size)

    def update(self, batch) -> "RunningNormalizer":
        x = np.asarray(batch, dtype=np.float64).reshape(-1, self.size)
        if len(x) == 0:
            return self
        x = np.clip(x, -self.clip_obs, self.clip_obs)
        s = np.rint(x * _SUM_SCALE).astype(np.int64).sum(axis=0)
        sq = np.rint(x * x * _SUMSQ_SCALE).astype(np.int64).sum(axis=0)
        self._sum = [a + int(b) for a, b in zip(self._sum, s)]
        self._sumsq = [a + int(b) for a, b in zip(self._sumsq, sq)]
        self.count += len(x)
        self._recompute()
        return self

    def merge(self, other: "RunningNormalizer") -> "RunningNormalizer":
        """Fold another normalizer's statistics into this one."""
        if other.size != self.size:
            raise ContractError("cannot merge normalizers of different size")
        self._sum = [a + b for a, b in zip(self._sum, other._sum)]
        self._sumsq = [a + b for a, b in zip(self._sumsq, other._sumsq)]
        self.count += other.count
        self._recompute()
        return self

    def empty_like(self) -> "RunningNormalizer":
        return RunningNormalizer(self.size, self.clip_obs, self.clip_norm, self.eps_std)

    def copy(self) -> "RunningNormalizer":
        clone = self.empty_like()
        clone.count = self.count
        clone._sum = list(self._sum)
        clone._sumsq = list(self._sumsq)
        clone._mean = self._mean.copy()
        clone._std = self._std.copy()
        return clone

    def _recompute(self):
        if self.count == 0:
            return
        n = self.count
        scale_sum = int(_SUM_SCALE)
        scale_sq = int(_SUMSQ_SCALE)
        # int / int division is correctly rounded even for huge accumulators
        self._mean = np.array([s / (scale_sum * n) for s in self._sum])
        mean_sq = np.array([s / (scale_sq * n) for s in self._sumsq])
        var = np.maximum(mean_sq - self._mean**2, 0.0)
        self._std = np.maximum(np.sqrt(var), self.eps_std)

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def std(self) -> np.ndarray:
        return self._std

    def normalize(self, x) -> np.ndarray:
        if self.count == 0:
            raise ContractError("normalize() before any update")
        x = np.clip(np.asarray(x, dtype=np.float64), -self.clip_obs, self.clip_obs)
        return np.clip((x - self._mean) / self._std, -self.clip_norm, self.clip_norm)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.count": np.array(self.count),
            f"{prefix}.sum": np.array([str(s) for s in self._sum]),
            f"{prefix}.sumsq": np.array([str(s) for s in self._sumsq]),
            f"{prefix}.clip": np.array([self.clip_obs, self.clip_norm, self.eps_std]),
        }

    @classmethod
    def from_arrays(cls, arrays, prefix: str) -> "RunningNormalizer":
        sums = [int(s) for s in arrays[f"{prefix}.sum"]]
        clip_obs, clip_norm, eps_std = (float(c) for c in arrays[f"{prefix}.clip"])
        norm = cls(len(sums), clip_obs, clip_norm, eps_std)
        norm.count = int(arrays[f"{prefix}.count"])
        norm._sum = sums
        norm._sumsq = [int(s) for s in arrays[f"{prefix}.sumsq"]]
        norm._recompute()
        return norm

    def __eq__(self, other):
        if not isinstance(other, RunningNormalizer):
            return NotImplemented
        return (self.count, self._sum, self._sumsq) == (other.count, other._sum, other._sumsq)


def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> Path:
    """Write named tensors to an ``.npz`` archive tagged with a format version.

    Each member is a standard ``.npy`` record, whose header carries dtype and
    shape.
    """
    path = Path(path)
    payload = {"__format_version__": np.array(CHECKPOINT_VERSION)}
    payload.update(arrays)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["__format_version__"])
        if version != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {version}")
        return {k: data[k] for k in data.files if k != "__format_version__"}


def mlp_arrays(mlp: Mlp, prefix: str) -> dict[str, np.ndarray]:
    out = {f"{prefix}.sizes": np.array(mlp.sizes),
           f"{prefix}.output": np.array(mlp.output),
           f"{prefix}.output_scale": np.array(mlp.output_scale)}
    for i, p in enumerate(mlp.params):
        out[f"{prefix}.p{i}"] = p
    return out


def mlp_from_arrays(arrays, prefix: str) -> Mlp:
    sizes = [int(s) for s in arrays[f"{prefix}.sizes"]]
    mlp = Mlp(sizes, output=str(arrays[f"{prefix}.output"]),
              output_scale=float(arrays[f"{prefix}.output_scale"]),
              rng=np.random.default_rng(0))
    mlp.params = [np.array(arrays[f"{prefix}.p{i}"], dtype=np.float64)
                  for i in range(len(mlp.params))]
    return mlp
