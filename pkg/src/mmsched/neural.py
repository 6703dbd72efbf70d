"""Small float64 numpy substrate: ReLU MLPs with manual backprop, Adam, replay buffer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np


class Mlp:
    """Fully connected net, ReLU on hidden layers and identity on the output.

    Weights are stored input-major (``W[l]`` has shape ``(fan_in, fan_out)``)
    and initialised uniformly in ``+-1/sqrt(fan_in)``.
    """

    def __init__(self, layer_dims: Sequence[int], rng: np.random.Generator | int | None = None):
        if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
            raise ValueError(f"bad layer dims {layer_dims}")
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.layer_dims = [int(d) for d in layer_dims]
        self.flat = np.empty(sum((i + 1) * o for i, o in zip(self.layer_dims[:-1], self.layer_dims[1:])))
        self._bind()
        for W, b in zip(self.weights, self.biases):
            bound = 1.0 / np.sqrt(W.shape[0])
            W[...] = rng.uniform(-bound, bound, size=W.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        self.version = 0

    def _views(self, flat: np.ndarray) -> list[np.ndarray]:
        out, pos = [], 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            out.append(flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out))
            pos += fan_in * fan_out
            out.append(flat[pos:pos + fan_out])
            pos += fan_out
        return out

    def _bind(self) -> None:
        views = self._views(self.flat)
        self.weights = views[0::2]
        self.biases = views[1::2]

    def params(self) -> list[np.ndarray]:
        """Per-layer ``[W0, b0, W1, b1, ...]``, all views into :attr:`flat`."""
        return self._views(self.flat)

    def set_params(self, values: Sequence[np.ndarray]) -> None:
        params = self.params()
        if len(values) != len(params):
            raise ValueError("parameter count mismatch")
        for p, v in zip(params, values):
            if p.shape != np.shape(v):
                raise ValueError(f"shape mismatch {p.shape} vs {np.shape(v)}")
            p[...] = v
        self.version += 1

    def flatten(self, grads: Sequence[np.ndarray]) -> np.ndarray:
        flat = getattr(grads, "flat", None)
        if flat is not None and flat.shape == self.flat.shape:
            return flat
        return np.concatenate([np.ravel(g) for g in grads])

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.layer_dims = list(self.layer_dims)
        clone.flat = self.flat.copy()
        clone._bind()
        clone.version = 0
        return clone

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def forward(self, x):
        """Return ``(output, cache)``; accepts a single vector or a batch."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.layer_dims[0]:
            raise ValueError(f"expected input width {self.layer_dims[0]}, got shape {x.shape}")
        acts = [h]
        last = len(self.weights) - 1
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = np.maximum(z, 0.0) if l < last else z
            acts.append(h)
        out = h[0] if single else h
        return out, _Cache(id(self), self.version, single, acts)

    def backward(self, cache: "_Cache", grad_out, need_params: bool = True, need_input: bool = True):
        """Backprop ``grad_out`` through the cached forward pass.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
        :meth:`params` (``None`` when ``need_params`` is false).
        """
        if cache.owner != id(self) or cache.version != self.version:
            raise ValueError("cache does not belong to the current parameters of this network")
        g = np.asarray(grad_out, dtype=np.float64)
        if cache.single:
            g = g[None, :]
        acts = cache.acts
        if g.shape != acts[-1].shape:
            raise ValueError(f"output gradient shape {g.shape} does not match output {acts[-1].shape}")
        grads = None
        if need_params:
            grads = Grads(self._views(np.empty_like(self.flat)))
            grads.flat = grads[0].base if grads[0].base is not None else None
        for l in range(len(self.weights) - 1, -1, -1):
            if l < len(self.weights) - 1:
                g = g * (acts[l + 1] > 0.0)
            if need_params:
                np.matmul(acts[l].T, g, out=grads[2 * l])
                np.sum(g, axis=0, out=grads[2 * l + 1])
            if l > 0 or need_input:
                g = g @ self.weights[l].T
        if not need_input:
            return grads, None
        input_grad = g[0] if cache.single else g
        return grads, input_grad


class Grads(list):
    """Per-layer gradients; ``flat`` is the contiguous buffer they view, if any."""

    flat: np.ndarray | None = None


@dataclass
class _Cache:
    owner: int
    version: int
    single: bool
    acts: list


TINY = 1e-200


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, beta1, beta2, lr_c1, inv_sqrt_c2, eps):
    for i in range(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        # moments of parameters whose gradient stays exactly 0 (dead ReLU
        # units) decay into subnormal range, where arithmetic is very slow
        if abs(mi) < TINY:
            mi = 0.0
        if vi < TINY:
            vi = 0.0
        m[i] = mi
        v[i] = vi
        p[i] -= lr_c1 * mi / (math.sqrt(vi) * inv_sqrt_c2 + eps)


@numba.njit(cache=True)
def polyak_kernel(target, online, tau):
    for i in range(target.size):
        target[i] = tau * online[i] + (1.0 - tau) * target[i]


class Adam:
    """Adam with bias correction over a fixed list of parameter arrays."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter/gradient count does not match optimizer state")
        for i, g in enumerate(grads):
            if g.shape != self.m[i].shape:
                raise ValueError(f"gradient {i} has shape {g.shape}, expected {self.m[i].shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite values in gradient {i} (shape {g.shape})")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            _adam_kernel(p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                         m.reshape(-1), v.reshape(-1), self.beta1, self.beta2,
                         self.lr / c1, 1.0 / math.sqrt(c2), self.eps)

    def state_arrays(self) -> list[np.ndarray]:
        return self.m + self.v

    def load_state_arrays(self, arrays: Sequence[np.ndarray], t: int) -> None:
        if len(arrays) != 2 * len(self.m):
            raise ValueError("optimizer state size mismatch")
        for dst, src in zip(self.m + self.v, arrays):
            dst[...] = src
        self.t = int(t)


def adam_step(opt: Adam, net: Mlp, grads: Sequence[np.ndarray]) -> None:
    """One Adam update of ``net``; ``opt`` must have been built on ``[net.flat]``."""
    opt.step([net.flat], [net.flatten(grads)])
    net.version += 1


class ReplayBuffer:
    """Ring buffer of transitions, sampled uniformly with replacement.

    Storage grows geometrically up to ``capacity`` so a mostly empty buffer
    with a large nominal capacity stays cheap.
    """

    def __init__(self, state_dim: int, action_dim: int, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.state_dim, self.action_dim = state_dim, action_dim
        self.size = 0
        self.cursor = 0
        self._alloc(min(self.capacity, 1024))

    def _alloc(self, n: int) -> None:
        old = getattr(self, "states", None)
        new = {
            "states": np.zeros((n, self.state_dim)),
            "actions": np.zeros((n, self.action_dim)),
            "rewards": np.zeros(n),
            "next_states": np.zeros((n, self.state_dim)),
            "terminals": np.zeros(n),
        }
        if old is not None:
            for name, arr in new.items():
                arr[: self.size] = getattr(self, name)[: self.size]
        for name, arr in new.items():
            setattr(self, name, arr)

    def __len__(self) -> int:
        return self.size

    def push(self, state, action, reward: float, next_state, terminal: bool) -> None:
        if self.cursor >= len(self.rewards):
            self._alloc(min(self.capacity, 2 * len(self.rewards)))
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = float(terminal)
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, cannot sample {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return self.take(idx)

    def take(self, idx) -> dict[str, np.ndarray]:
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "terminals": self.terminals[idx],
        }
