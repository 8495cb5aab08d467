"""Stacked LSTM regressor in numpy with hand-written backpropagation through time.

Gate layout in the fused weight matrix is ``[input, forget, cell, output]``;
each layer's weight acts on ``concat(x_t, h_{t-1})``. The scalar output is a
linear read-out of the last layer's final hidden state.
"""

from __future__ import annotations

import numpy as np

__all__ = ["LSTMNet", "Adam"]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LSTMNet:
    def __init__(self, n_in: int, hidden: int, n_layers: int = 2, seed: int = 0, dtype=np.float64):
        self.n_in, self.hidden, self.n_layers = n_in, hidden, n_layers
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        k = 1.0 / np.sqrt(hidden)
        self.params = {}
        for layer in range(n_layers):
            d = n_in if layer == 0 else hidden
            self.params[f"W{layer}"] = rng.uniform(-k, k, (d + hidden, 4 * hidden)).astype(dtype)
            b = np.zeros(4 * hidden, dtype=dtype)
            b[hidden:2 * hidden] = 1.0
            self.params[f"b{layer}"] = b
        self.params["w_out"] = rng.uniform(-k, k, hidden).astype(dtype)
        self.params["b_out"] = np.zeros(1, dtype=dtype)

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def forward(self, X, keep_cache: bool = False):
        """``X`` of shape ``(B, T, n_in)`` -> predictions ``(B,)``."""
        X = np.asarray(X, dtype=self.dtype)
        B, T, _ = X.shape
        H = self.hidden
        caches = []
        inp = X
        for layer in range(self.n_layers):
            W, b = self.params[f"W{layer}"], self.params[f"b{layer}"]
            d = inp.shape[2]
            Wh = W[d:]
            ax = inp @ W[:d] + b
            h = np.zeros((B, H), dtype=self.dtype)
            c = np.zeros((B, H), dtype=self.dtype)
            hs = np.empty((B, T, H), dtype=self.dtype)
            if keep_cache:
                gates = np.empty((B, T, 4 * H), dtype=self.dtype)
                cs = np.empty((B, T + 1, H), dtype=self.dtype)
                cs[:, 0] = 0.0
            for t in range(T):
                a = ax[:, t] + h @ Wh
                s = _sigmoid(a)
                g = np.tanh(a[:, 2 * H:3 * H])
                c = s[:, H:2 * H] * c + s[:, :H] * g
                h = s[:, 3 * H:] * np.tanh(c)
                hs[:, t] = h
                if keep_cache:
                    s[:, 2 * H:3 * H] = g
                    gates[:, t] = s
                    cs[:, t + 1] = c
            if keep_cache:
                caches.append((inp, hs, gates, cs))
            inp = hs
        h_last = inp[:, -1]
        y = h_last @ self.params["w_out"] + self.params["b_out"][0]
        if keep_cache:
            self._cache = (caches, h_last)
        return y

    def backward(self, dy):
        """Gradients of ``sum(dy * y)`` w.r.t. every parameter (uses the last forward cache)."""
        caches, h_last = self._cache
        H = self.hidden
        dy = np.asarray(dy, dtype=self.dtype)
        grads = {
            "w_out": h_last.T @ dy,
            "b_out": np.array([dy.sum()], dtype=self.dtype),
        }
        dhs = None
        for layer in reversed(range(self.n_layers)):
            inp, hs, gates, cs = caches[layer]
            B, T, d = inp.shape
            W = self.params[f"W{layer}"]
            WhT = W[d:].T
            da_all = np.empty((B, T, 4 * H), dtype=self.dtype)
            dh_next = np.zeros((B, H), dtype=self.dtype)
            dc_next = np.zeros((B, H), dtype=self.dtype)
            for t in reversed(range(T)):
                s = gates[:, t]
                i, f, g, o = s[:, :H], s[:, H:2 * H], s[:, 2 * H:3 * H], s[:, 3 * H:]
                tc = np.tanh(cs[:, t + 1])
                dh = dh_next
                if dhs is not None:
                    dh = dh + dhs[:, t]
                elif t == T - 1:
                    dh = dh + np.outer(dy, self.params["w_out"])
                dc = dc_next + dh * o * (1.0 - tc**2)
                da = da_all[:, t]
                da[:, :H] = dc * g * i * (1.0 - i)
                da[:, H:2 * H] = dc * cs[:, t] * f * (1.0 - f)
                da[:, 2 * H:3 * H] = dc * i * (1.0 - g**2)
                da[:, 3 * H:] = dh * tc * o * (1.0 - o)
                dc_next = dc * f
                dh_next = da @ WhT
            flat = da_all.reshape(B * T, 4 * H)
            h_prev = np.concatenate([np.zeros((B, 1, H), dtype=self.dtype), hs[:, :-1]], axis=1)
            grads[f"W{layer}"] = np.concatenate([
                inp.reshape(B * T, d).T @ flat,
                h_prev.reshape(B * T, H).T @ flat,
            ], axis=0)
            grads[f"b{layer}"] = flat.sum(axis=0)
            dhs = da_all @ W[:d].T
        return grads

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])

    def set_flat(self, flat) -> None:
        i = 0
        for k in sorted(self.params):
            n = self.params[k].size
            self.params[k] = np.asarray(flat[i:i + n], dtype=self.dtype).reshape(self.params[k].shape)
            i += n

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.lr, self.b1, self.b2, self.eps, self.wd = lr, betas[0], betas[1], eps, weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k in sorted(params):
            g = grads[k] + self.wd * params[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
