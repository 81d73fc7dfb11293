"""Network building blocks on top of the tensor engine.

Modules register parameters by plain attribute assignment; ``named_params``
walks attributes recursively. A module held by two owners (e.g. a decoder
shared across branches) is visited once, so shared weights stay one storage
location.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, concat, layer_norm, softmax, unfold_time, where_mask

NEG_INF = -1e30


class Module:
    def named_params(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        self._collect(prefix, out, set())
        return out

    def _collect(self, prefix, out, seen):
        if id(self) in seen:
            return
        seen.add(id(self))
        for name, val in vars(self).items():
            key = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
            if isinstance(val, Tensor) and val.requires_grad:
                if id(val) not in seen:
                    seen.add(id(val))
                    out[key] = val
            elif isinstance(val, Module):
                val._collect(key, out, seen)
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        item._collect(f"{key}.{i}", out, seen)

    def params(self) -> list[Tensor]:
        return list(self.named_params().values())

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def load_state(self, state: dict[str, np.ndarray], prefix: str = ""):
        for name, p in self.named_params(prefix).items():
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: "
                    f"checkpoint {arr.shape} vs model {p.data.shape}"
                )
            p.data = arr.copy()

    def state(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_params(prefix).items()}


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.w = _xavier(rng, d_in, d_out, (d_in, d_out))
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class MLP(Module):
    """Two-layer perceptron with GELU."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int, rng):
        self.fc1 = Linear(d_in, d_hidden, rng)
        self.fc2 = Linear(d_hidden, d_out, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self._eps)


class EmbeddingTable(Module):
    def __init__(self, rows: int, dim: int, rng, scale: float = 0.05):
        self.table = Tensor(rng.uniform(-scale, scale, size=(rows, dim)),
                            requires_grad=True)

    def __call__(self, ids: np.ndarray) -> Tensor:
        from .tensor import embedding

        return embedding(self.table, ids)


class MultiHeadAttention(Module):
    """Multi-head attention; query and key/value sequences may differ."""

    def __init__(self, dim: int, heads: int, rng):
        if dim % heads:
            raise ValueError("dim must divide evenly into heads")
        self.heads = heads
        self.dim = dim
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)

    def _split(self, x: Tensor, b: int, t: int) -> Tensor:
        hd = self.dim // self.heads
        return x.reshape(b, t, self.heads, hd).swapaxes(1, 2)

    def __call__(self, q: Tensor, kv: Tensor, kv_mask: np.ndarray | None = None) -> Tensor:
        b, tq, _ = q.shape
        tk = kv.shape[1]
        hd = self.dim // self.heads
        qh = self._split(self.wq(q), b, tq)
        kh = self._split(self.wk(kv), b, tk)
        vh = self._split(self.wv(kv), b, tk)
        scores = (qh @ kh.swapaxes(-1, -2)) * (1.0 / np.sqrt(hd))
        if kv_mask is not None:
            m = np.asarray(kv_mask, dtype=bool)[:, None, None, :]
            scores = where_mask(np.broadcast_to(m, scores.shape), scores, NEG_INF)
        att = softmax(scores, axis=-1)
        out = (att @ vh).swapaxes(1, 2).reshape(b, tq, self.dim)
        return self.wo(out)


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())


class TransformerEncoderLayer(Module):
    """Post-LN encoder layer: self-attention then feed-forward."""

    def __init__(self, dim: int, heads: int, ff_hidden: int, rng):
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ff = FeedForward(dim, ff_hidden, rng)
        self.ln1 = LayerNorm(dim)
        self.ln2 = LayerNorm(dim)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = self.ln1(x + self.attn(x, x, kv_mask=mask))
        return self.ln2(x + self.ff(x))


class TransformerEncoder(Module):
    def __init__(self, dim: int, heads: int, ff_hidden: int, layers: int, rng):
        self.layers = [TransformerEncoderLayer(dim, heads, ff_hidden, rng)
                       for _ in range(layers)]

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        for layer in self.layers:
            x = layer(x, mask)
        return x


class Conv1d(Module):
    """Strided 1-D convolution over the time axis of (B, T, C_in)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, rng):
        self.kernel = kernel
        self.stride = stride
        self.w = _xavier(rng, c_in * kernel, c_out, (kernel * c_in, c_out))
        self.b = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        b, t, c = x.shape
        n_out = (t - self.kernel) // self.stride + 1
        cols = unfold_time(x, self.kernel, self.stride)
        cols = cols.reshape(b, n_out, self.kernel * c)
        return cols @ self.w + self.b


class DepthwiseConv1d(Module):
    """Same-padded depthwise convolution along time, one filter per channel."""

    def __init__(self, channels: int, kernel: int, rng):
        if kernel % 2 == 0:
            raise ValueError("kernel must be odd for same padding")
        self.kernel = kernel
        limit = np.sqrt(6.0 / (2 * kernel))
        self.w = Tensor(rng.uniform(-limit, limit, size=(kernel, channels)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(channels), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        b, t, c = x.shape
        half = self.kernel // 2
        terms = []
        for j in range(self.kernel):
            off = j - half
            lo, hi = max(0, off), min(t, t + off)
            seg = x[:, lo:hi, :] * self.w[j]
            pad_lo, pad_hi = lo - off - 0, t - hi + off
            pre = Tensor(np.zeros((b, max(0, -off), c)))
            post = Tensor(np.zeros((b, max(0, off), c)))
            parts = []
            if pre.shape[1]:
                parts.append(pre)
            parts.append(seg)
            if post.shape[1]:
                parts.append(post)
            terms.append(concat(parts, axis=1) if len(parts) > 1 else seg)
        out = terms[0]
        for term in terms[1:]:
            out = out + term
        return out + self.b


class Adam:
    """Adam with bias correction; deterministic given update order."""

    def __init__(self, params: list[Tensor], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        c1 = 1.0 / (1.0 - self.b1 ** self.t)
        c2 = 1.0 / (1.0 - self.b2 ** self.t)
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            m, v = self.m[i], self.v[i]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * np.square(g)
            # p -= lr * (m*c1) / (sqrt(v*c2) + eps), built without extra temps
            upd = np.sqrt(v * c2)
            upd += self.eps
            np.divide(m, upd, out=upd)
            upd *= self.lr * c1
            p.data -= upd

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
