"""Layers and networks: dense, 2-D convolution, residual blocks.

Everything runs in float64 numpy. Layers expose a functional interface
(forward returns the activation plus a cache; backward consumes the cache)
so composite losses can run several forward passes before accumulating
gradients. Parameters live on the layer objects and are updated in place by
the optimizers; snapshots are plain lists of copies.
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError

ACTIVATIONS = ("relu", "linear", "sigmoid", "softmax")


def _act_forward(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "softmax":
        shifted = z - z.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown activation {kind!r}")


def _act_backward(kind: str, da: np.ndarray, a: np.ndarray, z: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return da
    if kind == "relu":
        return da * (z > 0)
    if kind == "sigmoid":
        return da * a * (1.0 - a)
    if kind == "softmax":
        # Full Jacobian product: dz = a * (da - sum(da * a)).
        s = np.sum(da * a, axis=-1, keepdims=True)
        return a * (da - s)
    raise ValueError(f"unknown activation {kind!r}")


def _init_weight(rng, fan_in: int, fan_out: int, shape, activation: str) -> np.ndarray:
    # Kaiming-uniform for relu layers, Xavier-uniform otherwise.
    if activation == "relu":
        bound = np.sqrt(6.0 / fan_in)
    else:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    """Fully connected layer: act(x W + b), input (N, in_dim)."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.activation = activation
        self.w = np.zeros((self.in_dim, self.out_dim))
        self.b = np.zeros(self.out_dim)

    def init(self, rng):
        self.w = _init_weight(rng, self.in_dim, self.out_dim, self.w.shape, self.activation)
        self.b = np.zeros(self.out_dim)

    def params(self):
        return [self.w, self.b]

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_dim:
            raise ShapeError(f"dense expects input dim ({self.in_dim},), got {in_shape}")
        return (self.out_dim,)

    def forward(self, x):
        z = x @ self.w + self.b
        a = _act_forward(self.activation, z)
        return a, (x, z, a)

    def backward(self, da, cache):
        x, z, a = cache
        dz = _act_backward(self.activation, da, a, z)
        dw = x.T @ dz
        db = dz.sum(axis=0)
        dx = dz @ self.w.T
        return dx, [dw, db]

    def spec(self):
        return {"kind": "dense", "in_dim": self.in_dim, "out_dim": self.out_dim,
                "activation": self.activation}


class Conv2d:
    """2-D convolution over (N, C, H, W) input via im2col, zero padding."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1,
                 padding: int = 1, activation: str = "relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if kernel < 1 or stride < 1 or padding < 0:
            raise ValueError("invalid conv geometry")
        self.in_ch, self.out_ch = int(in_ch), int(out_ch)
        self.kernel, self.stride, self.padding = int(kernel), int(stride), int(padding)
        self.activation = activation
        self.w = np.zeros((self.in_ch * self.kernel * self.kernel, self.out_ch))
        self.b = np.zeros(self.out_ch)

    def init(self, rng):
        fan_in = self.in_ch * self.kernel * self.kernel
        fan_out = self.out_ch * self.kernel * self.kernel
        self.w = _init_weight(rng, fan_in, fan_out, self.w.shape, self.activation)
        self.b = np.zeros(self.out_ch)

    def params(self):
        return [self.w, self.b]

    def _out_hw(self, h, w):
        k, s, p = self.kernel, self.stride, self.padding
        if h + 2 * p < k or w + 2 * p < k:
            raise ShapeError(f"conv kernel {k} larger than padded input ({h}x{w}, pad {p})")
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_ch:
            raise ShapeError(f"conv expects (channels={self.in_ch}, H, W), got {in_shape}")
        oh, ow = self._out_hw(in_shape[1], in_shape[2])
        return (self.out_ch, oh, ow)

    def _im2col_nhwc(self, x_nhwc):
        """Channels-last im2col; the (kh, kw, c) column order matches self.w.

        Keeping channels innermost makes the strided gather copy run over
        64-byte contiguous chunks instead of 3-element slivers, which is what
        dominates the cost of these skinny (H x 3) feature planes.
        """
        n, h, w, c = x_nhwc.shape
        p = self.padding
        if p:
            xp = np.zeros((n, h + 2 * p, w + 2 * p, c))
            xp[:, p : p + h, p : p + w, :] = x_nhwc
        else:
            xp = x_nhwc
        win = sliding_window_view(xp, (self.kernel, self.kernel), axis=(1, 2))
        win = win[:, :: self.stride, :: self.stride]  # (N, OH, OW, C, KH, KW)
        oh, ow = win.shape[1], win.shape[2]
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, -1)
        return cols, oh, ow

    def forward(self, x):
        n = x.shape[0]
        cols, oh, ow = self._im2col_nhwc(x.transpose(0, 2, 3, 1))
        z = (cols @ self.w + self.b).reshape(n, oh, ow, self.out_ch).transpose(0, 3, 1, 2)
        a = _act_forward(self.activation, z)
        return a, (x.shape, cols, z, a)

    def backward(self, da, cache):
        x_shape, cols, z, a = cache
        n, c, h, w = x_shape
        dz = _act_backward(self.activation, da, a, z)
        oh, ow = dz.shape[2], dz.shape[3]
        dz_nhwc = np.ascontiguousarray(dz.transpose(0, 2, 3, 1))
        dz_mat = dz_nhwc.reshape(-1, self.out_ch)
        dw = cols.T @ dz_mat
        db = dz_mat.sum(axis=0)
        p, s, k = self.padding, self.stride, self.kernel

        if s == 1:
            # The input gradient of a stride-1 convolution is a convolution of
            # dz (padded by k-1) with the spatially flipped kernel; one
            # im2col+gemm is much cheaper than scatter-adding columns back.
            q = k - 1
            dzp = np.zeros((n, oh + 2 * q, ow + 2 * q, self.out_ch))
            dzp[:, q : q + oh, q : q + ow, :] = dz_nhwc
            win = sliding_window_view(dzp, (k, k), axis=(1, 2))
            cols_b = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * (oh + q) * (ow + q), -1)
            # self.w rows are ordered (kh, kw, c); the flipped kernel for the
            # transposed pass needs (kh, kw, oc) rows mapping onto c outputs.
            w_flip = (
                self.w.reshape(k, k, c, self.out_ch)[::-1, ::-1]
                .transpose(0, 1, 3, 2)
                .reshape(k * k * self.out_ch, c)
            )
            dxp = cols_b @ w_flip
            dxp = dxp.reshape(n, oh + q, ow + q, c).transpose(0, 3, 1, 2)
            dx = dxp[:, :, p : p + h, p : p + w] if p else dxp
        else:
            dcols = (dz_mat @ self.w.T).reshape(n, oh, ow, k, k, c)
            dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
            for kh in range(k):
                for kw in range(k):
                    dxp[:, :, kh : kh + oh * s : s, kw : kw + ow * s : s] += dcols[
                        :, :, :, kh, kw
                    ].transpose(0, 3, 1, 2)
            dx = dxp[:, :, p : p + h, p : p + w] if p else dxp
        return dx, [dw, db]

    def spec(self):
        return {"kind": "conv2d", "in_ch": self.in_ch, "out_ch": self.out_ch,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding,
                "activation": self.activation}


class ResidualBlock:
    """Two same-shape convolutions with a skip connection:
    relu(conv_linear(relu(conv(x))) + x)."""

    def __init__(self, channels: int, kernel: int = 3):
        pad = kernel // 2
        self.channels = int(channels)
        self.kernel = int(kernel)
        self.conv1 = Conv2d(channels, channels, kernel, 1, pad, "relu")
        self.conv2 = Conv2d(channels, channels, kernel, 1, pad, "linear")

    def init(self, rng):
        self.conv1.init(rng)
        self.conv2.init(rng)

    def params(self):
        return self.conv1.params() + self.conv2.params()

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.channels:
            raise ShapeError(f"residual block expects {self.channels} channels, got {in_shape}")
        mid = self.conv1.out_shape(in_shape)
        out = self.conv2.out_shape(mid)
        if out != in_shape:
            raise ShapeError("residual block convolutions must preserve the spatial shape")
        return in_shape

    def forward(self, x):
        h1, c1 = self.conv1.forward(x)
        h2, c2 = self.conv2.forward(h1)
        z = h2 + x
        y = np.maximum(z, 0.0)
        return y, (c1, c2, z)

    def backward(self, dy, cache):
        c1, c2, z = cache
        dz = dy * (z > 0)
        dh1, g2 = self.conv2.backward(dz, c2)
        dx1, g1 = self.conv1.backward(dh1, c1)
        return dx1 + dz, g1 + g2

    def spec(self):
        return {"kind": "residual", "channels": self.channels, "kernel": self.kernel}


class GlobalAvgPool:
    """(N, C, H, W) -> (N, C) spatial mean."""

    def init(self, rng):
        pass

    def params(self):
        return []

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"global average pool expects (C, H, W), got {in_shape}")
        return (in_shape[0],)

    def forward(self, x):
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, dy, cache):
        n, c, h, w = cache
        dx = np.broadcast_to(dy[:, :, None, None], (n, c, h, w)) / (h * w)
        return dx.copy(), []

    def spec(self):
        return {"kind": "gap"}


class Flatten:
    """(N, ...) -> (N, prod)."""

    def init(self, rng):
        pass

    def params(self):
        return []

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), []

    def spec(self):
        return {"kind": "flatten"}


_LAYER_KINDS = {
    "dense": lambda s: Dense(s["in_dim"], s["out_dim"], s["activation"]),
    "conv2d": lambda s: Conv2d(s["in_ch"], s["out_ch"], s["kernel"], s["stride"],
                               s["padding"], s["activation"]),
    "residual": lambda s: ResidualBlock(s["channels"], s["kernel"]),
    "gap": lambda s: GlobalAvgPool(),
    "flatten": lambda s: Flatten(),
}


class Network:
    """A layer stack with seeded initialization and explicit backprop.

    Initialization draws from one seeded stream in layer order, so (layer
    spec, seed) fully determines the starting parameters.
    """

    def __init__(self, layers, seed: int = 0, input_shape: Optional[tuple] = None):
        self.layers = list(layers)
        self.seed = int(seed)
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0x4E54)))
        for layer in self.layers:
            layer.init(rng)
        if input_shape is not None:
            self.validate_shapes(input_shape)

    def validate_shapes(self, input_shape: tuple) -> tuple:
        """Propagate a sample shape through the stack; ShapeError names the layer."""
        shape = tuple(input_shape)
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.out_shape(shape)
            except ShapeError as e:
                raise ShapeError(f"layer {i} ({layer.spec()['kind']}): {e}") from None
        return shape

    @property
    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def num_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self.validate_shapes(x.shape[1:])
        for layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def forward_cached(self, x):
        x = np.asarray(x, dtype=np.float64)
        self.validate_shapes(x.shape[1:])
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, dy, caches):
        """Gradients for every parameter given d(loss)/d(output)."""
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            dy, g = self.layers[i].backward(dy, caches[i])
            grads[i] = g
        flat = []
        for g in grads:
            flat.extend(g)
        return flat

    def snapshot(self):
        return [p.copy() for p in self.params]

    def restore(self, snap):
        for p, s in zip(self.params, snap):
            p[...] = s

    def spec(self):
        return [layer.spec() for layer in self.layers]

    def save(self, path, epoch: int = 0) -> None:
        header = json.dumps({"layers": self.spec(), "seed": self.seed, "epoch": epoch})
        blob = np.concatenate([p.ravel() for p in self.params]) if self.params else np.empty(0)
        with open(path, "wb") as f:
            f.write(header.encode() + b"\n")
            f.write(blob.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
            blob = np.frombuffer(f.read(), dtype="<f8")
        net = cls([_LAYER_KINDS[s["kind"]](s) for s in header["layers"]], seed=header["seed"])
        off = 0
        for p in net.params:
            p[...] = blob[off : off + p.size].reshape(p.shape)
            off += p.size
        if off != blob.size:
            raise ValueError("checkpoint parameter blob does not match the layer spec")
        return net, header["epoch"]


def mlp(in_dim: int, hidden, out_dim: int, out_activation: str = "linear",
        seed: int = 0) -> Network:
    """Plain relu MLP with the given hidden widths and output activation."""
    dims = [in_dim] + list(hidden)
    layers = [Dense(dims[i], dims[i + 1], "relu") for i in range(len(dims) - 1)]
    layers.append(Dense(dims[-1], out_dim, out_activation))
    return Network(layers, seed=seed, input_shape=(in_dim,))


def conv_resnet(in_ch: int, channels: int, blocks: int, num_classes: int,
                input_hw: tuple, kernel: int = 3, seed: int = 0) -> Network:
    """Small convolutional ResNet: stem conv, residual blocks, global average
    pool, linear class head (softmax applied by the loss / at inference)."""
    layers = [Conv2d(in_ch, channels, kernel, 1, kernel // 2, "relu")]
    layers += [ResidualBlock(channels, kernel) for _ in range(blocks)]
    layers += [GlobalAvgPool(), Dense(channels, num_classes, "linear")]
    return Network(layers, seed=seed, input_shape=(in_ch, *input_hw))
