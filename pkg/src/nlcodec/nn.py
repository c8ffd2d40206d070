"""Forward-only neural transform kernels and stack execution.

Tensors are numpy ``float32`` arrays of shape ``(channels, height, width)``,
row-major within each channel. Convolution follows the cross-correlation
convention (no kernel flip) and accumulates in 32-bit floats; every operation
is pure, so identical inputs give bit-identical outputs within a process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

GDN_BETA_FLOOR = 1e-6

_LAYER_KINDS = ("conv", "deconv", "gdn", "igdn", "relu")
_ALLOWED_KERNELS = (3, 5)
_ALLOWED_STRIDES = (1, 2)

# Solve chunk size for the exact GDN inverse, keeping the batched system
# matrices well under ~100 MB.
_IGDN_CHUNK_BYTES = 1 << 26


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def as_tensor(data) -> np.ndarray:
    """Validate and coerce to a float32 (C, H, W) tensor."""
    arr = np.asarray(data, dtype=np.float32)
    _require(arr.ndim == 3, f"tensor must be rank 3 (C,H,W), got shape {arr.shape}")
    _require(min(arr.shape) >= 1, "all tensor dimensions must be >= 1")
    return arr


def conv2d(x, kernel, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D cross-correlation with integrated striding.

    ``kernel`` has shape (out_ch, in_ch, k, k). Output spatial dims are
    ``floor((H + 2*padding - k) / stride) + 1`` per axis.
    """
    x = as_tensor(x)
    kernel = np.asarray(kernel, dtype=np.float32)
    _require(kernel.ndim == 4, f"conv kernel must be rank 4, got {kernel.shape}")
    out_ch, in_ch, kh, kw = kernel.shape
    _require(kh == kw, "conv kernels must be square")
    _require(x.shape[0] == in_ch,
             f"input has {x.shape[0]} channels, kernel expects {in_ch}")
    _require(stride >= 1, "stride must be >= 1")
    _require(padding >= 0, "padding must be >= 0")
    if bias is None:
        bias = np.zeros(out_ch, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    _require(bias.shape == (out_ch,),
             f"bias shape {bias.shape} does not match {out_ch} output channels")
    _require(x.shape[1] + 2 * padding >= kh and x.shape[2] + 2 * padding >= kw,
             "padded input is smaller than the kernel")

    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    oh, ow = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4))
    cols = cols.reshape(oh * ow, in_ch * kh * kw)
    out = cols @ kernel.reshape(out_ch, -1).T
    out += bias
    return np.ascontiguousarray(out.T.reshape(out_ch, oh, ow))


def deconv2d(x, kernel, bias, stride: int = 1, padding: int = 0,
             output_padding: int = 0) -> np.ndarray:
    """Transposed 2-D convolution, the adjoint of :func:`conv2d`.

    ``kernel`` has shape (in_ch, out_ch, k, k). Output spatial dims are
    ``(H - 1)*stride - 2*padding + k + output_padding``.
    """
    x = as_tensor(x)
    kernel = np.asarray(kernel, dtype=np.float32)
    _require(kernel.ndim == 4, f"deconv kernel must be rank 4, got {kernel.shape}")
    in_ch, out_ch, kh, kw = kernel.shape
    _require(kh == kw, "deconv kernels must be square")
    _require(x.shape[0] == in_ch,
             f"input has {x.shape[0]} channels, kernel expects {in_ch}")
    _require(stride >= 1, "stride must be >= 1")
    _require(0 <= padding <= kh - 1, "deconv padding must be within [0, k-1]")
    _require(0 <= output_padding < stride,
             "output_padding must be within [0, stride)")

    c, h, w = x.shape
    stuffed = np.zeros((c, (h - 1) * stride + 1 + output_padding,
                        (w - 1) * stride + 1 + output_padding), dtype=np.float32)
    stuffed[:, ::stride, ::stride] = x
    flipped = np.ascontiguousarray(kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d(stuffed, flipped, bias, stride=1, padding=kh - 1 - padding)


def relu(x) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(as_tensor(x), np.float32(0.0))


def gdn(x, beta, gamma, inverse: bool = False) -> np.ndarray:
    """Generalized divisive normalization across channels.

    Forward: ``y_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2)`` at each
    spatial position. The inverse recovers ``x`` from ``y`` exactly: the
    squared denominators satisfy a linear system in ``y``, which is solved per
    position, then ``x_i = y_i * sqrt(e_i)``.
    """
    x = as_tensor(x)
    c = x.shape[0]
    beta = np.asarray(beta, dtype=np.float32)
    gamma = np.asarray(gamma, dtype=np.float32)
    _require(beta.shape == (c,), f"beta shape {beta.shape} != ({c},)")
    _require(gamma.shape == (c, c), f"gamma shape {gamma.shape} != ({c}, {c})")
    _require(bool(np.all(beta >= np.float32(GDN_BETA_FLOOR))),
             f"gdn beta must be >= {GDN_BETA_FLOOR}")
    _require(bool(np.all(gamma >= 0)), "gdn gamma must be nonnegative")

    if not inverse:
        energy = beta[:, None, None] + np.tensordot(gamma, x * x, axes=([1], [0]))
        return (x / np.sqrt(energy)).astype(np.float32)
    return _gdn_inverse(x, beta, gamma)


def _gdn_inverse(y: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    c, h, w = y.shape
    y2 = (y.astype(np.float64) ** 2).reshape(c, h * w).T  # (N, C)
    g = gamma.astype(np.float64)
    b = beta.astype(np.float64)
    eye = np.eye(c)
    n = y2.shape[0]
    chunk = max(1, _IGDN_CHUNK_BYTES // (8 * c * c))
    energy = np.empty_like(y2)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        a = eye[None, :, :] - g[None, :, :] * y2[lo:hi, None, :]
        rhs = np.broadcast_to(b[:, None], (hi - lo, c, 1))
        try:
            energy[lo:hi] = np.linalg.solve(a, rhs)[..., 0]
        except np.linalg.LinAlgError as exc:
            raise ValueError("gdn is not invertible for these inputs") from exc
    if not np.all(energy > 0):
        raise ValueError("gdn is not invertible for these inputs")
    x = y.astype(np.float64) * np.sqrt(energy.T.reshape(c, h, w))
    return x.astype(np.float32)


@dataclass(frozen=True)
class LayerSpec:
    """One transform layer: a strided (de)convolution or an activation."""

    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 0
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        _require(self.kind in _LAYER_KINDS, f"unknown layer kind {self.kind!r}")
        _require(self.in_channels >= 1 and self.out_channels >= 1,
                 "channel counts must be >= 1")
        if self.kind in ("conv", "deconv"):
            _require(self.kernel in _ALLOWED_KERNELS,
                     f"kernel must be one of {_ALLOWED_KERNELS}")
            _require(self.stride in _ALLOWED_STRIDES,
                     f"stride must be one of {_ALLOWED_STRIDES}")
            _require(self.padding >= 0, "padding must be >= 0")
        else:
            _require(self.in_channels == self.out_channels,
                     f"{self.kind} layers cannot change channel count")
            _require(self.kernel == 0 and self.stride == 1 and self.padding == 0,
                     f"{self.kind} layers take no kernel/stride/padding")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.kind == "conv":
            return {"kernel": (self.out_channels, self.in_channels,
                               self.kernel, self.kernel),
                    "bias": (self.out_channels,)}
        if self.kind == "deconv":
            return {"kernel": (self.in_channels, self.out_channels,
                               self.kernel, self.kernel),
                    "bias": (self.out_channels,)}
        if self.kind in ("gdn", "igdn"):
            c = self.in_channels
            return {"beta": (c,), "gamma": (c, c)}
        return {}

    def to_json(self) -> dict:
        d = {"kind": self.kind, "in": self.in_channels, "out": self.out_channels}
        if self.kind in ("conv", "deconv"):
            d.update(kernel=self.kernel, stride=self.stride, padding=self.padding)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "LayerSpec":
        return cls(kind=d["kind"], in_channels=d["in"], out_channels=d["out"],
                   kernel=d.get("kernel", 0), stride=d.get("stride", 1),
                   padding=d.get("padding", 0))


def _stack_factor(layers: tuple[LayerSpec, ...]) -> int:
    f = 1
    for layer in layers:
        if layer.kind in ("conv", "deconv"):
            f *= layer.stride
    return f


@dataclass(frozen=True)
class NetworkSpec:
    """Data-driven description of the analysis/synthesis/scale-predictor stacks.

    ``analysis[0]`` maps the image to the first latent; ``analysis[l]`` maps
    latent l to latent l+1. ``synthesis[l]`` spatially inverts ``analysis[l]``;
    only ``synthesis[0]`` (the image decoder) participates in coding.
    ``sigma[l]`` predicts the log scale field of latent l+1 from latent l+2.
    """

    levels: int
    latent_channels: int
    analysis: tuple[tuple[LayerSpec, ...], ...]
    synthesis: tuple[tuple[LayerSpec, ...], ...]
    sigma: tuple[tuple[LayerSpec, ...], ...]

    def __post_init__(self):
        _require(self.levels >= 1, "levels must be >= 1")
        _require(self.latent_channels >= 1, "latent_channels must be >= 1")
        _require(len(self.analysis) == self.levels,
                 f"expected {self.levels} analysis stacks, got {len(self.analysis)}")
        _require(len(self.synthesis) == self.levels,
                 f"expected {self.levels} synthesis stacks, got {len(self.synthesis)}")
        _require(len(self.sigma) == self.levels - 1,
                 f"expected {self.levels - 1} sigma stacks, got {len(self.sigma)}")
        for a, s in zip(self.analysis, self.synthesis):
            _require(_stack_factor(a) == _stack_factor(s),
                     "synthesis stack must invert the spatial scaling of its "
                     "analysis stack")
        for i, s in enumerate(self.sigma):
            _require(_stack_factor(s) == _stack_factor(self.analysis[i + 1]),
                     "sigma stack must invert the spatial scaling of the next "
                     "analysis stack")

    @property
    def total_downsampling(self) -> int:
        f = 1
        for stack in self.analysis:
            f *= _stack_factor(stack)
        return f

    def stack(self, family: str, index: int) -> tuple[LayerSpec, ...]:
        return getattr(self, family)[index]

    def stacks(self):
        """Yield (prefix, layers) for every stack in canonical order."""
        for family in ("analysis", "synthesis", "sigma"):
            for i, layers in enumerate(getattr(self, family)):
                yield f"{family}.{i}", layers

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for prefix, layers in self.stacks():
            for i, layer in enumerate(layers):
                for pname, shape in layer.param_shapes().items():
                    shapes[f"{prefix}.{i}.{pname}"] = shape
        return shapes

    def to_json(self) -> dict:
        return {
            "levels": self.levels,
            "latent_channels": self.latent_channels,
            "analysis": [[l.to_json() for l in s] for s in self.analysis],
            "synthesis": [[l.to_json() for l in s] for s in self.synthesis],
            "sigma": [[l.to_json() for l in s] for s in self.sigma],
        }

    @classmethod
    def from_json(cls, d: dict) -> "NetworkSpec":
        def stacks(key):
            return tuple(tuple(LayerSpec.from_json(l) for l in s) for s in d[key])
        return cls(levels=d["levels"], latent_channels=d["latent_channels"],
                   analysis=stacks("analysis"), synthesis=stacks("synthesis"),
                   sigma=stacks("sigma"))


def default_network_spec(levels: int, latent_channels: int = 150,
                         hidden_channels: int = 70,
                         image_channels: int = 3) -> NetworkSpec:
    """Default stacks: 5x5 kernels on the image layer, 3x3 above it.

    The image layer uses two stride-2 blocks with a GDN between the
    convolutions; each deeper layer is a single stride-2 block with ReLU.
    Scale predictors upsample with a stride-2 deconvolution and refine with a
    stride-1 convolution, ending unconstrained (the output is a log scale).
    """
    m, mid, img = latent_channels, hidden_channels, image_channels
    analysis = [(
        LayerSpec("conv", img, mid, kernel=5, stride=2, padding=2),
        LayerSpec("gdn", mid, mid),
        LayerSpec("conv", mid, m, kernel=5, stride=2, padding=2),
    )]
    synthesis = [(
        LayerSpec("deconv", m, mid, kernel=5, stride=2, padding=2),
        LayerSpec("igdn", mid, mid),
        LayerSpec("deconv", mid, img, kernel=5, stride=2, padding=2),
    )]
    sigma = []
    for _ in range(1, levels):
        analysis.append((
            LayerSpec("conv", m, m, kernel=3, stride=2, padding=1),
            LayerSpec("relu", m, m),
        ))
        synthesis.append((
            LayerSpec("deconv", m, m, kernel=3, stride=2, padding=1),
            LayerSpec("relu", m, m),
        ))
        sigma.append((
            LayerSpec("deconv", m, m, kernel=3, stride=2, padding=1),
            LayerSpec("relu", m, m),
            LayerSpec("conv", m, m, kernel=3, stride=1, padding=1),
        ))
    return NetworkSpec(levels=levels, latent_channels=m,
                       analysis=tuple(analysis), synthesis=tuple(synthesis),
                       sigma=tuple(sigma))


def run_stack(x, layers, weights, prefix: str = "") -> np.ndarray:
    """Apply a stack of layers in order, resolving parameters from ``weights``.

    Stride-2 transposed convolutions get output padding 1 so they exactly
    double spatial dims. Missing parameters raise ``KeyError``.
    """
    x = as_tensor(x)
    for i, layer in enumerate(layers):
        key = f"{prefix}.{i}" if prefix else str(i)
        if layer.kind == "conv":
            x = conv2d(x, weights[f"{key}.kernel"], weights[f"{key}.bias"],
                       stride=layer.stride, padding=layer.padding)
        elif layer.kind == "deconv":
            x = deconv2d(x, weights[f"{key}.kernel"], weights[f"{key}.bias"],
                         stride=layer.stride, padding=layer.padding,
                         output_padding=layer.stride - 1)
        elif layer.kind == "gdn":
            x = gdn(x, weights[f"{key}.beta"], weights[f"{key}.gamma"])
        elif layer.kind == "igdn":
            x = gdn(x, weights[f"{key}.beta"], weights[f"{key}.gamma"],
                    inverse=True)
        else:
            x = relu(x)
    return x
