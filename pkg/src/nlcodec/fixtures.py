"""Seeded fixtures: random weight stores and synthetic test images."""

from __future__ import annotations

import numpy as np

from .nn import NetworkSpec
from .weights import WeightStore


def random_weights(spec: NetworkSpec, seed: int = 0) -> WeightStore:
    """Randomly initialized weights with well-behaved scales.

    Convolution kernels use fan-in scaled normals; GDN parameters stay in the
    regime where the exact inverse is well conditioned.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in spec.parameter_shapes().items():
        if name.endswith(".kernel"):
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else 1
            if ".deconv" in name:
                fan_in = shape[0] * shape[2] * shape[3]
            tensors[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in),
                                       size=shape).astype(np.float32)
        elif name.endswith(".bias"):
            tensors[name] = rng.uniform(-0.1, 0.1, size=shape).astype(np.float32)
        elif name.endswith(".beta"):
            tensors[name] = rng.uniform(0.5, 1.5, size=shape).astype(np.float32)
        elif name.endswith(".gamma"):
            c = shape[0]
            g = 0.05 * np.eye(c) + np.abs(rng.normal(0.0, 0.003, size=shape))
            tensors[name] = g.astype(np.float32)
        else:
            raise AssertionError(f"unhandled parameter {name}")
    return WeightStore(spec, tensors)


def write_random_weights(path, spec: NetworkSpec, seed: int = 0) -> WeightStore:
    ws = random_weights(spec, seed)
    ws.save(path)
    return ws


def synthetic_image(height: int, width: int, seed: int = 0,
                    kind: str = "mix") -> np.ndarray:
    """Deterministic (3,H,W) uint8 test image.

    ``gradient``: smooth ramps; ``checker``: block pattern; ``noise``: uniform
    noise; ``mix``: gradients plus texture and a little noise.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    if kind == "gradient":
        planes = [xx / max(width - 1, 1), yy / max(height - 1, 1),
                  (xx + yy) / max(width + height - 2, 1)]
        img = np.stack(planes) * 255
    elif kind == "checker":
        block = max(4, min(height, width) // 8)
        pat = ((yy // block + xx // block) % 2) * 255
        img = np.stack([pat, 255 - pat, pat])
    elif kind == "noise":
        img = rng.uniform(0, 255, size=(3, height, width))
    elif kind == "mix":
        base = np.stack([xx / max(width - 1, 1) * 200,
                         yy / max(height - 1, 1) * 200,
                         np.sin(xx / 7.0) * 60 + 120])
        texture = np.sin(yy / 3.0) * np.cos(xx / 5.0) * 30
        img = base + texture + rng.normal(0, 6, size=(3, height, width))
    else:
        raise ValueError(f"unknown image kind {kind!r}")
    return np.clip(img, 0, 255).astype(np.uint8)
