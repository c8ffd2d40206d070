"""End-to-end nested-latent codec pipeline and the NLC1 container format.

Compression runs the analysis chain on continuous latents, quantizes every
layer, codes the top layer under the logistic prior and each lower layer
under per-element conditional Gaussians whose scales are predicted from the
already-quantized layer above. The conditioning path (integer latents ->
float32 stacks -> exp -> clamp -> level lookup) is identical on both sides,
so encoder and decoder tables match bit-exactly.

Container layout (all integers little-endian): magic ``NLC1``, version byte,
levels, bin precision, table frequency bits, original and padded dimensions,
latent channel count, scale-table parameters (level count, float64 min/max),
the 8-byte weight-store hash, one (channels, h, w, segment length) record per
layer ordered top layer first, then the segments in the same order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rans
from .entropy import (BinGrid, ConditionalGaussian, LogisticPrior, ScaleTable,
                      TABLE_FREQ_BITS, default_scale_table, estimate_rate_bits,
                      logistic_table)
from .errors import CorruptStreamError, WrongModelError
from .metrics import ms_ssim as _ms_ssim
from .nn import NetworkSpec, run_stack
from .weights import WeightStore

MAGIC = b"NLC1"
VERSION = 1
_HEADER = struct.Struct("<4sBBBBIIIIHHdd8s")
_LAYER_REC = struct.Struct("<HHHI")

ARCHIVE_MAGIC = b"NLA1"
_ARCHIVE_HEADER = struct.Struct("<4sBIIII")
DEFAULT_TILE = 256


@dataclass
class LatentStack:
    """Quantized integer latents, ``layers[l-1]`` holding layer l."""

    layers: list[np.ndarray]

    def __post_init__(self):
        for z in self.layers:
            if z.ndim != 3 or not np.issubdtype(z.dtype, np.integer):
                raise ValueError("latent layers must be integer (C,h,w) grids")

    def __len__(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class RdPoint:
    """One rate-distortion measurement."""

    bpp: float
    distortion: float
    lambda_id: str = ""


def quantize(latent, grid: BinGrid = BinGrid()) -> np.ndarray:
    """Round half away from zero and clamp to the grid range."""
    x = np.asarray(latent, dtype=np.float32)
    q = np.copysign(np.floor(np.abs(x) + np.float32(0.5)), x)
    return np.clip(q, grid.lo, grid.hi).astype(np.int32)


def pad_reflect(img: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Reflect-pad the bottom/right of a (C,H,W) array to the target dims."""
    c, h, w = img.shape
    if target_h < h or target_w < w:
        raise ValueError("target dims must not shrink the image")
    if target_h == h and target_w == w:
        return img
    # True reflection needs >= 2 samples along the axis; fall back to edge
    # repetition for degenerate 1-px dims.
    mode = "reflect" if min(h, w) >= 2 else "symmetric"
    return np.pad(img, ((0, 0), (0, target_h - h), (0, target_w - w)), mode=mode)


def _check_spec(spec: NetworkSpec, weights: WeightStore) -> None:
    if spec.to_json() != weights.network.to_json():
        raise ValueError("network description does not match the weight store")


def _layer_shapes(spec: NetworkSpec, padded_h: int, padded_w: int):
    shapes = []
    h, w = padded_h, padded_w
    m = spec.latent_channels
    for stack in spec.analysis:
        f = 1
        for layer in stack:
            if layer.kind in ("conv", "deconv"):
                f *= layer.stride
        if h % f or w % f:
            raise ValueError("padded dims not divisible by the stack stride")
        h, w = h // f, w // f
        shapes.append((m, h, w))
    return shapes


def analyze(x, spec: NetworkSpec, weights: WeightStore,
            grid: BinGrid = BinGrid()) -> LatentStack:
    """Run the analysis chain on a float32 (C,H,W) input and quantize.

    Deeper latents are computed from the continuous layer below; every layer
    is then quantized. Input spatial dims must be divisible by the total
    downsampling factor.
    """
    x = np.asarray(x, dtype=np.float32)
    f = spec.total_downsampling
    if x.ndim != 3 or x.shape[1] % f or x.shape[2] % f:
        raise ValueError(
            f"input dims {x.shape} not compliant with downsampling factor {f}")
    layers = []
    cur = x
    for i, stack in enumerate(spec.analysis):
        cur = run_stack(cur, stack, weights, prefix=f"analysis.{i}")
        layers.append(quantize(cur, grid))
    return LatentStack(layers)


def _sigma_field(z_above: np.ndarray, spec: NetworkSpec, weights: WeightStore,
                 layer: int, table: ScaleTable) -> np.ndarray:
    """Scale field for ``layer`` (1-based) from the quantized layer above.

    The predictor output is a log scale; it is exponentiated and clamped to
    the table range, all in float32 so both codec sides agree bit-exactly.
    """
    raw = run_stack(z_above.astype(np.float32), spec.sigma[layer - 1], weights,
                    prefix=f"sigma.{layer - 1}")
    sig = np.exp(raw, dtype=np.float32)
    return np.clip(sig, np.float32(table.sigma_min), np.float32(table.sigma_max))


def _conditional_levels(z_above, spec, weights, layer, table) -> np.ndarray:
    return table.quantize_sigma(_sigma_field(z_above, spec, weights, layer,
                                             table))


def reconstruct(latents: LatentStack, spec: NetworkSpec, weights: WeightStore,
                size: tuple[int, int] | None = None) -> np.ndarray:
    """Synthesize the 8-bit image from the first quantized latent."""
    x01 = run_stack(latents.layers[0].astype(np.float32), spec.synthesis[0],
                    weights, prefix="synthesis.0")
    y = np.clip(x01 * np.float32(255.0), np.float32(0.0), np.float32(255.0))
    img = np.floor(y + np.float32(0.5)).astype(np.uint8)
    if size is not None:
        img = img[:, :size[0], :size[1]]
    return np.ascontiguousarray(img)


def _code_layers(latents: LatentStack, spec, weights, grid, table):
    """Yield (layer_index, symbols, tables, freqs) from the top layer down."""
    prior = logistic_table(grid.precision)
    prior_freqs = prior.frequencies()
    for l in range(len(latents), 0, -1):
        syms = (latents.layers[l - 1] - grid.lo).ravel()
        if l == len(latents):
            tables = [prior] * syms.size
            freqs = prior_freqs[syms]
        else:
            levels = _conditional_levels(latents.layers[l], spec, weights, l,
                                         table)
            lv = levels.ravel()
            tabs = table.tables
            tables = [tabs[i] for i in lv]
            freqs = table.freq_matrix[lv, syms]
        yield l, syms, tables, freqs


def compress(image, spec: NetworkSpec, weights: WeightStore,
             grid: BinGrid = BinGrid(), scale_table: ScaleTable | None = None,
             self_check: bool = False) -> bytes:
    """Compress an 8-bit RGB image into a self-describing container."""
    blob, _ = compress_with_report(image, spec, weights, grid=grid,
                                   scale_table=scale_table,
                                   self_check=self_check)
    return blob


def compress_with_report(image, spec: NetworkSpec, weights: WeightStore,
                         grid: BinGrid = BinGrid(),
                         scale_table: ScaleTable | None = None,
                         self_check: bool = False) -> tuple[bytes, dict]:
    """Compress and return (container, per-layer rate report)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected (3,H,W) uint8 image, got "
                         f"{img.dtype} {img.shape}")
    _, h, w = img.shape
    if h < 1 or w < 1:
        raise ValueError("image is empty")
    _check_spec(spec, weights)
    table = scale_table or default_scale_table(grid.precision)

    f = spec.total_downsampling
    ph, pw = -(-h // f) * f, -(-w // f) * f
    x = pad_reflect(img, ph, pw).astype(np.float32) / np.float32(255.0)
    latents = analyze(x, spec, weights, grid)

    records = []
    segments = []
    layers_report = []
    for l, syms, tables, freqs in _code_layers(latents, spec, weights, grid,
                                               table):
        seg = rans.encode(syms.tolist(), tables)
        c, lh, lw = latents.layers[l - 1].shape
        records.append(_LAYER_REC.pack(c, lh, lw, len(seg)))
        segments.append(seg)
        est = float((TABLE_FREQ_BITS - np.log2(freqs)).sum())
        layers_report.append({"layer": l, "symbols": int(syms.size),
                              "estimated_bits": est,
                              "actual_bits": len(seg) * 8})

    header = _HEADER.pack(MAGIC, VERSION, spec.levels, grid.precision,
                          TABLE_FREQ_BITS, w, h, pw, ph,
                          spec.latent_channels, len(table),
                          table.sigma_min, table.sigma_max,
                          weights.content_hash)
    blob = header + b"".join(records) + b"".join(segments)

    report = {
        "layers": layers_report,
        "estimated_bits": sum(r["estimated_bits"] for r in layers_report),
        "payload_bits": sum(r["actual_bits"] for r in layers_report),
        "header_bits": (len(header) + len(b"".join(records))) * 8,
        "total_bits": len(blob) * 8,
        "pixels": h * w,
        "bpp": len(blob) * 8 / (h * w),
        "payload_bpp": sum(r["actual_bits"] for r in layers_report) / (h * w),
    }

    if self_check:
        recon = reconstruct(latents, spec, weights, size=(h, w))
        decoded = decompress(blob, spec, weights)
        if not np.array_equal(recon, decoded):
            raise CorruptStreamError(
                "self-check failed: decoder output differs from the "
                "encoder-side reconstruction")
    return blob, report


def parse_header(blob: bytes) -> dict:
    """Parse and validate the container header; returns its fields."""
    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        raise CorruptStreamError("not an NLC1 container")
    (magic, version, levels, precision, freq_bits, w, h, pw, ph, m,
     n_levels, smin, smax, whash) = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise CorruptStreamError(f"unsupported container version {version}")
    if freq_bits != TABLE_FREQ_BITS:
        raise CorruptStreamError(f"unsupported frequency precision {freq_bits}")
    if levels < 1 or w < 1 or h < 1 or pw < w or ph < h:
        raise CorruptStreamError("invalid container geometry")
    rec_end = _HEADER.size + levels * _LAYER_REC.size
    if len(blob) < rec_end:
        raise CorruptStreamError("truncated layer records")
    layers = []
    for i in range(levels):
        c, lh, lw, seg_len = _LAYER_REC.unpack_from(
            blob, _HEADER.size + i * _LAYER_REC.size)
        layers.append({"channels": c, "h": lh, "w": lw, "bytes": seg_len})
    return {"levels": levels, "precision": precision, "width": w, "height": h,
            "padded_width": pw, "padded_height": ph, "latent_channels": m,
            "scale_levels": n_levels, "sigma_min": smin, "sigma_max": smax,
            "weight_hash": whash, "layers": layers, "segments_at": rec_end}


def container_info(blob: bytes) -> dict:
    """Header summary plus derived totals, for inspection tools."""
    info = parse_header(blob)
    payload = sum(l["bytes"] for l in info["layers"])
    if info["segments_at"] + payload != len(blob):
        raise CorruptStreamError("container length does not match its header")
    pixels = info["width"] * info["height"]
    info["payload_bits"] = payload * 8
    info["total_bits"] = len(blob) * 8
    info["bpp"] = len(blob) * 8 / pixels
    info["payload_bpp"] = payload * 8 / pixels
    return info


def decompress(blob: bytes, spec: NetworkSpec, weights: WeightStore) -> np.ndarray:
    """Decode a container back to an 8-bit RGB image."""
    _check_spec(spec, weights)
    info = parse_header(blob)
    if info["weight_hash"] != weights.content_hash:
        raise WrongModelError(
            "container was produced with a different weight store")
    if info["levels"] != spec.levels or \
            info["latent_channels"] != spec.latent_channels:
        raise WrongModelError("container geometry does not match the network")

    try:
        grid = BinGrid(info["precision"])
        default = default_scale_table(grid.precision)
        if (info["scale_levels"], info["sigma_min"], info["sigma_max"]) == \
                (len(default.tables), default.sigma_min, default.sigma_max):
            table = default
        else:
            table = ScaleTable(info["sigma_min"], info["sigma_max"],
                               info["scale_levels"], grid)
    except ValueError as exc:
        raise CorruptStreamError(f"invalid coding parameters: {exc}") from exc

    try:
        expected = _layer_shapes(spec, info["padded_height"],
                                 info["padded_width"])
    except ValueError as exc:
        raise CorruptStreamError(str(exc)) from exc
    declared = [(l["channels"], l["h"], l["w"]) for l in info["layers"]]
    if declared != expected[::-1]:
        raise CorruptStreamError("layer shapes do not match the network")

    payload = sum(l["bytes"] for l in info["layers"])
    if info["segments_at"] + payload != len(blob):
        raise CorruptStreamError("container length does not match its header")

    pos = info["segments_at"]
    layers: list[np.ndarray | None] = [None] * info["levels"]
    prior = logistic_table(grid.precision)
    z_above: np.ndarray | None = None
    for rec_idx, l in enumerate(range(info["levels"], 0, -1)):
        c, lh, lw = declared[rec_idx]
        seg_len = info["layers"][rec_idx]["bytes"]
        seg = blob[pos:pos + seg_len]
        pos += seg_len
        n = c * lh * lw
        if l == info["levels"]:
            tables = [prior] * n
        else:
            levels_field = _conditional_levels(z_above, spec, weights, l, table)
            tables = [table.tables[i] for i in levels_field.ravel()]
        syms = rans.decode(seg, tables, n)
        z = (np.asarray(syms, dtype=np.int32) + grid.lo).reshape(c, lh, lw)
        layers[l - 1] = z
        z_above = z
    stack = LatentStack([z for z in layers])  # type: ignore[arg-type]
    return reconstruct(stack, spec, weights,
                       size=(info["height"], info["width"]))


def model_rate_bits(latents: LatentStack, spec: NetworkSpec,
                    weights: WeightStore, grid: BinGrid = BinGrid(),
                    scale_table: ScaleTable | None = None) -> float:
    """Idealized rate under the continuous models (no table quantization)."""
    table = scale_table or default_scale_table(grid.precision)
    total = estimate_rate_bits(latents.layers[-1], LogisticPrior(), grid)
    for l in range(len(latents) - 1, 0, -1):
        sig = _sigma_field(latents.layers[l], spec, weights, l, table)
        total += estimate_rate_bits(latents.layers[l - 1],
                                    ConditionalGaussian(sig), grid)
    return total


def evaluate(image, spec: NetworkSpec, weights: WeightStore,
             distortion: str = "mse", lambda_id: str = "") -> RdPoint:
    """Round-trip an image and measure (bits per pixel, distortion)."""
    img = np.asarray(image)
    blob = compress(img, spec, weights)
    out = decompress(blob, spec, weights)
    if distortion == "mse":
        d = float(np.mean((img.astype(np.float64) - out.astype(np.float64)) ** 2))
    elif distortion == "ms-ssim":
        d = 1.0 - _ms_ssim(img, out)
    else:
        raise ValueError("distortion must be 'mse' or 'ms-ssim'")
    bpp = len(blob) * 8 / (img.shape[1] * img.shape[2])
    return RdPoint(bpp=bpp, distortion=d, lambda_id=lambda_id)


def split_tiles(img: np.ndarray, tile: int):
    """Yield (row, col, view) tiles in row-major order."""
    _, h, w = img.shape
    for r in range(0, h, tile):
        for c in range(0, w, tile):
            yield r, c, img[:, r:r + tile, c:c + tile]


def pack_archive(width: int, height: int, tile: int,
                 containers: list[bytes]) -> bytes:
    """Indexed archive of per-tile containers: count + offsets + payloads."""
    head = _ARCHIVE_HEADER.pack(ARCHIVE_MAGIC, VERSION, width, height, tile,
                                len(containers))
    off = len(head) + 8 * len(containers)
    offsets = []
    for c in containers:
        offsets.append(off)
        off += len(c)
    return head + b"".join(struct.pack("<Q", o) for o in offsets) + \
        b"".join(containers)


def unpack_archive(blob: bytes) -> tuple[int, int, int, list[bytes]]:
    """Split an archive into (width, height, tile, containers)."""
    if len(blob) < _ARCHIVE_HEADER.size or blob[:4] != ARCHIVE_MAGIC:
        raise CorruptStreamError("not an NLA1 tile archive")
    magic, version, width, height, tile, count = _ARCHIVE_HEADER.unpack_from(blob)
    if version != VERSION:
        raise CorruptStreamError(f"unsupported archive version {version}")
    pos = _ARCHIVE_HEADER.size
    if len(blob) < pos + 8 * count:
        raise CorruptStreamError("truncated archive index")
    offsets = [struct.unpack_from("<Q", blob, pos + 8 * i)[0]
               for i in range(count)]
    bounds = offsets + [len(blob)]
    containers = []
    for i in range(count):
        if bounds[i] > bounds[i + 1] or bounds[i + 1] > len(blob):
            raise CorruptStreamError("archive offsets out of order")
        containers.append(blob[bounds[i]:bounds[i + 1]])
    expected = (-(-height // tile)) * (-(-width // tile)) if count else 0
    if count != expected:
        raise CorruptStreamError("archive tile count does not match geometry")
    return width, height, tile, containers
