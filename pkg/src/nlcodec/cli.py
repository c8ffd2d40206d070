"""Command-line front end: compress, decompress, eval, inspect, ar-check.

Exit codes are stable API: 0 ok, 2 missing input, 3 corrupt stream, 4 model
mismatch, 5 invalid arguments. Large images are coded as independent tiles
collected in an indexed archive; tiles are processed by a worker pool whose
size comes from ``--threads`` or the ``NLC_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import ar, codec, metrics, ppm
from .entropy import BinGrid, DEFAULT_PRECISION
from .errors import CorruptStreamError, ResourceLimitError, WrongModelError
from .weights import WeightStore

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_CORRUPT = 3
EXIT_MODEL_MISMATCH = 4
EXIT_INVALID = 5

AR_GAP_LIMIT = 1e-12


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(ValueError):
    pass


def _threads(value) -> int:
    if value is not None:
        n = int(value)
    else:
        n = int(os.environ.get("NLC_THREADS", "1"))
    if n < 1:
        raise _UsageError("thread count must be >= 1")
    return n


def _load_model(path) -> WeightStore:
    if not os.path.isfile(path):
        raise FileNotFoundError(path)
    return WeightStore.load(path)


def _map_tiles(fn, items, threads: int):
    if threads == 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _merge_reports(reports: list[dict]) -> dict:
    layers: dict[int, dict] = {}
    for rep in reports:
        for lr in rep["layers"]:
            agg = layers.setdefault(lr["layer"], {"layer": lr["layer"],
                                                  "symbols": 0,
                                                  "estimated_bits": 0.0,
                                                  "actual_bits": 0})
            agg["symbols"] += lr["symbols"]
            agg["estimated_bits"] += lr["estimated_bits"]
            agg["actual_bits"] += lr["actual_bits"]
    return {
        "layers": sorted(layers.values(), key=lambda d: -d["layer"]),
        "estimated_bits": sum(r["estimated_bits"] for r in reports),
        "payload_bits": sum(r["payload_bits"] for r in reports),
    }


def cmd_compress(args) -> int:
    weights = _load_model(args.model)
    spec = weights.network
    if not os.path.isfile(args.input):
        raise FileNotFoundError(args.input)
    img = ppm.read_image(args.input)
    factor = spec.total_downsampling
    if args.tile % factor:
        raise _UsageError(
            f"tile size must be a multiple of the downsampling factor {factor}")
    threads = _threads(args.threads)
    grid = BinGrid(args.precision)

    tiles = list(codec.split_tiles(img, args.tile))

    def job(entry):
        _, _, sub = entry
        return codec.compress_with_report(np.ascontiguousarray(sub), spec,
                                          weights, grid=grid,
                                          self_check=args.self_check)
    results = _map_tiles(job, tiles, threads)
    containers = [blob for blob, _ in results]
    archive = codec.pack_archive(img.shape[2], img.shape[1], args.tile,
                                 containers)
    with open(args.output, "wb") as f:
        f.write(archive)

    if args.recon:
        recon = np.empty_like(img)
        for (r, c, sub), (blob, _) in zip(tiles, results):
            recon[:, r:r + sub.shape[1], c:c + sub.shape[2]] = \
                codec.decompress(blob, spec, weights)
        ppm.write_image(args.recon, recon)

    if args.report:
        rep = _merge_reports([rep for _, rep in results])
        pixels = img.shape[1] * img.shape[2]
        rep["pixels"] = pixels
        rep["total_bits"] = len(archive) * 8
        rep["bpp"] = len(archive) * 8 / pixels
        rep["payload_bpp"] = rep["payload_bits"] / pixels
        rep["tiles"] = len(containers)
        if args.json:
            print(json.dumps(rep, sort_keys=True))
        else:
            for lr in rep["layers"]:
                print(f"layer {lr['layer']}: symbols={lr['symbols']} "
                      f"estimated={lr['estimated_bits']:.1f} bits "
                      f"actual={lr['actual_bits']} bits")
            print(f"payload {rep['payload_bits']} bits "
                  f"({rep['payload_bpp']:.4f} bpp), "
                  f"total {rep['total_bits']} bits ({rep['bpp']:.4f} bpp), "
                  f"{rep['tiles']} tile(s)")
    return EXIT_OK


def cmd_decompress(args) -> int:
    weights = _load_model(args.model)
    spec = weights.network
    if not os.path.isfile(args.input):
        raise FileNotFoundError(args.input)
    with open(args.input, "rb") as f:
        blob = f.read()
    if blob[:4] == codec.MAGIC:
        # A bare container instead of a tile archive.
        img = codec.decompress(blob, spec, weights)
        ppm.write_image(args.output, img)
        if args.json:
            print(json.dumps({"output": args.output, "width": img.shape[2],
                              "height": img.shape[1], "tiles": 1}))
        return EXIT_OK
    width, height, tile, containers = codec.unpack_archive(blob)
    threads = _threads(args.threads)
    decoded = _map_tiles(lambda c: codec.decompress(c, spec, weights),
                         containers, threads)
    img = np.empty((3, height, width), dtype=np.uint8)
    idx = 0
    for r in range(0, height, tile):
        for c in range(0, width, tile):
            part = decoded[idx]
            idx += 1
            img[:, r:r + part.shape[1], c:c + part.shape[2]] = part
    ppm.write_image(args.output, img)
    if args.json:
        print(json.dumps({"output": args.output, "width": width,
                          "height": height, "tiles": len(containers)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    for path in (args.input, args.recon):
        if not os.path.isfile(path):
            raise FileNotFoundError(path)
    a = ppm.read_image(args.input)
    b = ppm.read_image(args.recon)
    psnr_db = metrics.psnr(a, b)
    score = metrics.ms_ssim(a, b)
    bpp = None
    if args.container:
        if not os.path.isfile(args.container):
            raise FileNotFoundError(args.container)
        bits = os.path.getsize(args.container) * 8
        bpp = bits / (a.shape[1] * a.shape[2])
    if args.json:
        print(json.dumps({"input": args.input, "recon": args.recon,
                          "psnr": None if math.isinf(psnr_db) else psnr_db,
                          "ms_ssim": score, "bpp": bpp}))
    else:
        psnr_txt = "inf" if math.isinf(psnr_db) else f"{psnr_db:.2f}"
        bpp_txt = "—" if bpp is None else f"{bpp:.4f}"
        print(f"{psnr_txt} / {score:.4f} / {bpp_txt}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    if not os.path.isfile(args.input):
        raise FileNotFoundError(args.input)
    with open(args.input, "rb") as f:
        blob = f.read()
    if blob[:4] == codec.ARCHIVE_MAGIC:
        width, height, tile, containers = codec.unpack_archive(blob)
        infos = [codec.container_info(c) for c in containers]
        pixels = width * height
        payload = sum(i["payload_bits"] for i in infos)
        layer_bits: dict[int, int] = {}
        for info in infos:
            for rec_idx, l in enumerate(range(info["levels"], 0, -1)):
                layer_bits[l] = layer_bits.get(l, 0) + \
                    info["layers"][rec_idx]["bytes"] * 8
        out = {"width": width, "height": height, "tile": tile,
               "tiles": len(containers), "payload_bits": payload,
               "total_bits": len(blob) * 8, "bpp": len(blob) * 8 / pixels,
               "payload_bpp": payload / pixels,
               "layers": [{"layer": l, "actual_bits": b}
                          for l, b in sorted(layer_bits.items(), reverse=True)]}
    else:
        out = codec.container_info(blob)
        out["weight_hash"] = out["weight_hash"].hex()
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        for key in ("width", "height", "tiles", "payload_bits", "total_bits"):
            if key in out:
                print(f"{key}: {out[key]}")
        for lr in out.get("layers", []):
            if "actual_bits" in lr:
                print(f"layer {lr['layer']}: actual={lr['actual_bits']} bits")
        print(f"bpp: {out['bpp']:.4f} (payload {out['payload_bpp']:.4f})")
    return EXIT_OK


def cmd_ar_check(args) -> int:
    if args.pixels > ar.MAX_PIXELS:
        raise ResourceLimitError(
            f"at most {ar.MAX_PIXELS} pixels supported, got {args.pixels}")
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        model = ar.random_model(args.pixels, rng)
        worst = max(worst, ar.max_evidence_gap(model))
    ok = worst <= AR_GAP_LIMIT
    if args.json:
        print(json.dumps({"pixels": args.pixels, "trials": args.trials,
                          "seed": args.seed, "max_gap": worst, "ok": ok}))
    else:
        print(f"max evidence gap over {args.trials} trials "
              f"(T={args.pixels}, seed={args.seed}): {worst:.3e}")
    return EXIT_OK if ok else 1


def build_parser() -> _Parser:
    p = _Parser(prog="nlc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="compress an image into a tile archive")
    c.add_argument("--model", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--tile", type=int, default=codec.DEFAULT_TILE)
    c.add_argument("--precision", type=int, default=DEFAULT_PRECISION,
                   help="bin grid precision P (2**P bins)")
    c.add_argument("--report", action="store_true")
    c.add_argument("--self-check", action="store_true")
    c.add_argument("--threads", type=int, default=None)
    c.add_argument("--json", action="store_true")
    c.add_argument("--recon", help="write the encoder-side reconstruction")
    c.set_defaults(fn=cmd_compress)

    d = sub.add_parser("decompress", help="decode a tile archive to an image")
    d.add_argument("--model", required=True)
    d.add_argument("--input", required=True)
    d.add_argument("--output", required=True)
    d.add_argument("--threads", type=int, default=None)
    d.add_argument("--json", action="store_true")
    d.set_defaults(fn=cmd_decompress)

    e = sub.add_parser("eval", help="PSNR / MS-SSIM / bpp of a reconstruction")
    e.add_argument("--input", required=True, help="original image")
    e.add_argument("--recon", required=True, help="reconstructed image")
    e.add_argument("--container", help="compressed file for the bpp column")
    e.add_argument("--json", action="store_true")
    e.set_defaults(fn=cmd_eval)

    i = sub.add_parser("inspect", help="show container/archive structure")
    i.add_argument("--input", required=True)
    i.add_argument("--json", action="store_true")
    i.set_defaults(fn=cmd_inspect)

    a = sub.add_parser("ar-check",
                       help="verify autoregressive-equivalence by enumeration")
    a.add_argument("--pixels", type=int, default=4)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--trials", type=int, default=100)
    a.add_argument("--json", action="store_true")
    a.set_defaults(fn=cmd_ar_check)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except CorruptStreamError as exc:
        print(f"error: corrupt stream: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except WrongModelError as exc:
        print(f"error: model mismatch: {exc}", file=sys.stderr)
        return EXIT_MODEL_MISMATCH
    except (ValueError, _UsageError) as exc:
        print(f"error: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
