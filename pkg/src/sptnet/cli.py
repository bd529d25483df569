"""Command-line front end.

Subcommands::

    sptnet forward      --rgb a.ppm --depth a.pgm --config m.cfg --out sm.pgm
    sptnet superpixels  --input a.ppm --cell 8 --radius 2 --iters 2 --out seg.ppm
    sptnet flops        [--config m.cfg]
    sptnet gradcheck    --module sagem [--seed 0] [--eps 1e-5]
    sptnet oracle       --suite salrm [--trials 20] [--seed 0]

Exit codes: 0 success, 1 malformed image file, 2 bad configuration or
usage, 3 cell size does not divide the image side, 4 a numeric check
(gradient threshold or oracle agreement) failed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .bridge import gen_dict, model_dict, sagem_dict, salrm_dict
from .config import ConfigError, parse_config_file
from .gradcheck import MODULE_THRESHOLDS, run_module
from .network import ModelConfig, ModelParams, count_flops, forward
from .oracle import (gather_by_loop, sagem_forward_stepwise,
                     salrm_forward_stepwise, scatter_mean_by_loop,
                     straightline_forward, superpixel_generate_dense,
                     superpixel_masks_enum, topk_by_sort)
from .pnm import (PnmError, bilinear_resize, read_pgm, read_ppm,
                  write_association, write_pgm, write_ppm)
from .sagem import SagemParams, sagem_forward
from .salrm import SalrmParams, salrm_forward
from .superpixel import (GridGeometry, NeighborhoodSpec, SuperpixelParams,
                         argmax_labels, build_masks, generate)
from .tensor import Rng, Tensor, gather_rows, scatter_mean, topk_indices

__all__ = ["main", "entry"]

EXIT_OK = 0
EXIT_BAD_IMAGE = 1
EXIT_BAD_CONFIG = 2
EXIT_BAD_GRID = 3
EXIT_CHECK_FAILED = 4


# ---------------------------------------------------------------------------
# forward

def _load_pair(rgb_path: str, depth_path: str, size: int):
    rgb = bilinear_resize(read_ppm(rgb_path), size, size)
    depth = bilinear_resize(read_pgm(depth_path)[:, :, None], size, size)
    return Tensor(rgb), Tensor(depth)


def cmd_forward(args) -> int:
    config = parse_config_file(args.config)
    rgb, depth = _load_pair(args.rgb, args.depth, config.input_size)
    params = ModelParams.init(config)
    out = forward(rgb, depth, params, config)
    write_pgm(args.out, out.final.data)
    if args.dump_scales is not None:
        os.makedirs(args.dump_scales, exist_ok=True)
        for i, sal in enumerate(out.maps, start=1):
            write_pgm(os.path.join(args.dump_scales, f"sm{i}.pgm"), sal.data)
    print(f"forward: wrote {args.out} "
          f"({config.input_size}x{config.input_size}, seed {config.seed})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# superpixels

def cmd_superpixels(args) -> int:
    img = read_ppm(args.input)
    h, w, _ = img.shape
    if h % args.cell or w % args.cell:
        print(f"error: cell {args.cell} does not divide image {w}x{h}",
              file=sys.stderr)
        return EXIT_BAD_GRID
    if args.iters < 0:
        print("error: --iters must be >= 0", file=sys.stderr)
        return EXIT_BAD_CONFIG
    geo = GridGeometry(h, w, args.cell)
    spec = NeighborhoodSpec(radius_cells=args.radius)
    params = SuperpixelParams.init(Rng(0), 3)   # fixed seed: reproducible maps
    state = generate(Tensor(img.reshape(-1, 3)), geo, spec, params,
                     t=args.iters)

    labels = argmax_labels(state)
    flat = img.reshape(-1, 3)
    sums = np.zeros((geo.m, 3))
    np.add.at(sums, labels, flat)
    counts = np.maximum(np.bincount(labels, minlength=geo.m), 1)
    recolored = (sums / counts[:, None])[labels].reshape(h, w, 3)

    write_ppm(args.out, recolored)
    if args.assoc is not None:
        write_association(args.assoc, state.a.data)
    print(f"superpixels: {geo.m} tokens over {w}x{h}, wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# flops

def _fmt(n: int) -> str:
    return f"{n:,}"


def cmd_flops(args) -> int:
    config = (ModelConfig() if args.config is None
              else parse_config_file(args.config))
    report = count_flops(config)

    head = ["stage", "module", "similarity", "aggregation", "embeddings",
            "ffn", "generation", "other", "total"]
    rows = [head]
    for i in range(4):
        for name, count in (("sagem", report.sagem[i]),
                            ("salrm", report.salrm[i])):
            rows.append([str(i + 1), name, _fmt(count.similarity),
                         _fmt(count.aggregation), _fmt(count.embeddings),
                         _fmt(count.ffn), _fmt(count.generation),
                         _fmt(count.other), _fmt(count.total)])
    widths = [max(len(r[c]) for r in rows) for c in range(len(head))]
    for r in rows:
        print("  ".join(v.rjust(widths[c]) for c, v in enumerate(r)))

    att = report.attention_modules
    print()
    for label, value in (
            ("attention modules", att.total),
            ("encoder", report.encoder),
            ("fusion", report.fusion),
            ("decoder", report.decoder),
            ("network total", report.total),
            ("parametric (weight-bearing layers)", report.parametric),
            ("dense-attention hypothetical", report.dense_attention_total)):
        print(f"{label:<36}{_fmt(value):>20}")
    if att.dense_attention:
        ratio = att.attention / att.dense_attention
        print(f"{'attention / dense ratio':<36}{ratio:>20.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck

def cmd_gradcheck(args) -> int:
    result = run_module(args.module, seed=args.seed, eps=args.eps)
    status = "ok" if result.passed else "FAIL"
    print(f"gradcheck {result.module}: max relative error "
          f"{result.max_rel_err:.3e} over {result.n_coords} coordinates "
          f"(threshold {result.threshold:g}, worst {result.worst_param}) "
          f"[{status}]")
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# oracle suites: production route vs. brute-force re-derivation

_GEO_POOL = ((8, 8, 2), (6, 6, 3), (8, 4, 2), (12, 12, 3))


def _suite_mask(trials: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        h, w, cell = _GEO_POOL[rng.integers(len(_GEO_POOL))]
        radius = int(rng.integers(1, 3))
        geo = GridGeometry(h, w, cell)
        spec = NeighborhoodSpec(radius_cells=radius)
        pm, sm = build_masks(geo, spec)
        pix_ref, sp_ref = superpixel_masks_enum(h, w, cell, radius)
        for got, want in ((pm.rows, pix_ref), (sm.rows, sp_ref)):
            for g, e in zip(got, want):
                if sorted(int(v) for v in g) != sorted(e):
                    return float("inf"), 0.0
        c = int(rng.integers(2, 5))
        pixels = rng.standard_normal((geo.n, c))
        params = SuperpixelParams.init(Rng(int(rng.integers(2**31))), c)
        state = generate(Tensor(pixels), geo, spec, params, t=2)
        s_ref, p_ref, a_ref = superpixel_generate_dense(
            pixels, gen_dict(params), h, w, cell, radius,
            spec.pixel_topk, 2)
        worst = max(worst,
                    float(np.abs(state.s.data - s_ref).max()),
                    float(np.abs(state.p.data - p_ref).max()),
                    float(np.abs(state.a.data - a_ref).max()))
    return worst, 1e-10


def _suite_topk(trials: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        cols = int(rng.integers(5, 40))
        row = np.round(rng.standard_normal(cols), 1)   # force some ties
        k = int(rng.integers(1, cols + 1))
        got = topk_indices(row[None, :], k)[0]
        want = topk_by_sort(row, range(cols), k)
        if [int(v) for v in got] != [int(v) for v in want]:
            worst = max(worst, 1.0)
    return worst, 0.0


def _suite_scatter(trials: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n, m, k, c = (int(rng.integers(4, 30)), int(rng.integers(1, 8)),
                      int(rng.integers(1, 6)), int(rng.integers(1, 5)))
        src = rng.standard_normal((n, c))
        idx = rng.integers(0, n, size=(m, k))
        got_g = gather_rows(Tensor(src), idx)
        worst = max(worst, float(np.abs(got_g.data
                                        - gather_by_loop(src, idx)).max()))
        vals = rng.standard_normal((m, k, c))
        got_s = scatter_mean(n, Tensor(vals), idx)
        ref_s = scatter_mean_by_loop(n, vals, idx)
        worst = max(worst, float(np.abs(got_s.data - ref_s).max()))
    return worst, 1e-12


def _random_stage(rng) -> tuple[GridGeometry, NeighborhoodSpec, int, int]:
    h, w, cell = _GEO_POOL[rng.integers(len(_GEO_POOL))]
    geo = GridGeometry(h, w, cell)
    spec = NeighborhoodSpec(radius_cells=int(rng.integers(1, 3)))
    return geo, spec, int(rng.integers(3, 6)), int(rng.integers(1, 3))


def _suite_sagem(trials: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        geo, spec, c, t = _random_stage(rng)
        params = SagemParams.init(Rng(int(rng.integers(2**31))), c)
        f_r = rng.standard_normal((geo.n, c))
        f_d = rng.standard_normal((geo.n, c))
        got = sagem_forward(Tensor(f_r), Tensor(f_d), params, geo, spec, t=t)
        ref = sagem_forward_stepwise(f_r, f_d, sagem_dict(params),
                                     geo.feature_h, geo.feature_w, geo.cell,
                                     spec.radius_cells, spec.pixel_topk, t)
        worst = max(worst, float(np.abs(got.data - ref).max()))
    return worst, 1e-9


def _suite_salrm(trials: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        geo, spec, c, t = _random_stage(rng)
        k = min(int(rng.choice([1, 4, 9])), geo.n)
        params = SalrmParams.init(Rng(int(rng.integers(2**31))), c, k=k)
        f_r = rng.standard_normal((geo.n, c))
        f_d = rng.standard_normal((geo.n, c))
        got = salrm_forward(Tensor(f_r), Tensor(f_d), params, geo, spec, t=t)
        ref = salrm_forward_stepwise(f_r, f_d, salrm_dict(params),
                                     geo.feature_h, geo.feature_w, geo.cell,
                                     spec.radius_cells, spec.pixel_topk, t, k)
        worst = max(worst, float(np.abs(got.data - ref).max()))
    return worst, 1e-9


def _suite_forward(trials: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(trials):
        config = ModelConfig(input_size=32, stage_channels=(4, 8, 16, 32),
                             seed=seed * 1000 + i)
        params = ModelParams.init(config)
        s = config.input_size
        rgb = rng.uniform(size=(s, s, 3))
        depth = rng.uniform(size=(s, s, 1))
        out = forward(Tensor(rgb), Tensor(depth), params, config)
        ref = straightline_forward(rgb, depth, model_dict(params), s,
                                   config.stage_channels, config.stage_cells,
                                   config.mask_radius,
                                   config.neighborhood().pixel_topk,
                                   config.t, config.salrm_k)
        for got, want in zip(out.maps, ref):
            worst = max(worst, float(np.abs(got.data - want).max()))
    return worst, 1e-8


_SUITES = {"mask": _suite_mask, "topk": _suite_topk, "scatter": _suite_scatter,
           "sagem": _suite_sagem, "salrm": _suite_salrm,
           "forward": _suite_forward}


def cmd_oracle(args) -> int:
    if args.trials < 0:
        print("error: --trials must be >= 0", file=sys.stderr)
        return EXIT_BAD_CONFIG
    if args.trials == 0:
        print(f"oracle {args.suite}: 0 cases checked")
        return EXIT_OK
    worst, tol = _SUITES[args.suite](args.trials, args.seed)
    ok = worst <= tol
    print(f"oracle {args.suite}: {args.trials} cases, max deviation "
          f"{worst:.3e} (tolerance {tol:g}) [{'ok' if ok else 'FAIL'}]")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sptnet",
        description="Superpixel-token RGB-D saliency toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="run the detector on one RGB-D pair")
    p.add_argument("--rgb", required=True, help="input color image (P6 PPM)")
    p.add_argument("--depth", required=True, help="input depth map (P5 PGM)")
    p.add_argument("--config", required=True, help="model config file")
    p.add_argument("--out", required=True, help="output saliency map (PGM)")
    p.add_argument("--dump-scales", default=None, metavar="DIR",
                   help="also write sm1..sm4.pgm into DIR")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("superpixels",
                       help="visualise superpixel assignment as mean colors")
    p.add_argument("--input", required=True, help="input color image (P6 PPM)")
    p.add_argument("--cell", required=True, type=int, help="seed cell size")
    p.add_argument("--radius", type=int, default=2,
                   help="neighborhood radius in cells")
    p.add_argument("--iters", type=int, default=2, help="refinement rounds")
    p.add_argument("--out", required=True, help="output PPM path")
    p.add_argument("--assoc", default=None,
                   help="also dump the association matrix")
    p.set_defaults(func=cmd_superpixels)

    p = sub.add_parser("flops", help="print the arithmetic cost table")
    p.add_argument("--config", default=None, help="model config file")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("gradcheck",
                       help="finite-difference gradient verification")
    p.add_argument("--module", required=True,
                   choices=sorted(MODULE_THRESHOLDS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle",
                       help="compare fast paths against brute-force oracles")
    p.add_argument("--suite", required=True, choices=sorted(_SUITES))
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_BAD_CONFIG
    try:
        return args.func(args)
    except PnmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_IMAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
