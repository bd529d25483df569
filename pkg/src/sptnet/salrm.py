"""Local cross-modal refinement inside jointly salient superpixels.

Both modalities generate superpixel associations over the same grid; their
elementwise product keeps only pixels that associate with a superpixel in
*both* modalities.  For every superpixel the top-k such pixels are gathered
and a small k x k cross-attention (appearance queries against depth keys)
refines them, after which the refined rows are scattered back to their pixel
positions — colliding writes average, untouched pixels receive a zero delta.
Cost per superpixel is k^2 instead of the full pixel count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flops import (FlopCount, ffn_flops, linear_flops, matmul_flops,
                    softmax_flops)
from .superpixel import (GridGeometry, NeighborhoodSpec, SuperpixelParams,
                         generate, generation_flops)
from .tensor import (FeedForward, Linear, Rng, Tensor, add, gather_rows,
                     matmul, mul, scale, scatter_mean, softmax, topk_indices,
                     transpose)

__all__ = ["SalrmParams", "CombinedAssociation", "combine_associations",
           "select_local", "salrm_forward", "salrm_flops"]


@dataclass
class SalrmParams:
    """Embeddings the local cross-attention actually consumes.

    Queries come from the appearance stream, keys from depth, and both
    streams contribute values; each stream has its own output feed-forward.
    """

    r_q: Linear
    d_k: Linear
    r_v: Linear
    d_v: Linear
    r_ffn: FeedForward
    d_ffn: FeedForward
    r_gen: SuperpixelParams
    d_gen: SuperpixelParams
    k: int = 9

    @classmethod
    def init(cls, rng: Rng, c: int, k: int = 9) -> "SalrmParams":
        return cls(*(Linear.init(rng, c, c) for _ in range(4)),
                   r_ffn=FeedForward.init(rng, c),
                   d_ffn=FeedForward.init(rng, c),
                   r_gen=SuperpixelParams.init(rng, c),
                   d_gen=SuperpixelParams.init(rng, c),
                   k=k)


@dataclass
class CombinedAssociation:
    """Joint association weights and the per-superpixel pixel selection."""

    weights: Tensor          # [HW, M] product of the two association matrices
    indices: np.ndarray      # [M, k] selected pixel rows per superpixel


def combine_associations(a_r: Tensor, a_d: Tensor) -> Tensor:
    """Elementwise product of the two modality associations: [HW, M]."""
    if a_r.shape != a_d.shape:
        raise ValueError("combine_associations: association shapes differ")
    return mul(a_r, a_d)


def select_local(s_rd: Tensor, k: int) -> np.ndarray:
    """Top-k pixel rows per superpixel column of the joint association.

    Rows of the result are ordered by descending weight with ties resolved
    toward the smaller pixel index.  Requires k <= HW.
    """
    hw = s_rd.shape[0]
    if k > hw:
        raise ValueError(f"select_local: k={k} exceeds pixel count {hw}")
    cols = topk_indices(transpose(s_rd), k)     # [M rows] over pixel columns
    return np.stack(cols, axis=0)


def salrm_forward(f_r: Tensor, f_d: Tensor, params: SalrmParams,
                  geo: GridGeometry, spec: NeighborhoodSpec,
                  t: int = 2) -> Tensor:
    """Locally refined fusion of the two modality maps: [HW, C]."""
    if f_r.shape != f_d.shape or f_r.shape[0] != geo.n:
        raise ValueError("salrm_forward: modality features must both be [HW, C]")
    c = f_r.shape[1]
    hw = geo.n

    a_r = generate(f_r, geo, spec, params.r_gen, t).a
    a_d = generate(f_d, geo, spec, params.d_gen, t).a
    joint = combine_associations(a_r, a_d)
    idx = select_local(joint, params.k)

    q_rk = gather_rows(params.r_q(f_r), idx)                # [M, k, C]
    k_dk = gather_rows(params.d_k(f_d), idx)
    v_rk = gather_rows(params.r_v(f_r), idx)
    v_dk = gather_rows(params.d_v(f_d), idx)

    att = softmax(scale(matmul(q_rk, transpose(k_dk)), 1.0 / math.sqrt(c)),
                  axis=-1)                                  # [M, k, k]
    ref_r = scatter_mean(hw, matmul(att, v_rk), idx)        # [HW, C]
    ref_d = scatter_mean(hw, matmul(att, v_dk), idx)

    out_r = params.r_ffn(add(ref_r, f_r))
    out_d = params.d_ffn(add(ref_d, f_d))
    return add(out_r, out_d)


def salrm_flops(geo: GridGeometry, c: int, k: int, spec: NeighborhoodSpec,
                t: int = 2) -> FlopCount:
    """Exact cost of one :func:`salrm_forward` call.

    The similarity term is the batched Q.K^T product, 2*M*k^2*C, against a
    dense pixel-to-pixel counterpart of 2*HW^2*C.
    """
    hw, m = geo.n, geo.m
    return FlopCount(
        similarity=matmul_flops(m * k, c, k),       # batched q@k^T
        aggregation=2 * matmul_flops(m * k, k, c),  # att@v for both streams
        embeddings=4 * linear_flops(hw, c, c),
        ffn=2 * ffn_flops(hw, c),
        generation=2 * generation_flops(geo, c, spec, t),
        other=(hw * m                               # joint association product
               + softmax_flops(m * k * k) + m * k * k   # softmax + scaling
               + 2 * (m * k * c + hw)               # scatter adds + mean divide
               + 2 * hw * c                         # residual adds
               + hw * c),                           # stream sum
        dense_similarity=matmul_flops(hw, c, hw),
        dense_aggregation=2 * matmul_flops(hw, hw, c),
    )
