"""Global cross-modal enhancement through superpixel tokens.

Instead of pixel-to-pixel attention (quadratic in the pixel count), each
modality distils its feature map into M superpixel tokens and attention runs
pixel-to-superpixel: superpixel queries score every pixel to form a token
aggregation map, the two modality maps are fused by elementwise product so
only regions both modalities agree on survive, and pixel queries against
superpixel keys redistribute the aggregated tokens back onto the pixel grid.
The cost of every attention product drops from HW x HW to M x HW.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .flops import (FlopCount, ffn_flops, linear_flops, matmul_flops,
                    softmax_flops)
from .superpixel import (GridGeometry, NeighborhoodSpec, SuperpixelParams,
                         generate, generation_flops)
from .tensor import (FeedForward, Linear, Rng, Tensor, add, matmul, mul,
                     scale, softmax, transpose)

__all__ = ["SagemParams", "GlobalAttentionBundle", "global_maps",
           "sagem_forward", "sagem_flops"]


@dataclass
class SagemParams:
    r_pixel_q: Linear
    r_pixel_k: Linear
    r_pixel_v: Linear
    d_pixel_q: Linear
    d_pixel_k: Linear
    d_pixel_v: Linear
    r_sp_q: Linear
    r_sp_k: Linear
    d_sp_q: Linear
    d_sp_k: Linear
    ffn: FeedForward
    r_gen: SuperpixelParams
    d_gen: SuperpixelParams

    @classmethod
    def init(cls, rng: Rng, c: int) -> "SagemParams":
        return cls(*(Linear.init(rng, c, c) for _ in range(10)),
                   ffn=FeedForward.init(rng, c),
                   r_gen=SuperpixelParams.init(rng, c),
                   d_gen=SuperpixelParams.init(rng, c))


@dataclass
class GlobalAttentionBundle:
    """Per-modality maps plus their product.

    ``a_r`` / ``a_d`` are [M, HW] token aggregation maps (rows sum to 1 over
    pixels); ``a_att`` is their elementwise product, deliberately left
    unnormalised so disagreement suppresses weight mass.  ``p_r`` / ``p_d``
    are [HW, M] redistribution maps (rows sum to 1 over superpixels).
    """

    a_r: Tensor
    a_d: Tensor
    a_att: Tensor
    p_r: Tensor
    p_d: Tensor


def global_maps(f_r: Tensor, f_d: Tensor, params: SagemParams,
                geo: GridGeometry, spec: NeighborhoodSpec,
                t: int = 2) -> GlobalAttentionBundle:
    """Build the pixel<->superpixel attention maps for both modalities."""
    if f_r.shape != f_d.shape or f_r.shape[0] != geo.n:
        raise ValueError("global_maps: modality features must both be [HW, C]")
    c = f_r.shape[1]
    inv_sqrt_c = 1.0 / math.sqrt(c)

    s_r = generate(f_r, geo, spec, params.r_gen, t).s
    s_d = generate(f_d, geo, spec, params.d_gen, t).s

    def maps(f, s, pixel_q, pixel_k, sp_q, sp_k):
        logits_a = scale(matmul(sp_q(s), transpose(pixel_k(f))), inv_sqrt_c)
        a = softmax(logits_a, axis=1)                       # [M, HW]
        logits_p = scale(matmul(pixel_q(f), transpose(sp_k(s))), inv_sqrt_c)
        p = softmax(logits_p, axis=1)                       # [HW, M]
        return a, p

    a_r, p_r = maps(f_r, s_r, params.r_pixel_q, params.r_pixel_k,
                    params.r_sp_q, params.r_sp_k)
    a_d, p_d = maps(f_d, s_d, params.d_pixel_q, params.d_pixel_k,
                    params.d_sp_q, params.d_sp_k)
    return GlobalAttentionBundle(a_r=a_r, a_d=a_d, a_att=mul(a_r, a_d),
                                 p_r=p_r, p_d=p_d)


def sagem_forward(f_r: Tensor, f_d: Tensor, params: SagemParams,
                  geo: GridGeometry, spec: NeighborhoodSpec,
                  t: int = 2) -> Tensor:
    """Globally enhanced fusion of the two modality maps: [HW, C].

    Each modality's values are aggregated into tokens by the fused map and
    redistributed by that modality's own map; the sum then passes through a
    residual feed-forward block.
    """
    bundle = global_maps(f_r, f_d, params, geo, spec, t)
    agg_r = matmul(bundle.a_att, params.r_pixel_v(f_r))     # [M, C]
    agg_d = matmul(bundle.a_att, params.d_pixel_v(f_d))
    fused = add(matmul(bundle.p_r, agg_r), matmul(bundle.p_d, agg_d))
    return add(params.ffn(fused), fused)


def sagem_flops(geo: GridGeometry, c: int, spec: NeighborhoodSpec,
                t: int = 2) -> FlopCount:
    """Exact cost of one :func:`sagem_forward` call.

    The four similarity products and the four aggregation products all cost
    2*M*HW*C, so attention scales with M where dense pixel attention would
    scale with HW.
    """
    hw, m = geo.n, geo.m
    similarity = 4 * matmul_flops(m, c, hw)        # a_r, a_d, p_r, p_d logits
    aggregation = 4 * matmul_flops(m, c, hw)       # a_att@v x2, p@agg x2
    embeddings = (6 * linear_flops(hw, c, c)       # pixel q/k/v per modality
                  + 4 * linear_flops(m, c, c))     # superpixel q/k per modality
    other = (2 * softmax_flops(m * hw)             # a_r, a_d rows
             + 2 * softmax_flops(hw * m)           # p_r, p_d rows
             + 2 * (m * hw + hw * m)               # logit scaling, both maps per modality
             + m * hw                              # a_att product
             + hw * c                              # fused sum
             + hw * c)                             # ffn residual add
    return FlopCount(
        similarity=similarity,
        aggregation=aggregation,
        embeddings=embeddings,
        ffn=ffn_flops(hw, c),
        generation=2 * generation_flops(geo, c, spec, t),
        other=other,
        dense_similarity=4 * matmul_flops(hw, c, hw),
        dense_aggregation=4 * matmul_flops(hw, c, hw),
    )
