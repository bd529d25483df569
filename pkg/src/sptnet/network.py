"""Desk-scale assembly of the full detector.

Two toy convolutional streams (appearance and depth) feed four stages of
paired global/local superpixel attention; a fusion unit mixes the pair and
chains in the next-coarser scale; a decoder walks back up producing one
sigmoid saliency head per stage. Everything runs on the float64 tape, so
the whole model is finite-difference checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flops import FlopCount, ffn_flops, layer_norm_flops, linear_flops, \
    matmul_flops, softmax_flops, upsample_x2_flops
from .sagem import SagemParams, sagem_flops, sagem_forward
from .salrm import SalrmParams, salrm_flops, salrm_forward
from .superpixel import GridGeometry, NeighborhoodSpec, generation_layer_flops
from .tensor import LayerNorm, Linear, Rng, Tensor, add, concat, \
    depthwise_conv5x5, gelu, matmul, patchify, reshape, scale, sigmoid, \
    softmax, transpose, upsample_x2

__all__ = ["ModelConfig", "StageEmbed", "FusionParams", "DecoderBlock",
           "ModelParams", "SaliencyOutput", "FlopReport", "toy_encode",
           "fuse_stage", "decode", "forward", "count_flops"]

_STAGE_STRIDES = (4, 2, 2, 2)


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of one model instance.

    ``stage_cells`` holds the superpixel cell side p for each of the four
    stages; every cell must divide its stage's feature side (input/4, /8,
    /16, /32). The default is a desk-scale replica of the full-size
    (12, 12, 6, 6) setting.
    """

    input_size: int = 64
    stage_channels: tuple[int, int, int, int] = (32, 64, 128, 256)
    stage_cells: tuple[int, int, int, int] = (2, 2, 1, 1)
    mask_radius: int = 2
    t: int = 2
    salrm_k: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.input_size <= 0 or self.input_size % 32:
            raise ValueError("ModelConfig: input_size must be a positive "
                             "multiple of 32")
        if len(self.stage_channels) != 4 or len(self.stage_cells) != 4:
            raise ValueError("ModelConfig: exactly four stages required")
        if any(c < 1 for c in self.stage_channels):
            raise ValueError("ModelConfig: channels must be positive")
        if self.mask_radius not in (1, 2, 3):
            raise ValueError("ModelConfig: mask_radius must be 1, 2 or 3")
        if self.t < 0 or self.salrm_k < 1:
            raise ValueError("ModelConfig: t must be >= 0 and salrm_k >= 1")
        for side, cell in zip(self.stage_sides, self.stage_cells):
            if cell < 1 or side % cell:
                raise ValueError(
                    f"ModelConfig: cell {cell} does not divide side {side}")

    @property
    def stage_sides(self) -> tuple[int, int, int, int]:
        s = self.input_size
        return (s // 4, s // 8, s // 16, s // 32)

    def geometry(self, i: int) -> GridGeometry:
        side = self.stage_sides[i]
        return GridGeometry(side, side, self.stage_cells[i])

    def neighborhood(self) -> NeighborhoodSpec:
        return NeighborhoodSpec(radius_cells=self.mask_radius)

    def stage_k(self, i: int) -> int:
        # local selection cannot exceed the stage's pixel count
        return min(self.salrm_k, self.stage_sides[i] ** 2)

    @classmethod
    def full_scale(cls, cells: tuple[int, int, int, int] = (12, 12, 6, 6)
                   ) -> "ModelConfig":
        return cls(input_size=384, stage_channels=(128, 256, 512, 1024),
                   stage_cells=cells)


@dataclass
class StageEmbed:
    """One encoder stage: strided patch projection plus normalisation."""

    proj: Linear
    norm: LayerNorm

    @classmethod
    def init(cls, rng: Rng, n_in: int, n_out: int) -> "StageEmbed":
        return cls(proj=Linear.init(rng, n_in, n_out),
                   norm=LayerNorm.init(n_out))


@dataclass
class FusionParams:
    """Pair mixer, optional cross-scale projection, and self-attention."""

    mix: Linear                  # 2C -> C on the concatenated pair
    q: Linear
    k: Linear
    v: Linear
    cross: Linear | None = None  # coarser-stage channels -> this stage's

    @classmethod
    def init(cls, rng: Rng, c: int, c_coarser: int | None) -> "FusionParams":
        return cls(mix=Linear.init(rng, 2 * c, c),
                   q=Linear.init(rng, c, c),
                   k=Linear.init(rng, c, c),
                   v=Linear.init(rng, c, c),
                   cross=None if c_coarser is None
                   else Linear.init(rng, c_coarser, c))


def _depthwise_kernel(rng: Rng, c: int) -> Tensor:
    bound = math.sqrt(6.0 / 50.0)   # fan_in = fan_out = 25 taps
    return Tensor(rng.uniform((5, 5, c), -bound, bound), requires_grad=True)


@dataclass
class DecoderBlock:
    """Depthwise-separable refinement block with a sigmoid saliency head."""

    dw: Tensor                   # [5, 5, C] depthwise taps
    norm: LayerNorm
    pw1: Linear                  # C -> 4C
    pw2: Linear                  # 4C -> C
    head: Linear                 # C -> 1
    inp: Linear | None = None    # previous (coarser) decoder channels -> C

    @classmethod
    def init(cls, rng: Rng, c: int, c_coarser: int | None) -> "DecoderBlock":
        return cls(dw=_depthwise_kernel(rng, c),
                   norm=LayerNorm.init(c),
                   pw1=Linear.init(rng, c, 4 * c),
                   pw2=Linear.init(rng, 4 * c, c),
                   head=Linear.init(rng, c, 1),
                   inp=None if c_coarser is None
                   else Linear.init(rng, c_coarser, c))


@dataclass
class ModelParams:
    rgb_enc: list[StageEmbed]
    depth_enc: list[StageEmbed]
    sagem: list[SagemParams]
    salrm: list[SalrmParams]
    fusion: list[FusionParams]
    decoder: list[DecoderBlock]

    @classmethod
    def init(cls, config: ModelConfig) -> "ModelParams":
        rng = Rng(config.seed)
        chans = config.stage_channels
        enc_in = [_STAGE_STRIDES[0] ** 2 * 3] + \
                 [_STAGE_STRIDES[i] ** 2 * chans[i - 1] for i in (1, 2, 3)]
        rgb = [StageEmbed.init(rng, enc_in[i], chans[i]) for i in range(4)]
        depth = [StageEmbed.init(rng, enc_in[i], chans[i]) for i in range(4)]
        sagem = [SagemParams.init(rng, chans[i]) for i in range(4)]
        salrm = [SalrmParams.init(rng, chans[i], k=config.stage_k(i))
                 for i in range(4)]
        fusion = [FusionParams.init(rng, chans[i],
                                    chans[i + 1] if i < 3 else None)
                  for i in range(4)]
        decoder = [DecoderBlock.init(rng, chans[i],
                                     chans[i + 1] if i < 3 else None)
                   for i in range(4)]
        return cls(rgb_enc=rgb, depth_enc=depth, sagem=sagem, salrm=salrm,
                   fusion=fusion, decoder=decoder)


@dataclass
class SaliencyOutput:
    """Four sigmoid maps at input resolution, finest first; the finest map
    is the model's answer."""

    maps: list[Tensor]

    @property
    def final(self) -> Tensor:
        return self.maps[0]


# ---------------------------------------------------------------------------
# forward pieces

def _replicate_gray(depth: Tensor) -> Tensor:
    return concat([depth, depth, depth], axis=2)


def _encode_stream(image: Tensor, stages: list[StageEmbed],
                   config: ModelConfig) -> list[Tensor]:
    feats = []
    x = image
    side = config.input_size
    for i, st in enumerate(stages):
        stride = _STAGE_STRIDES[i]
        if i > 0:
            x = reshape(feats[-1], (side, side, config.stage_channels[i - 1]))
        x = st.norm(st.proj(patchify(x, stride)))
        side //= stride
        feats.append(x)
    return feats


def toy_encode(rgb: Tensor, depth: Tensor, params: ModelParams,
               config: ModelConfig) -> tuple[list[Tensor], list[Tensor]]:
    """Stage features for both streams: four [side_i^2, C_i] tensors each."""
    s = config.input_size
    if rgb.shape != (s, s, 3):
        raise ValueError(f"toy_encode: rgb must be ({s}, {s}, 3)")
    if depth.shape != (s, s, 1):
        raise ValueError(f"toy_encode: depth must be ({s}, {s}, 1)")
    return (_encode_stream(rgb, params.rgb_enc, config),
            _encode_stream(_replicate_gray(depth), params.depth_enc, config))


def fuse_stage(f_tilde: Tensor, f_hat: Tensor, coarser: Tensor | None,
               fp: FusionParams) -> Tensor:
    """Mix the global and local outputs, add the cross-scale feature, and
    run one residual dense self-attention pass over pixels."""
    if f_tilde.shape != f_hat.shape:
        raise ValueError("fuse_stage: pair shapes differ")
    x = fp.mix(concat([f_tilde, f_hat], axis=1))
    if coarser is not None:
        if coarser.shape != x.shape:
            raise ValueError("fuse_stage: cross-scale feature shape differs")
        x = add(x, coarser)
    c = x.shape[1]
    att = softmax(scale(matmul(fp.q(x), transpose(fp.k(x))),
                        1.0 / math.sqrt(c)), axis=-1)
    return add(x, matmul(att, fp.v(x)))


def _head_map(block: DecoderBlock, rows: Tensor, side: int,
              input_size: int) -> Tensor:
    sm = sigmoid(block.head(rows))           # [side*side, 1]
    sm = reshape(sm, (side, side, 1))
    while side < input_size:
        sm = upsample_x2(sm)
        side *= 2
    return reshape(sm, (input_size, input_size))


def decode(fused: list[Tensor], params: ModelParams,
           config: ModelConfig) -> SaliencyOutput:
    """Coarse-to-fine decoding; every block output feeds a saliency head."""
    if len(fused) != 4:
        raise ValueError("decode: expected four fused stages")
    maps: list[Tensor | None] = [None] * 4
    prev: Tensor | None = None
    for i in (3, 2, 1, 0):
        block = params.decoder[i]
        side = config.stage_sides[i]
        c = config.stage_channels[i]
        x = fused[i]
        if prev is not None:
            x = add(x, block.inp(prev))
        y = depthwise_conv5x5(reshape(x, (side, side, c)), block.dw)
        y = block.norm(reshape(y, (side * side, c)))
        y = block.pw2(gelu(block.pw1(y)))
        x = add(x, y)
        up = upsample_x2(reshape(x, (side, side, c)))
        prev = reshape(up, (4 * side * side, c))
        maps[i] = _head_map(block, prev, 2 * side, config.input_size)
    return SaliencyOutput(maps=list(maps))


def forward(rgb: Tensor, depth: Tensor, params: ModelParams,
            config: ModelConfig) -> SaliencyOutput:
    """Encode, attend per stage, fuse with cross-scale chaining, decode."""
    r_feats, d_feats = toy_encode(rgb, depth, params, config)
    spec = config.neighborhood()

    tilde, hat = [], []
    for i in range(4):
        geo = config.geometry(i)
        tilde.append(sagem_forward(r_feats[i], d_feats[i], params.sagem[i],
                                   geo, spec, t=config.t))
        hat.append(salrm_forward(r_feats[i], d_feats[i], params.salrm[i],
                                 geo, spec, t=config.t))

    fused: list[Tensor | None] = [None] * 4
    for i in (3, 2, 1, 0):
        coarser = None
        if i < 3:
            side, c_next = config.stage_sides[i + 1], config.stage_channels[i + 1]
            up = upsample_x2(reshape(fused[i + 1], (side, side, c_next)))
            rows = reshape(up, (4 * side * side, c_next))
            coarser = params.fusion[i].cross(rows)
        fused[i] = fuse_stage(tilde[i], hat[i], coarser, params.fusion[i])

    return decode(list(fused), params, config)


# ---------------------------------------------------------------------------
# cost accounting

@dataclass
class FlopReport:
    """Exact multiply-add counts per component, with the dense-attention
    hypothetical carried alongside for ratio reporting.

    ``parametric`` is the slice spent inside weight-bearing layers (linear
    projections, depthwise convolutions, layer norms). It is the quantity a
    module-level profiler reports, and — unlike ``total`` — it is nearly
    independent of the superpixel grid, because the attention products it
    excludes are the only terms that scale with M.
    """

    sagem: list[FlopCount] = field(default_factory=list)
    salrm: list[FlopCount] = field(default_factory=list)
    encoder: int = 0
    fusion: int = 0
    decoder: int = 0
    parametric: int = 0

    @property
    def attention_modules(self) -> FlopCount:
        out = FlopCount()
        for c in (*self.sagem, *self.salrm):
            out = out + c
        return out

    @property
    def total(self) -> int:
        return (self.attention_modules.total + self.encoder + self.fusion
                + self.decoder)

    @property
    def dense_attention_total(self) -> int:
        return self.attention_modules.dense_attention


def _encoder_flops(config: ModelConfig) -> int:
    total = 0
    side = config.input_size
    chans = config.stage_channels
    for i in range(4):
        stride = _STAGE_STRIDES[i]
        n_in = stride * stride * (3 if i == 0 else chans[i - 1])
        side //= stride
        rows = side * side
        total += linear_flops(rows, n_in, chans[i])
        total += layer_norm_flops(rows, chans[i])
    return 2 * total                    # two identical streams


def _fusion_flops(config: ModelConfig) -> int:
    total = 0
    for i in range(4):
        side = config.stage_sides[i]
        hw, c = side * side, config.stage_channels[i]
        total += linear_flops(hw, 2 * c, c)         # pair mixer
        if i < 3:
            s2, c2 = config.stage_sides[i + 1], config.stage_channels[i + 1]
            total += upsample_x2_flops(s2, s2, c2)
            total += linear_flops(hw, c2, c)        # cross-scale projection
            total += hw * c                         # cross-scale add
        total += 3 * linear_flops(hw, c, c)         # q, k, v
        total += matmul_flops(hw, c, hw) + hw * hw  # logits + scaling
        total += softmax_flops(hw * hw)
        total += matmul_flops(hw, hw, c)            # map application
        total += hw * c                             # residual
    return total


def _decoder_flops(config: ModelConfig) -> int:
    total = 0
    size = config.input_size
    for i in range(4):
        side = config.stage_sides[i]
        hw, c = side * side, config.stage_channels[i]
        if i < 3:
            # the coarser block's upsampled rows number exactly hw here
            total += linear_flops(hw, config.stage_channels[i + 1], c)
            total += hw * c                         # add into fused stage
        total += 2 * 25 * hw * c                    # depthwise taps
        total += layer_norm_flops(hw, c)
        total += ffn_flops(hw, c)                   # pw1 + GELU + pw2
        total += hw * c                             # residual
        total += upsample_x2_flops(side, side, c)
        rows = 4 * hw
        total += linear_flops(rows, c, 1) + rows    # head + sigmoid
        s = 2 * side
        while s < size:                             # head upsample chain
            total += upsample_x2_flops(s, s, 1)
            s *= 2
    return total


def _ffn_param_flops(rows: int, c: int) -> int:
    # the two projections without the activation between them
    return linear_flops(rows, c, 4 * c) + linear_flops(rows, 4 * c, c)


def _parametric_flops(config: ModelConfig) -> int:
    """Flops inside weight-bearing layers only (linears, depthwise convs,
    layer norms); attention products, softmaxes, activations, resampling
    and index movement are excluded."""
    spec = config.neighborhood()
    total = _encoder_flops(config)
    for i in range(4):
        geo = config.geometry(i)
        hw, m = geo.n, geo.m
        c = config.stage_channels[i]
        gen_layer = generation_layer_flops(geo, c, spec, config.t)
        # global module: six pixel + four superpixel projections, one ffn
        total += 6 * linear_flops(hw, c, c) + 4 * linear_flops(m, c, c)
        total += _ffn_param_flops(hw, c) + 2 * gen_layer
        # local module: four pixel projections, two ffns
        total += 4 * linear_flops(hw, c, c)
        total += 2 * _ffn_param_flops(hw, c) + 2 * gen_layer
        # fusion: pair mixer, q/k/v, cross-scale projection
        total += linear_flops(hw, 2 * c, c) + 3 * linear_flops(hw, c, c)
        if i < 3:
            total += linear_flops(hw, config.stage_channels[i + 1], c)
        # decoder block
        if i < 3:
            total += linear_flops(hw, config.stage_channels[i + 1], c)
        total += 2 * 25 * hw * c + layer_norm_flops(hw, c)
        total += _ffn_param_flops(hw, c)
        total += linear_flops(4 * hw, c, 1)
    return total


def count_flops(config: ModelConfig) -> FlopReport:
    """Exact cost of one :func:`forward` call under this configuration."""
    spec = config.neighborhood()
    report = FlopReport(encoder=_encoder_flops(config),
                        fusion=_fusion_flops(config),
                        decoder=_decoder_flops(config),
                        parametric=_parametric_flops(config))
    for i in range(4):
        geo = config.geometry(i)
        c = config.stage_channels[i]
        report.sagem.append(sagem_flops(geo, c, spec, t=config.t))
        report.salrm.append(salrm_flops(geo, c, config.stage_k(i), spec,
                                        t=config.t))
    return report
