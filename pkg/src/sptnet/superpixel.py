"""Superpixel tokens via iterative expanded-neighborhood cross-attention.

A feature map is carved into a regular grid of cells; each cell seeds one
superpixel token with its mean feature.  Tokens and pixels then refine each
other for a fixed number of rounds: every pixel attends to the best-matching
superpixels inside an expanded window around its own cell (radius 2 cells,
i.e. a 5x5 cell neighborhood, instead of the classic 3x3), every superpixel
attends back to its best-matching member pixels, and both sides keep residual
connections.  The pixel-side attention after the final round doubles as a
soft association matrix between pixels and superpixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .tensor import (
    Linear, Rng, SparseMask, Tensor, add, avgpool_grid, masked_softmax,
    matmul, reshape, scale, topk_mask, transpose,
)

__all__ = [
    "GridGeometry", "NeighborhoodSpec", "SuperpixelParams", "SuperpixelState",
    "build_masks", "init_superpixels", "iterate", "generate", "argmax_labels",
    "generation_flops", "generation_layer_flops",
]


@dataclass(frozen=True)
class GridGeometry:
    """Pixel grid of feature_h x feature_w carved into cell x cell blocks."""

    feature_h: int
    feature_w: int
    cell: int

    def __post_init__(self):
        if self.cell < 1:
            raise ValueError("GridGeometry: cell must be >= 1")
        if self.feature_h % self.cell or self.feature_w % self.cell:
            raise ValueError(
                f"GridGeometry: cell {self.cell} must divide map "
                f"{self.feature_h}x{self.feature_w}")

    @property
    def grid_h(self) -> int:
        return self.feature_h // self.cell

    @property
    def grid_w(self) -> int:
        return self.feature_w // self.cell

    @property
    def n(self) -> int:
        """Number of pixels."""
        return self.feature_h * self.feature_w

    @property
    def m(self) -> int:
        """Number of superpixels."""
        return self.grid_h * self.grid_w

    def cell_of_pixels(self) -> np.ndarray:
        """Row-major pixel index -> row-major cell index, shape [N]."""
        rows = np.repeat(np.arange(self.feature_h) // self.cell, self.feature_w)
        cols = np.tile(np.arange(self.feature_w) // self.cell, self.feature_h)
        return rows * self.grid_w + cols


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Expanded-neighborhood attention budget.

    ``radius_cells`` is the Chebyshev window radius in cells (2 gives the 5x5
    cell window; 1 recovers the classic 3x3 neighborhood).  Each pixel keeps
    its ``pixel_topk`` most similar candidate superpixels; each superpixel
    keeps ``pixel_topk * cell**2`` candidate pixels, matching the pixel-side
    budget scaled by the pixel count per cell.
    """

    radius_cells: int = 2
    pixel_topk: int = 9

    def __post_init__(self):
        if self.radius_cells < 1:
            raise ValueError("NeighborhoodSpec: radius_cells must be >= 1")
        if self.pixel_topk < 1:
            raise ValueError("NeighborhoodSpec: pixel_topk must be >= 1")

    def superpixel_topk(self, geo: GridGeometry) -> int:
        return self.pixel_topk * geo.cell * geo.cell


@dataclass
class SuperpixelParams:
    """Shared-per-round linear embeddings, one set per side."""

    pixel_q: Linear
    pixel_k: Linear
    pixel_v: Linear
    sp_q: Linear
    sp_k: Linear
    sp_v: Linear

    @classmethod
    def init(cls, rng: Rng, c: int) -> "SuperpixelParams":
        return cls(*(Linear.init(rng, c, c) for _ in range(6)))


@dataclass
class SuperpixelState:
    s: Tensor            # [M, C] superpixel tokens
    p: Tensor            # [N, C] pixel features
    a: Tensor            # [N, M] pixel -> superpixel association (rows sum to 1)
    geo: GridGeometry
    step: int = 0


def _cell_windows(geo: GridGeometry, radius: int) -> list[np.ndarray]:
    """Cells within Chebyshev distance ``radius`` of each cell (border-clamped)."""
    gh, gw = geo.grid_h, geo.grid_w
    windows = []
    for r in range(gh):
        r0, r1 = max(r - radius, 0), min(r + radius, gh - 1)
        for c in range(gw):
            c0, c1 = max(c - radius, 0), min(c + radius, gw - 1)
            rr, cc = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1),
                                 indexing="ij")
            windows.append((rr * gw + cc).reshape(-1))
    return windows


def build_masks(geo: GridGeometry, spec: NeighborhoodSpec
                ) -> tuple[SparseMask, SparseMask]:
    """Candidate sets in both directions for the expanded neighborhood.

    Returns ``(pixel_candidates, superpixel_candidates)``: for each pixel the
    superpixels whose cell lies within the window around the pixel's own
    cell, and for each superpixel the pixels living in cells within its
    window.  Windows clamp at the grid border; there is no wrap-around.  The
    two masks are transposes of each other.
    """
    windows = _cell_windows(geo, spec.radius_cells)
    cell_of = geo.cell_of_pixels()
    pixel_cand = SparseMask([windows[cell_of[i]] for i in range(geo.n)], geo.m)

    members: list[list[int]] = [[] for _ in range(geo.m)]
    for i, c in enumerate(cell_of):
        members[c].append(i)
    sp_rows = []
    for j in range(geo.m):
        sp_rows.append(np.concatenate([np.asarray(members[c], dtype=np.int64)
                                       for c in windows[j]]))
    sp_cand = SparseMask(sp_rows, geo.n)
    return pixel_cand, sp_cand


def init_superpixels(pixels: Tensor, geo: GridGeometry) -> Tensor:
    """Seed tokens as per-cell mean features: [N, C] -> [M, C]."""
    if pixels.ndim != 2 or pixels.shape[0] != geo.n:
        raise ValueError(f"init_superpixels: expected [{geo.n}, C] pixels")
    grid = reshape(pixels, (geo.feature_h, geo.feature_w, pixels.shape[1]))
    return avgpool_grid(grid, geo.cell)


def iterate(state: SuperpixelState, params: SuperpixelParams,
            spec: NeighborhoodSpec,
            masks: tuple[SparseMask, SparseMask] | None = None
            ) -> SuperpixelState:
    """One refinement round.

    Pixels pull from their top-k candidate superpixels (attention over the
    selected set only), superpixels pull from their top-k candidate pixels,
    and both updates are residual.  The refreshed association ``a`` is the
    pixel-side masked softmax of this round.
    """
    geo = state.geo
    c = state.p.shape[1]
    if masks is None:
        masks = build_masks(geo, spec)
    pixel_cand, sp_cand = masks
    inv_sqrt_c = 1.0 / math.sqrt(c)

    qp = params.pixel_q(state.p)
    kp = params.pixel_k(state.p)
    vp = params.pixel_v(state.p)
    qs = params.sp_q(state.s)
    ks = params.sp_k(state.s)
    vs = params.sp_v(state.s)

    a_logits = scale(matmul(qp, transpose(ks)), inv_sqrt_c)        # [N, M]
    omega_pix = topk_mask(a_logits, spec.pixel_topk, within=pixel_cand)
    a_soft = masked_softmax(a_logits, omega_pix, axis=1)
    p_new = add(matmul(a_soft, vs), state.p)

    b_logits = scale(matmul(qs, transpose(kp)), inv_sqrt_c)        # [M, N]
    omega_sp = topk_mask(b_logits, spec.superpixel_topk(geo), within=sp_cand)
    b_soft = masked_softmax(b_logits, omega_sp, axis=1)
    s_new = add(matmul(b_soft, vp), state.s)

    return SuperpixelState(s=s_new, p=p_new, a=a_soft, geo=geo,
                           step=state.step + 1)


def _own_cell_association(geo: GridGeometry) -> Tensor:
    a0 = np.zeros((geo.n, geo.m))
    a0[np.arange(geo.n), geo.cell_of_pixels()] = 1.0
    return Tensor(a0)


def generate(pixels: Tensor, geo: GridGeometry, spec: NeighborhoodSpec,
             params: SuperpixelParams, t: int = 2) -> SuperpixelState:
    """Run ``t`` refinement rounds from the grid initialisation.

    With ``t == 0`` the tokens are the raw cell means and the association
    assigns every pixel wholly to its own cell.
    """
    if t < 0:
        raise ValueError("generate: t must be >= 0")
    state = SuperpixelState(s=init_superpixels(pixels, geo), p=pixels,
                            a=_own_cell_association(geo), geo=geo, step=0)
    if t == 0:
        return state
    masks = build_masks(geo, spec)
    for _ in range(t):
        state = iterate(state, params, spec, masks=masks)
    return state


def argmax_labels(state: SuperpixelState) -> np.ndarray:
    """Hard pixel -> superpixel assignment; ties pick the smaller index."""
    return np.argmax(state.a.data, axis=1)


def generation_flops(geo: GridGeometry, c: int, spec: NeighborhoodSpec,
                     t: int) -> int:
    """Exact arithmetic cost of :func:`generate` (multiply-add = 2 flops).

    Counts the grid initialisation, the per-round embeddings, the masked
    similarity products on both sides, softmax normalisation over selected
    entries (3 flops per entry), the two residual aggregations, and the
    residual adds themselves.
    """
    windows = _cell_windows(geo, spec.radius_cells)
    p2 = geo.cell * geo.cell
    # candidate pairs and post-top-k selected pairs, summed over all rows
    cand_pairs = p2 * sum(w.size for w in windows)
    sel_pix = p2 * sum(min(spec.pixel_topk, w.size) for w in windows)
    sel_sp = sum(min(spec.superpixel_topk(geo), w.size * p2) for w in windows)

    init = geo.n * c + geo.m * c
    per_round = (
        generation_layer_flops(geo, c, spec, 1)     # q, k, v on both sides
        + 2 * 2 * cand_pairs * c                    # masked similarity, both sides
        + 3 * (sel_pix + sel_sp)                    # softmax over selections
        + 2 * (sel_pix + sel_sp) * c                # aggregation products
        + (geo.n + geo.m) * c                       # residual adds
    )
    return init + t * per_round


def generation_layer_flops(geo: GridGeometry, c: int, spec: NeighborhoodSpec,
                           t: int) -> int:
    """The weight-bearing slice of :func:`generation_flops`: the per-round
    Q/K/V projections on both sides. Everything else in a generation round
    is parameter-free (masked products, softmax, residual adds)."""
    return t * (3 * (2 * geo.n * c * c + geo.n * c)
                + 3 * (2 * geo.m * c * c + geo.m * c))
