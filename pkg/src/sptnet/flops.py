"""Closed-form arithmetic cost accounting.

Conventions shared by every counter in the package: one multiply-add pair
costs 2 flops (so a matmul of [m, k] x [k, n] costs 2mkn, and a linear layer
adds n*out bias adds on top), softmax costs 3 flops per participating entry
(shift, exponential, divide), pointwise nonlinearities cost 1 flop per
element, and a bilinear x2 upsampling costs 3 flops per produced element per
separable pass.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["FlopCount", "matmul_flops", "linear_flops", "softmax_flops",
           "upsample_x2_flops", "ffn_flops", "layer_norm_flops"]


def matmul_flops(m: int, k: int, n: int) -> int:
    return 2 * m * k * n


def linear_flops(rows: int, n_in: int, n_out: int) -> int:
    return 2 * rows * n_in * n_out + rows * n_out


def softmax_flops(entries: int) -> int:
    return 3 * entries


def upsample_x2_flops(h: int, w: int, c: int) -> int:
    # rows pass produces 2h*w*c, columns pass 2h*2w*c, 3 flops per element
    return 3 * (2 * h * w * c) + 3 * (4 * h * w * c)


def ffn_flops(rows: int, c: int, expansion: int = 4) -> int:
    hidden = expansion * c
    return (linear_flops(rows, c, hidden) + rows * hidden
            + linear_flops(rows, hidden, c))


def layer_norm_flops(rows: int, c: int) -> int:
    # mean, variance, normalise, scale-shift: ~8 per element
    return 8 * rows * c


@dataclass(frozen=True)
class FlopCount:
    """Cost breakdown of one attention module invocation.

    ``similarity`` covers the Q.K^T products that build attention maps;
    ``aggregation`` the products that apply those maps to values;
    ``dense_similarity`` / ``dense_aggregation`` are the hypothetical cost of
    the same products with dense pixel-to-pixel maps, kept for ratio
    reporting and never included in ``total``.
    """

    similarity: int = 0
    aggregation: int = 0
    embeddings: int = 0
    ffn: int = 0
    generation: int = 0
    other: int = 0
    dense_similarity: int = 0
    dense_aggregation: int = 0

    @property
    def total(self) -> int:
        return (self.similarity + self.aggregation + self.embeddings
                + self.ffn + self.generation + self.other)

    @property
    def attention(self) -> int:
        return self.similarity + self.aggregation

    @property
    def dense_attention(self) -> int:
        return self.dense_similarity + self.dense_aggregation

    def __add__(self, other: "FlopCount") -> "FlopCount":
        return FlopCount(**{f.name: getattr(self, f.name) + getattr(other, f.name)
                            for f in fields(self)})
