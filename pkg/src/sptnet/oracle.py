"""Brute-force reference implementations for verification.

Everything here re-derives results from first principles with plain numpy
arrays, explicit per-row loops, ``math.exp``, sorting, and dense matrices
filled with -inf outside candidate sets.  No code is shared with the
production modules: these functions exist so tests and the ``oracle`` CLI
command can cross-check the vectorised, tape-recorded implementations
against an independent route.

All functions accept and return numpy arrays.  Parameter bundles are plain
dicts mapping names to ``(weight, bias)`` pairs.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "linear_rows", "softmax_neg_inf_rows", "dense_masked_attention",
    "topk_by_sort", "gather_by_loop", "scatter_mean_by_loop",
    "neighborhood_cells", "superpixel_masks_enum", "cell_means_by_loop",
    "superpixel_iterate_dense", "superpixel_generate_dense",
    "sagem_maps_stepwise", "sagem_forward_stepwise", "salrm_forward_stepwise",
    "hybrid_loss_by_loop", "patchify_by_loop", "layer_norm_by_loop",
    "upsample2_by_loop", "depthwise5_by_loop", "self_attention_by_loop",
    "straightline_forward",
]


def _arr(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def linear_rows(x, w, b) -> np.ndarray:
    """Affine map applied row by row."""
    x, w, b = _arr(x), _arr(w), _arr(b)
    out = np.empty((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        out[i] = np.dot(x[i], w) + b
    return out


def softmax_neg_inf_rows(logits) -> np.ndarray:
    """Row softmax of a dense matrix that may hold -inf; -inf stays exactly 0."""
    logits = _arr(logits)
    out = np.zeros_like(logits)
    for i in range(logits.shape[0]):
        row = logits[i]
        finite = [j for j in range(row.size) if row[j] != -np.inf]
        if not finite:
            raise ValueError("softmax row with no finite entry")
        m = max(row[j] for j in finite)
        exps = {j: math.exp(row[j] - m) for j in finite}
        z = sum(exps.values())
        for j, e in exps.items():
            out[i, j] = e / z
    return out


def topk_by_sort(row, candidates, k: int) -> list[int]:
    """Indices of the k largest candidates, value-descending, ties to the left."""
    ordered = sorted(candidates, key=lambda j: (-row[j], j))
    return ordered[:k]


def dense_masked_attention(q, k, v, allowed, scale: float
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Attention with a dense -inf-filled score matrix.

    ``allowed[i]`` lists the key columns row i may attend to.  Returns the
    (softmax, softmax @ v) pair.
    """
    q, k, v = _arr(q), _arr(k), _arr(v)
    logits = np.full((q.shape[0], k.shape[0]), -np.inf)
    for i in range(q.shape[0]):
        for j in allowed[i]:
            logits[i, j] = np.dot(q[i], k[j]) * scale
    soft = softmax_neg_inf_rows(logits)
    out = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        for j in range(k.shape[0]):
            if soft[i, j] != 0.0:
                out[i] += soft[i, j] * v[j]
    return soft, out


def gather_by_loop(src, idx) -> np.ndarray:
    src, idx = _arr(src), np.asarray(idx)
    out = np.empty((idx.shape[0], idx.shape[1], src.shape[1]))
    for i in range(idx.shape[0]):
        for j in range(idx.shape[1]):
            out[i, j] = src[idx[i, j]]
    return out


def scatter_mean_by_loop(n_rows: int, values, idx) -> np.ndarray:
    values, idx = _arr(values), np.asarray(idx)
    sums = np.zeros((n_rows, values.shape[2]))
    counts = np.zeros(n_rows)
    for i in range(idx.shape[0]):
        for j in range(idx.shape[1]):
            sums[idx[i, j]] += values[i, j]
            counts[idx[i, j]] += 1
    out = np.zeros_like(sums)
    for r in range(n_rows):
        if counts[r] > 0:
            out[r] = sums[r] / counts[r]
    return out


# ---------------------------------------------------------------------------
# superpixel pipeline

def neighborhood_cells(gh: int, gw: int, cell_idx: int, radius: int) -> list[int]:
    """All cells within Chebyshev ``radius`` of ``cell_idx``, by full scan."""
    r0, c0 = divmod(cell_idx, gw)
    out = []
    for j in range(gh * gw):
        r, c = divmod(j, gw)
        if abs(r - r0) <= radius and abs(c - c0) <= radius:
            out.append(j)
    return out


def superpixel_masks_enum(h: int, w: int, cell: int, radius: int
                          ) -> tuple[list[list[int]], list[list[int]]]:
    """Candidate sets in both directions, derived by exhaustive scan."""
    gh, gw = h // cell, w // cell
    pixel_cand = []
    for i in range(h * w):
        pr, pc = divmod(i, w)
        own = (pr // cell) * gw + (pc // cell)
        pixel_cand.append(neighborhood_cells(gh, gw, own, radius))
    sp_cand: list[list[int]] = [[] for _ in range(gh * gw)]
    for i in range(h * w):
        for j in pixel_cand[i]:
            sp_cand[j].append(i)
    return pixel_cand, sp_cand


def cell_means_by_loop(pixels, h: int, w: int, cell: int) -> np.ndarray:
    pixels = _arr(pixels)
    gh, gw = h // cell, w // cell
    out = np.zeros((gh * gw, pixels.shape[1]))
    counts = np.zeros(gh * gw)
    for i in range(h * w):
        pr, pc = divmod(i, w)
        j = (pr // cell) * gw + (pc // cell)
        out[j] += pixels[i]
        counts[j] += 1
    return out / counts[:, None]


def superpixel_iterate_dense(s, p, weights: dict, h: int, w: int, cell: int,
                             radius: int, pixel_topk: int
                             ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One refinement round via dense -inf-masked attention.

    ``weights`` holds (w, b) pairs under keys pixel_q/pixel_k/pixel_v and
    sp_q/sp_k/sp_v.  Returns (s_next, p_next, association).
    """
    s, p = _arr(s), _arr(p)
    c = p.shape[1]
    scale = 1.0 / math.sqrt(c)
    pixel_cand, sp_cand = superpixel_masks_enum(h, w, cell, radius)
    sp_topk = pixel_topk * cell * cell

    qp = linear_rows(p, *weights["pixel_q"])
    kp = linear_rows(p, *weights["pixel_k"])
    vp = linear_rows(p, *weights["pixel_v"])
    qs = linear_rows(s, *weights["sp_q"])
    ks = linear_rows(s, *weights["sp_k"])
    vs = linear_rows(s, *weights["sp_v"])

    a_logits = np.full((p.shape[0], s.shape[0]), -np.inf)
    for i in range(p.shape[0]):
        for j in pixel_cand[i]:
            a_logits[i, j] = np.dot(qp[i], ks[j]) * scale
    a_sel = [topk_by_sort(a_logits[i], pixel_cand[i], pixel_topk)
             for i in range(p.shape[0])]
    a_masked = np.full_like(a_logits, -np.inf)
    for i, sel in enumerate(a_sel):
        for j in sel:
            a_masked[i, j] = a_logits[i, j]
    a_soft = softmax_neg_inf_rows(a_masked)
    p_next = p + a_soft @ vs

    b_logits = np.full((s.shape[0], p.shape[0]), -np.inf)
    for j in range(s.shape[0]):
        for i in sp_cand[j]:
            b_logits[j, i] = np.dot(qs[j], kp[i]) * scale
    b_sel = [topk_by_sort(b_logits[j], sp_cand[j], sp_topk)
             for j in range(s.shape[0])]
    b_masked = np.full_like(b_logits, -np.inf)
    for j, sel in enumerate(b_sel):
        for i in sel:
            b_masked[j, i] = b_logits[j, i]
    b_soft = softmax_neg_inf_rows(b_masked)
    s_next = s + b_soft @ vp

    return s_next, p_next, a_soft


def superpixel_generate_dense(pixels, weights: dict, h: int, w: int, cell: int,
                              radius: int, pixel_topk: int, t: int
                              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full generation pipeline on the dense route."""
    pixels = _arr(pixels)
    gh, gw = h // cell, w // cell
    s = cell_means_by_loop(pixels, h, w, cell)
    p = pixels.copy()
    a = np.zeros((h * w, gh * gw))
    for i in range(h * w):
        pr, pc = divmod(i, w)
        a[i, (pr // cell) * gw + (pc // cell)] = 1.0
    for _ in range(t):
        s, p, a = superpixel_iterate_dense(s, p, weights, h, w, cell,
                                           radius, pixel_topk)
    return s, p, a


# ---------------------------------------------------------------------------
# global and local cross-modal modules, equation by equation

def _gelu_by_loop(x) -> np.ndarray:
    x = _arr(x)
    out = np.empty_like(x)
    flat_in, flat_out = x.reshape(-1), out.reshape(-1)
    for i in range(flat_in.size):
        v = flat_in[i]
        flat_out[i] = 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))
    return out


def _ffn_by_loop(x, ffn_weights) -> np.ndarray:
    (w1, b1), (w2, b2) = ffn_weights
    return linear_rows(_gelu_by_loop(linear_rows(x, w1, b1)), w2, b2)


def _full_softmax_rows(logits) -> np.ndarray:
    return softmax_neg_inf_rows(logits)


def sagem_maps_stepwise(f_r, f_d, weights: dict, h: int, w: int, cell: int,
                        radius: int, pixel_topk: int, t: int) -> dict:
    """Global attention maps derived term by term on the dense route.

    Returns a dict with s_r, s_d, a_r, a_d, a_att, p_r, p_d.
    """
    f_r, f_d = _arr(f_r), _arr(f_d)
    c = f_r.shape[1]
    scale = 1.0 / math.sqrt(c)
    s_r, _, _ = superpixel_generate_dense(f_r, weights["r_gen"], h, w, cell,
                                          radius, pixel_topk, t)
    s_d, _, _ = superpixel_generate_dense(f_d, weights["d_gen"], h, w, cell,
                                          radius, pixel_topk, t)

    def modality(f, s, prefix):
        sp_q = linear_rows(s, *weights[f"{prefix}_sp_q"])
        sp_k = linear_rows(s, *weights[f"{prefix}_sp_k"])
        px_q = linear_rows(f, *weights[f"{prefix}_pixel_q"])
        px_k = linear_rows(f, *weights[f"{prefix}_pixel_k"])
        a_logits = np.empty((s.shape[0], f.shape[0]))
        for j in range(s.shape[0]):
            for i in range(f.shape[0]):
                a_logits[j, i] = np.dot(sp_q[j], px_k[i]) * scale
        p_logits = np.empty((f.shape[0], s.shape[0]))
        for i in range(f.shape[0]):
            for j in range(s.shape[0]):
                p_logits[i, j] = np.dot(px_q[i], sp_k[j]) * scale
        return _full_softmax_rows(a_logits), _full_softmax_rows(p_logits)

    a_r, p_r = modality(f_r, s_r, "r")
    a_d, p_d = modality(f_d, s_d, "d")
    a_att = np.empty_like(a_r)
    for j in range(a_r.shape[0]):
        for i in range(a_r.shape[1]):
            a_att[j, i] = a_r[j, i] * a_d[j, i]
    return {"s_r": s_r, "s_d": s_d, "a_r": a_r, "a_d": a_d,
            "a_att": a_att, "p_r": p_r, "p_d": p_d}


def sagem_forward_stepwise(f_r, f_d, weights: dict, h: int, w: int, cell: int,
                           radius: int, pixel_topk: int, t: int) -> np.ndarray:
    maps = sagem_maps_stepwise(f_r, f_d, weights, h, w, cell, radius,
                               pixel_topk, t)
    v_r = linear_rows(f_r, *weights["r_pixel_v"])
    v_d = linear_rows(f_d, *weights["d_pixel_v"])
    agg_r = maps["a_att"] @ v_r
    agg_d = maps["a_att"] @ v_d
    fused = maps["p_r"] @ agg_r + maps["p_d"] @ agg_d
    return _ffn_by_loop(fused, weights["ffn"]) + fused


def salrm_forward_stepwise(f_r, f_d, weights: dict, h: int, w: int, cell: int,
                           radius: int, pixel_topk: int, t: int,
                           k: int) -> np.ndarray:
    f_r, f_d = _arr(f_r), _arr(f_d)
    hw, c = f_r.shape
    scale = 1.0 / math.sqrt(c)
    _, _, a_r = superpixel_generate_dense(f_r, weights["r_gen"], h, w, cell,
                                          radius, pixel_topk, t)
    _, _, a_d = superpixel_generate_dense(f_d, weights["d_gen"], h, w, cell,
                                          radius, pixel_topk, t)
    joint = a_r * a_d
    m = joint.shape[1]
    idx = np.empty((m, k), dtype=np.int64)
    for j in range(m):
        idx[j] = topk_by_sort(joint[:, j], range(hw), k)

    q = linear_rows(f_r, *weights["r_q"])
    key = linear_rows(f_d, *weights["d_k"])
    v_r = linear_rows(f_r, *weights["r_v"])
    v_d = linear_rows(f_d, *weights["d_v"])

    ref_r = np.zeros((m, k, c))
    ref_d = np.zeros((m, k, c))
    for j in range(m):
        logits = np.empty((k, k))
        for a in range(k):
            for b in range(k):
                logits[a, b] = np.dot(q[idx[j, a]], key[idx[j, b]]) * scale
        att = _full_softmax_rows(logits)
        for a in range(k):
            for b in range(k):
                ref_r[j, a] += att[a, b] * v_r[idx[j, b]]
                ref_d[j, a] += att[a, b] * v_d[idx[j, b]]

    scat_r = scatter_mean_by_loop(hw, ref_r, idx)
    scat_d = scatter_mean_by_loop(hw, ref_d, idx)
    return (_ffn_by_loop(scat_r + f_r, weights["r_ffn"])
            + _ffn_by_loop(scat_d + f_d, weights["d_ffn"]))


# ---------------------------------------------------------------------------
# loss

def hybrid_loss_by_loop(pred, gt, eps: float = 1e-7) -> tuple[float, float]:
    """(bce, iou) computed with explicit accumulation loops."""
    pred, gt = _arr(pred).reshape(-1), _arr(gt).reshape(-1)
    bce = 0.0
    inter = 0.0
    union = 0.0
    for s, g in zip(pred, gt):
        s = min(max(s, eps), 1.0 - eps)
        bce -= g * math.log(s) + (1.0 - g) * math.log(1.0 - s)
        inter += s * g
        union += s + g - s * g
    bce /= pred.size
    iou = 0.0 if union == 0.0 else 1.0 - inter / union
    return bce, iou


# ---------------------------------------------------------------------------
# network plumbing, re-derived pixel by pixel

def patchify_by_loop(x, stride: int) -> np.ndarray:
    """[H, W, C] -> [(H/s)(W/s), s*s*C] with (dy, dx, channel) feature order."""
    x = _arr(x)
    h, w, c = x.shape
    s = stride
    out = np.empty((h // s * (w // s), s * s * c))
    for gy in range(h // s):
        for gx in range(w // s):
            feats = []
            for dy in range(s):
                for dx in range(s):
                    for ch in range(c):
                        feats.append(x[gy * s + dy, gx * s + dx, ch])
            out[gy * (w // s) + gx] = feats
    return out


def layer_norm_by_loop(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    x, gamma, beta = _arr(x), _arr(gamma), _arr(beta)
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        row = x[i]
        mean = sum(row) / row.size
        var = sum((v - mean) ** 2 for v in row) / row.size
        out[i] = [(v - mean) / math.sqrt(var + eps) for v in row]
        out[i] = out[i] * gamma + beta
    return out


def upsample2_by_loop(x) -> np.ndarray:
    """Bilinear x2 with half-pixel centres, evaluated output pixel by pixel."""
    x = _arr(x)
    h, w, c = x.shape
    out = np.empty((2 * h, 2 * w, c))

    def sample(axis_len, i):
        src = min(max(i * 0.5 - 0.25, 0.0), axis_len - 1.0)
        lo = int(math.floor(src))
        hi = min(lo + 1, axis_len - 1)
        return lo, hi, src - lo

    for i in range(2 * h):
        r0, r1, rw = sample(h, i)
        for j in range(2 * w):
            c0, c1, cw = sample(w, j)
            top = x[r0, c0] * (1 - cw) + x[r0, c1] * cw
            bot = x[r1, c0] * (1 - cw) + x[r1, c1] * cw
            out[i, j] = top * (1 - rw) + bot * rw
    return out


def depthwise5_by_loop(x, kernel) -> np.ndarray:
    """Per-channel 5x5 cross-correlation, zero padding 2, scalar loops."""
    x, kernel = _arr(x), _arr(kernel)
    h, w, c = x.shape
    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            for a in range(5):
                for b in range(5):
                    si, sj = i + a - 2, j + b - 2
                    if 0 <= si < h and 0 <= sj < w:
                        out[i, j] += x[si, sj] * kernel[a, b]
    return out


def self_attention_by_loop(x, weights: dict) -> np.ndarray:
    """Residual single-head dense self-attention over rows."""
    x = _arr(x)
    c = x.shape[1]
    q = linear_rows(x, *weights["q"])
    k = linear_rows(x, *weights["k"])
    v = linear_rows(x, *weights["v"])
    logits = np.empty((x.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        for j in range(x.shape[0]):
            logits[i, j] = np.dot(q[i], k[j]) / math.sqrt(c)
    att = _full_softmax_rows(logits)
    out = x.copy()
    for i in range(x.shape[0]):
        for j in range(x.shape[0]):
            out[i] += att[i, j] * v[j]
    return out


def _sigmoid_by_loop(x) -> np.ndarray:
    flat = _arr(x).reshape(-1)
    out = np.array([1.0 / (1.0 + math.exp(-v)) if v >= 0
                    else math.exp(v) / (1.0 + math.exp(v)) for v in flat])
    return out.reshape(_arr(x).shape)


def straightline_forward(rgb, depth, weights: dict, input_size: int,
                         channels, cells, radius: int, pixel_topk: int,
                         t: int, salrm_k: int) -> list[np.ndarray]:
    """The whole detector forward pass as one flat function.

    Returns the four saliency maps (finest first), each [input, input].
    ``weights`` follows the layout produced by the test-side converter:
    per-stage dicts for both encoder streams, the two attention modules,
    fusion, and the decoder blocks.
    """
    rgb, depth = _arr(rgb), _arr(depth)
    strides = (4, 2, 2, 2)
    sides = [input_size // 4, input_size // 8,
             input_size // 16, input_size // 32]

    def encode(img, stages):
        feats = []
        x = img
        side = input_size
        for i in range(4):
            if i > 0:
                x = feats[-1].reshape(side, side, channels[i - 1])
            p = patchify_by_loop(x, strides[i])
            st = stages[i]
            f = layer_norm_by_loop(linear_rows(p, *st["proj"]), *st["norm"])
            side //= strides[i]
            feats.append(f)
        return feats

    depth3 = np.concatenate([depth, depth, depth], axis=2)
    r_feats = encode(rgb, weights["rgb_enc"])
    d_feats = encode(depth3, weights["depth_enc"])

    tilde, hat = [], []
    for i in range(4):
        side = sides[i]
        k_i = min(salrm_k, side * side)
        tilde.append(sagem_forward_stepwise(
            r_feats[i], d_feats[i], weights["sagem"][i],
            side, side, cells[i], radius, pixel_topk, t))
        hat.append(salrm_forward_stepwise(
            r_feats[i], d_feats[i], weights["salrm"][i],
            side, side, cells[i], radius, pixel_topk, t, k_i))

    fused: list[np.ndarray | None] = [None] * 4
    for i in (3, 2, 1, 0):
        fw = weights["fusion"][i]
        pair = np.concatenate([tilde[i], hat[i]], axis=1)
        x = linear_rows(pair, *fw["mix"])
        if i < 3:
            side_next = sides[i + 1]
            up = upsample2_by_loop(
                fused[i + 1].reshape(side_next, side_next, channels[i + 1]))
            rows = up.reshape(4 * side_next * side_next, channels[i + 1])
            x = x + linear_rows(rows, *fw["cross"])
        fused[i] = self_attention_by_loop(x, fw)

    maps: list[np.ndarray | None] = [None] * 4
    prev = None
    for i in (3, 2, 1, 0):
        dw = weights["decoder"][i]
        side, c = sides[i], channels[i]
        x = fused[i]
        if prev is not None:
            x = x + linear_rows(prev, *dw["inp"])
        y = depthwise5_by_loop(x.reshape(side, side, c), dw["dw"])
        y = layer_norm_by_loop(y.reshape(side * side, c), *dw["norm"])
        y = _ffn_by_loop(y, (dw["pw1"], dw["pw2"]))
        x = x + y
        up = upsample2_by_loop(x.reshape(side, side, c))
        prev = up.reshape(4 * side * side, c)
        sm = _sigmoid_by_loop(linear_rows(prev, *dw["head"]))
        sm = sm.reshape(2 * side, 2 * side, 1)
        s = 2 * side
        while s < input_size:
            sm = upsample2_by_loop(sm)
            s *= 2
        maps[i] = sm.reshape(input_size, input_size)
    return list(maps)
