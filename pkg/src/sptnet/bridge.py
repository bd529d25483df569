"""Converters from production parameter bundles to the plain-array dicts
the brute-force oracles accept. No computation happens here — only
container reshuffling, so oracle runs stay independent of the production
forward path."""

from __future__ import annotations

__all__ = ["lin_pair", "ffn_pairs", "gen_dict", "sagem_dict", "salrm_dict",
           "stage_embed_dict", "fusion_dict", "decoder_dict", "model_dict"]


def lin_pair(lin):
    return lin.w.data, lin.b.data


def ffn_pairs(ffn):
    return lin_pair(ffn.fc1), lin_pair(ffn.fc2)


def gen_dict(gen):
    return {name: lin_pair(getattr(gen, name))
            for name in ("pixel_q", "pixel_k", "pixel_v", "sp_q", "sp_k", "sp_v")}


def sagem_dict(params):
    out = {name: lin_pair(getattr(params, name))
           for name in ("r_pixel_q", "r_pixel_k", "r_pixel_v",
                        "d_pixel_q", "d_pixel_k", "d_pixel_v",
                        "r_sp_q", "r_sp_k", "d_sp_q", "d_sp_k")}
    out["ffn"] = ffn_pairs(params.ffn)
    out["r_gen"] = gen_dict(params.r_gen)
    out["d_gen"] = gen_dict(params.d_gen)
    return out


def salrm_dict(params):
    out = {name: lin_pair(getattr(params, name))
           for name in ("r_q", "d_k", "r_v", "d_v")}
    out["r_ffn"] = ffn_pairs(params.r_ffn)
    out["d_ffn"] = ffn_pairs(params.d_ffn)
    out["r_gen"] = gen_dict(params.r_gen)
    out["d_gen"] = gen_dict(params.d_gen)
    return out


def stage_embed_dict(st):
    return {"proj": lin_pair(st.proj),
            "norm": (st.norm.gamma.data, st.norm.beta.data)}


def fusion_dict(fp):
    out = {name: lin_pair(getattr(fp, name)) for name in ("mix", "q", "k", "v")}
    out["cross"] = None if fp.cross is None else lin_pair(fp.cross)
    return out


def decoder_dict(db):
    return {"dw": db.dw.data,
            "norm": (db.norm.gamma.data, db.norm.beta.data),
            "pw1": lin_pair(db.pw1),
            "pw2": lin_pair(db.pw2),
            "head": lin_pair(db.head),
            "inp": None if db.inp is None else lin_pair(db.inp)}


def model_dict(params):
    return {"rgb_enc": [stage_embed_dict(s) for s in params.rgb_enc],
            "depth_enc": [stage_embed_dict(s) for s in params.depth_enc],
            "sagem": [sagem_dict(s) for s in params.sagem],
            "salrm": [salrm_dict(s) for s in params.salrm],
            "fusion": [fusion_dict(f) for f in params.fusion],
            "decoder": [decoder_dict(d) for d in params.decoder]}
