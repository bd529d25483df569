"""Shared converters: production parameter bundles -> plain-array dicts the
brute-force oracles accept. Re-exported from the package so the CLI's
oracle suites and the tests use one implementation."""

from sptnet.bridge import (lin_pair, ffn_pairs, gen_dict, sagem_dict,
                           salrm_dict, stage_embed_dict, fusion_dict,
                           decoder_dict, model_dict)

__all__ = ["lin_pair", "ffn_pairs", "gen_dict", "sagem_dict", "salrm_dict",
           "stage_embed_dict", "fusion_dict", "decoder_dict", "model_dict"]
