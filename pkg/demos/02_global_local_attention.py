"""Cross-modal fusion through superpixel tokens: SAGEM and SALRM.

SAGEM routes information globally (pixels -> superpixels -> pixels) with a
shared attention map that keeps only weight both modalities agree on.
SALRM refines locally: each superpixel's top-k jointly-associated pixels
cross-attend (appearance queries, depth keys) and scatter back.
"""

import numpy as np

from sptnet.sagem import SagemParams, global_maps, sagem_forward
from sptnet.salrm import (SalrmParams, combine_associations, salrm_forward,
                          select_local)
from sptnet.superpixel import GridGeometry, NeighborhoodSpec, generate
from sptnet.tensor import Rng, Tensor

geo = GridGeometry(16, 16, cell=4)     # 256 pixels, 16 superpixels
spec = NeighborhoodSpec()
c = 8

rng = np.random.default_rng(1)
f_rgb = Tensor(rng.standard_normal((geo.n, c)))     # appearance features
f_depth = Tensor(rng.standard_normal((geo.n, c)))   # depth features

# --- global enhancement -------------------------------------------------
sagem = SagemParams.init(Rng(1), c)
bundle = global_maps(f_rgb, f_depth, sagem, geo, spec, t=2)

# Each modality builds a superpixel->pixel aggregation map (rows sum to 1).
print("a_r shape", bundle.a_r.shape, "row sums 1:",
      np.allclose(bundle.a_r.data.sum(axis=1), 1.0))

# Their elementwise product is deliberately NOT renormalised: where the two
# modalities disagree, weight mass simply vanishes.
mass = bundle.a_att.data.sum(axis=1)
print(f"shared-map row mass after product: min {mass.min():.3f}, "
      f"max {mass.max():.3f} (<= 1 by construction)")

fused = sagem_forward(f_rgb, f_depth, sagem, geo, spec, t=2)
print("sagem output", fused.shape, "- one enhanced feature row per pixel\n")

# --- local refinement ----------------------------------------------------
salrm = SalrmParams.init(Rng(2), c, k=9)

# The joint association scores pixels that BOTH modalities tie to the same
# superpixel; each superpixel then selects its top-9 such pixels.
a_r = generate(f_rgb, geo, spec, salrm.r_gen, t=2).a
a_d = generate(f_depth, geo, spec, salrm.d_gen, t=2).a
joint = combine_associations(a_r, a_d)
idx = select_local(joint, k=9)
print("selected pixel rows per superpixel:", idx.shape)
print("superpixel 0 refines pixels", sorted(int(i) for i in idx[0]))

covered = np.unique(idx).size
print(f"{covered} of {geo.n} pixels are refined; the rest pass through "
      f"(their refinement delta is exactly zero)")

refined = salrm_forward(f_rgb, f_depth, salrm, geo, spec, t=2)
print("salrm output", refined.shape)
