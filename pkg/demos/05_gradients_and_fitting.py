"""The tape differentiates everything: verification and a short fit.

First each module's analytic gradients are compared against central finite
differences; then 60 plain gradient-descent steps shrink the deep-supervision
loss on one synthetic RGB-D pair.
"""

import numpy as np

from sptnet.gradcheck import run_module
from sptnet.loss import deep_supervision
from sptnet.network import ModelConfig, ModelParams, forward
from sptnet.tensor import Tape, Tensor, backward, sgd_step

# --- finite-difference verification --------------------------------------
for module in ("superpixel", "sagem", "salrm", "loss"):
    r = run_module(module, seed=0)
    print(f"gradcheck {module:10s} max rel err {r.max_rel_err:.2e} "
          f"over {r.n_coords} coords "
          f"({'ok' if r.passed else 'FAIL'}, threshold {r.threshold:g})")

# --- a short fit ----------------------------------------------------------
config = ModelConfig(input_size=32, stage_channels=(4, 8, 16, 32), seed=42)
rng = np.random.default_rng(42)
yy, xx = np.mgrid[0:32, 0:32]
disk = (((yy - 16) ** 2 + (xx - 13) ** 2) <= 81).astype(float)
rgb = Tensor(np.clip(disk[:, :, None] * 0.6 + 0.2
                     + rng.normal(0, 0.05, (32, 32, 3)), 0, 1))
depth = Tensor(np.clip(disk[:, :, None] * 0.5 + 0.25
                       + rng.normal(0, 0.05, (32, 32, 1)), 0, 1))
gt = Tensor(disk)

params = ModelParams.init(config)
print("\nfitting one pair (hybrid BCE + IoU, deep supervision on 4 scales):")
for step in range(60):
    with Tape():
        breakdown = deep_supervision(forward(rgb, depth, params, config), gt)
        backward(breakdown.grand_total)
    sgd_step(params, lr=1e-3)
    if step % 10 == 0 or step == 59:
        scales = ", ".join(f"{t.item():.2f}" for t in breakdown.per_scale)
        print(f"step {step:3d}: loss {breakdown.grand_total.item():7.3f} "
              f"(per scale: {scales})")
