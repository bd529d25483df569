"""Central-difference verification of the tape's gradients.

Each runner builds a deterministic scalar objective over one module, runs
the tape backward once, then perturbs parameter coordinates and compares.
The error measure is ``|analytic - numeric| / max(|analytic|, |numeric|,
1e-2)``; the floor keeps near-zero gradients from exploding the quotient.

The smaller modules check every coordinate of every parameter. The full
network checks every parameter tensor at a seeded sample of coordinates —
exhaustive coordinates at whole-model scale would take hours, not minutes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loss import deep_supervision, hybrid_loss
from .network import ModelConfig, ModelParams, forward
from .sagem import SagemParams, sagem_forward
from .salrm import SalrmParams, salrm_forward
from .superpixel import GridGeometry, NeighborhoodSpec, SuperpixelParams, \
    generate
from .tensor import Rng, Tape, Tensor, add, backward, mul, named_parameters, \
    sigmoid, sum_all

__all__ = ["GradCheckResult", "MODULE_THRESHOLDS", "relative_error",
           "finite_difference_check", "run_module"]

MODULE_THRESHOLDS = {
    "superpixel": 1e-4,
    "sagem": 1e-4,
    "salrm": 1e-4,
    "loss": 1e-4,
    "network": 1e-3,
}


@dataclass(frozen=True)
class GradCheckResult:
    module: str
    max_rel_err: float
    worst_param: str
    n_coords: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.threshold


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-2)


def finite_difference_check(build, params, module: str, threshold: float,
                            eps: float = 1e-5,
                            samples_per_tensor: int | None = None,
                            sample_seed: int = 0) -> GradCheckResult:
    """Compare the tape's gradients of ``build()`` against central
    differences at every (or a sampled subset of) parameter coordinate."""
    with Tape():
        backward(build())

    picker = np.random.default_rng(sample_seed)
    worst, worst_name, n_coords = 0.0, "", 0
    for name, t in named_parameters(params):
        flat = t.data.reshape(-1)
        # parameters that only steer discrete selections never reach the
        # tape; their true gradient is zero a.e., which the differences
        # below will confirm against
        grad = (np.zeros(flat.size) if t.grad is None
                else t.grad.reshape(-1))
        if samples_per_tensor is None or flat.size <= samples_per_tensor:
            coords = range(flat.size)
        else:
            coords = picker.choice(flat.size, size=samples_per_tensor,
                                   replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            with Tape():
                hi = build().item()
            flat[idx] = orig - eps
            with Tape():
                lo = build().item()
            flat[idx] = orig
            rel = relative_error(grad[idx], (hi - lo) / (2.0 * eps))
            n_coords += 1
            if rel > worst:
                worst, worst_name = rel, f"{name}[{idx}]"
    return GradCheckResult(module=module, max_rel_err=worst,
                           worst_param=worst_name, n_coords=n_coords,
                           threshold=threshold)


# ---------------------------------------------------------------------------
# per-module objectives

def _weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    return sum_all(mul(x, Tensor(weights)))


def _superpixel_case(seed: int):
    rng = np.random.default_rng(seed)
    geo = GridGeometry(4, 4, 2)
    spec = NeighborhoodSpec()
    f = Tensor(rng.standard_normal((16, 3)), requires_grad=True)
    params = SuperpixelParams.init(Rng(seed), 3)
    w_s = rng.standard_normal((geo.m, 3))
    w_a = rng.standard_normal((geo.n, geo.m))

    def build():
        state = generate(f, geo, spec, params, t=2)
        return add(_weighted_sum(state.s, w_s), _weighted_sum(state.a, w_a))

    return build, {"input": f, "gen": params}


def _sagem_case(seed: int):
    rng = np.random.default_rng(seed)
    geo = GridGeometry(4, 4, 2)
    spec = NeighborhoodSpec()
    f_r = Tensor(rng.standard_normal((16, 3)), requires_grad=True)
    f_d = Tensor(rng.standard_normal((16, 3)), requires_grad=True)
    params = SagemParams.init(Rng(seed), 3)
    w = rng.standard_normal((16, 3))

    def build():
        return _weighted_sum(sagem_forward(f_r, f_d, params, geo, spec), w)

    return build, {"f_r": f_r, "f_d": f_d, "params": params}


def _salrm_case(seed: int):
    rng = np.random.default_rng(seed)
    geo = GridGeometry(4, 4, 2)
    spec = NeighborhoodSpec()
    f_r = Tensor(rng.standard_normal((16, 3)), requires_grad=True)
    f_d = Tensor(rng.standard_normal((16, 3)), requires_grad=True)
    params = SalrmParams.init(Rng(seed), 3, k=4)
    w = rng.standard_normal((16, 3))

    def build():
        return _weighted_sum(salrm_forward(f_r, f_d, params, geo, spec), w)

    return build, {"f_r": f_r, "f_d": f_d, "params": params}


def _loss_case(seed: int):
    rng = np.random.default_rng(seed)
    raw = Tensor(rng.standard_normal((5, 5)), requires_grad=True)
    gt = Tensor((rng.random((5, 5)) > 0.5).astype(np.float64))

    def build():
        return hybrid_loss(sigmoid(raw), gt).total

    return build, {"raw": raw}


def _network_case(seed: int):
    rng = np.random.default_rng(seed)
    config = ModelConfig(input_size=32, stage_channels=(4, 8, 16, 32),
                         stage_cells=(2, 2, 1, 1), seed=seed)
    params = ModelParams.init(config)
    rgb = Tensor(rng.random((32, 32, 3)))
    depth = Tensor(rng.random((32, 32, 1)))
    gt = Tensor((rng.random((32, 32)) > 0.5).astype(np.float64))

    def build():
        return deep_supervision(forward(rgb, depth, params, config),
                                gt).grand_total

    return build, params


_CASES = {
    "superpixel": (_superpixel_case, None),
    "sagem": (_sagem_case, None),
    "salrm": (_salrm_case, None),
    "loss": (_loss_case, None),
    "network": (_network_case, 2),      # sampled coordinates per tensor
}


def run_module(module: str, seed: int = 0,
               eps: float = 1e-5) -> GradCheckResult:
    if module not in _CASES:
        raise ValueError(f"gradcheck: unknown module {module!r}")
    case, samples = _CASES[module]
    build, params = case(seed)
    return finite_difference_check(build, params, module,
                                   MODULE_THRESHOLDS[module], eps=eps,
                                   samples_per_tensor=samples,
                                   sample_seed=seed)
