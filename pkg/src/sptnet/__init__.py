"""Superpixel-token attention for RGB-D salient object detection, desk scale.

The package is organised as a small numpy-backed library:

* :mod:`sptnet.tensor` — float64 tensors with a reverse-mode tape,
* :mod:`sptnet.superpixel` — iterative expanded-neighborhood superpixel tokens,
* :mod:`sptnet.sagem` / :mod:`sptnet.salrm` — global and local cross-modal
  attention built on those tokens,
* :mod:`sptnet.network` / :mod:`sptnet.loss` — a toy two-stream saliency
  network with hybrid BCE + IoU deep supervision,
* :mod:`sptnet.oracle` / :mod:`sptnet.gradcheck` — brute-force references and
  finite-difference verification,
* :mod:`sptnet.pnm` / :mod:`sptnet.config` / :mod:`sptnet.cli` — binary
  PPM/PGM handling, run configuration, and the command-line front end.
"""

from .tensor import Rng, SparseMask, Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = ["Tensor", "Tape", "Rng", "SparseMask", "backward", "__version__"]
