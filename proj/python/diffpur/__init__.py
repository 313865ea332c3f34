"""Diffusion-based adversarial purification: schedules, forward/reverse
diffusion with an analytic Gaussian-mixture denoiser, guided purification,
attacks (PGD, BPDA+EOT, SPSA), toy classifiers, and the evaluation harness.

Everything lives in the compiled extension; this package just re-exports it.
"""

from ._core import *  # noqa: F401,F403

__all__ = [name for name in dir() if not name.startswith("_")]
