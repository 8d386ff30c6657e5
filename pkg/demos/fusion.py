"""Fuse per-view posteriors into one latent posterior.

Two views each report a Gaussian belief about a 2-d latent.  Fusion adds
their precisions relative to the N(0, I) prior, weighted by kappa, so a
confident view pulls the fused mean harder.  The loss printed beside each
kappa is the per-sample objective (nats) the unknown-distribution solvers
minimize.

    python demos/fusion.py
"""
import numpy as np

from wynerci.fusion import GaussianExpert, gaussian_fuse, sample_loss

sharp = GaussianExpert([1.5, 0.0], np.diag([0.2, 1.0]))
vague = GaussianExpert([-1.0, 1.0], np.diag([2.0, 2.0]))
experts = {"1|2": (sharp, vague)}

for kappa in (0.1, 0.3, 0.5, 0.7):
    fused = gaussian_fuse(experts, {"1|2": kappa})
    loss = sample_loss(experts, {"1|2": kappa})
    print(f"kappa {kappa:.1f}: mean {np.round(fused.mean, 3)}  "
          f"var {np.round(np.diag(fused.cov), 3)}  loss {loss:+.4f}")
