r"""
Which invariant subspaces are stable?
=====================================

Every span of eigenvectors is a stationary point of the latent flow, but only
the top-k one is stable. The Jacobian at ``span{w_i : i in S}`` has
eigenvalues ``2 lam_i (lam_j - lam_i)`` for ``i`` in ``S`` and ``j`` outside.
"""
import itertools

import numpy as np

from repdyn import FlowConfig, decompose, find_positive_chain, jacobian_at, representation_from_encoder
from repdyn.dynamics import predicted_latent_spectrum, unstable_direction_rate

proc, _ = find_positive_chain(6, beta=0.4, min_gap=1e-3)
lam = decompose(proc.P).real_eigenvalues
W = decompose(proc.P).eigenvectors
print("eigenvalues", np.round(lam, 4))

#%%
for subset in itertools.combinations(range(6), 2):
    _, ev = jacobian_at(proc, representation_from_encoder(W[:, subset]), FlowConfig())
    pred = predicted_latent_spectrum(lam, subset)
    print(f"S={subset}: max Re eig = {ev.real.max():+.4f}   predicted {pred.max():+.4f}")

#%%
# The growth rate of a single escape direction, without the factor 2 that
# comes from the unnormalized loss:
print("lam_j=0.9, lam_i=0.5 ->", unstable_direction_rate(0.9, 0.5))
