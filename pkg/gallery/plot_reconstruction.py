r"""
Reconstruction follows singular vectors, not eigenvectors
=========================================================

For a non-symmetric chain the reconstruction flow converges to the top-k
left singular space, which need not be invariant under ``P``.
"""
import numpy as np

from repdyn import FlowConfig, Subspace, decompose, init_representation, is_invariant_subspace, simulate
from repdyn import validate_process

rng = np.random.default_rng(16)
S = np.zeros((6, 6))
for _ in range(3):
    S[np.arange(6), rng.permutation(6)] += 1 / 3
proc = validate_process(0.6 * np.eye(6) + 0.4 * S, np.zeros(6), 0.9)
s = decompose(proc.P)
print("eigenvalues     ", np.round(s.real_eigenvalues, 3))
print("singular values ", np.round(s.singular_values, 3))

#%%
traj, rep = simulate(proc, init_representation(6, 2, seed=0), FlowConfig(loss="rec", step_size=0.1))
print("dist to top-2 singular space:", traj.final.dist_top_sv)
print("dist to top-2 eigenspace:    ", traj.final.dist_top_eig)
print("invariance residual of the learned span:", is_invariant_subspace(proc.P, Subspace.from_columns(rep.Phi))[1])
