r"""
Distracting dynamics and value error
====================================

Composing a two-state process with a slowly mixing, reward-free background
pulls the top eigen- and singular spaces away from the reward.
"""
import numpy as np

from repdyn import FactoredSpec, FlowConfig, init_representation, kron_compose, simulate, value_exact
from repdyn.verifier import check_prop6, check_prop7, prop6_instance, prop7_factors

M, N = prop7_factors()
rep = check_prop7(M, N, 2)
print("top-2 eigenspace vs span{1 x u_i(N)}:", rep.measured["dist_topk_to_distracted_span"])
print("value residual, top-2 eigenspace:    ", rep.measured["value_residual_topk"])
print("value residual, foreground eigenspace:", rep.measured["value_residual_foreground"])

#%%
# Reward on the foreground's second eigenvector: TD plus reconstruction
# settles with a large value error, TD plus latent prediction does not.
proc = prop6_instance()
for loss in ("td_plus_rec", "td_plus_lat"):
    traj, _ = simulate(proc, init_representation(proc.n, 2, seed=0), FlowConfig(loss=loss, step_size=0.1))
    print(f"{loss:12s} value error {traj.final.value_error:.4f}  (|V| = {np.linalg.norm(value_exact(proc)):.3f})")

rep = check_prop6(proc, 2, seeds=range(3))
print(rep.status, rep.measured)
