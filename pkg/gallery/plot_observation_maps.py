r"""
Encoders behind an observation map
==================================

With observations ``x^T O`` the stationary points of the latent and TD losses
move to ``O^{-1} Phi*``. The flow Jacobian there is
``(O^T x I) J (O x I)``: congruent to the plain one, so the signs of its
eigenvalues carry over while their values generally do not. The
reconstruction minimizer is ``O^{-1}`` times the top-k left singular vectors
of ``P O``.
"""
import numpy as np

from repdyn.verifier import check_prop3_prop4, prop34_instance

proc, obs = prop34_instance()
print("cond(O) =", round(obs.condition_number, 2))
rep = check_prop3_prop4(proc, obs, 2)
for key in sorted(rep.measured):
    print(f"{key:32s} {rep.measured[key]}")

#%%
# An orthogonal map changes nothing spectral.
from scipy.stats import ortho_group

from repdyn import ObservationMap

rep = check_prop3_prop4(proc, ObservationMap(ortho_group.rvs(6, random_state=0)), 2)
print("orthogonal O:", rep.status, "spectrum err", rep.measured["lat_spectrum_err"])
