# %% [markdown]
# LMG model at L = 41 (N = 1680): OTOC growth of the saddle cell at (pi, 0).
# The classical saddle has Lyapunov exponent sqrt(3), so macroscopic
# operators should grow like exp(2 sqrt(3) t) until the packet spreads.

# %%
import math

import numpy as np

from planckotoc import analysis, classical, models, otoc
from planckotoc.numerics import SpectralPropagator
from planckotoc.observables import ehrenfest_delta

spec = models.LmgSpec.from_cells(41)
basis = models.lmg_basis(spec)
prop = SpectralPropagator(models.lmg_hamiltonian(spec), hbar=1.0)
ops = otoc.operator_set(basis, p=models.lmg_momentum_operator(spec.N))
x = basis.cell_at(math.pi, 0.0)
lam = classical.saddle_lyapunov(classical.LmgMeanField(), (math.pi, 0.0))
print("N =", spec.N, " saddle cell", x, " lambda = %.6f" % lam)

# %%
times = np.arange(0.0, 3.0001, 0.05)
C_PP = otoc.cell_otoc(otoc.spectral_track(prop, ops["P"], times), ops["P"], basis, x).values
C_pp = otoc.cell_otoc(otoc.spectral_track(prop, ops["p"], times), ops["p"], basis, x).values
W2 = otoc.width_track(prop, basis, x, times)

# %% fit before the Ehrenfest time
window = (0.3, 1.2)
for name, v in (("C_PP", C_PP), ("W2", W2), ("C_pp", C_pp)):
    fit = analysis.fit_exponential(times, v, window)
    print("%-5s exponent %.3f +- %.3f   (2 lambda = %.3f)" % (name, fit.exponent, fit.stderr, 2 * lam))

# %% where the centroid leaves the classical orbit
tr = ehrenfest_delta(prop, basis, x, (math.pi - basis.grid.dq, 0.0), times, classical.LmgMeanField(), dt=1e-2)
print("plateau %.4f  t_E %.2f" % (tr.plateau, tr.t_E))
for t, d in zip(times[::6], tr.delta[::6]):
    print("t = %.1f  delta / plateau = %6.2f" % (t, d / tr.plateau))
