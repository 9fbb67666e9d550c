# %% [markdown]
# Inverted oscillator between hard walls at q = +-1/2, hbar = 0.002.
# Compare the thermal (q, q) OTOC at T = 0.1 with the (Q, Q) OTOC of the
# Planck cell sitting on the saddle. The classical rate there is 1.

# %%
import numpy as np

from planckotoc import analysis, classical, models, otoc
from planckotoc.numerics import SpectralPropagator, eig_hermitian

spec = models.IhoSpec(hbar=0.002, dx=0.002)
H = models.iho_hamiltonian(spec)
basis = models.iho_basis(spec)
print("cells %d x %d, D = %d" % (basis.grid.L_q, basis.grid.L_p, basis.frame.shape[0]))
print("saddle rate:", classical.saddle_lyapunov(classical.InvertedOscillator(), (0.0, 0.0)))

# %%
prop = SpectralPropagator(H, hbar=spec.hbar)
decomp = eig_hermitian(H)
w = models.gibbs_weights(decomp, 0.1)
print("Gibbs population below E = 0.05: %.3f" % models.cumulative_population(None, 0.1, 0.05, decomp=decomp))

# %%
q = models.iho_position_operator(spec)
ops = otoc.operator_set(basis, q=q)
times = np.arange(0.0, 4.0001, 0.05)
thermal = otoc.thermal_otoc(otoc.spectral_track(prop, q, times), q, weight=w).values
x = basis.cell_at(0.0, 0.0)
cell = otoc.cell_otoc(otoc.spectral_track(prop, ops["Q"], times), ops["Q"], basis, x).values

# %%
for name, v in (("thermal qq", thermal), ("cell QQ", cell)):
    fit = analysis.fit_exponential(times, v, (0.4, 1.6))
    print("%-10s exponent %.3f +- %.3f  (2 lambda = 2)" % (name, fit.exponent, fit.stderr))
