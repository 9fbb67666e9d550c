# %% [markdown]
# Kicked rotor on a 30 x 30 torus of Planck cells.
# Cells inside regular islands keep a small (Q, P) OTOC after many kicks,
# cells in the chaotic sea saturate high. Comparing the two with a long
# classical orbit gives a quantum picture of the Poincare section.

# %%
import math

import numpy as np

from planckotoc import analysis, classical, models, otoc

TWO_PI = 2 * math.pi
spec = models.KickedRotorSpec(K=4.7, L=30)
U = models.kicked_rotor_floquet(spec)
basis = models.kicked_rotor_basis(spec)
ops = otoc.operator_set(basis)
print("D =", spec.D, " hbar =", spec.hbar)

# %%
sweep = otoc.otoc_sweep(U, basis, 70, ops["Q"], ops["P"], pair=("Q", "P"))
section = sweep.values[-1]
print("C(70, x): min %.3f  median %.3f  max %.3f" % (section.min(), np.median(section), section.max()))

# %% one long orbit in the sea; cells it never reaches are islands
cloud = classical.poincare_section(classical.StandardMap(4.7), 1, 20000, seed=0,
                                   initial=(0.2 * TWO_PI, 0.2 * TWO_PI))
mask = analysis.classify_cells(cloud, basis.grid)
isl, sea, ratio = analysis.median_contrast(section, mask)
print("island cells:", int(mask.island.sum()), " sea cells:", int(mask.sea.sum()))
print("median C: island %.2f  sea %.2f  (ratio %.1f)" % (isl, sea, ratio))

# %% low rows of the OTOC image line up with the islands
valleys = analysis.valley_cells(section, basis.grid)
print("valley / island overlap score: %.2f" % analysis.valley_overlap_score(valleys, mask))

# %% text heatmap, P upwards
img = section.reshape(30, 30).T[::-1]
shades = " .:-=+*#%@"
levels = np.clip((img / img.max() * (len(shades) - 1)).astype(int), 0, len(shades) - 1)
print("\n".join("".join(shades[v] * 2 for v in row) for row in levels))
