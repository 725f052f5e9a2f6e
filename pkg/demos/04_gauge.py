# %% [markdown]
# # Restoring the gauge after a perturbation
#
# A mode of the ideal profile is not eps_II-transverse.  Adding the
# gradient of a scalar potential fixes that without touching the magnetic
# field.

# %%
import math

from epsmode import Grid, Homogeneous, Layered, build_profile, solve_modes
from epsmode.dielectric import DisorderSpec, generate_disorder
from epsmode.gauge import (
    assemble_field_profiles,
    gauge_gradient,
    plane_wave,
    plane_wave_gauge_profile,
    verify_gauge_condition,
    zero_gauge_term,
)
from epsmode.modes import gauge_sensitive_labels

grid = Grid((8, 1, 64), (2 * math.pi,) * 3)
eps_i = build_profile(grid, Layered((1.0, 2.25), (math.pi,), 2 * math.pi / 16))
modes_i = solve_modes(eps_i)
modes_ii = solve_modes(generate_disorder(eps_i, DisorderSpec(1, 0.05)))

label = int(gauge_sensitive_labels(modes_i)[0])
f = modes_i.field(label)
term = gauge_gradient(modes_ii, modes_ii.eps, eps_i, f, modes_i.omegas[label], label)
print("without gauge term:", verify_gauge_condition(modes_ii.eps, f, zero_gauge_term(f)))
print("with gauge term:   ", verify_gauge_condition(modes_ii.eps, f, term))
profiles = assemble_field_profiles(f, term, modes_ii.eps)
print("change in B:", profiles.gauge_curl)

# %% [markdown]
# For a vacuum reference the gauge-corrected plane wave has a closed form.

# %%
vacuum = build_profile(grid, Homogeneous(1.0))
disordered = solve_modes(generate_disorder(vacuum, DisorderSpec(5, 0.05)))
p, k = plane_wave(grid, (1, 0, 2), 2)
generic = p + gauge_gradient(disordered, disordered.eps, vacuum, p, k).gradient
closed = plane_wave_gauge_profile(disordered.eps, disordered, (1, 0, 2), 2)
print("closed form vs generic path:", (closed - generic).norm() / generic.norm())
