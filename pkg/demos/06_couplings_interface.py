# %% [markdown]
# # Mode couplings and a dielectric step
#
# The displacement fields of the disordered modes expand exactly in those of
# the ideal profile when the basis is complete; truncating it leaves a
# residual.

# %%
import math

from epsmode import Grid, Homogeneous, Layered, build_profile, solve_modes
from epsmode.born import coupling_matrix, interface_continuity_report
from epsmode.dielectric import DisorderSpec, generate_disorder

grid = Grid((8, 1, 64), (2 * math.pi,) * 3)
eps_i = build_profile(grid, Layered((1.0, 2.25), (math.pi,), 2 * math.pi / 16))
modes_i = solve_modes(eps_i)
modes_ii = solve_modes(generate_disorder(eps_i, DisorderSpec(7, 0.05)))
n = len(modes_i)
for count in (n, n // 2, n // 4):
    cm = coupling_matrix(modes_i, modes_ii, eps_i, modes_ii.eps, basis_count=count)
    print(f"basis {count:5d}: mean residual {cm.residuals.mean():.2e}")

# %% [markdown]
# Insert a slab of eps = 2 into vacuum and compare the lowest Born order of
# both kernels at the interfaces.  G keeps tangential E smooth; K keeps
# normal D continuous.

# %%
step = Grid((4, 1, 128), (2 * math.pi,) * 3)
eps_b = build_profile(step, Homogeneous(1.0))
eps_a = build_profile(step, Homogeneous(2.0))
modes_b = solve_modes(eps_b, count=40)
report = interface_continuity_report(eps_b, eps_a, modes_b, 8, (math.pi / 2, 3 * math.pi / 2), step.lengths[2] / 64)
for variant in ("G", "K"):
    print(variant, {q: round(report.proxy(variant, q), 4) for q in ("tangential_E", "normal_D")})
