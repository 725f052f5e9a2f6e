# %% [markdown]
# # Green tensor, its transverse/longitudinal split and the kernel K
#
# On the small grid (2, 1, 16) the spectral Green tensor can be checked
# against a dense solve of (-curl curl + eps w^2) u = v.

# %%
import math

from epsmode import Grid, Homogeneous, build_profile, solve_modes
from epsmode.dielectric import DisorderSpec, generate_disorder
from epsmode.geometry import divergence, random_vector_field
from epsmode.green import apply_kernel, direct_inverse_apply, kernel, kernel_identity_residual, probe_frequencies

grid = Grid((2, 1, 16), (2 * math.pi,) * 3)
eps = generate_disorder(build_profile(grid, Homogeneous(1.5)), DisorderSpec(3, 0.05))
modes = solve_modes(eps)
omega = probe_frequencies(modes, 1)[0]
v = random_vector_field(grid, 0)

g = apply_kernel(kernel(modes, omega, "G"), v)
print(f"omega = {omega:.4f}")
print("G vs dense inverse:", (g - direct_inverse_apply(eps, omega, v)).norm() / v.norm())

# %% [markdown]
# K drops the local term of G.  What remains is eps-transverse, while G
# itself is not.

# %%
k = apply_kernel(kernel(modes, omega, "K"), v)
print("div(eps K v) / |v| =", divergence(k, eps).norm() / v.norm())
print("div(eps G v) / |v| =", divergence(g, eps).norm() / v.norm())
print("G - K - local term:", kernel_identity_residual(modes, eps, omega))
