# %% [markdown]
# # Local field in an empty cavity
#
# Three routes to the same factor 3 eps / (2 eps + 1): the closed form and
# two fixed-point iterations.  The K-route map stops contracting once
# 2 (eps - 1) / 3 reaches 1, and the linear relation is solved instead.

# %%
from epsmode.localfield import ROUTES, emission_enhancement, local_field_factor

for eps in (1.0, 1.5, 2.0, 4.0, 12.0):
    results = [local_field_factor(eps, route) for route in ROUTES]
    factors = "  ".join(f"{r.factor:.15f}" for r in results)
    print(f"eps = {eps:5.1f}: {factors}   ({results[2].method})")

print("emission enhancement at eps = 2:", emission_enhancement(2.0))
