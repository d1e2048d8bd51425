# %% [markdown]
# # Trading alignment for size
#
# The reward mixes alignment and a size bonus,
# `alpha * alignment + (1 - alpha) * cost`, where the cost term
# `1 - exp(p_i - p_max)` is largest for the smallest model. Sweeping alpha
# moves the router from the smallest drafter (alpha = 0) to the best-aligned one
# (alpha = 1).

# %%
from draftroute import bench as B
from draftroute.experiment import recipe

cfg = recipe("size-tradeoff")
for row in B.sweep_alpha(cfg, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]):
    shares = "  ".join(f"{k}={v:.2f}" for k, v in row["selection_share"].items())
    print(f"alpha={row['alpha']:.1f}  {shares}")
print("mean alignment:", {k: round(v, 3) for k, v in row["mean_alignment"].items()})
print("cost:", {k: round(v, 3) for k, v in row["cost"].items()})

# %% [markdown]
# How much logged data does the router need? Train on growing prefixes of the
# two-domain reward set and measure routed acceptance.

# %%
two = recipe("two-domain")
for pt in B.learning_curve(two, [10, 40, 100, 200, 400, 4000], mode="dynamic"):
    print(f"{pt['records_used']:5d} records  accept {pt['accept_rate_pct']:6.2f}%"
          f"  calls/tok {pt['target_calls_per_token']:.3f}")
