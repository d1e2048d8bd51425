# %% [markdown]
# # Learning which drafter to use
#
# Each training query is decoded greedily by the target and by every drafter.
# The ROUGE-L overlap between a drafter's output and the target's is that
# drafter's reward for the query. A small MLP over hashed character n-grams
# is then trained with REINFORCE on those logged rewards.

# %%
from draftroute import bench as B
from draftroute.experiment import recipe

cfg = recipe("two-domain")
pipe = B.build_pipeline(cfg)
print(len(pipe.records), "logged rewards; epoch losses", [round(x, 4) for x in pipe.train_history])

# %% [markdown]
# Mean reward of each drafter by domain: each one is only useful on its own domain.

# %%
import numpy as np

for dom in ("periodic", "markov"):
    row = {a.arm_id: float(np.mean([r.alignment for r in pipe.records
                                    if r.arm_id == a.arm_id and r.meta["true_domain"] == dom]))
           for a in pipe.arms}
    print(dom, {k: round(v, 3) for k, v in row.items()})

# %% [markdown]
# Held-out comparison: target alone, each fixed drafter, and the router in
# greedy and sampling modes. `calls/tok` is the number of target passes per
# generated token.

# %%
report, runs = B.bench(cfg, pipe)
print(report.to_table())
