"""
A tour of the counterfactual auction simulator
==============================================

Generate a small session log, replay one session under a few ranking
settings and watch how the aggregate KPIs move.
"""
# %%
import numpy as np

from sgis import Setting, UserResponseModel, evaluate_setting, generate_sessions, replay

log = generate_sessions(500, seed=3)
model = UserResponseModel()
print(f"{len(log)} sessions, candidates per session: "
      f"{np.bincount(log.n_candidates).nonzero()[0].min()}..{log.n_candidates.max()}")

# %%
# One session, replayed. Each shown ad is (candidate index, price, click probability).
session = log[0]
for values in [(1.0, 1.0, 0.0), (2.0, 0.0, 0.0), (0.0, 2.0, 3.0)]:
    cf = replay(session, Setting(values), model)
    print(values, [(i, round(p, 3), round(c, 3)) for i, p, c in cf.shown_ads])

# %%
# Turning up the ad-load knob shows more ads; IY rises in steps.
for load in np.linspace(-4, 4, 9):
    kv = evaluate_setting(log, Setting((1.0, 1.0, float(load))), model)
    print(f"load {load:+.1f}  iy {kv.iy:7.1f}  clicks {kv.clicks:6.1f}  rpm {kv.rpm:7.2f}")
