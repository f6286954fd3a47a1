"""
How well do IS deltas track the simulator?
==========================================

Draw random probe settings near the deployment setting and compare IY deltas
from importance sampling with those from direct simulation.
"""
# %%
import numpy as np

from sgis import RandomizationPolicy, generate_sessions, io, scenarios
from sgis.search import correlation_report

cfg = io.parse_config(scenarios.with_overrides(scenarios.default_auction(),
                                               sgis={"n_artificial": 50_000}))
log = generate_sessions(cfg.sgis.n_sessions, cfg.seed)
policy = RandomizationPolicy(cfg.deployment, cfg.sgis.sigma)
report = correlation_report(log, cfg.space, cfg.model, cfg.deployment, policy, 50,
                            cfg.sgis, cfg.seed)

# %%
pairs = np.array([(x, y) for _, x, y in report.rows])
print(f"pearson r = {report.r:.3f}")
print("IS dIY%   sim dIY%")
for x, y in pairs[np.argsort(pairs[:, 1])][::5]:
    print(f"{x:7.2f}  {y:8.2f}")
