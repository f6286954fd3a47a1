"""
Single-start search and the local trap
======================================

Two bumps of different heights. A hill-climbing IS search that starts near the
lower bump stays there; SGIS sees the whole coarse grid first.
"""
# %%
from sgis import evaluate_setting, generate_sessions, io, scenarios
from sgis.search import iterative_is_baseline, sgis

cfg = io.parse_config(scenarios.two_bumps())
log = generate_sessions(cfg.sgis.n_sessions, cfg.seed)
objective = io.build_objective(cfg, evaluate_setting(log, cfg.deployment, cfg.model))

# %%
trapped = iterative_is_baseline(log, cfg.space, cfg.model, objective, cfg.iterative_start,
                                cfg.iterative_config())
for t in trapped.trace:
    for values, value in t.confirmed:
        print(f"iterate {t.iteration:2d}: ({values[0]:.3f}, {values[1]:.3f})  score {value:.2f}")

# %%
found = sgis(log, cfg.space, cfg.model, objective, cfg.sgis)
print(f"sgis: {found.best.setting.values} score {found.best_score:.2f}")
print(f"single start: {trapped.best.setting.values} score {trapped.best_score:.2f}")
