"""
Finding an optimum the coarse grid misses
=========================================

The surface has one bump whose peak sits between coarse grid points. SGIS
starts from the coarse grid and refines with IS; a fine enumeration
gives the reference answer at a far higher replay cost.
"""
# %%
from sgis import evaluate_setting, generate_sessions, io, scenarios
from sgis.search import enumerate_baseline, sgis

cfg = io.parse_config(scenarios.off_grid_optimum())
log = generate_sessions(cfg.sgis.n_sessions, cfg.seed)
objective = io.build_objective(cfg, evaluate_setting(log, cfg.deployment, cfg.model))

# %%
result = sgis(log, cfg.space, cfg.model, objective, cfg.sgis)
print(f"coarse grid best {result.seed_best_score:.2f}")
print(f"sgis best        {result.best_score:.2f} at {result.best.setting.values}")
print(f"sgis replays     {result.ledger.replay_count}")

# %%
# The fine grid takes a while (about 40,000 settings).
oracle = enumerate_baseline(log, cfg.space, cfg.model, objective, 201, k=1)
print(f"201x201 best     {oracle.best_score:.2f} at {oracle.best.setting.values}")
print(f"enum replays     {oracle.ledger.replay_count}")
