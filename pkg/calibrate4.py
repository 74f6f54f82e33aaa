"""Scratch: plateau comparison at T=80000, hot learning rate, ring graph."""
import json
import time

from nmarl import envs, trainer

for kappa_p in (0, 1, 2):
    for seed in (1, 2, 3, 4, 5):
        m = envs.build_path_env(envs.PathPlanningSpec(terminal_zero_reward=True))
        cfg = trainer.DscpConfig(
            iterations=80000, kappa_p=kappa_p, kappa_r=1, eta0=20.0, t0=400.0,
            seed=seed, eval_every=20000, eval_episodes=400,
            eval_method="fixed_horizon",
        )
        t_start = time.perf_counter()
        theta, rec = trainer.run_dscp(m, m.graph, cfg)
        dt = time.perf_counter() - t_start
        evals = [(r.t, round(r.j_est, 4)) for r in rec.rows if r.j_est is not None]
        print(json.dumps({"kappa_p": kappa_p, "seed": seed, "secs": round(dt, 1),
                          "evals": evals}), flush=True)
