"""Scratch: paired kappa_p comparison under candidate configurations."""
import json
import sys
import time

from nmarl import envs, netgraph, trainer

CONFIGS = {
    # (eta0, t0, graph, terminal_zero)
    "A_hot_ring": (20.0, 400.0, "ring", True),
    "B_interleaved": (5.0, 100.0, "interleaved", True),
    "C_hot_interleaved": (20.0, 400.0, "interleaved", True),
    "D_continuing": (5.0, 100.0, "ring", False),
}

def graph_for(name):
    if name == "ring":
        return netgraph.ring_graph(10)
    order = [1, 6, 2, 7, 3, 8, 4, 9, 5, 10]
    edges = [(order[k], order[(k + 1) % 10]) for k in range(10)]
    return netgraph.build_graph(10, edges)

which = sys.argv[1] if len(sys.argv) > 1 else None
for name, (eta0, t0, gname, term) in CONFIGS.items():
    if which and name != which:
        continue
    for kappa_p in (0, 1):
        finals = []
        for seed in (1, 2, 3, 4, 5):
            m = envs.build_path_env(
                envs.PathPlanningSpec(terminal_zero_reward=term), comm=graph_for(gname)
            )
            cfg = trainer.DscpConfig(
                iterations=20000, kappa_p=kappa_p, eta0=eta0, t0=t0, seed=seed,
                eval_every=20000, eval_episodes=400, eval_method="fixed_horizon",
            )
            t_start = time.perf_counter()
            theta, rec = trainer.run_dscp(m, m.graph, cfg)
            final = rec.final_eval()
            finals.append(round(final.j_est, 4))
        print(json.dumps({"config": name, "kappa_p": kappa_p, "finals": finals}), flush=True)
