"""Scratch calibration sweep for learning-rate defaults (not part of the package)."""
import json
import time

from nmarl import envs, trainer

results = []
for eta0, t0 in [(0.5, 10.0), (2.0, 50.0), (5.0, 100.0)]:
    for kappa_p in (0, 1):
        m = envs.build_path_env(envs.PathPlanningSpec(terminal_zero_reward=True))
        cfg = trainer.DscpConfig(
            iterations=20000,
            kappa_p=kappa_p,
            kappa_r=1,
            eta0=eta0,
            t0=t0,
            seed=1,
            eval_every=2000,
            eval_episodes=300,
            eval_method="fixed_horizon",
        )
        t_start = time.perf_counter()
        theta, rec = trainer.run_dscp(m, m.graph, cfg)
        dt = time.perf_counter() - t_start
        evals = [(r.t, round(r.j_est, 4), round(r.j_se, 4)) for r in rec.rows if r.j_est is not None]
        grads = [r.grad_norm_est for r in rec.rows if r.grad_norm_est is not None]
        first = sorted(grads[: len(grads) // 10])[len(grads) // 20]
        last = sorted(grads[-len(grads) // 10 :])[len(grads) // 20]
        row = {
            "eta0": eta0,
            "t0": t0,
            "kappa_p": kappa_p,
            "secs": round(dt, 1),
            "evals": evals,
            "median_grad_first10": round(first, 3),
            "median_grad_last10": round(last, 3),
        }
        print(json.dumps(row), flush=True)
        results.append(row)

with open("/tmp/calibration.json", "w") as fp:
    json.dump(results, fp, indent=1)
