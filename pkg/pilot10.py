import json
import time

import numpy as np

import drpolicy as dr

t_start = time.time()
results = {}
conf_kw = dict(n_restarts=2, max_outer_iters=8, lbfgs_maxiter=40)

for seed in range(10):
    cfg = dr.SimConfig(n_episodes=25, horizon=24, seed=seed)
    d = dr.simulate_training_data(cfg)
    spec = dr.default_kernel_spec(d)
    grid = dr.default_tuning_grid(d, seed=seed)
    tun = dr.cross_validate_tuning(d, grid, spec, seed=seed, c=0.5).params
    cs = (0.0, 0.1, 0.3, 0.5) if seed == 0 else (0.0, 0.5)
    for c in cs:
        res = dr.block_coordinate_ascent(
            d, dr.OptimizerConfig(seed=seed, **conf_kw), tun, c, spec=spec
        )
        results[(seed, c)] = res.theta_hat.tolist()
        print(f"seed={seed} c={c}: obj={res.objective:.4f} theta={np.round(res.theta_hat,3).tolist()} "
              f"beta={res.beta_hat:.3f} [{time.time()-t_start:.0f}s]", flush=True)

with open("/root/pkg/pilot10_thetas.json", "w") as fh:
    json.dump({f"{s}:{c}": th for (s, c), th in results.items()}, fh)

# Evaluation: paired eval seeds; normal without clip (fallback clip 30 if diverged), t2 with clip 30.
def eval_mean(theta, init, eval_seed, clip):
    pol = dr.LogisticPolicy(theta=np.asarray(theta))
    cfg = dr.SimConfig(n_episodes=1000, horizon=100, init_dist=init, seed=eval_seed, state_clip=clip)
    rep = dr.evaluate_policy(pol, cfg, (50, 100))
    return float(np.mean(rep.mean_avg_reward))

print("\n--- normal-init band (seed 0, all four c) ---", flush=True)
for clip in (None, 30.0):
    try:
        vals = {c: eval_mean(results[(0, c)], "standard_normal", 777, clip) for c in (0.0, 0.1, 0.3, 0.5)}
        band = max(vals.values()) - min(vals.values())
        print(f"clip={clip}: {dict((c, round(v,4)) for c,v in vals.items())} band={band:.4f}", flush=True)
    except Exception as exc:
        print(f"clip={clip}: FAILED {exc}", flush=True)

print("\n--- t(2) comparison c=0.5 vs c=0 over 10 seeds (clip 30) ---", flush=True)
wins = 0
for seed in range(10):
    v5 = eval_mean(results[(seed, 0.5)], "student_t", 1000 + seed, 30.0)
    v0 = eval_mean(results[(seed, 0.0)], "student_t", 1000 + seed, 30.0)
    wins += v5 >= v0
    print(f"seed={seed}: c5={v5:.4f} c0={v0:.4f} win={v5 >= v0}", flush=True)
print(f"wins {wins}/10 [{time.time()-t_start:.0f}s total]", flush=True)
