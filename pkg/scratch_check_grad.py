"""Scratch: regret gradient vs central finite differences."""
import sys, time
sys.path.insert(0, "src")
import numpy as np
from pvbdfl.domain import BatterySpec, DayInstance
from pvbdfl.diffopt import regret_and_gradient, solve_with_sensitivities
from pvbdfl.sched_opt import SolveOptions

def make_case(seed):
    rng = np.random.default_rng(seed)
    T = 24
    t = np.arange(T)
    pr_im = 0.25 + 0.1*np.sin(2*np.pi*(t-8)/24) + 0.03*rng.random(T)
    pr_ex = (pr_im - 0.12) * 0.85
    pv_act = np.maximum(0, 3.0*np.sin(np.pi*(t-6)/12))
    pv_act[ (t<6)|(t>18) ] = 0
    pv_act *= (0.4 + 0.6*rng.random())
    load = 0.3 + 0.5*rng.random(T) + 0.8*np.exp(-0.5*((t-19)/2.)**2)
    pv_fc = np.maximum(pv_act * (1 + 0.3*rng.standard_normal(T)), 0)
    cap = 5.5
    bat = BatterySpec(cap, 2.7, 0.2, 0.8, 0.5)
    return pv_fc, pv_act, load, pr_im, pr_ex, bat

eps = 1e-3
step = 1e-4
tol_opts = None

nfail = 0
nskip = 0
t0 = time.time()
for seed in range(12):
    pv_fc, pv_act, load, pr_im, pr_ex, bat = make_case(seed)
    r0, g = regret_and_gradient(pv_fc, pv_act, load, pr_im, pr_ex, bat, eps)
    # FD of the full pipeline
    fd = np.zeros(24)
    skip = np.zeros(24, bool)
    inst = lambda pv: DayInstance(np.maximum(pv,0), load, pr_im, pr_ex, bat)
    _, fact0 = solve_with_sensitivities(inst(pv_fc), eps)
    for k in range(24):
        ge = np.zeros(24); ge[k] = step
        rp, _ = regret_and_gradient(pv_fc+ge, pv_act, load, pr_im, pr_ex, bat, eps)
        rm, _ = regret_and_gradient(pv_fc-ge, pv_act, load, pr_im, pr_ex, bat, eps)
        fd[k] = (rp-rm)/(2*step)
        _, fp = solve_with_sensitivities(inst(pv_fc+ge), eps)
        _, fm = solve_with_sensitivities(inst(pv_fc-ge), eps)
        if (fp.active_set != fact0.active_set).any() or (fm.active_set != fact0.active_set).any():
            skip[k] = True
    keep = ~skip
    err = np.abs(g - fd)
    rel = err / np.maximum(np.abs(fd), 1e-6)
    worst = rel[keep].max() if keep.any() else 0.0
    ok = worst <= 1e-3
    nskip += skip.sum()
    if not ok:
        nfail += 1
        bad = np.argmax(np.where(keep, rel, 0))
        print(f"seed {seed}: FAIL worst rel={worst:.2e} at k={bad}: g={g[bad]:.6f} fd={fd[bad]:.6f} (skipped {skip.sum()})")
    else:
        print(f"seed {seed}: ok   worst rel={worst:.2e}, regret={r0:.4f}, skipped {skip.sum()}")
print(f"fails={nfail}, total skipped coords={nskip}, {time.time()-t0:.1f}s")
