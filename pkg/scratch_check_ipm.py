"""Scratch validation of the IPM kernel vs scipy HiGHS (not part of the package)."""
import sys, time
sys.path.insert(0, "src")
import numpy as np
from scipy.optimize import linprog
from pvbdfl import _ipm_py as ipm


def dense_ineq(T, pmax):
    n, m_eq, m_in = ipm.problem_dims(T)
    G = np.zeros((m_in, n))
    im, ex, ch, dis, mo, so = 0, T, 2*T, 3*T, 4*T, 5*T
    for t in range(T):
        G[t, im+t] = -1
        G[T+t, ex+t] = -1
        G[2*T+t, ch+t] = -1
        G[3*T+t, dis+t] = -1
        G[4*T+t, ch+t] = 1; G[4*T+t, mo+t] = -pmax
        G[5*T+t, dis+t] = 1; G[5*T+t, mo+t] = pmax
        G[6*T+t, mo+t] = -1
        G[7*T+t, mo+t] = 1
    for t in range(T+1):
        G[8*T+t, so+t] = -1
        G[9*T+1+t, so+t] = 1
    return G


def check(T, seed, eps=0.0, tol=1e-8):
    rng = np.random.default_rng(seed)
    pr_im = 0.1 + 0.4*rng.random(T)
    pr_ex = pr_im - 0.02 - 0.1*rng.random(T)
    pv = np.maximum(0, rng.random(T)*2.5 - 0.5)
    load = 0.1 + rng.random(T)*1.5
    net = load - pv
    cap = 2.0 + 4*rng.random()
    pmax = cap/2.7
    lo, hi, init = 0.2*cap, 0.8*cap, 0.5*cap
    x, y, z, s, it, status = ipm.solve(pr_im, pr_ex, net, pmax, lo, hi, init, eps, tol, 200)
    c, qdiag, b, h = ipm.build_vectors(pr_im, pr_ex, net, pmax, lo, hi, init, eps, T)
    obj = c @ x
    # reference: scipy linprog on the same dense problem (LP only)
    if eps == 0.0:
        A = ipm.build_dense_eq(T)
        G = dense_ineq(T, pmax)
        res = linprog(c, A_ub=G, b_ub=h, A_eq=A, b_eq=b,
                      bounds=[(None, None)]*len(c), method="highs")
        ref = res.fun
    else:
        ref = float("nan")
    # residuals
    rp = np.abs(ipm._mul_A(x, T) - b).max()
    rg = (ipm._mul_G(x, T, pmax) - h).max()
    return status, it, obj, ref, rp, rg


nbad = 0
t0 = time.time()
for seed in range(40):
    for T in (4, 24):
        status, it, obj, ref, rp, rg = check(T, seed)
        ok = status == 0 and abs(obj - ref) < 1e-6 and rp < 1e-6 and rg < 1e-6
        if not ok:
            nbad += 1
            print(f"BAD T={T} seed={seed} status={status} it={it} obj={obj:.8f} ref={ref:.8f} rp={rp:.2e} rg={rg:.2e}")
print(f"LP checks done, {nbad} bad, {time.time()-t0:.1f}s")

# QP smoke: eps>0 should converge too; objective close to LP value for small eps
for seed in range(10):
    status, it, obj, ref, rp, rg = check(24, seed, eps=1e-3)
    if status != 0:
        print(f"QP BAD seed={seed} status={status} it={it}")
print("QP checks done")

# timing
t0 = time.time()
reps = 50
for seed in range(reps):
    check(24, seed, eps=1e-3)
print(f"avg solve time (incl. ref solve overhead? no ref for qp): {(time.time()-t0)/reps*1000:.2f} ms")

t0 = time.time()
from pvbdfl._ipm_py import solve
rng = np.random.default_rng(0)
pr_im = 0.1 + 0.4*rng.random(24); pr_ex = pr_im - 0.05
net = rng.random(24)*2 - 0.8
for _ in range(100):
    solve(pr_im, pr_ex, net, 1.0, 0.5, 2.0, 1.25, 1e-3, 1e-8, 200)
print(f"pure solve avg: {(time.time()-t0)/100*1000:.2f} ms")
