"""Generates tests/oracles/oracle_data.hpp: fixed inputs and expected values
computed with numpy / scikit-learn, independent of the C++ code."""
import numpy as np
from sklearn.linear_model import Lasso

rng = np.random.default_rng(20240611)
out = []


def emit(name, arr):
    a = np.atleast_1d(np.asarray(arr, dtype=float))
    if a.ndim == 1:
        body = ", ".join(repr(float(v)) for v in a)
        out.append(f"inline const std::vector<double> {name} = {{{body}}};")
    else:
        rows = ",\n    ".join("{" + ", ".join(repr(float(v)) for v in r) + "}" for r in a)
        out.append(f"inline const std::vector<std::vector<double>> {name} = {{\n    {rows}}};")


def scalar(name, v):
    out.append(f"inline constexpr double {name} = {float(v)!r};")


# moments
R = rng.normal(0.1, 1.0, size=(8, 3))
emit("kMomR", R)
mu = R.mean(0)
S = np.cov(R, rowvar=False, ddof=1)
emit("kMomMean", mu)
emit("kMomCov", S)
theta = mu @ np.linalg.solve(S, mu)
scalar("kMomTheta", theta)
scalar("kMomKanZhou", max(((8 - 3 - 2) * theta - 3) / 8, 1e-6))

# lasso: objective (1/T)|z - X b|^2 + 2 lam sum g_j |b_j| equals 2x sklearn's with alpha = lam
T, P = 20, 5
X = rng.normal(size=(T, P))
z = X @ np.array([1.0, -0.5, 0.0, 0.0, 0.25]) + 0.3 * rng.normal(size=T)
emit("kLassoX", X)
emit("kLassoZ", z)
lams = [0.3, 0.05, 0.01]
emit("kLassoLambdas", lams)
for k, lam in enumerate(lams):
    m = Lasso(alpha=lam, fit_intercept=False, tol=1e-14, max_iter=1_000_000).fit(X, z)
    emit(f"kLassoBeta{k}", m.coef_)
gam = np.array([1.0, 2.0, 0.5, 1.5, 3.0])
emit("kLassoGamma", gam)
m = Lasso(alpha=0.05, fit_intercept=False, tol=1e-14, max_iter=1_000_000).fit(X / gam, z)
emit("kLassoWeightedBeta", m.coef_ / gam)
emit("kLassoOls", np.linalg.lstsq(X, z, rcond=None)[0])

# portfolio: estimators on a fixed panel
T, N, K = 30, 6, 2
R = rng.normal(0.05, 0.2, size=(T, N)) + np.linspace(0.0, 0.05, N)
F = rng.normal(0.03, 0.1, size=(T, K))
emit("kPortR", R)
emit("kPortF", F)
sel = [0, 2, 5]
rho = 0.05


def theta_plugin(B):
    m = B.mean(0)
    return m @ np.linalg.solve(np.cov(B, rowvar=False, ddof=1), m)


def ols(B, th):
    rc = rho * (1 + th) / th
    return rc * np.linalg.solve(B.T @ B, B.T @ np.ones(B.shape[0]))


B = R[:, sel]
emit("kPortOls", ols(B, theta_plugin(B)))
m = B.mean(0)
Sb = np.cov(B, rowvar=False, ddof=1)
emit("kPortPlugin", rho / theta_plugin(B) * np.linalg.solve(Sb, m))
ell = 20
B2 = np.hstack([R[-ell:, sel], F[-ell:]])
ths = theta_plugin(B2)
d = B2.shape[1]
thk = max(((ell - d - 2) * ths - d) / ell, 1e-6)
emit("kPortFps2", ols(B2, thk))

# population formulas
A = rng.normal(size=(4, 2))
Sx = np.array([[1.0, 0.2], [0.2, 0.5]])
mux = np.array([0.1, 0.05])
L = rng.normal(size=(4, 4))
Su = L @ L.T + 4 * np.eye(4)
muu = np.array([0.3, 0.0, -0.1, 0.2])
emit("kPopA", A)
emit("kPopSx", Sx)
emit("kPopMux", mux)
emit("kPopSu", Su)
emit("kPopMuu", muu)
mu = A @ mux + muu
Sig = A @ Sx @ A.T + Su
th = mu @ np.linalg.solve(Sig, mu)
emit("kPopMvp", rho / th * np.linalg.solve(Sig, mu))
emit("kPopBj", rho / (1 + th) * np.linalg.solve(Sig, mu))
emit("kPopBeta", 0.05 * np.linalg.solve(Sig + np.outer(mu, mu), mu))
mu_aug = np.concatenate([mu, mux])
S_aug = np.block([[Sig, A @ Sx], [Sx @ A.T, Sx]])
th_aug = mu_aug @ np.linalg.solve(S_aug, mu_aug)
emit("kPopAug", rho / th_aug * np.linalg.solve(S_aug, mu_aug))
scalar("kPopThetaAug", th_aug)
w = np.array([0.2, -0.1, 0.4, 0.05])
emit("kPopW", w)
scalar("kPopSharpe", w @ mu / np.sqrt(w @ Sig @ w))

# defactor
T, N, K = 25, 4, 2
R = rng.normal(0.1, 1.0, size=(T, N))
F = rng.normal(0.2, 1.0, size=(T, K))
emit("kDefR", R)
emit("kDefF", F)
Fc = F - F.mean(0)
At = np.linalg.solve(Fc.T @ Fc, Fc.T @ R)
emit("kDefLoadings", At.T)
emit("kDefResidual", R - F @ At)

# backtest toy: 3 periods, 2 assets + 1 factor, 4 weight vectors
W = np.array([[0.5, 0.3, 0.2], [0.4, 0.4, 0.1], [0.0, 0.6, 0.3], [0.2, 0.2, 0.2]])
Rt = np.array([[0.01, -0.02, 0.005], [0.03, 0.01, -0.01], [-0.02, 0.02, 0.015]])
rf = np.array([0.001, 0.0005, 0.0])
tau = 0.001
emit("kBtW", W)
emit("kBtR", Rt)
emit("kBtRf", rf)
gross, net, turn = [], [], []
for t in range(3):
    g = W[t] @ Rt[t]
    plus = W[t] * (1 + Rt[t] + rf[t]) / (1 + g + rf[t])
    to = np.abs(W[t + 1] - plus).sum()
    gross.append(g)
    turn.append(to)
    net.append(g - tau * (1 + g) * to)
emit("kBtGross", gross)
emit("kBtNet", net)
emit("kBtTurnover", turn)
scalar("kBtGrossSr", np.mean(gross) / np.std(gross))
scalar("kBtNetSr", np.mean(net) / np.std(net))

header = ["#pragma once", "", "// Generated by make_oracles.py; do not edit.", "", "#include <vector>", "",
          "namespace oracle {", ""]
with open(__file__.replace("make_oracles.py", "oracle_data.hpp"), "w") as f:
    f.write("\n".join(header + out + ["", "}  // namespace oracle", ""]))
