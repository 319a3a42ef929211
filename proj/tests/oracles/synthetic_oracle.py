"""Independent Monte-Carlo oracle for the synthetic DGP.

Computes population ADCF values psi(a) = E[theta(X, a)] with numpy, separately
from the C++ implementation, so the frozen fixtures in the test suite have an
independent source.
"""
import numpy as np


def mu_tilde(x, a, gamma0):
    m = np.maximum(x[:, 0], x[:, 5])
    return 2.0 * (a + gamma0) * np.sin(x[:, 3]) * (a + 4.0 * m**3) / (1.0 + 2.0 * x[:, 2] ** 2)


def a_tilde_mean(x):
    x1, x2, x3, x4, x5 = (x[:, i] for i in range(5))
    return (10.0 * (np.sin(np.maximum(np.maximum(x1, x2), x3)) + np.maximum(np.maximum(x3, x4), x5) ** 3)
            / (1.0 + (x1 + x5) ** 2)
            + np.sin(0.5 * x3) * (1.0 + np.exp(x4 - 0.5 * x3)) + x3**2 + 2.0 * np.sin(x4) + 2.0 * x5 - 6.5)


def main():
    rng = np.random.default_rng(20240611)
    n = 4_000_000
    x = rng.uniform(size=(n, 6))
    out = {}
    for fam, g0, lo, hi in (("bernoulli", -0.5, -np.inf, np.inf), ("poisson", 0.5, -4.0, 4.0)):
        for a in (0.0, 1.0):
            th = np.clip(mu_tilde(x, a, g0), lo, hi)
            out[(fam, a)] = (th.mean(), th.std(ddof=1) / np.sqrt(n))
        d = np.clip(mu_tilde(x, 1.0, g0), lo, hi) - np.clip(mu_tilde(x, 0.0, g0), lo, hi)
        out[(fam, "ate")] = (d.mean(), d.std(ddof=1) / np.sqrt(n))
    for k, (v, se) in out.items():
        print(f"{k}: {v:.6f} +- {se:.6f}")
    f = a_tilde_mean(x[:200000])
    p = 1 / (1 + np.exp(-f))
    print("f range", f.min(), f.max(), "p quantiles", np.quantile(p, [0, .01, .05, .5, .95, .99, 1]))


if __name__ == "__main__":
    main()
