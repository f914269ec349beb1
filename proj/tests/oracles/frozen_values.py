"""High-precision reference values frozen into the C++ test suites.

Run with `python3 tests/oracles/frozen_values.py`; needs mpmath.
"""
import mpmath as mp

mp.mp.dps = 50


def alpha_bar(t_last, T=1000, beta_start=mp.mpf("1e-4"), beta_end=mp.mpf("0.02")):
    prod = mp.mpf(1)
    for t in range(t_last + 1):
        beta = beta_start + (beta_end - beta_start) * t / (T - 1)
        prod *= 1 - beta
    return prod


def sigmoid(x):
    return 1 / (1 + mp.e ** (-x))


def weight(i, scale, u):
    return mp.e ** (sigmoid(mp.mpf(i) / scale) * (1 - u))


def two_step_fusion():
    p = [mp.mpf("0.2"), mp.mpf("0.8")]
    u = [-q * mp.log(q) for q in p]
    w = [weight(i + 1, 2, u[i]) for i in range(2)]
    raw = sum(wi * pi for wi, pi in zip(w, p))
    return raw / sum(w), raw


if __name__ == "__main__":
    print("alpha_bar[T-1] =", mp.nstr(alpha_bar(999), 20))
    print("alpha_bar[499] =", mp.nstr(alpha_bar(499), 20))
    print("max of -p ln p =", mp.nstr(1 / mp.e, 20))
    print("exp(sigmoid(1)) =", mp.nstr(weight(1, 1, 0), 20))
    y, raw = two_step_fusion()
    print("two-step fused Y (normalized) =", mp.nstr(y, 20))
    print("two-step fused Y (raw sum) =", mp.nstr(raw, 20))
