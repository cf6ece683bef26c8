"""Independent high-precision values frozen into the C++ unit tests.

Run with `python3 tests/oracles/derive.py`; the output is pasted into
tests/unit/frozen_values.hpp. Uses mpmath at 50 digits so the doubles printed
here are correctly rounded.
"""
from mpmath import mp, mpf, exp, log

mp.dps = 50


def lse(xs):
    return log(sum(exp(mpf(x)) for x in xs))


def gaussian_kernel(S, gamma):
    span = S - 1
    width = mpf(gamma) * span
    z = sum(exp(-4 * mpf(d) ** 2 / width**2) for d in range(-span, span + 1))
    q = [[mpf(0)] * S for _ in range(S)]
    for i in range(S):
        for j in range(S):
            if i != j:
                q[i][j] = exp(-4 * mpf(j - i) ** 2 / width**2) / z
        q[i][i] = 1 - sum(q[i][j] for j in range(S) if j != i)
    return q


def main():
    print("logsumexp(0,-1,-2) =", mp.nstr(lse([0, -1, -2]), 20))
    kl = mpf("0.25") * log(mpf("0.25") / mpf("0.5")) + mpf("0.75") * log(mpf("0.75") / mpf("0.5"))
    print("KL((0.25,0.75)||(0.5,0.5)) =", mp.nstr(kl, 20))
    q = gaussian_kernel(3, 0.05)
    for i in range(3):
        print("gaussian S=3 gamma=0.05 row", i, [mp.nstr(v, 20) for v in q[i]])
    # log10 of the smallest off-diagonal entry, to show it is far below 1e-300
    print("log10 q[0][1] =", mp.nstr(log(q[0][1]) / log(10), 12))
    print("ln q[0][1] =", mp.nstr(log(q[0][1]), 20), "ln q[0][2] =", mp.nstr(log(q[0][2]), 20))
    # A log entry of the uniform closed form at S=50, gamma=0.005, n=128.
    S, g, n = 50, mpf("0.005"), 128
    a = (1 - g * S / (S - 1)) ** n
    print("uniform S=50 g=0.005 n=128 diag =", mp.nstr(a + (1 - a) / S, 20), "off =", mp.nstr((1 - a) / S, 20))
    # AdamW single step from zero state with beta1=0.95, beta2=0.99, eps=1e-8, lr=0.1.
    gval, lr, eps = mpf("0.3"), mpf("0.1"), mpf("1e-8")
    m = (1 - mpf("0.95")) * gval / (1 - mpf("0.95"))
    v = (1 - mpf("0.99")) * gval**2 / (1 - mpf("0.99"))
    print("adamw step for g=0.3 =", mp.nstr(-lr * m / (mp.sqrt(v) + eps), 20))


if __name__ == "__main__":
    main()
