"""Regenerate the coefficient table used by dualcnf.rules.stroud_5th.

The rule uses the point pattern
    +/-(eta,...,eta),  +/-perm(lam, xi,...,xi),  +/-perm(ups, ups, gam,...,gam)
with three weight classes (w1, w2, w3).  Exactness for every monomial of
total degree <= 5 against N(0, I) yields the moment system below; for
2 <= n <= 7 it admits solutions with all-positive weights.  This script
finds one positive solution per dimension by multistart Levenberg-Marquardt
and polishes it with 60-digit damped Gauss-Newton.

Usage: python tools/derive_efficient5_constants.py [n ...]
"""

import sys

import numpy as np
from mpmath import mp, mpf, matrix, norm
from scipy.optimize import least_squares

mp.dps = 60


def moment_eqs(n, eta, lam, xi, ups, gam, w1, w2, w3):
    """Residuals of all degree <= 5 moment conditions (odd ones vanish by symmetry)."""
    e = [2 * w1 + 2 * n * w2 + n * (n - 1) * w3 - 1]
    e.append(2 * w1 * eta ** 2 + 2 * w2 * (lam ** 2 + (n - 1) * xi ** 2)
             + 2 * w3 * (n - 1) * (ups ** 2 + (n - 2) * gam ** 2 / 2) - 1)
    e.append(2 * w1 * eta ** 2 + 2 * w2 * (2 * lam * xi + (n - 2) * xi ** 2)
             + 2 * w3 * (ups ** 2 + 2 * (n - 2) * ups * gam
                         + (n - 2) * (n - 3) * gam ** 2 / 2))
    e.append(2 * w1 * eta ** 4 + 2 * w2 * (lam ** 4 + (n - 1) * xi ** 4)
             + 2 * w3 * (n - 1) * (ups ** 4 + (n - 2) * gam ** 4 / 2) - 3)
    e.append(2 * w1 * eta ** 4 + 2 * w2 * (2 * lam ** 2 * xi ** 2 + (n - 2) * xi ** 4)
             + 2 * w3 * (ups ** 4 + 2 * (n - 2) * ups ** 2 * gam ** 2
                         + (n - 2) * (n - 3) * gam ** 4 / 2) - 1)
    e.append(2 * w1 * eta ** 4
             + 2 * w2 * (lam ** 3 * xi + lam * xi ** 3 + (n - 2) * xi ** 4)
             + 2 * w3 * (ups ** 4 + (n - 2) * (ups ** 3 * gam + ups * gam ** 3)
                         + (n - 2) * (n - 3) * gam ** 4 / 2))
    if n >= 3:
        e.append(2 * w1 * eta ** 4
                 + 2 * w2 * (lam ** 2 * xi ** 2 + 2 * lam * xi ** 3 + (n - 3) * xi ** 4)
                 + 2 * w3 * (2 * ups ** 3 * gam + (n - 2) * ups ** 2 * gam ** 2
                             + 2 * (n - 3) * ups * gam ** 3
                             + (n - 3) * (n - 4) * gam ** 4 / 2))
    if n >= 4:
        e.append(2 * w1 * eta ** 4 + 2 * w2 * (4 * lam * xi ** 3 + (n - 4) * xi ** 4)
                 + 2 * w3 * (6 * ups ** 2 * gam ** 2 + 4 * (n - 4) * ups * gam ** 3
                             + (n - 4) * (n - 5) * gam ** 4 / 2))
    return e


def find_positive(n, rng, tries=6000):
    def f(p):
        e = moment_eqs(n, *p)
        return e + [0.0] * (8 - len(e))

    for _ in range(tries):
        p0 = rng.uniform(-3, 3, 8)
        p0[5:] = rng.uniform(0.002, 0.35, 3)
        try:
            res = least_squares(f, p0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        except Exception:
            continue
        if np.abs(f(res.x)).max() < 1e-10 and min(res.x[5:]) > 1e-8:
            eta, lam, xi, ups, gam, w1, w2, w3 = res.x
            eta = abs(eta)
            if lam < 0:
                lam, xi = -lam, -xi
            if ups < 0:
                ups, gam = -ups, -gam
            return [eta, lam, xi, ups, gam, w1, w2, w3]
    raise RuntimeError(f"no positive solution located for n={n}")


def polish(n, x0):
    x = matrix([mpf(repr(float(v))) for v in x0])
    for _ in range(200):
        F = matrix(moment_eqs(n, *list(x)))
        if norm(F) < mpf(10) ** (-50):
            break
        J = matrix(F.rows, 8)
        h = mpf(10) ** (-30)
        for j in range(8):
            xp = matrix(x)
            xp[j] += h
            Fp = matrix(moment_eqs(n, *list(xp)))
            for i in range(F.rows):
                J[i, j] = (Fp[i] - F[i]) / h
        JT = J.T
        A = JT * J
        for i in range(8):
            A[i, i] *= (1 + mpf(10) ** (-20))
        dx = mp.lu_solve(A, -(JT * F))
        for j in range(8):
            x[j] += dx[j]
    return list(x), norm(matrix(moment_eqs(n, *list(x))))


def main():
    dims = [int(a) for a in sys.argv[1:]] or list(range(2, 8))
    rng = np.random.default_rng(2024)
    for n in dims:
        sol = find_positive(n, rng)
        polished, res = polish(n, sol)
        print(f"n={n}  residual={mp.nstr(res, 3)}")
        for name, v in zip(("eta", "lam", "xi", "ups", "gam", "w1", "w2", "w3"), polished):
            print(f"    {name} = {mp.nstr(v, 36)}")


if __name__ == "__main__":
    main()
