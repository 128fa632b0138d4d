"""Independent reference implementations used to pin expected test values.

Everything here is deliberately written along a different path from the
library code: plain covariance Kalman algebra, brute-force monomial sums,
double-factorial Gaussian moments.
"""

from __future__ import annotations

import itertools

import numpy as np


def gaussian_monomial_moment(alpha: tuple[int, ...]) -> float:
    """E[prod x_i^a_i] for x ~ N(0, I): product of double factorials, zero
    when any exponent is odd."""
    if any(a % 2 for a in alpha):
        return 0.0
    out = 1.0
    for a in alpha:
        for k in range(a - 1, 0, -2):
            out *= k
    return out


def monomial_exponents(n: int, max_degree: int):
    for alpha in itertools.product(range(max_degree + 1), repeat=n):
        if sum(alpha) <= max_degree:
            yield alpha


def worst_moment_error(points: np.ndarray, weights: np.ndarray, degree: int) -> float:
    """Max relative error of the rule over all monomials of total degree <= degree."""
    n = points.shape[1]
    worst = 0.0
    for alpha in monomial_exponents(n, degree):
        exact = gaussian_monomial_moment(alpha)
        approx = float(weights @ np.prod(points ** np.array(alpha, dtype=float), axis=1))
        worst = max(worst, abs(approx - exact) / max(1.0, abs(exact)))
    return worst


class KalmanRef:
    """Textbook covariance-form Kalman filter for x' = A x + B u + w, z = H x + v."""

    def __init__(self, A, H, Q, R, B=None):
        self.A, self.H, self.Q, self.R = A, H, Q, R
        self.B = B

    def predict(self, x, P, u=None):
        x = self.A @ x if self.B is None else self.A @ x + self.B @ u
        P = self.A @ P @ self.A.T + self.Q
        return x, P

    def update(self, x, P, z):
        S = self.H @ P @ self.H.T + self.R
        K = P @ self.H.T @ np.linalg.inv(S)
        x = x + K @ (z - self.H @ x)
        n = len(x)
        J = np.eye(n) - K @ self.H
        P = J @ P @ J.T + K @ self.R @ K.T
        return x, P

    def step(self, x, P, z, u=None):
        x, P = self.predict(x, P, u)
        return self.update(x, P, z)


def random_linear_system(rng: np.random.Generator, n: int, m: int):
    """A stable random (A, H, Q, R) quadruple with SPD noise covariances."""
    A = rng.normal(size=(n, n))
    A *= 0.9 / max(1e-9, np.max(np.abs(np.linalg.eigvals(A))))
    H = rng.normal(size=(m, n))
    q = rng.normal(size=(n, n))
    Q = q @ q.T / n + 0.1 * np.eye(n)
    r = rng.normal(size=(m, m))
    R = r @ r.T / m + 0.1 * np.eye(m)
    return A, H, Q, R


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T / n + 0.5 * np.eye(n))
