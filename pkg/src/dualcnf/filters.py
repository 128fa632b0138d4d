"""Square-root Gaussian filtering driven by arbitrary cubature point sets.

The engine propagates a mean plus lower-triangular covariance factor.  For
rules with nonnegative weights the covariance algebra runs entirely in
square-root form via QR triangularization of sqrt(w)-scaled deviation blocks.
Rules carrying negative weights fall back to plain covariance arithmetic with
symmetrization and jittered re-factorization, and the fallback is recorded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .rules import CubatureRule

__all__ = [
    "GaussianBelief",
    "TransitionModel",
    "ParticleCloud",
    "FilterDiverged",
    "QrFailure",
    "SingularInnovation",
    "WeightCollapse",
    "propagate_points",
    "predict",
    "update",
    "pf_step",
    "triangularize",
    "cholesky_with_jitter",
]

COND_LIMIT = 1e12


class FilterDiverged(RuntimeError):
    """Belief left the numerically trustworthy region; the step was aborted."""


class QrFailure(FilterDiverged):
    """Stacked deviation block was rank-deficient beyond tolerance."""


class SingularInnovation(FilterDiverged):
    """Innovation covariance is numerically singular."""


class WeightCollapse(RuntimeError):
    """All particle likelihoods underflowed."""


@dataclass
class GaussianBelief:
    """Mean vector plus lower-triangular square root S of the covariance."""

    mean: np.ndarray
    sqrt_cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.sqrt_cov = np.asarray(self.sqrt_cov, dtype=float)
        n = self.mean.shape[0]
        if self.sqrt_cov.shape != (n, n):
            raise ValueError("sqrt_cov must be (n, n)")
        if n == 0:
            return
        if not (np.all(np.isfinite(self.mean))
                and np.all(np.isfinite(self.sqrt_cov))):
            raise FilterDiverged("non-finite belief")
        if np.any(np.diag(self.sqrt_cov) <= 0):
            raise FilterDiverged("sqrt_cov diagonal must be strictly positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def cov(self) -> np.ndarray:
        return self.sqrt_cov @ self.sqrt_cov.T

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.mean.copy(), self.sqrt_cov.copy())


@dataclass
class TransitionModel:
    """Vectorized map applied to cubature point batches.

    ``fn`` takes an (N, dim_in) batch and returns (N, dim_out); any frozen
    context (inputs, the other filter's estimate) is bound by the caller.
    """

    dim_in: int
    dim_out: int
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        out = np.asarray(self.fn(np.atleast_2d(pts)), dtype=float)
        if out.shape != (pts.shape[0], self.dim_out):
            raise ValueError(
                f"transition returned shape {out.shape}, expected "
                f"{(pts.shape[0], self.dim_out)}")
        if not np.all(np.isfinite(out)):
            raise FilterDiverged("transition model produced non-finite values")
        return out


def triangularize(block: np.ndarray) -> np.ndarray:
    """Lower-triangular S with S S^T = block block^T, positive diagonal."""
    if not np.all(np.isfinite(block)):
        raise QrFailure("non-finite entries in QR block")
    r = np.linalg.qr(block.T, mode="r")
    s = r.T.copy()
    d = np.diag(s).copy()
    sign = np.where(d < 0, -1.0, 1.0)
    s *= sign[None, :]
    return s


def cholesky_with_jitter(p: np.ndarray, diagnostics: dict | None = None) -> np.ndarray:
    """Cholesky of a symmetrized matrix, escalating diagonal jitter on failure."""
    sym = 0.5 * (p + p.T)
    scale = max(float(np.max(np.abs(np.diag(sym)))), 1e-300)
    jitter = 0.0
    for attempt in range(7):
        try:
            return np.linalg.cholesky(sym + jitter * np.eye(len(sym)))
        except np.linalg.LinAlgError:
            jitter = scale * 10.0 ** (-12 + 2 * attempt)
            if diagnostics is not None:
                diagnostics["jitter_events"] = diagnostics.get("jitter_events", 0) + 1
    raise QrFailure("covariance could not be re-factorized even with jitter")


def propagate_points(b: GaussianBelief, rule: CubatureRule) -> np.ndarray:
    """Affine images S xi_i + mean of the rule's abscissae, one per row."""
    if rule.n != b.dim:
        raise ValueError(f"rule dimension {rule.n} != belief dimension {b.dim}")
    return rule.points @ b.sqrt_cov.T + b.mean


def _weighted_sqrt_factor(images: np.ndarray, mean: np.ndarray,
                          weights: np.ndarray, extra: np.ndarray) -> np.ndarray:
    # columns scaled by sqrt(w_i); reduces to the uniform 1/sqrt(N) scaling
    # when all weights are equal
    dev = (images - mean).T * np.sqrt(weights)[None, :]
    return triangularize(np.hstack([dev, extra]))


def _plain_cov(images: np.ndarray, mean: np.ndarray, weights: np.ndarray) -> np.ndarray:
    dev = images - mean
    return (dev * weights[:, None]).T @ dev


def predict(b: GaussianBelief, model: TransitionModel, rule: CubatureRule,
            sqrt_q: np.ndarray, diagnostics: dict | None = None,
            points: np.ndarray | None = None) -> tuple[GaussianBelief, np.ndarray]:
    """Time update: propagate the point cloud through ``model``.

    Returns the predicted belief and the propagated images.  ``points``
    overrides the default Gaussian resampling of the prior (used by the
    carried-deviation propagation strategy).
    """
    if points is None:
        points = propagate_points(b, rule)
    images = model(points)
    mean = rule.weights @ images
    if rule.has_negative_weights():
        p = _plain_cov(images, mean, rule.weights) + sqrt_q @ sqrt_q.T
        s = cholesky_with_jitter(p, diagnostics)
    else:
        s = _weighted_sqrt_factor(images, mean, rule.weights, sqrt_q)
    if np.any(np.diag(s) <= 0):
        raise QrFailure("predicted covariance factor lost rank")
    return GaussianBelief(mean, s), images


def update(pred: GaussianBelief, points: np.ndarray, z: np.ndarray,
           meas: TransitionModel, rule: CubatureRule, sqrt_r: np.ndarray,
           diagnostics: dict | None = None,
           ) -> tuple[GaussianBelief, np.ndarray, np.ndarray, np.ndarray]:
    """Measurement update from the supplied state-space points.

    ``points`` are the cubature points at the predicted density (freshly
    drawn by the caller, or carried deviations plus the predicted mean).
    Returns (posterior, innovation, sqrt innovation covariance, gain).
    """
    z = np.asarray(z, dtype=float)
    w = rule.weights
    g = meas(points)
    zhat = w @ g
    innovation = z - zhat
    dev_x = points - pred.mean
    dev_z = g - zhat
    if rule.has_negative_weights():
        pzz = _plain_cov(g, zhat, w) + sqrt_r @ sqrt_r.T
        s_zz = cholesky_with_jitter(pzz, diagnostics)
    else:
        s_zz = _weighted_sqrt_factor(g, zhat, w, sqrt_r)
        pzz = s_zz @ s_zz.T
    sv = np.linalg.svd(s_zz, compute_uv=False)
    if sv[-1] == 0 or (sv[0] / sv[-1]) ** 2 > COND_LIMIT:
        raise SingularInnovation(
            f"innovation covariance condition {np.inf if sv[-1] == 0 else (sv[0] / sv[-1]) ** 2:.3g}")
    pxz = (dev_x * w[:, None]).T @ dev_z
    # K = Pxz Pzz^-1 via the triangular factor
    k = sla.cho_solve((s_zz, True), pxz.T).T
    mean = pred.mean + k @ innovation
    if rule.has_negative_weights():
        pxx = _plain_cov(points, pred.mean, w)
        p_post = pxx - k @ pzz @ k.T
        s_post = cholesky_with_jitter(p_post, diagnostics)
    else:
        sw = np.sqrt(w)[None, :]
        block = np.hstack([dev_x.T * sw - k @ (dev_z.T * sw), k @ sqrt_r])
        s_post = triangularize(block)
    if np.any(np.diag(s_post) <= 0):
        raise QrFailure("posterior covariance factor lost rank")
    post = GaussianBelief(mean, s_post)
    if not np.all(np.isfinite(mean)):
        raise FilterDiverged("posterior mean is non-finite")
    return post, innovation, s_zz, k


# ---------------------------------------------------------------------------
# bootstrap particle filter baseline
# ---------------------------------------------------------------------------

@dataclass
class ParticleCloud:
    """Weighted particle ensemble with its own RNG stream."""

    particles: np.ndarray  # (Np, n)
    weights: np.ndarray    # (Np,), normalized
    rng: np.random.Generator = field(repr=False, default=None)

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative and normalized")

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    def estimate(self) -> np.ndarray:
        return self.weights @ self.particles


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions)


def pf_step(cloud: ParticleCloud, model: TransitionModel, meas: TransitionModel,
            z: np.ndarray, sqrt_q: np.ndarray, sqrt_r: np.ndarray) -> ParticleCloud:
    """Bootstrap step: propagate with sampled process noise, weight by the
    Gaussian likelihood, systematically resample."""
    if cloud.size < 2:
        raise ValueError("particle filter needs at least 2 particles")
    rng = cloud.rng
    noise = rng.standard_normal((cloud.size, model.dim_out)) @ sqrt_q.T
    prop = model(cloud.particles) + noise
    gz = meas(prop)
    resid = z[None, :] - gz
    # log-likelihood under N(0, R); constant factors cancel in normalization
    white = sla.solve_triangular(sqrt_r, resid.T, lower=True)
    with np.errstate(over="ignore", invalid="ignore"):
        loglik = -0.5 * np.sum(white ** 2, axis=0)
        loglik -= loglik.max()
        w = cloud.weights * np.exp(loglik)
    total = w.sum()
    if total <= 0 or not np.isfinite(total):
        raise WeightCollapse("all particle likelihoods underflowed")
    w = w / total
    idx = systematic_resample(w, rng)
    return ParticleCloud(prop[idx], np.full(cloud.size, 1.0 / cloud.size), rng)
