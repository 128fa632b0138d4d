"""Cubature point/weight constructors for Gaussian-weighted integrals.

Every rule is stored in unit-Gaussian form: abscissae live in N(0, I) space,
weights sum to one.  Construction is pure and deterministic; rule objects are
immutable and safe to share between filter instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "SphericalRule",
    "RadialRule",
    "CubatureRule",
    "RuleConstructionError",
    "DimensionOutOfRange",
    "genz_spherical",
    "mysovskikh_spherical",
    "radial_moment_match",
    "compose_spherical_radial",
    "stroud_5th",
    "ukf_sigma_set",
    "stability_factor",
    "moller_lower_bound",
    "make_rule",
    "RULE_KINDS",
]

RULE_KINDS = ("CNF-I", "CNF-II", "CNF-III", "CNF-IV", "CNF-V", "CNF-VI", "UKF")


class RuleConstructionError(ValueError):
    """A point/weight set could not be built for the requested (kind, n, d)."""


class DimensionOutOfRange(RuleConstructionError):
    """Requested dimension outside the validity range of the construction."""


def surface_area(n: int) -> float:
    """Surface area of the unit sphere U_n embedded in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SphericalRule:
    """Points on the unit sphere with surface-measure weights."""

    points: np.ndarray   # (Ns, n), unit-norm rows
    weights: np.ndarray  # (Ns,), sums to surface_area(n)
    degree: int

    def __post_init__(self):
        object.__setattr__(self, "points", _freeze(self.points))
        object.__setattr__(self, "weights", _freeze(self.weights))
        n = self.points.shape[1]
        norms = np.linalg.norm(self.points, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise RuleConstructionError("spherical points must have unit norm")
        area = surface_area(n)
        if abs(self.weights.sum() - area) > 1e-10 * area:
            raise RuleConstructionError("spherical weights must sum to the surface area")

    @property
    def n(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class RadialRule:
    """Abscissae/weights for the radial integral with weight r^{n-1} exp(-r^2)."""

    radii: np.ndarray    # (Nr,), nonnegative, distinct
    weights: np.ndarray  # (Nr,)
    degree: int

    def __post_init__(self):
        object.__setattr__(self, "radii", _freeze(self.radii))
        object.__setattr__(self, "weights", _freeze(self.weights))
        if np.any(self.radii < 0):
            raise RuleConstructionError("radii must be nonnegative")
        if len(set(self.radii.tolist())) != self.radii.size:
            raise RuleConstructionError("radii must be distinct")


@dataclass(frozen=True)
class CubatureRule:
    """Unit-Gaussian cubature: sum(w) = 1, sum(w xi) = 0, sum(w xi xi^T) = I."""

    points: np.ndarray   # (N, n)
    weights: np.ndarray  # (N,)
    degree: int
    kind: str
    n: int
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "points", _freeze(self.points))
        object.__setattr__(self, "weights", _freeze(self.weights))
        w, xi = self.weights, self.points
        if abs(w.sum() - 1.0) > 1e-12:
            raise RuleConstructionError(f"{self.kind}: weights sum to {w.sum()!r}, not 1")
        if np.max(np.abs(w @ xi)) > 1e-12:
            raise RuleConstructionError(f"{self.kind}: rule is not centered")
        second = (xi * w[:, None]).T @ xi
        if np.max(np.abs(second - np.eye(self.n))) > 1e-10:
            raise RuleConstructionError(f"{self.kind}: second moment is not the identity")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def has_negative_weights(self) -> bool:
        return bool(np.any(self.weights < 0))


# ---------------------------------------------------------------------------
# spherical rules
# ---------------------------------------------------------------------------

def _signed_permutations(magnitudes: tuple[float, ...], n: int) -> np.ndarray:
    """All distinct coordinate assignments and sign flips of a magnitude multiset.

    Emission order is canonical: permutations sorted descending, then sign
    patterns in binary-counter order (all-plus first).
    """
    base = tuple(magnitudes) + (0.0,) * (n - len(magnitudes))
    perms = sorted(set(itertools.permutations(base)), reverse=True)
    out = []
    for perm in perms:
        nz = [i for i, v in enumerate(perm) if v != 0.0]
        for mask in range(2 ** len(nz)):
            p = list(perm)
            for b, i in enumerate(nz):
                if (mask >> b) & 1:
                    p[i] = -p[i]
            out.append(p)
    return np.array(out, dtype=float)


def _surface_monomial_moment(exponents: tuple[int, ...], n: int) -> float:
    """Integral of prod_i s_i^{alpha_i} over U_n (zero for any odd exponent)."""
    if any(e % 2 for e in exponents):
        return 0.0
    alpha = tuple(exponents) + (0,) * (n - len(exponents))
    num = 2.0 * math.prod(math.gamma((e + 1) / 2.0) for e in alpha)
    return num / math.gamma(sum((e + 1) / 2.0 for e in alpha))


def _even_exponent_classes(d: int) -> list[tuple[int, ...]]:
    """Even-exponent monomial shapes of total degree <= d, one per symmetry class."""
    classes: list[tuple[int, ...]] = []
    for total in range(0, d + 1, 2):
        for parts in _even_partitions(total):
            classes.append(parts)
    return classes


def _even_partitions(total: int) -> list[tuple[int, ...]]:
    if total == 0:
        return [()]
    out = []

    def rec(remaining, maxpart, acc):
        if remaining == 0:
            out.append(tuple(acc))
            return
        for p in range(min(remaining, maxpart), 1, -2):
            if p % 2 == 0:
                rec(remaining - p, p, acc + [p])

    rec(total, total, [])
    return out


def _solve_class_weights(point_classes: list[np.ndarray], n: int, d: int,
                         what: str) -> list[float]:
    """Per-point weights for symmetric point classes by surface-moment matching."""
    exps = _even_exponent_classes(d)
    if len(exps) < len(point_classes):
        raise RuleConstructionError(f"{what}: moment system is underdetermined")
    A = np.zeros((len(exps), len(point_classes)))
    b = np.zeros(len(exps))
    for i, shape in enumerate(exps):
        alpha = np.array(shape + (0,) * (n - len(shape)), dtype=float)
        b[i] = _surface_monomial_moment(shape, n)
        for j, pts in enumerate(point_classes):
            A[i, j] = np.sum(np.prod(pts ** alpha, axis=1))
    # minimum-norm solve; rank deficiency is acceptable only when the system
    # stays consistent (coincident point classes split the weight evenly)
    sol, residual, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if np.max(np.abs(A @ sol - b)) > 1e-9 * max(1.0, np.max(np.abs(b))):
        raise RuleConstructionError(
            f"{what}: singular/inconsistent moment system for n={n}, d={d} "
            f"(rank {rank}, {len(point_classes)} classes)")
    return [float(v) for v in sol]


def genz_spherical(n: int, d: int) -> SphericalRule:
    """Fully symmetric spherical rule from rational-direction generators.

    Directions are u(rho) with u_p = sqrt(rho_p / m) over nonnegative integer
    vectors |rho| = m, d = 2m + 1; class weights are resolved by matching the
    symmetric monomial moments over U_n.
    """
    if n < 1:
        raise RuleConstructionError("dimension must be >= 1")
    if d % 2 == 0:
        raise RuleConstructionError(f"degree must be odd, got {d}")
    if d < 3 or d > 5:
        raise RuleConstructionError(f"spherical rule degree {d} unsupported (3 or 5)")
    m = (d - 1) // 2
    # one generator class per partition of m: rho entries sqrt(rho_p/m)
    shapes: list[tuple[float, ...]] = []
    for parts in _partitions(m, n):
        shapes.append(tuple(math.sqrt(p / m) for p in parts))
    classes = [_signed_permutations(s, n) for s in shapes]
    wts = _solve_class_weights(classes, n, d, "genz_spherical")
    points = np.vstack(classes)
    weights = np.concatenate([np.full(len(c), w) for c, w in zip(classes, wts)])
    return SphericalRule(points, weights, d)


def _partitions(m: int, maxlen: int) -> list[tuple[int, ...]]:
    """Integer partitions of m with at most maxlen parts, descending parts."""
    out = []

    def rec(remaining, maxpart, acc):
        if remaining == 0:
            out.append(tuple(acc))
            return
        if len(acc) == maxlen:
            return
        for p in range(min(remaining, maxpart), 0, -1):
            rec(remaining - p, p, acc + [p])

    rec(m, m, [])
    return sorted(out, reverse=True)


def _simplex_vertices(n: int) -> np.ndarray:
    """Unit vertices a^(p) of a regular simplex: sum_p a^(p) = 0, |a^(p)| = 1."""
    a = np.zeros((n + 1, n))
    for p in range(1, n + 2):
        for i in range(1, n + 1):
            if i < p:
                a[p - 1, i - 1] = -math.sqrt(
                    (n + 1.0) / (n * (n - i + 2.0) * (n - i + 1.0)))
            elif i == p:
                a[p - 1, i - 1] = math.sqrt(
                    (n + 1.0) * (n - p + 1.0) / (n * (n - p + 2.0)))
    return a


def mysovskikh_spherical(n: int, d: int) -> SphericalRule:
    """Spherical rule on regular-simplex vertices (d=3) plus projected edge
    midpoints (d=5)."""
    if n < 2:
        raise RuleConstructionError("dimension must be >= 2")
    if d not in (3, 5):
        raise RuleConstructionError(f"simplex spherical rule needs d in {{3, 5}}, got {d}")
    a = _simplex_vertices(n)
    apts = np.vstack([np.vstack([v, -v]) for v in a])
    if d == 3:
        w = surface_area(n) / (2.0 * (n + 1))
        return SphericalRule(apts, np.full(len(apts), w), 3)
    mids = []
    for p, q in itertools.combinations(range(n + 1), 2):
        b = a[p] + a[q]
        mids.append(b / np.linalg.norm(b))
    bpts = np.vstack([np.vstack([v, -v]) for v in mids])
    wa, wb = _solve_class_weights([apts, bpts], n, 5, "mysovskikh_spherical")
    points = np.vstack([apts, bpts])
    weights = np.concatenate([np.full(len(apts), wa), np.full(len(bpts), wb)])
    return SphericalRule(points, weights, 5)


# ---------------------------------------------------------------------------
# radial rules
# ---------------------------------------------------------------------------

def radial_moment_match(n: int, d: int) -> RadialRule:
    """Radial abscissae/weights satisfying sum(w r^l) = Gamma((n+l)/2)/2 for
    l = 0, 2, ..., d-1."""
    if n < 1:
        raise RuleConstructionError("dimension must be >= 1")
    g = math.gamma(n / 2.0)
    if d == 3:
        return RadialRule(np.array([math.sqrt(n / 2.0)]),
                          np.array([0.5 * g]), 3)
    if d == 5:
        # two-point rule with a node at the origin
        r1 = math.sqrt((n + 2.0) / 2.0)
        w1 = n * g / (2.0 * (n + 2.0))
        w0 = g / (n + 2.0)
        return RadialRule(np.array([0.0, r1]), np.array([w0, w1]), 5)
    raise RuleConstructionError(f"radial rule degree {d} unsupported (3 or 5)")


# ---------------------------------------------------------------------------
# composition and whole-space rules
# ---------------------------------------------------------------------------

def compose_spherical_radial(s: SphericalRule, r: RadialRule, n: int,
                             kind: str = "custom") -> CubatureRule:
    """Tensor the spherical and radial rules into a unit-Gaussian cubature.

    Zero-radius shells collapse to a single center point carrying the whole
    shell weight. The center, when present, is emitted first.
    """
    if s.n != n:
        raise RuleConstructionError(
            f"spherical rule dimension {s.n} does not match n={n}")
    norm = math.pi ** (n / 2.0)
    pts: list[np.ndarray] = []
    wts: list[np.ndarray] = []
    center_weight = 0.0
    for rq, wr in zip(r.radii, r.weights):
        if rq == 0.0:
            center_weight += wr * s.weights.sum() / norm
            continue
        pts.append(math.sqrt(2.0) * rq * s.points)
        wts.append(wr * s.weights / norm)
    if center_weight:
        pts.insert(0, np.zeros((1, n)))
        wts.insert(0, np.array([center_weight]))
    points = np.vstack(pts)
    weights = np.concatenate(wts)
    weights = weights / weights.sum()
    degree = min(s.degree, r.degree)
    return CubatureRule(points, weights, degree, kind, n,
                        provenance=f"spherical(d={s.degree}) x radial(d={r.degree})")


# Degree-5 rule over the whole space on the pattern
#   +/-(eta,...,eta), +/-perm(lam, xi,...,xi), +/-perm(ups, ups, gam,...,gam),
# N = n^2 + n + 2.  The coefficient table below solves the full degree-5
# moment system for N(0, I) (all cross-moment conditions included) with every
# weight positive; real solutions exist only for 2 <= n <= 7.  Values were
# polished with 60-digit Newton iteration; regenerate with
# tools/derive_efficient5_constants.py.  Columns: eta, lam, xi, ups, gam,
# w1, w2, w3.
_STROUD5_COEFFS: dict[int, tuple[float, ...]] = {
    2: (0.4243287668202191823475481130735225,
        1.931851652578136573499486399457795,
        -0.5176380902050415246977976752480967,
        1.686461439177547663786000651998801,
        0.0,
        0.2933016248277159532195300490411118,
        0.08333333333333333333333333333333333,
        0.04003170850561738011380328429222155),
    3: (0.06526154872999999356775191472479491,
        0.08268335277474065500308235455625627,
        -1.584448274029512581899029542665114,
        0.6537914709805603437383606100862993,
        -2.033366600362113518952207525248481,
        0.2010208304694453002773102932081388,
        0.04944843762935888326724329991886816,
        0.05021128554749268330698660234508556),
    4: (0.7409710558966915342877523390344046,
        1.689048750915741356998921285929006,
        -0.5630162503052471189996404286430021,
        2.625852874901388985366713614446105,
        -0.4505251277403141115993122494906178,
        0.155502116982036553896976930896078,
        0.07775105849101827694848846544803901,
        0.005582274842315056384844867885294326),
    5: (0.8702639328851419507130955959569295,
        1.531309275116014269355198150833032,
        -0.6003933020002890550170734366974905,
        2.510568938473976494399689650904895,
        -0.4606979840266241065302285004822456,
        0.07264150244149051995242403208017937,
        0.07264150244149051995242403208017937,
        0.006415098535105688028545580751892376),
    6: (1.414213562373095048801688724209698,
        2.0,
        0.0,
        1.414213562373095048801688724209698,
        -1.414213562373095048801688724209698,
        0.0078125,
        0.0625,
        0.0078125),
    7: (0.0,
        1.35725514771320524408590934624539018,
        -1.09223459506997285411137472846050121,
        1.99707136021210968350198095929076133,
        -0.45241838257106841469530311541513006,
        0.1111111111111111111111111111111111111,
        0.01388888888888888888888888888888888889,
        0.01388888888888888888888888888888888889),
}


def stroud_5th(n: int) -> CubatureRule:
    """Efficient 5th-degree rule with n^2 + n + 2 points and positive weights."""
    if n < 2 or n > 7:
        raise DimensionOutOfRange(
            f"efficient 5th-degree rule only exists for 2 <= n <= 7, got {n}")
    eta, lam, xi, ups, gam, w1, w2, w3 = _STROUD5_COEFFS[n]
    pts = [np.full((1, n), eta)]
    for j in range(n):
        v = np.full(n, xi)
        v[j] = lam
        pts.append(v[None, :])
    for j, k in itertools.combinations(range(n), 2):
        v = np.full(n, gam)
        v[j] = ups
        v[k] = ups
        pts.append(v[None, :])
    half = np.vstack(pts)
    points = np.empty((2 * len(half), n))
    points[0::2] = half
    points[1::2] = -half
    weights = np.repeat(
        np.concatenate([np.array([w1]), np.full(n, w2),
                        np.full(n * (n - 1) // 2, w3)]), 2)
    return CubatureRule(points, weights, 5, "CNF-VI", n,
                        provenance="efficient-5th(n^2+n+2)")


def ukf_sigma_set(n: int, kappa: float | None = None) -> CubatureRule:
    """Classic 2n+1 sigma-point set; default kappa = 3 - n."""
    if kappa is None:
        kappa = 3.0 - n
    c = n + kappa
    if c == 0:
        raise RuleConstructionError("n + kappa must be nonzero")
    if c < 0:
        raise RuleConstructionError("n + kappa must be positive for real points")
    scale = math.sqrt(c)
    points = np.vstack([np.zeros((1, n)), scale * np.eye(n), -scale * np.eye(n)])
    weights = np.concatenate([[kappa / c], np.full(2 * n, 1.0 / (2.0 * c))])
    return CubatureRule(points, weights, 3, "UKF", n,
                        provenance=f"ukf(kappa={kappa})")


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def stability_factor(rule: CubatureRule) -> float:
    """sum|w| / sum(w); equals 1 exactly when no weight is negative."""
    total = rule.weights.sum()
    if total == 0:
        raise ValueError("weights sum to zero")
    return float(np.abs(rule.weights).sum() / total)


def moller_lower_bound(n: int, d: int) -> int:
    """Minimum node count of any degree-d cubature (d = 2s - 1), by parity of s."""
    if d % 2 == 0:
        raise ValueError(f"degree must be odd, got {d}")
    s = (d + 1) // 2
    if s % 2 == 0:
        val = Fraction(math.comb(n + s - 1, n))
        for k in range(1, n):
            val += Fraction(2) ** (k - n) * math.comb(k + s - 1, k)
    else:
        val = Fraction(math.comb(n + s - 1, n))
        for k in range(1, n):
            val += (1 - Fraction(2) ** (k - n)) * math.comb(k + s - 2, k)
    if val.denominator != 1:
        raise ArithmeticError(f"node bound for n={n}, d={d} is not an integer")
    return int(val)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def make_rule(kind: str, n: int) -> CubatureRule:
    """Build a rule from the catalog: CNF-I..CNF-VI or UKF."""
    key = kind.upper()
    if not key.startswith(("CNF", "UKF")):
        key = "CNF-" + key
    if key == "CNF-I":
        r = compose_spherical_radial(genz_spherical(n, 3),
                                     radial_moment_match(n, 3), n, "CNF-I")
    elif key == "CNF-II":
        r = compose_spherical_radial(genz_spherical(n, 5),
                                     radial_moment_match(n, 5), n, "CNF-II")
    elif key == "CNF-III":
        r = compose_spherical_radial(mysovskikh_spherical(n, 3),
                                     radial_moment_match(n, 3), n, "CNF-III")
    elif key == "CNF-IV":
        r = compose_spherical_radial(mysovskikh_spherical(n, 5),
                                     radial_moment_match(n, 5), n, "CNF-IV")
    elif key == "CNF-V":
        # mixture degree: 3rd-degree simplex sphere, 5th-degree radial
        r = compose_spherical_radial(mysovskikh_spherical(n, 3),
                                     radial_moment_match(n, 5), n, "CNF-V")
    elif key == "CNF-VI":
        return stroud_5th(n)
    elif key == "UKF":
        return ukf_sigma_set(n)
    else:
        raise RuleConstructionError(f"unknown rule kind {kind!r}")
    return r


def expected_point_count(kind: str, n: int) -> int:
    """Closed-form node counts for the catalog."""
    key = kind.upper()
    counts = {
        "CNF-I": 2 * n,
        "CNF-II": 2 * n * n + 1,
        "CNF-III": 2 * n + 2,
        "CNF-IV": n * n + 3 * n + 3,
        "CNF-V": 2 * n + 3,
        "CNF-VI": n * n + n + 2,
        "UKF": 2 * n + 1,
    }
    if key not in counts:
        raise KeyError(kind)
    return counts[key]
