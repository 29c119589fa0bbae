"""Perron root machinery for tilted transition matrices.

For an environment with tilted moments m_ij(theta), let rho(theta) denote the
dominant eigenvalue of the K x K matrix (m_ij(theta)).  Everything downstream
derives from log rho and its derivative d(theta) = rho'(theta)/rho(theta)
(the per-generation mean of log box size under the theta-tilted law):

    psi(theta) = log rho - theta * d          box-count exponent
    phi(theta) = log rho - (theta - 1) * d    size-biased window rate
    f = psi                                   (random-environment analogue)

and the decay constants of the extreme boxes,

    c(theta) = rho / (-rho') = -1 / d,

whose one-sided limits give the smallest-box constant (saturation levels) and
the largest-box constant (heights in the large-threshold regime).

Internally every evaluation is carried out on a rescaled matrix
B = exp(L - s) with L = (ln m_ij) and s = max L, so that extreme tilts
(|theta| up to 2^14 during limit-taking) never overflow; eigenvectors are
unaffected by the scaling and log rho = s + log rho(B).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .envs import EnvironmentModel, dlog_moment_matrix, log_moment_matrix
from .errors import (
    ConditionsNotMet,
    DomainTooNarrow,
    NoConvergence,
    NotStrictlyConvex,
    OutsideRegime,
    ThetaOutOfDomain,
    ZOutOfRange,
)

_RAYLEIGH_TOL = 1e-13
_RESIDUAL_TOL = 1e-10
_MAX_ITER = 100_000
_DOUBLING_KS = range(4, 15)          # theta = +-2^4 .. +-2^14 for one-sided limits
_LIMIT_RTOL = 1e-6
_GRID_POINTS = 512
_ENTRY_CLIP_LOG = math.log(1e12)     # working grids avoid moments above 1e12
_CONVEXITY_EPS = 1e-9
_ROOT_XTOL = 1e-10


@dataclass(frozen=True)
class TiltedMatrix:
    """Entrywise tilted moment matrix; entry (i,j) is 0 exactly off the support."""

    K: int
    theta: float
    entries: np.ndarray


@dataclass(frozen=True)
class PerronTriplet:
    """Dominant eigenvalue with right/left eigenvectors, w.v = 1, ||v||_1 = 1.

    residual is the larger of the two relative eigen-residuals in max norm.
    """

    rho: float
    v: np.ndarray
    w: np.ndarray
    residual: float


@dataclass(frozen=True)
class ShapeValues:
    theta: float
    log_rho: float
    drift: float          # rho'/rho, nats per generation (negative)
    psi: float
    phi: float
    f: float


@dataclass(frozen=True)
class ConstantsReport:
    domain_lo: float
    domain_hi: float
    c_star_lower: float            # smallest-box decay constant (saturation slope)
    c_star_upper: float            # largest-box decay constant (height slope, large j)
    theta_star_lower: float        # left endpoint of {f > 0} (may be -inf)
    theta_star_upper: float        # right endpoint of {f > 0} (may be +inf)
    condition_saturation_ok: bool
    notes: str


@dataclass(frozen=True)
class SpectralProfile:
    thetas: np.ndarray
    shapes: tuple                   # ShapeValues per grid point, ascending theta
    triplets: tuple                 # PerronTriplet per grid point
    constants: ConstantsReport


# --------------------------------------------------------------------------
# eigen-solver
# --------------------------------------------------------------------------

def _power_pair(B: np.ndarray, max_iter: int = _MAX_ITER) -> tuple:
    """Power-iterate B and B^T with per-step max scaling.

    The iteration runs on B + s*I (s = the largest entry): the shift shares
    B's eigenvectors but keeps the dominant eigenvalue well separated even
    when B itself has a nearly balancing negative or complex subdominant
    eigenvalue (near-periodic tilts).  Converges when successive generalized
    Rayleigh quotients differ by less than 1e-13 relatively and both
    eigen-residuals of B itself are below 1e-10 in relative max norm.
    """
    K = B.shape[0]
    shift = float(B.max())
    v = np.full(K, 1.0 / K)
    w = np.full(K, 1.0 / K)
    prev = None
    for _ in range(max_iter):
        v = B @ v + shift * v
        v /= v.max()
        w = B.T @ w + shift * w
        w /= w.max()
        wv = w @ v
        est = (w @ (B @ v)) / wv
        rv = np.abs(B @ v - est * v).max() / np.abs(v).max()
        rw = np.abs(B.T @ w - est * w).max() / np.abs(w).max()
        if (
            prev is not None
            and abs(est - prev) <= _RAYLEIGH_TOL * abs(est)
            and rv <= _RESIDUAL_TOL
            and rw <= _RESIDUAL_TOL
        ):
            v = v / v.sum()
            w = w / (w @ v)
            return float(est), v, w, float(max(rv, rw))
        prev = est
    raise NoConvergence(
        f"power iteration did not reach tolerance within {max_iter} iterations"
    )


@dataclass(frozen=True)
class _Point:
    """One rescaled spectral evaluation at a fixed theta."""

    theta: float
    log_rho: float
    drift: float
    v: np.ndarray
    w: np.ndarray
    residual: float


def _point(env: EnvironmentModel, theta: float, max_iter: int = _MAX_ITER) -> _Point:
    L = log_moment_matrix(env, theta)
    sup = env.support
    s = L[sup].max()
    B = np.where(sup, np.exp(L - s), 0.0)
    rho_b, v, w, resid = _power_pair(B, max_iter=max_iter)
    D = dlog_moment_matrix(env, theta)
    drift = float(w @ ((D * B) @ v)) / rho_b
    return _Point(theta, s + math.log(rho_b), drift, v, w, resid)


_SQUARINGS = 48


def _log_rho_squaring(env: EnvironmentModel, theta: float) -> float:
    """log rho via repeated matrix squaring, no eigenvectors.

    After P rescaled squarings, log rho = (g + log rho(C)) / 2^P with C the
    rescaled power; bounding rho(C) by its extreme row sums leaves an error
    below ~1e-12.  This stays well-posed where power iteration cannot
    converge: at extreme tilts the matrix approaches a periodic one (the
    dominant cycle) and its spectral gap closes.
    """
    L = log_moment_matrix(env, theta)
    sup = env.support
    s = L[sup].max()
    C = np.where(sup, np.exp(L - s), 0.0)
    g = 0.0
    for _ in range(_SQUARINGS):
        C = C @ C
        m = C.max()
        if m <= 0.0:
            return -math.inf
        C /= m
        g = 2.0 * g + math.log(m)
    rows = C.sum(axis=1)
    est = math.log(max(float(rows.max()), 1e-300))
    return s + (g + est) / 2.0 ** _SQUARINGS


_FAST_ITER = 5000


def _eval(env: EnvironmentModel, theta: float) -> tuple:
    """(log rho, drift), robust across the whole tilt range.

    Fast path: power iteration plus the eigenvalue perturbation identity.
    Fallback when the spectral gap is too small for iteration: squaring-based
    log rho with a central finite difference for the drift.
    """
    try:
        pt = _point(env, theta, max_iter=_FAST_ITER)
        return pt.log_rho, pt.drift
    except NoConvergence:
        h = 1e-4
        lr = _log_rho_squaring(env, theta)
        drift = (
            _log_rho_squaring(env, theta + h) - _log_rho_squaring(env, theta - h)
        ) / (2.0 * h)
        return lr, drift


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------

def tilted_matrix(env: EnvironmentModel, theta: float) -> TiltedMatrix:
    """Entrywise theta-th moments of the transition row law."""
    L = log_moment_matrix(env, theta)      # raises ThetaOutOfDomain
    with np.errstate(over="ignore"):
        entries = np.where(env.support, np.exp(L), 0.0)
    if not np.isfinite(entries[env.support]).all():
        i, j = np.argwhere(~np.isfinite(np.where(env.support, entries, 0.0)))[0]
        raise ThetaOutOfDomain(
            f"tilted entry ({i + 1},{j + 1}) overflows the float range at theta={theta!r}",
            entry=(int(i) + 1, int(j) + 1),
        )
    return TiltedMatrix(K=env.K, theta=theta, entries=entries)


def perron_triplet(matrix: TiltedMatrix) -> PerronTriplet:
    rho, v, w, resid = _power_pair(matrix.entries)
    return PerronTriplet(rho=rho, v=v, w=w, residual=resid)


def rho_prime(env: EnvironmentModel, theta: float) -> float:
    """rho'(theta) via the eigenvalue perturbation identity w^T A'(theta) v.

    (Finite differences of the squaring-based log rho take over only in the
    near-periodic extreme-tilt regime where the triplet is unobtainable.)
    """
    log_rho, drift = _eval(env, theta)
    return drift * math.exp(log_rho)


def shape_values(env: EnvironmentModel, theta: float) -> ShapeValues:
    log_rho, drift = _eval(env, theta)
    psi = log_rho - theta * drift
    phi = log_rho - (theta - 1.0) * drift
    return ShapeValues(theta=theta, log_rho=log_rho, drift=drift,
                       psi=psi, phi=phi, f=psi)


def rate_function(env: EnvironmentModel, z: float) -> float:
    """Legendre rate sup_mu (mu z - log rho(mu+1)) for the size-biased log walk.

    z must lie in the closure of attainable drifts; the boundary values are
    handled as one-sided limits.  Vanishes at z = drift(1), the law-of-large-
    numbers slope.
    """
    d_lo = -1.0 / _c_limit(env, -1)
    d_hi = -1.0 / _c_limit(env, +1)
    tol = 1e-9 * max(1.0, abs(z))
    if abs(d_hi - d_lo) <= 1e-12:
        # affine log rho: single attainable drift, degenerate conjugate
        if abs(z - d_hi) <= max(tol, 1e-9):
            return 0.0
        raise ZOutOfRange(f"z = {z!r} differs from the only attainable drift {d_hi!r}")
    if z < d_lo - tol or z > d_hi + tol:
        raise ZOutOfRange(f"z = {z!r} outside attainable drifts [{d_lo!r}, {d_hi!r}]")

    lo_t, hi_t = -2.0, 2.0
    while _eval(env, lo_t)[1] > z and lo_t > -(2.0 ** 14):
        lo_t *= 2.0
    while _eval(env, hi_t)[1] < z and hi_t < 2.0 ** 14:
        hi_t *= 2.0
    if _eval(env, lo_t)[1] > z or _eval(env, hi_t)[1] < z:
        # boundary value: evaluate the conjugate along the doubling schedule
        sign = 1.0 if z > (d_lo + d_hi) / 2 else -1.0
        prev = None
        for k in _DOUBLING_KS:
            th = sign * float(2 ** k)
            h = (th - 1.0) * z - _eval(env, th)[0]
            if prev is not None and abs(h - prev) <= 1e-9 * max(1.0, abs(h)):
                return h
            prev = h
        return h
    for _ in range(200):
        mid = 0.5 * (lo_t + hi_t)
        if _eval(env, mid)[1] < z:
            lo_t = mid
        else:
            hi_t = mid
    th = 0.5 * (lo_t + hi_t)
    return (th - 1.0) * z - _eval(env, th)[0]


def _c_limit(env: EnvironmentModel, sign: int) -> float:
    """One-sided limit of rho/(-rho') = -1/drift along theta = sign * 2^k."""
    val = None
    for k in _DOUBLING_KS:
        theta = sign * float(2 ** k)
        if not (env.domain_lo < theta < env.domain_hi):
            break
        cur = -1.0 / _eval(env, theta)[1]
        if val is not None and abs(cur - val) < _LIMIT_RTOL * abs(cur):
            return cur
        val = cur
    if val is None:
        raise ThetaOutOfDomain(
            f"cannot take the theta -> {sign}*inf limit: domain "
            f"({env.domain_lo!r}, {env.domain_hi!r}) is bounded on that side"
        )
    return val


def _cycle_mean_interval(env: EnvironmentModel) -> Optional[tuple]:
    """Extreme geometric-mean cycle weights of the support digraph (K <= 8).

    For a deterministic environment these are the exact limits of
    rho(theta)^(1/theta), hence an independent check on the doubling limits.
    """
    if env.K > 8 or not env.is_deterministic:
        return None
    import networkx as nx

    G = nx.DiGraph()
    for i in range(env.K):
        for j in env.supported_cols[i]:
            G.add_edge(i, int(j), logp=math.log(env.rows[i, j]))
    means = []
    for cycle in nx.simple_cycles(G):
        edges = list(zip(cycle, cycle[1:] + cycle[:1]))
        means.append(sum(G.edges[e]["logp"] for e in edges) / len(edges))
    if not means:
        return None
    return (min(means), max(means))


def _f_of(env: EnvironmentModel) -> Callable[[float], float]:
    def f(theta: float) -> float:
        log_rho, drift = _eval(env, theta)
        return log_rho - theta * drift
    return f


def _refine_zero(f: Callable[[float], float], a: float, b: float) -> float:
    fa = f(a)
    for _ in range(200):
        if b - a <= _ROOT_XTOL:
            break
        mid = 0.5 * (a + b)
        fm = f(mid)
        if (fa > 0) == (fm > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def _clip_to_entries(env: EnvironmentModel) -> float:
    """Smallest workable theta: moments at most 1e12 (left boundary blow-up)."""
    lo_b = env.domain_lo
    a, b = lo_b, 0.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if log_moment_matrix(env, mid)[env.support].max() > _ENTRY_CLIP_LOG:
            a = mid
        else:
            b = mid
    if b <= lo_b:
        b = lo_b + 1e-12 * max(1.0, abs(lo_b))
    return b


@lru_cache(maxsize=64)
def asymptotic_constants(env: EnvironmentModel) -> ConstantsReport:
    """Decay constants of the extreme boxes and the f-positivity interval.

    Deterministic environments: both constants are theta -> +-inf limits of
    rho/(-rho'), taken along a doubling schedule with a 1e-6 relative stop;
    the simple-cycle geometric-mean interval is reported as an independent
    cross-check when K <= 8.

    Random environments: condition (strict convexity of log rho) is verified
    on the working grid, the endpoints of {f > 0} are located by sign scan
    plus bisection, and the constants are the one-sided limits of -1/drift at
    those endpoints.
    """
    if env.is_deterministic:
        c_lo = _c_limit(env, -1)
        c_hi = _c_limit(env, +1)
        notes = "deterministic regime"
        interval = _cycle_mean_interval(env)
        if interval is not None:
            notes += (
                f"; cycle-mean check: c_lower ~ {-1.0 / interval[0]!r},"
                f" c_upper ~ {-1.0 / interval[1]!r}"
            )
        return ConstantsReport(
            domain_lo=env.domain_lo, domain_hi=env.domain_hi,
            c_star_lower=c_lo, c_star_upper=c_hi,
            theta_star_lower=-math.inf, theta_star_upper=math.inf,
            condition_saturation_ok=True, notes=notes,
        )

    f = _f_of(env)
    # working interval: clip the left end to moments <= 1e12, expand the right
    # end (and an unbounded left end) by doubling until f changes sign
    hi = 1.0
    while f(hi) > 0 and hi < 2.0 ** 14:
        hi *= 2.0
    if env.domain_lo == -math.inf:
        lo = -1.0
        while f(lo) > 0 and lo > -(2.0 ** 14):
            lo *= 2.0
    else:
        lo = _clip_to_entries(env)
    grid = np.linspace(lo, hi, _GRID_POINTS)
    pts = [_eval(env, t) for t in grid]
    log_rho_g = np.array([p[0] for p in pts])
    f_g = np.array([p[0] - t * p[1] for p, t in zip(pts, grid)])

    # condition check: log rho convex on the grid, with a genuinely increasing
    # drift (strictness).  The raw second differences underflow far from the
    # origin even for strictly convex spectra, so strictness is measured by
    # the total drift increase instead.
    second = np.diff(log_rho_g, 2)
    if second.min() < -_CONVEXITY_EPS:
        raise NotStrictlyConvex(
            f"log rho shows concavity on the working grid (min second "
            f"difference {second.min()!r})"
        )
    if pts[-1][1] - pts[0][1] <= _CONVEXITY_EPS:
        raise NotStrictlyConvex(
            "drift does not increase across the working grid: log rho is "
            "affine to numerical precision"
        )
    if f_g.max() <= 0:
        raise DomainTooNarrow("f is nonpositive on the entire working grid")

    crossings = []
    for i in range(len(grid) - 1):
        if (f_g[i] > 0 > f_g[i + 1]) or (f_g[i] < 0 < f_g[i + 1]):
            crossings.append(_refine_zero(f, grid[i], grid[i + 1]))
        elif f_g[i] == 0.0 and i > 0 and (f_g[i - 1] > 0 > f_g[i + 1]
                                          or f_g[i - 1] < 0 < f_g[i + 1]):
            crossings.append(float(grid[i]))     # zero landed on a grid point
    left_zeros = [c for c in crossings if c < 0]
    right_zeros = [c for c in crossings if c >= 0]

    notes = []
    if right_zeros:
        theta_hi = float(right_zeros[0])
        zeta_hi = float(-1.0 / _eval(env, theta_hi)[1])
        notes.append(f"upper endpoint located by bisection at {theta_hi!r}")
    else:
        theta_hi = math.inf
        zeta_hi = _c_limit(env, +1)
        notes.append("f stays positive along the doubling schedule; upper endpoint +inf")

    condition_ok = False
    if left_zeros:
        theta_lo = float(left_zeros[0])
        zeta_lo = float(-1.0 / _eval(env, theta_lo)[1])
        condition_ok = theta_lo < 0    # f vanishes there by continuity
        notes.append(f"lower endpoint is an interior zero at {theta_lo!r}; f -> 0 there")
    elif env.domain_lo == -math.inf:
        theta_lo = -math.inf
        zeta_lo = _c_limit(env, -1)
        notes.append("f stays positive toward -inf; saturation conditions fail")
    else:
        theta_lo = env.domain_lo
        # extrapolate f linearly from the innermost 5 grid points to the boundary
        xs, ys = grid[:5], f_g[:5]
        slope, intercept = np.polyfit(xs, ys, 1)
        f_lim = float(slope * env.domain_lo + intercept)
        condition_ok = bool(abs(f_lim) < 1e-6 and env.domain_lo < 0)
        zeta_lo = float(-1.0 / pts[0][1])
        notes.append(
            f"f positive down to the domain boundary; extrapolated limit {f_lim!r}"
        )

    return ConstantsReport(
        domain_lo=env.domain_lo, domain_hi=env.domain_hi,
        c_star_lower=zeta_lo, c_star_upper=zeta_hi,
        theta_star_lower=theta_lo, theta_star_upper=theta_hi,
        condition_saturation_ok=condition_ok, notes="; ".join(notes),
    )


def predicted_height_constant(
    env: EnvironmentModel,
    j: Optional[int] = None,
    power_alpha: Optional[float] = None,
) -> float:
    """Slope of height / ln(m) for threshold j, or for j = ceil(m^alpha).

    Deterministic: j / (-log rho(j)) for fixed j >= 2, (1 - alpha) * c_upper
    for the power regime.  Random environment: j / (-log rho(j)) below the
    upper f endpoint, the largest-box constant at or above it; below the lower
    endpoint no prediction exists.
    """
    if (j is None) == (power_alpha is None):
        raise ValueError("pass exactly one of j or power_alpha")
    if power_alpha is not None:
        if not (0.0 < power_alpha < 1.0):
            raise ValueError(f"power_alpha must lie in (0,1), got {power_alpha!r}")
        if not env.is_deterministic:
            raise OutsideRegime("the power regime is predicted only for deterministic environments")
        return (1.0 - power_alpha) * asymptotic_constants(env).c_star_upper
    if j < 2:
        raise ValueError(f"threshold j must be >= 2, got {j!r}")
    if env.is_deterministic:
        return j / (-_eval(env, float(j))[0])
    report = asymptotic_constants(env)
    if j <= report.theta_star_lower:
        raise OutsideRegime(
            f"j = {j} is at or below the lower f endpoint {report.theta_star_lower!r}; "
            "no height prediction exists there"
        )
    if j >= report.theta_star_upper:
        return report.c_star_upper
    return j / (-_eval(env, float(j))[0])


def predicted_saturation_constant(env: EnvironmentModel) -> float:
    """Slope of saturation level / ln(m); independent of the threshold j."""
    report = asymptotic_constants(env)
    if env.is_deterministic:
        return report.c_star_lower
    if not report.condition_saturation_ok:
        raise ConditionsNotMet(
            f"saturation-regime conditions fail for this environment: {report.notes}"
        )
    return report.c_star_lower


def spectral_profile(env: EnvironmentModel, theta_grid: Sequence[float]) -> SpectralProfile:
    """Tabulated shape values, eigen-triplets, and constants over a theta grid."""
    for idx, theta in enumerate(theta_grid):
        if not (env.domain_lo < theta < env.domain_hi):
            raise ThetaOutOfDomain(
                f"grid point {idx} (theta = {theta!r}) outside the domain "
                f"({env.domain_lo!r}, {env.domain_hi!r})",
                grid_index=idx,
            )
    thetas = np.sort(np.asarray(theta_grid, dtype=float))
    shapes = []
    triplets = []
    for theta in thetas:
        shapes.append(shape_values(env, theta))
        triplets.append(perron_triplet(tilted_matrix(env, theta)))
    return SpectralProfile(
        thetas=thetas,
        shapes=tuple(shapes),
        triplets=tuple(triplets),
        constants=asymptotic_constants(env),
    )
