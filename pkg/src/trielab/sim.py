"""Nested-box occupancy simulator.

m balls fall through a cascade of boxes: the root (type 1, unit mass) splits
into one sub-box per supported child type, with masses given by the
environment's transition row; random environments draw a fresh row for every
box.  Ball counts split multinomially along the same masses, so tracking the
counts level by level reproduces the trie statistics exactly:

  height      H(m, j): first generation at which every box holds < j balls
  saturation  G(m, j): first generation at which some positive-mass box
                       holds < j balls

Ball counts are nonincreasing along any root-to-box path, so expanding only
boxes holding >= j balls enumerates every generation-n box with >= j balls;
comparing their number R_n with the number P_n of positive-mass boxes
(support-pattern paths, counted exactly with saturation at m+1) detects G.

The multinomial split is realized as a chain of conditional binomials over
the supported children: exact, and vectorized over all boxes of one type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .envs import DETERMINISTIC, DIRICHLET, EnvironmentModel
from .errors import CapExceeded, DepthCapExceeded, HeightUndefined, OutsideRegime

DEFAULT_DEPTH_CAP = 10_000
COUPON_BOX_CAP = 1_000_000
_COUPON_BATCH = 2048


@dataclass
class TrieObservation:
    """Height/saturation of one simulated occupancy run."""

    m: int
    j: int
    height: Optional[int]          # None when only the saturation level was run
    saturation: int
    expanded_nodes: int
    max_depth_reached: int


@dataclass
class LevelProfile:
    """Exact box statistics of one generation (one realization if random).

    per_type_boxes[i] holds the values -ln(l) for boxes of type i+1.
    min_log_size / max_log_size are -ln of the smallest / largest box mass.
    window_counts[(theta, a, b)] counts boxes with ln(l) in
    [n*drift(theta) - a, n*drift(theta) - b].
    martingale[theta] is the eigenvector-weighted, rho^-n normalized
    theta-moment of the level (unit mean over cascade realizations).
    """

    n: int
    per_type_boxes: list
    laplace: dict
    min_log_size: float
    max_log_size: float
    window_counts: dict
    martingale: dict
    truncated: bool


@dataclass
class CouponOutcome:
    """Throws needed until every positive generation-n box holds >= j balls."""

    n: int
    j: int
    throws: int


# --------------------------------------------------------------------------
# level machinery
# --------------------------------------------------------------------------

def _draw_rows(env: EnvironmentModel, i: int, n: int, rng: np.random.Generator):
    """n realized rows for type i+1, restricted to its supported columns.

    Returns a (n, s) array, or a (s,) array shared by all boxes when the
    environment is deterministic.
    """
    cols = env.supported_cols[i]
    if env.kind == DETERMINISTIC:
        return env.rows[i, cols]
    if env.kind == DIRICHLET:
        return rng.dirichlet(env.alpha[i, cols], size=n)
    picks = rng.choice(len(env.weights), size=n, p=env.weights)
    return env.comps[picks][:, i][:, cols]


def _split_counts(counts, rows, rng):
    """Multinomial split of each count along its row (conditional binomials)."""
    n = counts.shape[0]
    if rows.ndim == 1:
        s = rows.shape[0]
        out = np.empty((n, s), dtype=np.int64)
        remaining = counts.copy()
        tail = 1.0
        for t in range(s - 1):
            p = min(max(rows[t] / tail, 0.0), 1.0)
            drawn = rng.binomial(remaining, p)
            out[:, t] = drawn
            remaining -= drawn
            tail -= rows[t]
        out[:, s - 1] = remaining
        return out
    s = rows.shape[1]
    out = np.empty((n, s), dtype=np.int64)
    remaining = counts.copy()
    tail = np.ones(n)
    for t in range(s - 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(tail > 0.0, rows[:, t] / tail, 0.0)
        np.clip(p, 0.0, 1.0, out=p)
        drawn = rng.binomial(remaining, p)
        out[:, t] = drawn
        remaining -= drawn
        tail = tail - rows[:, t]
    out[:, s - 1] = remaining
    return out


def _children(env, types, counts, rng):
    """Split every box; returns child types and counts (all supported children)."""
    child_types = []
    child_counts = []
    for i in range(env.K):
        mask = types == i
        ni = int(mask.sum())
        if ni == 0:
            continue
        cols = env.supported_cols[i]
        rows = _draw_rows(env, i, ni, rng)
        split = _split_counts(counts[mask], rows, rng)
        child_types.append(np.broadcast_to(cols, (ni, len(cols))).ravel())
        child_counts.append(split.ravel())
    return np.concatenate(child_types), np.concatenate(child_counts)


def _advance_positive(env, per_type, cap):
    """One support step of the exact positive-box counts, saturated at cap."""
    out = [0] * env.K
    for i in range(env.K):
        if per_type[i] == 0:
            continue
        for j in env.supported_cols[i]:
            out[j] = min(out[j] + per_type[i], cap)
    return out


def _run_levels(env, m, j, rng, depth_cap, want_height):
    """Shared level loop; returns (height|None, saturation, expanded, depth)."""
    if m < j:
        return (0 if want_height else None), 0, 0, 0
    types = np.array([0], dtype=np.int64)
    counts = np.array([m], dtype=np.int64)
    per_type = [1 if i == 0 else 0 for i in range(env.K)]
    sat = None
    expanded = 0
    depth = 0
    while True:
        R = counts.shape[0]                       # boxes holding >= j at this depth
        P = min(sum(per_type), m + 1)             # positive boxes (saturated)
        if sat is None and R < P:
            sat = depth
        if R == 0:
            return depth, sat, expanded, depth
        if not want_height and sat is not None:
            return None, sat, expanded, depth
        if depth >= depth_cap:
            raise DepthCapExceeded(f"no termination within {depth_cap} generations")
        expanded += R
        ctypes, ccounts = _children(env, types, counts, rng)
        keep = ccounts >= j
        types = ctypes[keep]
        counts = ccounts[keep]
        per_type = _advance_positive(env, per_type, m + 1)
        depth += 1


# --------------------------------------------------------------------------
# public simulations
# --------------------------------------------------------------------------

def simulate_occupancy(
    env: EnvironmentModel,
    m: int,
    j: int,
    rng: np.random.Generator,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> TrieObservation:
    """Run one cascade with m balls; record height and saturation for threshold j."""
    if j < 2:
        raise HeightUndefined(
            "height is infinite for j = 1: every generation keeps a box holding a ball"
        )
    if m < 1:
        raise ValueError(f"need at least one ball, got m = {m}")
    height, sat, expanded, depth = _run_levels(env, m, j, rng, depth_cap, want_height=True)
    return TrieObservation(m=m, j=j, height=height, saturation=sat,
                           expanded_nodes=expanded, max_depth_reached=depth)


def simulate_saturation(
    env: EnvironmentModel,
    m: int,
    j: int,
    rng: np.random.Generator,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> TrieObservation:
    """Stop at the first generation with a positive box holding < j balls (j >= 1)."""
    if j < 1 or m < 1:
        raise ValueError(f"need j >= 1 and m >= 1, got j = {j}, m = {m}")
    height, sat, expanded, depth = _run_levels(env, m, j, rng, depth_cap, want_height=False)
    return TrieObservation(m=m, j=j, height=height, saturation=sat,
                           expanded_nodes=expanded, max_depth_reached=depth)


def simulate_power_regime(
    env: EnvironmentModel,
    m: int,
    alpha: float,
    rng: np.random.Generator,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> TrieObservation:
    """Occupancy run with the ball-dependent threshold j = max(2, ceil(m^alpha))."""
    if not env.is_deterministic:
        raise OutsideRegime("the power regime is defined for deterministic environments")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0,1), got {alpha!r}")
    j = max(2, math.ceil(m ** alpha))
    return simulate_occupancy(env, m, j, rng, depth_cap=depth_cap)


# --------------------------------------------------------------------------
# level enumeration
# --------------------------------------------------------------------------

def positive_box_count(env: EnvironmentModel, n: int) -> int:
    """Exact number of positive-mass boxes at generation n (support paths)."""
    per_type = [1 if i == 0 else 0 for i in range(env.K)]
    for _ in range(n):
        nxt = [0] * env.K
        for i in range(env.K):
            if per_type[i]:
                for j in env.supported_cols[i]:
                    nxt[j] += per_type[i]
        per_type = nxt
    return sum(per_type)


def _enumerate_boxes(env, n, rng):
    """All generation-n boxes as (types, ln masses); one realization if random."""
    types = np.array([0], dtype=np.int64)
    logs = np.array([0.0])
    for _ in range(n):
        new_t = []
        new_l = []
        for i in range(env.K):
            mask = types == i
            ni = int(mask.sum())
            if ni == 0:
                continue
            cols = env.supported_cols[i]
            rows = _draw_rows(env, i, ni, rng)
            lrows = np.log(rows)
            if lrows.ndim == 1:
                block = logs[mask][:, None] + lrows[None, :]
            else:
                block = logs[mask][:, None] + lrows
            new_t.append(np.broadcast_to(cols, (ni, len(cols))).ravel())
            new_l.append(block.ravel())
        types = np.concatenate(new_t)
        logs = np.concatenate(new_l)
    return types, logs


def _extreme_paths(env, n):
    """Min/max ln mass over support paths of length n (deterministic only)."""
    lnrow = np.where(env.support, np.log(np.where(env.support, env.rows, 1.0)), np.nan)
    hi = np.full(env.K, -np.inf)
    lo = np.full(env.K, np.inf)
    hi[0] = lo[0] = 0.0
    for _ in range(n):
        nhi = np.full(env.K, -np.inf)
        nlo = np.full(env.K, np.inf)
        for i in range(env.K):
            if not np.isfinite(hi[i]) and not np.isfinite(lo[i]):
                continue
            for j in env.supported_cols[i]:
                nhi[j] = max(nhi[j], hi[i] + lnrow[i, j])
                nlo[j] = min(nlo[j], lo[i] + lnrow[i, j])
        hi, lo = nhi, nlo
    return float(lo[np.isfinite(lo)].min()), float(hi[np.isfinite(hi)].max())


def enumerate_level(
    env: EnvironmentModel,
    n: int,
    theta_list: Sequence[float] = (),
    windows: Sequence[tuple] = (),
    cap: int = 1_048_576,
    rng: Optional[np.random.Generator] = None,
) -> LevelProfile:
    """Exact statistics of generation n: per-type neg-log masses, tilted sums
    (Laplace transforms), extremes, window counts and martingale values.

    When the level holds more than `cap` positive boxes, a deterministic
    environment falls back to dynamic-programming extremes plus matrix-power
    tilted sums (truncated=True, no per-box data); a random environment cannot
    be pruned (every box carries an independent row) and raises CapExceeded.
    """
    from . import spectral

    if rng is None:
        if not env.is_deterministic:
            raise ValueError("random environments need an rng to realize the cascade")
        rng = np.random.default_rng(0)
    boxes = positive_box_count(env, n)
    if boxes > cap:
        if not env.is_deterministic:
            raise CapExceeded(
                f"{boxes} boxes at generation {n} exceed cap {cap}; a random "
                "cascade cannot be pruned"
            )
        lo, hi = _extreme_paths(env, n)
        laplace = {}
        martingale = {}
        for theta in theta_list:
            tm = spectral.tilted_matrix(env, theta)
            vec = np.linalg.matrix_power(tm.entries, n)[0]
            laplace[theta] = vec
            pt = spectral.shape_values(env, theta)
            trip = spectral.perron_triplet(tm)
            martingale[theta] = float(
                (trip.v / trip.v[0]) @ vec * math.exp(-n * pt.log_rho)
            )
        return LevelProfile(
            n=n, per_type_boxes=[np.array([]) for _ in range(env.K)],
            laplace=laplace, min_log_size=-lo, max_log_size=-hi,
            window_counts={}, martingale=martingale, truncated=True,
        )

    types, logs = _enumerate_boxes(env, n, rng)
    per_type = [np.sort(-logs[types == i]) for i in range(env.K)]
    laplace = {}
    martingale = {}
    for theta in theta_list:
        weights = np.exp(theta * logs)
        vec = np.bincount(types, weights=weights, minlength=env.K)
        laplace[theta] = vec
        pt = spectral.shape_values(env, theta)
        v = spectral.perron_triplet(spectral.tilted_matrix(env, theta)).v
        martingale[theta] = float((v / v[0]) @ vec * math.exp(-n * pt.log_rho))
    window_counts = {}
    for theta, a, b in windows:
        drift = spectral.shape_values(env, theta).drift
        lo_edge = n * drift - a
        hi_edge = n * drift - b
        window_counts[(theta, a, b)] = int(((logs >= lo_edge) & (logs <= hi_edge)).sum())
    return LevelProfile(
        n=n, per_type_boxes=per_type, laplace=laplace,
        min_log_size=float(-logs.min()), max_log_size=float(-logs.max()),
        window_counts=window_counts, martingale=martingale, truncated=False,
    )


# --------------------------------------------------------------------------
# walks and coupons
# --------------------------------------------------------------------------

def size_biased_walk(env: EnvironmentModel, n: int, rng: np.random.Generator):
    """Follow one ball for n generations from type 1.

    Returns the visited 1-based types (length n+1) and -ln of the landing
    box's mass; the landing box is distributed by the size-biased law.
    """
    path = [1]
    t = 0
    log_size = 0.0
    for _ in range(n):
        cols = env.supported_cols[t]
        row = _draw_rows(env, t, 1, rng)
        row = row if row.ndim == 1 else row[0]
        u = rng.random()
        k = int(np.searchsorted(np.cumsum(row), u, side="right"))
        k = min(k, len(cols) - 1)
        log_size -= math.log(row[k])
        t = int(cols[k])
        path.append(t + 1)
    return tuple(path), log_size


def coupon_time(
    env: EnvironmentModel,
    n: int,
    j: int,
    rng: np.random.Generator,
) -> CouponOutcome:
    """Throw balls until every positive generation-n box holds >= j of them."""
    if j < 1:
        raise ValueError(f"need j >= 1, got {j}")
    boxes = positive_box_count(env, n)
    if boxes > COUPON_BOX_CAP:
        raise CapExceeded(f"{boxes} boxes at generation {n} exceed {COUPON_BOX_CAP}")
    _, logs = _enumerate_boxes(env, n, rng)
    masses = np.exp(logs)
    cum = np.cumsum(masses)
    cum /= cum[-1]
    counts = np.zeros(len(masses), dtype=np.int64)
    thrown = 0
    while True:
        idx = np.searchsorted(cum, rng.random(_COUPON_BATCH), side="right")
        np.add.at(counts, idx, 1)
        if counts.min() >= j:
            np.subtract.at(counts, idx, 1)
            short = int((counts < j).sum())
            for pos, k in enumerate(idx):
                counts[k] += 1
                if counts[k] == j:
                    short -= 1
                    if short == 0:
                        return CouponOutcome(n=n, j=j, throws=thrown + pos + 1)
        thrown += _COUPON_BATCH
