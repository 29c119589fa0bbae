"""Transition-probability environments and their tilted moments.

Three row-law families are supported, all with analytic tilted moments
m_ij(theta) = E[p_ij^theta]:

  deterministic  fixed row-stochastic matrix P;     m_ij(theta) = p_ij^theta
  dirichlet      each row i drawn Dirichlet(alpha_i (supported entries));
                 m_ij(theta) = Gamma(a0) Gamma(a_ij+theta) /
                               (Gamma(a0+theta) Gamma(a_ij)),  a0 = sum_k a_ik
  mixture        row i of component c with probability q_c;
                 m_ij(theta) = sum_c q_c (p_ij^(c))^theta

Entries with p_ij = 0 stay 0 under tilting for every theta (including
theta <= 0); the support pattern is a structural, non-random object shared by
every sampled matrix.  Boxes/chains always start from type 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import digamma, gammaln

from .errors import (
    BadAlpha,
    BadRows,
    BadSupport,
    EnvParseError,
    NotRegular,
    ThetaOutOfDomain,
)

_SUM_TOL = 1e-12
_MAX_SIG_DIGITS = 17

DETERMINISTIC = "deterministic"
DIRICHLET = "dirichlet"
MIXTURE = "mixture"


@dataclass(frozen=True, eq=False)
class EnvironmentModel:
    """Validated environment: kind, alphabet size, support, payload, moment domain.

    The moment domain L is the open interval on which every supported tilted
    moment m_ij(theta) is finite: all of R for deterministic and mixture
    environments, (-min alpha_ij, +inf) for Dirichlet rows.
    """

    kind: str
    K: int
    support: np.ndarray                      # (K, K) bool
    rows: Optional[np.ndarray] = None        # deterministic payload
    alpha: Optional[np.ndarray] = None       # dirichlet payload
    weights: Optional[np.ndarray] = None     # mixture payload
    comps: Optional[np.ndarray] = None       # (M, K, K) mixture payload
    domain_lo: float = -math.inf
    domain_hi: float = math.inf
    # per-type supported column indices, precomputed for the simulator
    supported_cols: tuple = field(default=(), repr=False)

    @property
    def domain_L(self) -> tuple:
        return (self.domain_lo, self.domain_hi)

    @property
    def is_deterministic(self) -> bool:
        return self.kind == DETERMINISTIC

    def _payload_bytes(self) -> bytes:
        parts = [self.kind.encode(), self.K.to_bytes(4, "little"), self.support.tobytes()]
        for arr in (self.rows, self.alpha, self.weights, self.comps):
            parts.append(b"." if arr is None else arr.tobytes())
        return b"|".join(parts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EnvironmentModel):
            return NotImplemented
        return self._payload_bytes() == other._payload_bytes()

    def __hash__(self) -> int:
        return hash(self._payload_bytes())


@dataclass(frozen=True)
class RegularityReport:
    irreducible: bool
    aperiodic: bool
    positive_regular: bool
    r: Optional[int]                         # smallest power with all-positive entries


@dataclass(frozen=True)
class SaturationCheck:
    """Outcome of the saturation-regime side conditions; truthiness = ok."""

    ok: bool
    note: str

    def __bool__(self) -> bool:
        return self.ok


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def _check_stochastic(rows: np.ndarray, what: str) -> None:
    sums = rows.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > _SUM_TOL)[0]
    if bad.size:
        i = int(bad[0])
        raise BadRows(f"{what} row {i + 1} sums to {sums[i]!r}, expected 1 within {_SUM_TOL}")
    if (rows < 0).any():
        raise BadRows(f"{what} contains a negative entry")


def _finalize(kind, K, support, **payload) -> EnvironmentModel:
    per_row = support.sum(axis=1)
    if (per_row < 2).any():
        i = int(np.argmin(per_row))
        raise NotRegular(
            f"row {i + 1} has {per_row[i]} supported entries; splitting is degenerate"
        )
    rep = regularity_from_support(support)
    if not rep.positive_regular:
        raise NotRegular("support pattern is not positive regular")
    support = support.copy()
    support.setflags(write=False)
    for arr in payload.values():
        if arr is not None:
            arr.setflags(write=False)
    cols = tuple(np.nonzero(support[i])[0] for i in range(K))
    return EnvironmentModel(kind=kind, K=K, support=support, supported_cols=cols, **payload)


def deterministic_env(rows) -> EnvironmentModel:
    """Environment with a fixed row-stochastic transition matrix."""
    rows = np.array(rows, dtype=float)
    K = rows.shape[0]
    if rows.shape != (K, K) or K < 2:
        raise BadRows(f"transition matrix must be KxK with K >= 2, got shape {rows.shape}")
    _check_stochastic(rows, "transition")
    support = rows > 0.0
    return _finalize(DETERMINISTIC, K, support, rows=rows)


def dirichlet_env(alpha) -> EnvironmentModel:
    """Environment with independent Dirichlet rows; alpha entry 0 marks no support."""
    alpha = np.array(alpha, dtype=float)
    K = alpha.shape[0]
    if alpha.shape != (K, K) or K < 2:
        raise BadAlpha(f"alpha must be KxK with K >= 2, got shape {alpha.shape}")
    if (alpha < 0).any():
        i, j = np.argwhere(alpha < 0)[0]
        raise BadAlpha(f"alpha[{i + 1},{j + 1}] = {alpha[i, j]!r} is negative")
    support = alpha > 0.0
    env = _finalize(DIRICHLET, K, support, alpha=alpha)
    lo = -float(alpha[support].min())
    return EnvironmentModel(
        kind=env.kind, K=env.K, support=env.support, alpha=env.alpha,
        domain_lo=lo, supported_cols=env.supported_cols,
    )


def mixture_env(weights, comps) -> EnvironmentModel:
    """Environment drawing each row from one of M row-stochastic matrices."""
    weights = np.array(weights, dtype=float)
    comps = np.array(comps, dtype=float)
    M = weights.shape[0]
    if comps.ndim != 3 or comps.shape[0] != M:
        raise BadSupport(f"need one component matrix per weight, got {comps.shape}")
    K = comps.shape[1]
    if comps.shape[1:] != (K, K) or K < 2:
        raise BadRows(f"component matrices must be KxK with K >= 2, got {comps.shape}")
    if abs(weights.sum() - 1.0) > _SUM_TOL:
        raise BadRows(f"mixture weights sum to {weights.sum()!r}, expected 1")
    if (weights <= 0).any():
        raise BadRows("mixture weights must be strictly positive")
    for c in range(M):
        _check_stochastic(comps[c], f"component {c + 1}")
    support = comps[0] > 0.0
    for c in range(1, M):
        if not np.array_equal(comps[c] > 0.0, support):
            raise BadSupport(f"component {c + 1} support pattern differs from component 1")
    return _finalize(MIXTURE, K, support, weights=weights, comps=comps)


def make_env(desc) -> EnvironmentModel:
    """Build an environment from a description mapping (see the file format)."""
    kind = str(desc.get("kind", "")).lower()
    if kind == DETERMINISTIC:
        return deterministic_env(desc["rows"])
    if kind == DIRICHLET:
        return dirichlet_env(desc["alpha"])
    if kind == MIXTURE:
        return mixture_env(desc["weights"], desc["comps"])
    raise BadRows(f"unknown environment kind {kind!r}")


# --------------------------------------------------------------------------
# regularity
# --------------------------------------------------------------------------

def regularity_from_support(support: np.ndarray) -> RegularityReport:
    """Irreducibility, aperiodicity and positive regularity of a support pattern.

    Positive regularity is decided by boolean powers up to K^2 + 1 (the
    primitivity index of a K-state pattern is at most (K-1)^2 + 1).
    Aperiodicity is measured through cycles at state 1, which equals the
    chain period for irreducible patterns; chains here always start at 1.
    """
    S = np.array(support, dtype=bool)
    Si = S.astype(np.int64)
    K = S.shape[0]
    reach = S.copy()
    power = S.copy()
    r = 1 if power.all() else None
    lengths_through_1 = [1] if S[0, 0] else []
    for n in range(2, K * K + 2):
        power = (power.astype(np.int64) @ Si) > 0   # binarize: no count overflow
        reach |= power
        if r is None and power.all():
            r = n
        if power[0, 0]:
            lengths_through_1.append(n)
    irreducible = bool(reach.all())
    g = 0
    for n in lengths_through_1:
        g = math.gcd(g, n)
    aperiodic = g == 1
    return RegularityReport(
        irreducible=irreducible,
        aperiodic=aperiodic,
        positive_regular=r is not None,
        r=r,
    )


def regularity(env: EnvironmentModel) -> RegularityReport:
    return regularity_from_support(env.support)


def check_saturation_conditions(env: EnvironmentModel) -> SaturationCheck:
    """Whether the saturation-level constant is predicted for this environment.

    Deterministic environments need no side condition.  Random environments
    need the lower endpoint of the positivity interval of the box-count
    exponent f to be finite, negative, interior to the moment domain, and to
    carry f -> 0 (automatic at an interior root of f).
    """
    if env.is_deterministic:
        return SaturationCheck(True, "deterministic regime")
    from . import spectral  # deferred: spectral imports this module

    report = spectral.asymptotic_constants(env)
    return SaturationCheck(report.condition_saturation_ok, report.notes)


# --------------------------------------------------------------------------
# tilted moments
# --------------------------------------------------------------------------

def _require_in_domain(env: EnvironmentModel, theta: float) -> None:
    if not (env.domain_lo < theta < env.domain_hi):
        entry = None
        if env.kind == DIRICHLET:
            a = np.where(env.support, env.alpha, np.inf)
            i, j = np.unravel_index(int(np.argmin(a)), a.shape)
            entry = (int(i) + 1, int(j) + 1)
        raise ThetaOutOfDomain(
            f"theta = {theta!r} outside the finite-moment domain "
            f"({env.domain_lo!r}, {env.domain_hi!r})"
            + (f"; entry {entry} diverges first" if entry else ""),
            entry=entry,
        )


def log_moment_matrix(env: EnvironmentModel, theta: float) -> np.ndarray:
    """ln m_ij(theta) on supported entries, -inf elsewhere."""
    _require_in_domain(env, theta)
    K = env.K
    out = np.full((K, K), -np.inf)
    sup = env.support
    if env.kind == DETERMINISTIC:
        out[sup] = theta * np.log(env.rows[sup])
    elif env.kind == DIRICHLET:
        a = env.alpha
        a0 = np.where(sup, a, 0.0).sum(axis=1, keepdims=True)
        a0 = np.broadcast_to(a0, a.shape)
        out[sup] = (
            gammaln(a0[sup]) + gammaln(a[sup] + theta)
            - gammaln(a0[sup] + theta) - gammaln(a[sup])
        )
    else:
        # unsupported entries get a finite placeholder and are masked out below
        logp = np.log(np.where(env.comps > 0, env.comps, 1.0))
        expo = theta * logp + np.log(env.weights)[:, None, None]
        shift = expo.max(axis=0)
        out[sup] = (shift + np.log(np.exp(expo - shift[None]).sum(axis=0)))[sup]
    return out


def dlog_moment_matrix(env: EnvironmentModel, theta: float) -> np.ndarray:
    """d/dtheta of ln m_ij(theta) on supported entries, 0 elsewhere."""
    _require_in_domain(env, theta)
    K = env.K
    out = np.zeros((K, K))
    sup = env.support
    if env.kind == DETERMINISTIC:
        out[sup] = np.log(env.rows[sup])
    elif env.kind == DIRICHLET:
        a = env.alpha
        a0 = np.where(sup, a, 0.0).sum(axis=1, keepdims=True)
        a0 = np.broadcast_to(a0, a.shape)
        out[sup] = digamma(a[sup] + theta) - digamma(a0[sup] + theta)
    else:
        logp = np.log(np.where(env.comps > 0, env.comps, 1.0))
        expo = theta * logp + np.log(env.weights)[:, None, None]
        shift = expo.max(axis=0)
        scaled = np.exp(expo - shift[None])
        num = (scaled * logp).sum(axis=0)
        out[sup] = (num / scaled.sum(axis=0))[sup]
    return out


def laplace_entry(env: EnvironmentModel, i: int, j: int, theta: float) -> float:
    """Tilted moment m_ij(theta) for 1-based types i, j; 0 off the support."""
    if not env.support[i - 1, j - 1]:
        _require_in_domain(env, theta)
        return 0.0
    return float(np.exp(log_moment_matrix(env, theta)[i - 1, j - 1]))


# --------------------------------------------------------------------------
# row sampling
# --------------------------------------------------------------------------

def sample_row(env: EnvironmentModel, i: int, rng: np.random.Generator) -> np.ndarray:
    """One realized transition row for 1-based type i (length-K, sums to 1)."""
    row = np.zeros(env.K)
    cols = env.supported_cols[i - 1]
    if env.kind == DETERMINISTIC:
        return env.rows[i - 1].copy()
    if env.kind == DIRICHLET:
        row[cols] = rng.dirichlet(env.alpha[i - 1, cols])
        return row
    c = rng.choice(len(env.weights), p=env.weights)
    return env.comps[c, i - 1].copy()


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------
# [env]
# kind = deterministic | dirichlet | mixture
# K = <int>
# deterministic: row.<i>   = p1 ... pK
# dirichlet:     alpha.<i> = a1 ... aK     (0 marks an unsupported entry)
# mixture:       weights   = q1 ... qM
#                comp.<c>.row.<i> = p1 ... pK
# Blank lines and '#' comments are ignored; numbers are plain decimals with
# at most 17 significant digits.

def _parse_number(tok: str, line_no: int) -> float:
    digits = tok.lower().split("e")[0].replace("-", "").replace("+", "").replace(".", "")
    digits = digits.lstrip("0")
    if len(digits) > _MAX_SIG_DIGITS:
        raise EnvParseError(line_no, f"number {tok!r} carries more than {_MAX_SIG_DIGITS} significant digits")
    try:
        return float(tok)
    except ValueError:
        raise EnvParseError(line_no, f"cannot parse number {tok!r}") from None


def parse_env_text(text: str) -> EnvironmentModel:
    kind = None
    K = None
    rows: dict = {}
    alphas: dict = {}
    weights = None
    comp_rows: dict = {}
    in_env = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[env]":
                raise EnvParseError(line_no, f"unknown section {line!r}")
            in_env = True
            continue
        if not in_env:
            raise EnvParseError(line_no, "content before [env] section")
        if "=" not in line:
            raise EnvParseError(line_no, "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "kind":
            kind = value.lower()
        elif key == "K":
            try:
                K = int(value)
            except ValueError:
                raise EnvParseError(line_no, f"K must be an integer, got {value!r}") from None
        elif key.startswith("row."):
            rows[_index(key[4:], line_no)] = _vector(value, line_no)
        elif key.startswith("alpha."):
            alphas[_index(key[6:], line_no)] = _vector(value, line_no)
        elif key == "weights":
            weights = _vector(value, line_no)
        elif key.startswith("comp."):
            parts = key.split(".")
            if len(parts) != 4 or parts[2] != "row":
                raise EnvParseError(line_no, f"unknown key {key!r}")
            c = _index(parts[1], line_no)
            i = _index(parts[3], line_no)
            comp_rows[(c, i)] = _vector(value, line_no)
        else:
            raise EnvParseError(line_no, f"unknown key {key!r}")
    if kind is None or K is None:
        raise EnvParseError(0, "missing 'kind' or 'K'")
    if kind == DETERMINISTIC:
        mat = _assemble(rows, K, "row")
        return deterministic_env(mat)
    if kind == DIRICHLET:
        mat = _assemble(alphas, K, "alpha")
        return dirichlet_env(mat)
    if kind == MIXTURE:
        if weights is None:
            raise EnvParseError(0, "mixture requires a 'weights' line")
        M = len(weights)
        comps = np.empty((M, K, K))
        for c in range(1, M + 1):
            for i in range(1, K + 1):
                if (c, i) not in comp_rows:
                    raise EnvParseError(0, f"missing comp.{c}.row.{i}")
                vec = comp_rows[(c, i)]
                if len(vec) != K:
                    raise EnvParseError(0, f"comp.{c}.row.{i} has {len(vec)} entries, expected {K}")
                comps[c - 1, i - 1] = vec
        return mixture_env(weights, comps)
    raise EnvParseError(0, f"unknown kind {kind!r}")


def _index(tok: str, line_no: int) -> int:
    try:
        idx = int(tok)
    except ValueError:
        raise EnvParseError(line_no, f"bad index {tok!r}") from None
    if idx < 1:
        raise EnvParseError(line_no, f"indices are 1-based, got {idx}")
    return idx


def _vector(value: str, line_no: int) -> np.ndarray:
    toks = value.split()
    if not toks:
        raise EnvParseError(line_no, "empty numeric list")
    return np.array([_parse_number(t, line_no) for t in toks])


def _assemble(entries: dict, K: int, what: str) -> np.ndarray:
    mat = np.empty((K, K))
    for i in range(1, K + 1):
        if i not in entries:
            raise EnvParseError(0, f"missing {what}.{i}")
        vec = entries[i]
        if len(vec) != K:
            raise EnvParseError(0, f"{what}.{i} has {len(vec)} entries, expected {K}")
        mat[i - 1] = vec
    return mat


def load_env(path) -> EnvironmentModel:
    with open(path, encoding="utf-8") as fh:
        return parse_env_text(fh.read())


def serialize_env(env: EnvironmentModel) -> str:
    """Round-trippable text form (repr keeps each float bit-identical)."""
    lines = ["[env]", f"kind = {env.kind}", f"K = {env.K}"]
    if env.kind == DETERMINISTIC:
        for i in range(env.K):
            lines.append(f"row.{i + 1} = " + " ".join(repr(float(x)) for x in env.rows[i]))
    elif env.kind == DIRICHLET:
        for i in range(env.K):
            lines.append(f"alpha.{i + 1} = " + " ".join(repr(float(x)) for x in env.alpha[i]))
    else:
        lines.append("weights = " + " ".join(repr(float(x)) for x in env.weights))
        for c in range(len(env.weights)):
            for i in range(env.K):
                lines.append(
                    f"comp.{c + 1}.row.{i + 1} = " + " ".join(repr(float(x)) for x in env.comps[c, i])
                )
    return "\n".join(lines) + "\n"
