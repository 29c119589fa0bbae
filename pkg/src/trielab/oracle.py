"""Brute-force references, kept deliberately naive and auditable.

These routines re-derive height/saturation from explicit word lists and
re-locate optima/roots by dense scanning; tests compare them against the
vectorized simulator and the spectral solvers.  Desk scale only: the word
oracle is O(m * n) per level, the level scan O(K^n).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .envs import DETERMINISTIC, EnvironmentModel, sample_row
from .errors import CapExceeded, LengthTooShort

_LEVEL_SCAN_CAP = 100_000


@dataclass(frozen=True)
class WordSet:
    """Equal-length 1-based type sequences plus the generating support pattern."""

    words: np.ndarray        # (m, length) int
    support: np.ndarray      # (K, K) bool

    def __post_init__(self):
        w = self.words
        if w.ndim != 2:
            raise ValueError("words must be a 2-D array (m, length)")
        if w.shape[1] > 1 and not self.support[w[:, :-1] - 1, w[:, 1:] - 1].all():
            raise ValueError("words contain an unsupported adjacent pair")


def brute_force_trie(words: WordSet, j: int):
    """(height, saturation) of the generalized trie holding the given words.

    height: least prefix length at which every prefix occurs < j times.
    saturation: least length at which some supported sequence (reachable from
    type 1) occurs < j times, found by scanning whole levels.
    """
    w = words.words
    m, length = w.shape
    height = None
    for n in range(length + 1):
        multiplicities = Counter(tuple(row[:n]) for row in w)
        if max(multiplicities.values()) < j:
            height = n
            break
    if height is None:
        raise LengthTooShort(
            f"words of length {length} still collide {j} deep; height undetermined"
        )
    saturation = None
    level = [()]
    for n in range(height + 1):
        if n > 0:
            nxt = []
            for seq in level:
                prev = seq[-1] if seq else 1
                for k in range(words.support.shape[0]):
                    if words.support[prev - 1, k]:
                        nxt.append(seq + (k + 1,))
            level = nxt
            if len(level) > _LEVEL_SCAN_CAP:
                raise CapExceeded(f"level scan exceeds {_LEVEL_SCAN_CAP} sequences")
        counts = Counter(tuple(row[:n]) for row in w)
        if any(counts[seq] < j for seq in level):
            saturation = n
            break
    # saturation <= height always: at n = height every prefix count is < j
    assert saturation is not None
    return height, saturation


def grid_sup(objective, lo: float, hi: float, steps: int):
    """Dense-grid maximum with one golden-section refinement pass."""
    if steps < 2:
        raise ValueError("need at least 2 grid steps")
    xs = np.linspace(lo, hi, steps)
    vals = np.array([objective(x) for x in xs])
    i = int(np.argmax(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, steps - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(90):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
    x_best = 0.5 * (a + b)
    f_best = objective(x_best)
    if f_best >= vals[i]:
        return float(x_best), float(f_best)
    return float(xs[i]), float(vals[i])


def sample_words(env: EnvironmentModel, m: int, length: int, rng: np.random.Generator) -> WordSet:
    """m chain trajectories of `length` steps from type 1.

    Deterministic environments give independent Markov chains.  Random
    environments realize one shared cascade: each visited node samples its
    row once (lazily) and every ball passing through reuses it.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    words = np.empty((m, length), dtype=np.int64)
    cascade = {}
    for ball in range(m):
        state = 1
        node = ()
        for step in range(length):
            if env.kind == DETERMINISTIC:
                row = env.rows[state - 1]
            else:
                row = cascade.get(node)
                if row is None:
                    row = sample_row(env, state, rng)
                    cascade[node] = row
            cols = env.supported_cols[state - 1]
            u = rng.random()
            k = int(np.searchsorted(np.cumsum(row[cols]), u, side="right"))
            nxt = int(cols[min(k, len(cols) - 1)]) + 1
            words[ball, step] = nxt
            state = nxt
            node = node + (nxt,)
    return WordSet(words=words, support=env.support)
