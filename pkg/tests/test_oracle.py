"""Brute-force trie, grid optimizer, and word sampling references."""

import math

import numpy as np
import pytest

import trielab as tl
from trielab.errors import LengthTooShort


def full_support(K=2):
    return np.ones((K, K), dtype=bool)


def words_of(rows):
    return tl.WordSet(words=np.array(rows), support=full_support())


# --------------------------------------------------------------------------
# brute-force trie
# --------------------------------------------------------------------------

def test_trie_hand_example():
    # prefixes of length 1 collide; the level-1 box "2" holds zero words
    height, sat = tl.brute_force_trie(words_of([(1, 1), (1, 2)]), 2)
    assert (height, sat) == (2, 1)


def test_trie_single_letters():
    height, sat = tl.brute_force_trie(words_of([(1,), (2,)]), 2)
    assert (height, sat) == (1, 1)


def test_trie_identical_words():
    with pytest.raises(LengthTooShort):
        tl.brute_force_trie(words_of([(1, 2, 1)] * 3, ), 2)


def test_trie_saturation_at_root():
    # fewer words than the threshold: the root box itself is under-filled
    height, sat = tl.brute_force_trie(words_of([(1, 2)]), 2)
    assert (height, sat) == (0, 0)


def test_trie_respects_support_in_level_scan():
    support = np.array([[True, True], [True, False]])
    words = tl.WordSet(words=np.array([(1, 1), (1, 2), (2, 1)]), support=support)
    height, sat = tl.brute_force_trie(words, 2)
    # level-1 sequences are (1) [2 words] and (2) [1 word]: some box < 2
    assert sat == 1
    assert height == 2


def test_wordset_validates_support():
    support = np.array([[True, True], [True, False]])
    with pytest.raises(ValueError):
        tl.WordSet(words=np.array([(2, 2)]), support=support)


# --------------------------------------------------------------------------
# monotonicity through a fixed realized cascade
# --------------------------------------------------------------------------

def test_height_monotone_in_j_and_m(env_markov_b, env_dirichlet):
    for env in (env_markov_b, env_dirichlet):
        words = tl.sample_words(env, 30, 48, np.random.default_rng(17))
        heights_j = []
        for j in (2, 3, 4):
            h, _ = tl.brute_force_trie(words, j)
            heights_j.append(h)
        assert heights_j == sorted(heights_j, reverse=True)
        heights_m = []
        for m in (10, 20, 30):
            sub = tl.WordSet(words=words.words[:m], support=words.support)
            h, _ = tl.brute_force_trie(sub, 2)
            heights_m.append(h)
        assert heights_m == sorted(heights_m)


# --------------------------------------------------------------------------
# grid optimizer
# --------------------------------------------------------------------------

def test_grid_sup_parabola():
    x, v = tl.grid_sup(lambda mu: -(mu - 1.0) ** 2, -5.0, 5.0, 10_000)
    assert abs(x - 1.0) <= 1e-3
    assert v <= 0.0 and v >= -1e-6


def test_grid_sup_degenerate_rate(env_uniform):
    def objective(mu):
        return mu * (-math.log(2.0)) - math.log(2.0 ** (-mu))

    _, v = tl.grid_sup(objective, -5.0, 5.0, 101)
    assert abs(v) <= 1e-6


def test_grid_sup_locates_f_root():
    # closed-form box-count exponent of the uniform-simplex rows
    def f(t):
        return math.log(2.0) - math.log(1.0 + t) + t / (1.0 + t)

    root, neg = tl.grid_sup(lambda t: -abs(f(t)), 0.1, 20.0, 10_000)
    assert abs(root - 3.3110704070010053) <= 1e-3
    assert abs(neg) <= 1e-6


# --------------------------------------------------------------------------
# word sampling
# --------------------------------------------------------------------------

def test_sample_words_first_letter_frequency(env_iid):
    ws = tl.sample_words(env_iid, 100_000, 1, np.random.default_rng(3))
    freq = (ws.words[:, 0] == 1).mean()
    se = math.sqrt(0.7 * 0.3 / 100_000)
    assert abs(freq - 0.7) <= 4 * se


def test_sample_words_path_probability(env_markov):
    ws = tl.sample_words(env_markov, 100_000, 2, np.random.default_rng(4))
    p12 = ((ws.words[:, 0] == 1) & (ws.words[:, 1] == 2)).mean()
    se = math.sqrt(0.09 * 0.91 / 100_000)
    assert abs(p12 - 0.9 * 0.1) <= 4 * se


def test_sample_words_random_env_shares_cascade(env_dirichlet):
    # all balls traverse one realization: with many balls and one step, the
    # empirical first-letter frequency concentrates near that realization's
    # root row, not near the Dirichlet mean
    ws = tl.sample_words(env_dirichlet, 4000, 1, np.random.default_rng(8))
    freq = (ws.words[:, 0] == 1).mean()
    # the realized root probability for this seed is far from 1/2
    assert abs(freq - 0.5) > 0.05


def test_simulator_law_matches_word_oracle_smoke(env_markov_b):
    # small-sample agreement of height frequencies (full test in acceptance)
    runs = 400
    sim_h = []
    for seed in range(runs):
        obs = tl.simulate_occupancy(env_markov_b, 8, 2, np.random.default_rng((1, seed)))
        sim_h.append(obs.height)
    oracle_h = []
    for seed in range(runs):
        ws = tl.sample_words(env_markov_b, 8, 48, np.random.default_rng((2, seed)))
        h, _ = tl.brute_force_trie(ws, 2)
        oracle_h.append(h)
    assert abs(np.mean(sim_h) - np.mean(oracle_h)) <= 4 * (
        np.std(sim_h) / math.sqrt(runs) + np.std(oracle_h) / math.sqrt(runs)
    )
