"""Collapsed Gibbs sweep kernel for the topic model.

The hot loop is compiled with numba. Randomness comes from an explicit
xorshift128+ state passed in and updated in place, so a fit is a bit-exact
function of its seed on every platform and across re-entry into the kernel.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U64 = np.uint64
_DOUBLE_SCALE = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True)
def _splitmix64(x):
    x = x + _U64(0x9E3779B97F4A7C15)
    z = x
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return x, z ^ (z >> _U64(31))


@njit(cache=True)
def seed_state(seed):
    """Derive a nonzero xorshift128+ state from a 64-bit seed."""
    state = np.empty(2, dtype=np.uint64)
    x = _U64(seed)
    x, s0 = _splitmix64(x)
    x, s1 = _splitmix64(x)
    if s0 == _U64(0) and s1 == _U64(0):
        s1 = _U64(1)
    state[0] = s0
    state[1] = s1
    return state


@njit(cache=True)
def _next_double(state):
    s1 = state[0]
    s0 = state[1]
    state[0] = s0
    s1 ^= s1 << _U64(23)
    s1 ^= s1 >> _U64(18)
    s1 ^= s0 ^ (s0 >> _U64(5))
    state[1] = s1
    return float((s1 + s0) >> _U64(11)) * _DOUBLE_SCALE


@njit(cache=True)
def init_assignments(token_doc, token_word, K, z, n_jk, n_kw, n_k, state):
    """Assign every token a uniform random topic and fill the count tables."""
    for t in range(token_doc.shape[0]):
        k = int(_next_double(state) * K)
        if k >= K:
            k = K - 1
        z[t] = k
        n_jk[token_doc[t], k] += 1
        n_kw[k, token_word[t]] += 1
        n_k[k] += 1


@njit(cache=True)
def gibbs_sweep(token_doc, token_word, z, n_jk, n_kw, n_k, alpha, beta, state):
    """One full pass resampling each token's topic from its collapsed conditional."""
    K = n_k.shape[0]
    V = n_kw.shape[1]
    v_beta = V * beta
    p = np.empty(K, dtype=np.float64)
    for t in range(token_doc.shape[0]):
        j = token_doc[t]
        w = token_word[t]
        k = z[t]
        n_jk[j, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1
        total = 0.0
        for i in range(K):
            weight = (n_jk[j, i] + alpha[i]) * (n_kw[i, w] + beta) / (n_k[i] + v_beta)
            p[i] = weight
            total += weight
        u = _next_double(state) * total
        acc = 0.0
        new_k = K - 1
        for i in range(K):
            acc += p[i]
            if u < acc:
                new_k = i
                break
        z[t] = new_k
        n_jk[j, new_k] += 1
        n_kw[new_k, w] += 1
        n_k[new_k] += 1
