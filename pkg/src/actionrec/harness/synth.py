"""Synthetic score corpora with a known state -> action rule."""

import numpy as np

from ..errors import ValidationError

# keeps noiseless measurements strictly inside the simplex
MIN_MIX_NOISE = 1e-3


def presence_rule(state):
    """y = 1 iff some superpixel is in ``state`` (1-based)."""
    def rule(h):
        return bool(np.any(np.asarray(h) == state - 1))
    rule.__name__ = f"any:{state}"
    return rule


def parse_rule(rule, K):
    if rule is None:
        return presence_rule(K)
    if callable(rule):
        return rule
    kind, _, arg = str(rule).partition(":")
    if kind != "any" or not arg.isdigit() or not 1 <= int(arg) <= K:
        raise ValidationError(f"unknown rule {rule!r}; expected 'any:<state in 1..{K}>'")
    return presence_rule(int(arg))


def noisy_simplex(state, K, noise, rng):
    """Score vector peaked at ``state``; with probability ``noise`` the peak moves elsewhere."""
    observed = state
    if noise > 0 and rng.random() < noise:
        observed = int(rng.choice([k for k in range(K) if k != state]))
    mix = max(noise, MIN_MIX_NOISE)
    a = 1.0 - mix * K / (K - 1)
    x = np.full(K, (1.0 - a) / K)
    x[observed] += a
    return x


def synth_generate(K=5, T_range=(3, 8), N=200, rule=None, noise=0.0, seed=0):
    """Draw ``N`` examples; returns ``(data, latent_truth)``.

    ``data`` is a list of ``(x, y)`` with ``x`` of shape (T, K). States are
    uniform over ``0..K-1`` and T uniform over ``T_range`` (inclusive).
    """
    lo, hi = T_range
    if K < 2:
        raise ValidationError("K must be >= 2")
    if N < 4:
        raise ValidationError("N must be >= 4")
    if not 0.0 <= noise < 0.5:
        raise ValidationError("noise must lie in [0, 0.5)")
    if not 1 <= lo <= hi:
        raise ValidationError(f"invalid T range {T_range}")
    rule = parse_rule(rule, K)
    rng = np.random.default_rng(seed)
    data, truth = [], []
    for _ in range(N):
        T = int(rng.integers(lo, hi + 1))
        h = rng.integers(0, K, size=T)
        x = np.stack([noisy_simplex(int(s), K, noise, rng) for s in h])
        data.append((x, int(rule(h))))
        truth.append(h.astype(np.int64))
    ys = {y for _, y in data}
    if len(ys) < 2:
        raise ValidationError(f"rule is {'always' if ys == {1} else 'never'} true on this corpus")
    return data, truth
