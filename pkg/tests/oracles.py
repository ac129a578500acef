"""Independent recomputations used as test oracles.

Deliberately written against different primitives than the package
(sorted() instead of lexsort, Fraction arithmetic instead of float rounding,
central differences instead of backprop) so a shared bug cannot hide.
"""

import math
from fractions import Fraction

import numpy as np

from botuq.models import draw_masks, kernel_for

PROB_FLOOR = 1e-12


def ceil_count_oracle(fraction_num: int, fraction_den: int, n: int) -> int:
    """Exact ceil(fraction * n) over rationals."""
    t = Fraction(fraction_num, fraction_den) * n
    return int(-((-t) // 1))


def top_loss_oracle(losses) -> list:
    """All indices sorted by (loss desc, index asc); slice for any top-p."""
    return [i for i, _ in sorted(enumerate(losses), key=lambda t: (-t[1], t[0]))]


def entropy_oracle(probs) -> float:
    return -sum(p * math.log(p) for p in probs if p > 0)


def kl_oracle(p, q) -> float:
    return sum(
        pi * math.log(max(pi, PROB_FLOOR) / max(qi, PROB_FLOOR)) for pi, qi in zip(p, q)
    )


def measures_oracle(member_probs) -> tuple:
    """(entropy of mean, mutual information, variance, consecutive KL)."""
    m = len(member_probs)
    mean = [sum(d[c] for d in member_probs) / m for c in (0, 1)]
    h_mean = entropy_oracle(mean)
    mi = h_mean - sum(entropy_oracle(d) for d in member_probs) / m
    p1 = [d[1] for d in member_probs]
    vv = sum(x * x for x in p1) / m - (sum(p1) / m) ** 2
    ak = sum(kl_oracle(member_probs[i], member_probs[i + 1]) for i in range(m - 1)) / (m - 1)
    return h_mean, mi, vv, ak


def swag_moments_oracle(snapshots) -> tuple:
    """(mean, second moment, variance) per tensor from a snapshot list."""
    names = snapshots[0].keys()
    t = len(snapshots)
    mean = {n: sum(s[n] for s in snapshots) / t for n in names}
    second = {n: sum(s[n] ** 2 for s in snapshots) / t for n in names}
    var = {n: np.maximum(second[n] - mean[n] ** 2, 0.0) for n in names}
    return mean, second, var


def fd_gradient_check(params, x, y, seed=0, h=1e-6, dropout=None):
    """Max normalized error between backprop and central differences.

    Error is |g - fd| / max(1, |g|, |fd|): relative on meaningful entries,
    absolute where both are tiny and the FD quotient is pure roundoff.
    Checks every coordinate of every tensor, with the same dropout masks
    applied to both sides.
    """
    k = kernel_for(params, x.shape[0])
    rate = params.arch.dropout_rate if dropout is None else dropout
    m1, m2 = draw_masks(k, np.random.default_rng(seed), rate)

    def loss_now():
        p = k.forward(x, m1, m2)
        return -math.log(max(p[y], PROB_FLOOR))

    k.loss_grad(x, y, m1, m2)
    grads = {n: np.array(g, copy=True) for n, g in k.grads.items()}
    worst = 0.0
    for name, w in k.weights.items():
        it = np.nditer(np.asarray(w), flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = w[idx]
            w[idx] = old + h
            lp = loss_now()
            w[idx] = old - h
            lm = loss_now()
            w[idx] = old
            fd = (lp - lm) / (2 * h)
            g = grads[name][idx]
            err = abs(g - fd) / max(1.0, abs(g), abs(fd))
            worst = max(worst, err)
    return worst
