"""Slow, direct reference implementations used to check the fast paths."""

from itertools import combinations

import numpy as np


def rocket_oracle(x, weights, bias, dilation, padding):
    """Zero-pad explicitly, then slide the dilated kernel one position at a time."""
    x = np.asarray(x, dtype=float)
    length = len(weights)
    pad = (length - 1) * dilation // 2 if padding else 0
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    span = (length - 1) * dilation
    outputs = []
    for start in range(len(xp) - span):
        total = bias
        for j in range(length):
            total += weights[j] * xp[start + j * dilation]
        outputs.append(total)
    if not outputs:
        return 0.0, 0.0
    outputs = np.array(outputs)
    return float(outputs.max()), float(np.mean(outputs > 0))


def minirocket_kernel_weights(i0, i1, i2):
    w = -np.ones(9)
    w[[i0, i1, i2]] = 2.0
    return w


def minirocket_oracle(x, dilations, per_dilation, biases_row, indices):
    """Features of one channel, computed with explicit kernels and padding."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = []
    f = 0
    for di, d in enumerate(dilations):
        pad = 4 * d
        xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
        for k, (i0, i1, i2) in enumerate(indices):
            w = minirocket_kernel_weights(i0, i1, i2)
            conv = np.array([sum(w[j] * xp[t + j * d] for j in range(9)) for t in range(n)])
            if (di + k) % 2 == 1:
                conv = conv[pad : n - pad]
            for _ in range(per_dilation[di]):
                out.append(np.mean(conv > biases_row[f]))
                f += 1
    return np.array(out)


def ridge_oracle(X, y_idx, n_classes, alpha, fit_intercept, balanced):
    """Solve the weighted penalised normal equations directly, one class at a time.

    The intercept column, when present, carries no penalty.
    """
    n, p = X.shape
    if balanced:
        counts = np.bincount(y_idx, minlength=n_classes)
        present = np.count_nonzero(counts)
        s = n / (present * counts[y_idx])
    else:
        s = np.ones(n)
    A = np.hstack([X, np.ones((n, 1))]) if fit_intercept else X
    penalty = np.eye(A.shape[1]) * alpha
    if fit_intercept:
        penalty[-1, -1] = 0.0
    lhs = A.T @ (s[:, None] * A) + penalty
    W = np.zeros((n_classes, p))
    b = np.zeros(n_classes)
    for c in range(n_classes):
        y = np.where(y_idx == c, 1.0, -1.0)
        theta = np.linalg.solve(lhs, A.T @ (s * y))
        W[c] = theta[:p]
        if fit_intercept:
            b[c] = theta[-1]
    return W, b


def deviation_oracle(counts, held_rows, target):
    total = counts.sum(axis=0)
    held = counts[list(held_rows)].sum(axis=0)
    devs = []
    for h, t in zip(held, total):
        rest = t - h
        if rest <= 0:
            return float("inf")
        devs.append(abs(h / rest - target))
    return float(np.mean(devs))


def split_oracle(counts, k, target):
    """Every k-subset scored; returns (deviation, rows) sorted best first, ties lexicographic."""
    scored = [(deviation_oracle(counts, combo, target), combo) for combo in combinations(range(len(counts)), k)]
    return sorted(scored, key=lambda t: (t[0], t[1]))
