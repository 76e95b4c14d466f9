"""Independent slow reimplementations used as test oracles.

Written in plain Python loops over samples so they share no code with the
vectorised package implementation.
"""

from __future__ import annotations

import math


def brute_counts(predictions, truth, K):
    """Per-sample walk through the count table; returns a dict of counters."""
    tp = [0] * (K + 1)
    fp = [0] * (K + 1)
    fn = [0] * (K + 1)
    c = {"tp_u": 0, "fn_u": 0, "fp_u": 0, "tp_f": 0, "fn_f": 0}
    for p, t in zip(predictions, truth):
        p, t = int(p), int(t)
        if t >= 1:
            if p == t:
                tp[t] += 1
            elif p == 0:
                fn[t] += 1
                c["fp_u"] += 1
            else:
                fn[t] += 1
                fp[p] += 1
        elif t == 0:
            if p == 0:
                c["tp_u"] += 1
            else:
                c["fn_u"] += 1
                fp[p] += 1
        else:
            if p == 0:
                c["tp_f"] += 1
            else:
                c["fn_f"] += 1
                fp[p] += 1
    c["tp"], c["fp"], c["fn"] = tp[1:], fp[1:], fn[1:]
    return c


def brute_q1(predictions, truth, K, eps=1e-4):
    c = brute_counts(predictions, truth, K)
    fs = []
    for i in range(K):
        tp, fp, fn = c["tp"][i], c["fp"][i], c["fn"][i]
        if tp + fn == 0:
            continue
        p = tp / (tp + fp + eps)
        r = tp / (tp + fn)
        fs.append(2 * p * r / (p + r + eps))
    f_d = sum(fs) / len(fs) if fs else 0.0
    tpo = c["tp_u"] + c["tp_f"]
    p_o = tpo / (tpo + c["fp_u"] + eps) if (tpo + c["fp_u"] + eps) else 0.0
    den = tpo + c["fn_u"] + c["fn_f"]
    r_o = tpo / den if den else 0.0
    f_o = 2 * p_o * r_o / (p_o + r_o + eps)
    if den == 0 and c["fp_u"] == 0:
        f_o = 1.0
    return (f_d + f_o) / 2


def threshold_predictions(scores, base_labels, theta):
    return [0 if s < theta else b for s, b in zip(scores, base_labels)]


def dense_scan(scores, base_labels, truth, K, n=10_000, eps=1e-4):
    """Best Q1 over ``n`` evenly spaced thresholds spanning the score range plus margins."""
    lo, hi = min(scores), max(scores)
    pad = (hi - lo) * 0.01 + 1.0
    best = -1.0
    for i in range(n):
        theta = lo - pad + (hi - lo + 2 * pad) * i / (n - 1)
        best = max(best, brute_q1(threshold_predictions(scores, base_labels, theta), truth, K, eps))
    return best


def dense_pr_area(scores, positives, n=200_001):
    """Area under the step-interpolated PR curve by midpoint integration over recall.

    Each recall value maps to the precision of the first threshold reaching it;
    between curve points precision is linearly interpolated, matching the
    trapezoid rule the package uses, so agreement is up to quadrature error.
    """
    pts = []
    for t in sorted(set(scores), reverse=True):
        called = [s >= t for s in scores]
        tp = sum(c and y for c, y in zip(called, positives))
        pts.append((tp / sum(positives), tp / sum(called)))
    pts = [(0.0, pts[0][1])] + pts
    area = 0.0
    h = 1.0 / (n - 1)
    for k in range(n - 1):
        r = (k + 0.5) * h
        for (r0, p0), (r1, p1) in zip(pts, pts[1:]):
            if r0 <= r < r1:
                area += h * (p0 + (p1 - p0) * (r - r0) / (r1 - r0))
                break
    return area


def streaming_mean(rows):
    """Welford running mean."""
    mean = None
    for n, row in enumerate(rows, start=1):
        if mean is None:
            mean = [float(v) for v in row]
        else:
            mean = [m + (float(v) - m) / n for m, v in zip(mean, row)]
    return mean


def exp_sum(values):
    return math.fsum(math.exp(v) for v in values)


def fd_derivatives(f, params, coords, h=1e-5):
    """Central-difference derivative of scalar ``f()`` w.r.t. ``params[c]`` for each flat index.

    ``params`` is modified in place and restored. Returns the numeric derivatives.
    """
    flat = params.reshape(-1)
    out = []
    for c in coords:
        old = flat[c]
        flat[c] = old + h
        up = f()
        flat[c] = old - h
        down = f()
        flat[c] = old
        out.append((up - down) / (2 * h))
    return out


def relative_error(analytic, numeric, floor=1e-12):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
