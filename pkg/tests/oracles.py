"""Naive pure-Python recomputations used as oracles for the vectorized metrics.

Everything here loops row by row over plain lists, with no numpy, so it
shares no code path with the package.
"""


def favorable_rates(fav, prot):
    approved = {True: 0, False: 0}
    size = {True: 0, False: 0}
    for f, p in zip(fav, prot):
        size[bool(p)] += 1
        approved[bool(p)] += int(f)
    return approved[True] / size[True], approved[False] / size[False]


def air(fav, prot):
    rp, rc = favorable_rates(fav, prot)
    return rp / rc


def parity(fav, prot):
    rp, rc = favorable_rates(fav, prot)
    return rp - rc


def confusion(fav, y, prot):
    out = {"protected": dict(TP=0, FP=0, TN=0, FN=0), "control": dict(TP=0, FP=0, TN=0, FN=0)}
    for f, o, p in zip(fav, y, prot):
        g = "protected" if p else "control"
        if f == 1 and o == 0:
            out[g]["TP"] += 1
        elif f == 1 and o == 1:
            out[g]["FP"] += 1
        elif f == 0 and o == 1:
            out[g]["TN"] += 1
        else:
            out[g]["FN"] += 1
    return out


def accuracy(fav, y):
    return sum(1 for f, o in zip(fav, y) if (f == 1) == (o == 0)) / len(y)


def class_balance(scores, y, prot, cls):
    sums = {True: 0.0, False: 0.0}
    counts = {True: 0, False: 0}
    for s, o, p in zip(scores, y, prot):
        if o == cls:
            sums[bool(p)] += s
            counts[bool(p)] += 1
    if not counts[True] or not counts[False]:
        return None
    return abs(sums[True] / counts[True] - sums[False] / counts[False])


def calibration(scores, y, prot, n_bins):
    """Per-bin (n_p, n_c, rate_p, rate_c) and max gap, bins by k/n_bins <= s < (k+1)/n_bins."""
    rows = []
    for k in range(n_bins):
        lo, hi = k / n_bins, (k + 1) / n_bins
        cnt = {True: 0, False: 0}
        dft = {True: 0, False: 0}
        for s, o, p in zip(scores, y, prot):
            last = k == n_bins - 1
            if lo <= s < hi or (last and s == 1.0):
                cnt[bool(p)] += 1
                dft[bool(p)] += o
        rows.append((cnt[True], cnt[False],
                     dft[True] / cnt[True] if cnt[True] else None,
                     dft[False] / cnt[False] if cnt[False] else None))
    gaps = [abs(r[2] - r[3]) for r in rows if r[0] and r[1]]
    return rows, (max(gaps) if gaps else None)


def nondominated(points):
    """Indices of points not dominated by any other (both coordinates maximized)."""
    keep = []
    for i, (a, b) in enumerate(points):
        dominated = False
        for j, (c, d) in enumerate(points):
            if j != i and c >= a and d >= b and (c > a or d > b):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep
