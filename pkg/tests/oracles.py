"""Independent oracles for the test suite.

These deliberately avoid the library's data structures and algorithms:
the exposure oracle rescans raw event rows per first usage, and the
power-law sampler inverts the discrete CDF by doubling + binary search
on the survival function. Tests compare library output against these,
never the other way round.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import zeta

# ---------------------------------------------------------------------------
# brute-force exposure oracle
# ---------------------------------------------------------------------------

def brute_force_exposures(adoption_rows, follow_rows, *, ties="strict", popularity="adopters"):
    """Recompute every exposure record by rescanning the raw rows.

    adoption_rows: (user, tag, time_ms) tuples, any order, duplicates allowed.
    follow_rows: (src, dst) or (src, dst, since_ms_or_None).

    Returns {(user, tag): dict} with exact-rational exposure (None when the
    ego had no alters at adoption time).
    """
    firsts = {}
    for u, x, t in adoption_rows:
        key = (u, x)
        if key not in firsts or t < firsts[key]:
            firsts[key] = t

    edges = {}
    for row in follow_rows:
        src, dst = row[0], row[1]
        since = row[2] if len(row) > 2 else None
        if src == dst:
            continue
        key = (src, dst)
        if key not in edges:
            edges[key] = since
        elif edges[key] is not None and (since is None or since < edges[key]):
            edges[key] = since

    out = {}
    for (u, x), t0 in firsts.items():
        nbrs = [
            dst
            for (src, dst), since in edges.items()
            if src == u and (since is None or since <= t0)
        ]
        active = 0
        for v in nbrs:
            tv = firsts.get((v, x))
            if tv is None:
                continue
            if tv < t0 or (ties == "inclusive" and tv == t0):
                active += 1
        if popularity == "adopters":
            pop = sum(1 for (w, y), tw in firsts.items() if y == x and tw < t0)
        else:
            pop = sum(1 for _, y, tw in adoption_rows if y == x and tw < t0)
        out[(u, x)] = {
            "time": t0,
            "active": active,
            "neighborhood": len(nbrs),
            "exposure": Fraction(active, len(nbrs)) if nbrs else None,
            "popularity": pop,
        }
    return out


def assert_table_matches_oracle(ds, table, oracle):
    __tracebackhide__ = True
    assert len(table) == len(oracle)
    for rec in table:
        key = (ds.user_label(rec.user), ds.tag_label(rec.tag))
        want = oracle[key]
        assert rec.time == want["time"], key
        assert rec.active_alters == want["active"], key
        assert rec.neighborhood_size == want["neighborhood"], key
        assert rec.tag_popularity_at_adoption == want["popularity"], key
        if want["exposure"] is None:
            assert math.isnan(rec.exposure), key
        else:
            assert abs(rec.exposure - float(want["exposure"])) < 1e-12, key


# ---------------------------------------------------------------------------
# random micro-datasets (deliberate timestamp ties)
# ---------------------------------------------------------------------------

def random_micro_rows(rng: np.random.Generator):
    n_users = int(rng.integers(1, 31))
    n_tags = int(rng.integers(1, 11))
    n_events = int(rng.integers(0, 201))
    users = [f"u{i}" for i in range(n_users)]
    tags = [f"x{i}" for i in range(n_tags)]
    # narrow time range forces plenty of exact ties
    adoptions = [
        (
            users[int(rng.integers(n_users))],
            tags[int(rng.integers(n_tags))],
            int(rng.integers(0, 40)),
        )
        for _ in range(n_events)
    ]
    timed = bool(rng.integers(0, 2))
    follows = []
    n_edges = int(rng.integers(0, 120))
    for _ in range(n_edges):
        a = users[int(rng.integers(n_users))]
        b = users[int(rng.integers(n_users))]
        if timed:
            since = int(rng.integers(0, 40)) if rng.integers(0, 2) else None
            follows.append((a, b, since))
        else:
            follows.append((a, b))
    return adoptions, follows


# ---------------------------------------------------------------------------
# independent discrete power-law sampler (inverse CDF)
# ---------------------------------------------------------------------------

def zeta_sample(alpha: float, xmin: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Exact inverse-CDF draws: the smallest k >= xmin with
    zeta(alpha, k+1) <= (1-u) * zeta(alpha, xmin), located by doubling
    then binary search."""
    znorm = zeta(alpha, float(xmin))
    u = rng.random(size)
    target = (1.0 - u) * znorm
    lo = np.full(size, xmin, dtype=np.int64)
    hi = np.full(size, xmin, dtype=np.int64)
    active = zeta(alpha, hi + 1.0) > target
    while active.any():
        lo[active] = hi[active] + 1
        hi[active] = hi[active] * 2 + 1
        active = zeta(alpha, hi + 1.0) > target
    while (lo < hi).any():
        mid = (lo + hi) // 2
        le = zeta(alpha, mid + 1.0) <= target
        hi = np.where(le & (lo < hi), mid, hi)
        lo = np.where(~le & (lo < hi), mid + 1, lo)
    return lo
