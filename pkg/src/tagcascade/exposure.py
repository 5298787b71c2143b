"""Per-adoption network exposure and per-user mean adoption thresholds.

For each first usage of tag x by ego u at time t, exposure is the fraction
of u's alters (out-neighbors at t) whose own first usage of x happened
strictly before t. A user's threshold is the mean exposure over their first
usages, restricted to records where the ego had at least one alter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoAdoptionError, UndefinedThresholdError, UnknownIdError
from .events import Dataset

TIE_RULES = ("strict", "inclusive")
POPULARITY_MODES = ("adopters", "usages")


@dataclass(frozen=True)
class ExposureRecord:
    """Exposure measured at one first usage.

    `exposure` is NaN when the ego observed nobody at adoption time
    (neighborhood_size == 0); such records are "undefined" and excluded
    from threshold means.
    """

    user: int
    tag: int
    time: int
    active_alters: int
    neighborhood_size: int
    exposure: float
    tag_popularity_at_adoption: int

    @property
    def defined(self) -> bool:
        return self.neighborhood_size > 0


@dataclass(frozen=True)
class UserThreshold:
    user: int
    beta: float
    defined_adoptions: int
    undefined_adoptions: int


class ExposureTable:
    """Column-oriented sequence of ExposureRecord, one per first usage,
    in (time, user, tag) order. Columns are read-only numpy arrays."""

    def __init__(self, user, tag, time, active_alters, neighborhood_size, exposure, popularity):
        self.user = user
        self.tag = tag
        self.time = time
        self.active_alters = active_alters
        self.neighborhood_size = neighborhood_size
        self.exposure = exposure
        self.tag_popularity_at_adoption = popularity
        for arr in (user, tag, time, active_alters, neighborhood_size, exposure, popularity):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return int(self.user.shape[0])

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return ExposureRecord(
            user=int(self.user[i]),
            tag=int(self.tag[i]),
            time=int(self.time[i]),
            active_alters=int(self.active_alters[i]),
            neighborhood_size=int(self.neighborhood_size[i]),
            exposure=float(self.exposure[i]),
            tag_popularity_at_adoption=int(self.tag_popularity_at_adoption[i]),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def defined_mask(self) -> np.ndarray:
        return self.neighborhood_size > 0

    @property
    def n_defined(self) -> int:
        return int(np.count_nonzero(self.defined_mask))

    @property
    def n_undefined(self) -> int:
        return len(self) - self.n_defined


def all_exposures(
    d: Dataset,
    *,
    ties: str = "strict",
    popularity: str = "adopters",
) -> ExposureTable:
    """Exposure records for every first usage in the dataset.

    ties: 'strict' counts alters whose first usage is strictly before the
        ego's (default); 'inclusive' also counts same-timestamp co-adopters.
    popularity: 'adopters' counts distinct users with a strictly earlier
        first usage of the tag; 'usages' counts all strictly earlier usages.
    """
    if ties not in TIE_RULES:
        raise ValueError(f"ties must be one of {TIE_RULES}")
    if popularity not in POPULARITY_MODES:
        raise ValueError(f"popularity must be one of {POPULARITY_MODES}")

    fidx = np.flatnonzero(d.event_first)
    k = fidx.shape[0]
    out_user = np.empty(k, dtype=np.int32)
    out_tag = np.empty(k, dtype=np.int32)
    out_time = np.empty(k, dtype=np.int64)
    out_active = np.zeros(k, dtype=np.int32)
    out_nbh = np.zeros(k, dtype=np.int32)
    out_expo = np.full(k, np.nan, dtype=np.float64)
    out_pop = np.zeros(k, dtype=np.int64)
    if k == 0:
        return ExposureTable(out_user, out_tag, out_time, out_active, out_nbh, out_expo, out_pop)

    f_user = d.event_user[fidx]
    f_tag = d.event_tag[fidx]
    f_time = d.event_time[fidx]
    out_user[:] = f_user
    out_tag[:] = f_tag
    out_time[:] = f_time

    # Group first usages by tag; stable sort keeps (time, user) order inside
    # each group. `by_tag` holds row indices into the output table.
    by_tag = np.argsort(f_tag, kind="stable")
    tag_starts = np.searchsorted(f_tag[by_tag], np.arange(d.n_tags + 1))

    if popularity == "usages":
        a_order = np.argsort(d.event_tag, kind="stable")
        a_time_sorted = d.event_time[a_order]
        a_starts = np.searchsorted(d.event_tag[a_order], np.arange(d.n_tags + 1))

    # Per-user first-usage time of the tag currently being processed;
    # `stamp` marks which tag the slot belongs to, so no per-tag reset.
    stamp = np.full(d.n_users, -1, dtype=np.int64)
    atime = np.empty(d.n_users, dtype=np.int64)
    graph = d.graph
    strict = ties == "strict"

    for x in range(d.n_tags):
        rows = by_tag[tag_starts[x]:tag_starts[x + 1]]
        if rows.shape[0] == 0:
            continue
        users = f_user[rows]
        times = f_time[rows]
        stamp[users] = x
        atime[users] = times

        # Distinct adopters (or total usages) strictly before each adoption.
        if popularity == "adopters":
            out_pop[rows] = np.searchsorted(times, times, side="left")
        else:
            tail = a_time_sorted[a_starts[x]:a_starts[x + 1]]
            out_pop[rows] = np.searchsorted(tail, times, side="left")

        for j in range(rows.shape[0]):
            u = users[j]
            t = times[j]
            nb = graph.neighbors_at(u, t)
            nbh = nb.shape[0]
            if nbh == 0:
                continue
            if strict:
                active = np.count_nonzero((stamp[nb] == x) & (atime[nb] < t))
            else:
                active = np.count_nonzero((stamp[nb] == x) & (atime[nb] <= t))
            row = rows[j]
            out_nbh[row] = nbh
            out_active[row] = active
            out_expo[row] = active / nbh

    return ExposureTable(out_user, out_tag, out_time, out_active, out_nbh, out_expo, out_pop)


def exposure_at_adoption(
    d: Dataset,
    u: int,
    x: int,
    *,
    ties: str = "strict",
    popularity: str = "adopters",
) -> ExposureRecord:
    """Exposure record for one (user, tag) first usage.

    Matches the corresponding all_exposures row bit-exactly.
    """
    if ties not in TIE_RULES:
        raise ValueError(f"ties must be one of {TIE_RULES}")
    if popularity not in POPULARITY_MODES:
        raise ValueError(f"popularity must be one of {POPULARITY_MODES}")
    if not 0 <= u < d.n_users:
        raise UnknownIdError(f"user handle out of range: {u}")
    if not 0 <= x < d.n_tags:
        raise UnknownIdError(f"tag handle out of range: {x}")

    mine = np.flatnonzero((d.event_user == u) & (d.event_tag == x) & d.event_first)
    if mine.shape[0] == 0:
        raise NoAdoptionError(f"user {d.user_label(u)!r} never adopted tag {d.tag_label(x)!r}")
    t = int(d.event_time[mine[0]])

    nb = d.graph.neighbors_at(u, t)
    nbh = int(nb.shape[0])
    active = 0
    if nbh:
        first_of_tag = np.flatnonzero((d.event_tag == x) & d.event_first)
        adopt_time = {int(d.event_user[i]): int(d.event_time[i]) for i in first_of_tag}
        for v in nb:
            tv = adopt_time.get(int(v))
            if tv is None:
                continue
            if tv < t or (ties == "inclusive" and tv == t):
                active += 1

    if popularity == "adopters":
        pop_mask = (d.event_tag == x) & d.event_first & (d.event_time < t)
    else:
        pop_mask = (d.event_tag == x) & (d.event_time < t)
    pop = int(np.count_nonzero(pop_mask))

    return ExposureRecord(
        user=u,
        tag=x,
        time=t,
        active_alters=active,
        neighborhood_size=nbh,
        exposure=(active / nbh) if nbh else math.nan,
        tag_popularity_at_adoption=pop,
    )


def user_threshold(d: Dataset, u: int, *, ties: str = "strict") -> UserThreshold:
    """Mean exposure over the user's defined first usages.

    Raises UndefinedThresholdError when every adoption is undefined (the
    user observed nobody at any adoption time); such users are excluded
    from population statistics.
    """
    mine = np.flatnonzero((d.event_user == u) & d.event_first)
    if mine.shape[0] == 0:
        raise NoAdoptionError(f"user {d.user_label(u)!r} has no adoptions")
    total = 0.0
    n_def = 0
    n_undef = 0
    for i in mine:
        rec = exposure_at_adoption(d, u, int(d.event_tag[i]), ties=ties)
        if rec.defined:
            total += rec.exposure
            n_def += 1
        else:
            n_undef += 1
    if n_def == 0:
        raise UndefinedThresholdError(
            f"user {d.user_label(u)!r} has no adoption with a defined exposure"
        )
    return UserThreshold(user=u, beta=total / n_def, defined_adoptions=n_def, undefined_adoptions=n_undef)


def user_thresholds_from_table(table: ExposureTable, n_users: int) -> list[UserThreshold]:
    """Per-user mean exposures aggregated from a record table.

    Returns one UserThreshold per user with at least one defined record,
    ordered by user handle. Accumulation runs in record (time) order, so
    results match per-user recomputation bit-exactly.
    """
    defined = table.defined_mask
    users_def = table.user[defined]
    sums = np.bincount(users_def, weights=table.exposure[defined], minlength=n_users)
    counts = np.bincount(users_def, minlength=n_users)
    undef_counts = np.bincount(table.user[~defined], minlength=n_users)
    out = []
    for u in np.flatnonzero(counts):
        out.append(
            UserThreshold(
                user=int(u),
                beta=float(sums[u] / counts[u]),
                defined_adoptions=int(counts[u]),
                undefined_adoptions=int(undef_counts[u]),
            )
        )
    return out


def population_thresholds(
    d: Dataset,
    *,
    ties: str = "strict",
    table: ExposureTable | None = None,
) -> list[UserThreshold]:
    """Thresholds for every user with at least one defined adoption."""
    if table is None:
        table = all_exposures(d, ties=ties)
    return user_thresholds_from_table(table, d.n_users)


def _quartile_stats(values: np.ndarray) -> dict:
    if values.shape[0] == 0:
        return {"count": 0, "median": None, "q1": None, "q3": None, "mean": None}
    return {
        "count": int(values.shape[0]),
        "median": float(np.median(values)),
        "q1": float(np.percentile(values, 25)),
        "q3": float(np.percentile(values, 75)),
        "mean": float(values.mean()),
    }


def threshold_summary(table: ExposureTable, thresholds: list[UserThreshold]) -> dict:
    """Population summary over both views: per-adoption raw exposures and
    per-user mean thresholds (the distinction the source data conflates)."""
    exposures = table.exposure[table.defined_mask]
    betas = np.array([t.beta for t in thresholds], dtype=np.float64)
    return {
        "records_total": len(table),
        "records_defined": table.n_defined,
        "records_undefined": table.n_undefined,
        "users_with_threshold": len(thresholds),
        "per_adoption": _quartile_stats(exposures),
        "per_user": _quartile_stats(betas),
    }
