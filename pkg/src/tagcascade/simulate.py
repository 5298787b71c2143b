"""Executable diffusion mechanisms over a follower graph.

Three models share one synchronous-update skeleton: a fractional-threshold
rule, an independent cascade driven by pre-drawn per-edge uniforms (so runs
at different transmission probabilities are coupled), and a social-learning
variant that demands the threshold hold for a lag of consecutive steps.
Every run is deterministic given its config, including the 64-bit seed.

Step semantics: adoption at step k is triggered by the adoption state at
the end of step k-1, which matches the measurement side's strictly-before
tie rule, so measured exposure at adoption can never undershoot a planted
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm

from .errors import UnsupportedModelError, UsageError
from .events import Dataset, FollowerGraph, build_dataset, build_follower_graph
from .exposure import all_exposures
from .stats import spearman_rho

MODELS = ("threshold", "cascade", "learning")


# ---------------------------------------------------------------------------
# synthetic graphs
# ---------------------------------------------------------------------------

def erdos_renyi(n: int, mean_out_degree: float, seed: int) -> FollowerGraph:
    """Directed G(n, p) with p = mean_out_degree / (n - 1)."""
    if n < 2:
        raise UsageError("erdos_renyi needs n >= 2")
    p = mean_out_degree / (n - 1)
    if not 0.0 <= p <= 1.0:
        raise UsageError(f"mean_out_degree {mean_out_degree} out of range for n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    srcs, dsts = [], []
    for u in range(n):
        mask = rng.random(n) < p
        mask[u] = False
        hit = np.flatnonzero(mask)
        if hit.shape[0]:
            srcs.append(np.full(hit.shape[0], u, dtype=np.int64))
            dsts.append(hit)
    if srcs:
        edges = np.column_stack([np.concatenate(srcs), np.concatenate(dsts)])
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return build_follower_graph(edges, n)


def preferential_attachment(n: int, m: int, seed: int) -> FollowerGraph:
    """Directed preferential attachment: each new node observes m distinct
    existing nodes chosen with probability proportional to in-degree + 1,
    which yields a heavy-tailed in-degree (popularity) distribution."""
    if n < 2 or m < 1 or m >= n:
        raise UsageError("preferential_attachment needs n >= 2 and 1 <= m < n")
    rng = np.random.Generator(np.random.PCG64(seed))
    pool = list(range(m))  # each node appears once at birth, once per incoming edge
    src_list, dst_list = [], []
    for i in range(m, n):
        picks: set = set()
        want = min(m, i)
        while len(picks) < want:
            picks.add(pool[int(rng.integers(0, len(pool)))])
        for v in sorted(picks):
            src_list.append(i)
            dst_list.append(v)
            pool.append(v)
        pool.append(i)
    edges = np.column_stack([
        np.asarray(src_list, dtype=np.int64),
        np.asarray(dst_list, dtype=np.int64),
    ])
    return build_follower_graph(edges, n)


def gen_graph(kind: str, seed: int, **params) -> FollowerGraph:
    """Dispatcher for config-driven graph generation."""
    if kind == "erdos_renyi":
        return erdos_renyi(int(params["n"]), float(params["mean_out_degree"]), seed)
    if kind == "preferential_attachment":
        return preferential_attachment(int(params["n"]), int(params["m"]), seed)
    raise UsageError(f"unknown graph kind: {kind!r}")


# ---------------------------------------------------------------------------
# parameters and config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdSpec:
    """Per-user threshold distribution: constant c, uniform[a, b], or a
    normal(mu, sigma) truncated to [0, 1].

    A constant above 1 is allowed as an explicit 'unreachable' setting;
    sampled distributions always land in [0, 1].
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind == "constant":
            (c,) = self.params
            if c < 0:
                raise UsageError("constant threshold must be >= 0")
        elif self.kind == "uniform":
            a, b = self.params
            if not (0.0 <= a <= b <= 1.0):
                raise UsageError("uniform threshold bounds must satisfy 0 <= a <= b <= 1")
        elif self.kind == "truncnorm":
            _, sigma = self.params
            if sigma <= 0:
                raise UsageError("truncnorm sigma must be > 0")
        else:
            raise UsageError(f"unknown threshold distribution: {self.kind!r}")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, float(self.params[0]))
        if self.kind == "uniform":
            a, b = self.params
            return a + (b - a) * rng.random(n)
        mu, sigma = self.params
        lo, hi = (0.0 - mu) / sigma, (1.0 - mu) / sigma
        return truncnorm.rvs(lo, hi, loc=mu, scale=sigma, size=n, random_state=rng)


@dataclass(frozen=True)
class ThresholdParams:
    thresholds: ThresholdSpec


@dataclass(frozen=True)
class CascadeParams:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise UsageError("transmission probability must be in [0, 1]")


@dataclass(frozen=True)
class LearningParams:
    thresholds: ThresholdSpec
    lag: int

    def __post_init__(self):
        if self.lag < 0:
            raise UsageError("evaluation lag must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    graph: FollowerGraph
    model: str
    params: object
    n_seeds: int = 1
    seed_users: tuple | None = None
    max_steps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise UsageError(f"model must be one of {MODELS}")
        if self.max_steps < 1:
            raise UsageError("max_steps must be >= 1")
        if self.seed_users is not None:
            if len(self.seed_users) == 0:
                raise UsageError("explicit seed set must be non-empty")
            for u in self.seed_users:
                if not 0 <= u < self.graph.n:
                    raise UsageError(f"seed user {u} outside graph")
        elif not 1 <= self.n_seeds <= self.graph.n:
            raise UsageError("n_seeds must be in [1, n_users]")


@dataclass(frozen=True)
class SimRun:
    """One simulated tag: who adopted at which step, plus everything that
    was planted so the measurement pipeline can be checked against it."""

    model: str
    graph: FollowerGraph
    seed_users: np.ndarray
    adopt_step: np.ndarray          # -1 = never adopted
    theta: np.ndarray | None        # planted per-user thresholds
    edge_prob: float | None         # cascade transmission probability
    lag: int | None
    step_counts: np.ndarray         # new adopters per step, index 0 = seeds
    config_seed: int
    max_steps: int
    warnings: dict = field(default_factory=dict)

    @property
    def n_adopters(self) -> int:
        return int(np.count_nonzero(self.adopt_step >= 0))

    @property
    def final_saturation(self) -> float:
        return self.n_adopters / self.graph.n

    def user_label(self, u: int) -> str:
        return f"u{u:07d}"

    def adoption_rows(self, tag: str = "sim"):
        """Synthetic adoption log rows, directly re-ingestible."""
        adopters = np.flatnonzero(self.adopt_step >= 0)
        order = np.lexsort((adopters, self.adopt_step[adopters]))
        for u in adopters[order]:
            yield (self.user_label(int(u)), tag, int(self.adopt_step[u]))

    def follow_rows(self):
        edges = self.graph.edge_list()
        for i in range(edges.shape[0]):
            yield (self.user_label(int(edges[i, 0])), self.user_label(int(edges[i, 1])))

    def to_dataset(self, tag: str = "sim") -> Dataset:
        return build_dataset(self.adoption_rows(tag), self.follow_rows())


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

def _init_run(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.seed_users is not None:
        seeds = np.array(sorted(set(int(u) for u in cfg.seed_users)), dtype=np.int64)
    else:
        seeds = np.sort(rng.choice(cfg.graph.n, size=cfg.n_seeds, replace=False))
    return seeds


def _observer_csr(graph: FollowerGraph):
    """Reverse adjacency: for each node, who observes it, with the forward
    edge slot of each (observer -> node) edge kept for per-edge uniforms."""
    n = graph.n
    src = np.repeat(np.arange(n, dtype=np.int64), np.diff(graph.indptr))
    order = np.argsort(graph.dst, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, graph.dst + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, src[order], order  # observers grouped by observed node


def run_threshold_model(cfg: SimConfig) -> SimRun:
    """Synchronous fractional-threshold adoption.

    At step k every non-adopter whose adopted-alter fraction at the end of
    step k-1 reaches its personal threshold adopts. Users observing nobody
    never adopt unless seeded.
    """
    if not isinstance(cfg.params, ThresholdParams):
        raise UsageError("run_threshold_model needs ThresholdParams")
    return _run_fractional(cfg, cfg.params.thresholds, lag=0)


def run_social_learning(cfg: SimConfig) -> SimRun:
    """Threshold adoption with an evaluation window: exposure must reach
    the personal threshold for lag+1 consecutive steps before adoption.
    lag=0 reduces step-for-step to the plain threshold model."""
    if not isinstance(cfg.params, LearningParams):
        raise UsageError("run_social_learning needs LearningParams")
    return _run_fractional(cfg, cfg.params.thresholds, lag=cfg.params.lag)


def _run_fractional(cfg: SimConfig, spec: ThresholdSpec, lag: int) -> SimRun:
    graph = cfg.graph
    n = graph.n
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    theta = spec.draw(n, rng)
    seeds = _init_run(cfg, rng)

    outdeg = graph.out_degrees().astype(np.int64)
    obs_indptr, obs_src, _ = _observer_csr(graph)

    adopt_step = np.full(n, -1, dtype=np.int64)
    adopt_step[seeds] = 0
    active_count = np.zeros(n, dtype=np.int64)
    for s in seeds:
        obs = obs_src[obs_indptr[s]:obs_indptr[s + 1]]
        active_count[obs] += 1

    can_adopt = outdeg > 0
    exposure = np.zeros(n, dtype=np.float64)
    streak = np.zeros(n, dtype=np.int64)
    step_counts = [int(seeds.shape[0])]

    for step in range(1, cfg.max_steps + 1):
        open_mask = (adopt_step < 0) & can_adopt
        np.divide(active_count, outdeg, out=exposure, where=can_adopt)
        satisfied = open_mask & (exposure >= theta)
        streak[satisfied] += 1
        streak[open_mask & ~satisfied] = 0
        newly = np.flatnonzero(satisfied & (streak >= lag + 1))
        if newly.shape[0] == 0:
            # Fixed point only once no streak can still mature.
            if not np.any(satisfied):
                break
            step_counts.append(0)
            continue
        adopt_step[newly] = step
        step_counts.append(int(newly.shape[0]))
        for v in newly:
            obs = obs_src[obs_indptr[v]:obs_indptr[v + 1]]
            active_count[obs] += 1

    return SimRun(
        model=cfg.model,
        graph=graph,
        seed_users=seeds,
        adopt_step=adopt_step,
        theta=theta,
        edge_prob=None,
        lag=lag if cfg.model == "learning" else None,
        step_counts=np.asarray(step_counts, dtype=np.int64),
        config_seed=cfg.seed,
        max_steps=cfg.max_steps,
    )


def run_independent_cascade(cfg: SimConfig) -> SimRun:
    """Viral spread: when a user adopts at step k, every observer of that
    user gets one Bernoulli(p) conversion attempt at step k+1.

    Attempts consume uniforms pre-drawn per edge from the run seed, so
    adoption sets at different p under the same seed are nested.
    """
    if not isinstance(cfg.params, CascadeParams):
        raise UsageError("run_independent_cascade needs CascadeParams")
    graph = cfg.graph
    n = graph.n
    p = cfg.params.p
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    seeds = _init_run(cfg, rng)
    edge_u = rng.random(graph.n_edges)

    obs_indptr, obs_src, obs_eid = _observer_csr(graph)

    adopt_step = np.full(n, -1, dtype=np.int64)
    adopt_step[seeds] = 0
    frontier = seeds
    step_counts = [int(seeds.shape[0])]
    step = 0
    while frontier.shape[0] and step < cfg.max_steps:
        step += 1
        newly = []
        for a in frontier:
            lo, hi = obs_indptr[a], obs_indptr[a + 1]
            for k in range(lo, hi):
                v = obs_src[k]
                if adopt_step[v] < 0 and edge_u[obs_eid[k]] < p:
                    adopt_step[v] = step
                    newly.append(v)
        frontier = np.asarray(newly, dtype=np.int64)
        if frontier.shape[0]:
            step_counts.append(int(frontier.shape[0]))

    return SimRun(
        model="cascade",
        graph=graph,
        seed_users=seeds,
        adopt_step=adopt_step,
        theta=None,
        edge_prob=p,
        lag=None,
        step_counts=np.asarray(step_counts, dtype=np.int64),
        config_seed=cfg.seed,
        max_steps=cfg.max_steps,
    )


def run_model(cfg: SimConfig) -> SimRun:
    if cfg.model == "threshold":
        return run_threshold_model(cfg)
    if cfg.model == "cascade":
        return run_independent_cascade(cfg)
    return run_social_learning(cfg)


# ---------------------------------------------------------------------------
# planted-parameter recovery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecoveryReport:
    n_users: int
    n_adopters: int
    n_seeds: int
    n_compared: int
    n_violations: int
    min_margin: float | None
    mean_margin: float | None
    spearman: float | None
    margins: np.ndarray
    popularity: np.ndarray
    exposure: np.ndarray

    def as_dict(self) -> dict:
        return {
            "users": self.n_users,
            "adopters": self.n_adopters,
            "seeds": self.n_seeds,
            "compared": self.n_compared,
            "violations": self.n_violations,
            "min_margin": self.min_margin,
            "mean_margin": self.mean_margin,
            "spearman_popularity_exposure": self.spearman,
        }


def recover_thresholds(run: SimRun, *, ties: str = "strict", dataset: Dataset | None = None) -> RecoveryReport:
    """Round-trip a simulated tag through the measurement pipeline.

    Converts the run into a Dataset (or uses a re-ingested one), measures
    exposure at every adoption, and compares against planted thresholds:
    for non-seed adopters under synchronous updates the measured exposure
    can never be below the planted value. Seed adoptions are excluded
    (their exposure says nothing about their threshold).
    """
    if run.theta is None:
        raise UnsupportedModelError(
            f"model {run.model!r} has no planted thresholds to recover"
        )
    ds = dataset if dataset is not None else run.to_dataset()
    return recover_from_ingested(
        ds,
        theta=run.theta,
        n_users=run.graph.n,
        n_seeds=int(run.seed_users.shape[0]),
        ties=ties,
    )


def recover_from_ingested(
    ds: Dataset,
    *,
    theta: np.ndarray,
    n_users: int,
    n_seeds: int,
    ties: str = "strict",
) -> RecoveryReport:
    """Compare measured exposures in a (re-)ingested simulated log against
    planted thresholds indexed by simulation node id. Adoption timestamps
    are step indices; step 0 marks seeds."""
    table = all_exposures(ds, ties=ties)
    # dataset handle -> simulation node id, via the synthetic labels
    node_of = np.fromiter(
        (int(lab[1:]) for lab in ds.user_labels), dtype=np.int64, count=ds.n_users
    )
    use = (table.time > 0) & table.defined_mask
    nodes = node_of[table.user[use]]
    expo = table.exposure[use]
    margins = expo - theta[nodes]
    pop = table.tag_popularity_at_adoption[use].astype(np.float64)

    rho = None
    if expo.shape[0] >= 3 and not np.all(pop == pop[0]) and not np.all(expo == expo[0]):
        rho = spearman_rho(pop, expo)

    return RecoveryReport(
        n_users=n_users,
        n_adopters=ds.n_first_usages,
        n_seeds=n_seeds,
        n_compared=int(expo.shape[0]),
        n_violations=int(np.count_nonzero(margins < 0)),
        min_margin=float(margins.min()) if margins.shape[0] else None,
        mean_margin=float(margins.mean()) if margins.shape[0] else None,
        spearman=rho,
        margins=margins,
        popularity=pop,
        exposure=expo,
    )
