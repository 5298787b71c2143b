"""Acceptance suite: one test per release criterion, each at its stated
tolerance and runtime budget. A terminal summary hook in conftest prints
one PASS/FAIL line per criterion at the end of the run.

Run with: pytest tests/test_acceptance.py -v
"""

from __future__ import annotations

import csv
import json
import resource
import time

import numpy as np
import pytest

import tagcascade as tc
from tagcascade.cli import derive_seed, main
from tagcascade.exposure import all_exposures, population_thresholds
from tagcascade.powerlaw import fit_power_law
from tagcascade.simulate import (
    CascadeParams,
    LearningParams,
    SimConfig,
    ThresholdParams,
    ThresholdSpec,
    erdos_renyi,
    preferential_attachment,
    recover_thresholds,
    run_independent_cascade,
    run_social_learning,
    run_threshold_model,
)
from tagcascade.snapshot import load_snapshot, save_snapshot
from tagcascade.stats import spearman_rho
from tagcascade.textio import read_adoptions, read_follows

from oracles import assert_table_matches_oracle, brute_force_exposures, random_micro_rows, zeta_sample


@pytest.mark.acceptance(1, "exposure oracle equivalence on 1000 random micro-datasets")
def test_acceptance_1_exposure_oracle_equivalence():
    started = time.monotonic()
    rng = np.random.Generator(np.random.PCG64(2024))
    checked_records = 0
    for _ in range(1000):
        adoptions, follows = random_micro_rows(rng)
        ds = tc.build_dataset(adoptions, follows)
        table = all_exposures(ds)
        oracle = brute_force_exposures(adoptions, follows)
        assert_table_matches_oracle(ds, table, oracle)
        checked_records += len(table)
    elapsed = time.monotonic() - started
    assert checked_records > 20_000  # the draw really exercised the engine
    assert elapsed < 30.0, f"oracle sweep took {elapsed:.1f}s (budget 30s)"


@pytest.mark.acceptance(2, "directed density matches 110000/(5500*5499) to 1e-9")
def test_acceptance_2_density_consistency():
    value = tc.directed_density(5500, 110_000)
    assert abs(value - 110_000 / (5500 * 5499)) < 1e-9
    assert abs(value - 0.0036370249136206583) < 1e-9
    # consistent with the reported one-significant-figure 0.003 (truncation;
    # round-half-up would give 0.004)
    assert int(value * 1000) == 3

    # same number through the Dataset op, at the same shape
    rng = np.random.Generator(np.random.PCG64(55))
    pairs = set()
    while len(pairs) < 110_000:
        a, b = rng.integers(0, 5500, 2)
        if a != b:
            pairs.add((int(a), int(b)))
    rows = [(f"u{a:04d}", f"u{b:04d}") for a, b in sorted(pairs)]
    ds = tc.build_dataset([], rows)
    assert ds.n_users == 5500
    assert abs(tc.density(ds) - value) < 1e-15


@pytest.mark.acceptance(3, "power-law recovery (alpha 2.5 +/- 0.1, xmin in [3,8]) and geometric rejection")
def test_acceptance_3_power_law_estimator_recovery():
    started = time.monotonic()

    alphas = []
    for seed in range(20):
        rng = np.random.Generator(np.random.PCG64(seed))
        sample = zeta_sample(2.5, 5, 50_000, rng)
        fit = fit_power_law(sample, bootstrap=0)
        alphas.append(fit.alpha)
        assert 3 <= fit.xmin <= 8, f"seed {seed}: xmin {fit.xmin} outside [3, 8]"
    assert abs(np.mean(alphas) - 2.5) < 0.1, f"mean alpha {np.mean(alphas):.4f}"

    rejected = 0
    for seed in range(20):
        rng = np.random.Generator(np.random.PCG64(10_000 + seed))
        sample = rng.geometric(0.1, 50_000)
        fit = fit_power_law(sample, bootstrap=100, seed=derive_seed(777, seed))
        if fit.gof_p < 0.1:
            rejected += 1
    assert rejected >= 18, f"geometric control rejected in only {rejected}/20 seeds"

    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"estimator sweep took {elapsed:.1f}s (budget 300s)"


@pytest.mark.acceptance(4, "planted-threshold recovery bound over 100 seeded runs (zero violations)")
def test_acceptance_4_planted_threshold_recovery_bound():
    started = time.monotonic()
    total_compared = 0
    for seed in range(100):
        graph = erdos_renyi(500, 8, seed=derive_seed(41, seed, 0))
        cfg = SimConfig(
            graph=graph,
            model="threshold",
            params=ThresholdParams(ThresholdSpec("uniform", (0.0, 1.0))),
            n_seeds=5,
            max_steps=100,
            seed=derive_seed(41, seed, 1),
        )
        run = run_threshold_model(cfg)
        report = recover_thresholds(run)
        assert report.n_violations == 0, f"seed {seed}: {report.n_violations} violations"
        if report.min_margin is not None:
            assert report.min_margin >= 0.0
        total_compared += report.n_compared
    elapsed = time.monotonic() - started
    assert total_compared > 1000
    assert elapsed < 60.0, f"recovery sweep took {elapsed:.1f}s (budget 60s)"


@pytest.mark.acceptance(5, "popularity-exposure direction over 200 simulated tags (Spearman rho > 0.1)")
def test_acceptance_5_popularity_exposure_direction():
    started = time.monotonic()
    graph = preferential_attachment(2000, 3, seed=4242)
    pops, expos = [], []
    for r in range(200):
        cfg = SimConfig(
            graph=graph,
            model="threshold",
            params=ThresholdParams(ThresholdSpec("uniform", (0.0, 1.0))),
            n_seeds=5,
            max_steps=60,
            seed=derive_seed(90, r),
        )
        run = run_threshold_model(cfg)
        report = recover_thresholds(run)
        pops.append(report.popularity)
        expos.append(report.exposure)
    pop = np.concatenate(pops)
    expo = np.concatenate(expos)
    rho = spearman_rho(pop, expo)
    elapsed = time.monotonic() - started
    assert pop.shape[0] >= 200
    assert rho > 0.1, f"pooled Spearman rho {rho:.4f} not > 0.1"
    assert elapsed < 300.0, f"direction sweep took {elapsed:.1f}s (budget 300s)"


@pytest.mark.acceptance(6, "social learning L=0 reduction and cascade monotone coupling, 100 seeds each")
def test_acceptance_6_model_reductions_and_couplings():
    for seed in range(100):
        graph = erdos_renyi(150, 6, seed=derive_seed(61, seed))
        threshold_cfg = SimConfig(
            graph=graph, model="threshold",
            params=ThresholdParams(ThresholdSpec("uniform", (0.0, 1.0))),
            n_seeds=3, max_steps=60, seed=seed,
        )
        learning_cfg = SimConfig(
            graph=graph, model="learning",
            params=LearningParams(ThresholdSpec("uniform", (0.0, 1.0)), 0),
            n_seeds=3, max_steps=60, seed=seed,
        )
        a = run_threshold_model(threshold_cfg)
        b = run_social_learning(learning_cfg)
        np.testing.assert_array_equal(a.adopt_step, b.adopt_step)
        np.testing.assert_array_equal(a.step_counts, b.step_counts)

    for seed in range(100):
        graph = erdos_renyi(120, 5, seed=derive_seed(62, seed))
        previous = None
        for p in (0.1, 0.3, 0.6, 0.9):
            cfg = SimConfig(
                graph=graph, model="cascade", params=CascadeParams(p),
                n_seeds=3, max_steps=60, seed=seed,
            )
            adopters = frozenset(np.flatnonzero(run_independent_cascade(cfg).adopt_step >= 0))
            if previous is not None:
                assert previous <= adopters, f"seed {seed}: adoption set shrank at p={p}"
            previous = adopters


@pytest.mark.acceptance(7, "determinism: bit-identical runs, snapshot round-trip, golden files")
def test_acceptance_7_determinism_and_round_trip(tmp_path, capsys):
    # identical configs -> bit-identical runs, for every model
    graph = preferential_attachment(400, 3, seed=7)
    for model, params in (
        ("threshold", ThresholdParams(ThresholdSpec("uniform", (0.0, 1.0)))),
        ("cascade", CascadeParams(0.35)),
        ("learning", LearningParams(ThresholdSpec("truncnorm", (0.4, 0.25)), 2)),
    ):
        cfg = SimConfig(graph=graph, model=model, params=params,
                        n_seeds=4, max_steps=50, seed=123)
        runs = [run_threshold_model(cfg) if model == "threshold"
                else run_independent_cascade(cfg) if model == "cascade"
                else run_social_learning(cfg) for _ in range(2)]
        np.testing.assert_array_equal(runs[0].adopt_step, runs[1].adopt_step)
        np.testing.assert_array_equal(runs[0].step_counts, runs[1].step_counts)
        if runs[0].theta is not None:
            np.testing.assert_array_equal(runs[0].theta, runs[1].theta)

    # snapshot round-trip == direct in-memory build
    rng = np.random.Generator(np.random.PCG64(70))
    for _ in range(5):
        adoptions, follows = random_micro_rows(rng)
        ds = tc.build_dataset(adoptions, follows)
        path = tmp_path / "round.cscd"
        save_snapshot(ds, path)
        loaded = load_snapshot(path)
        assert loaded.user_labels == ds.user_labels
        np.testing.assert_array_equal(loaded.event_time, ds.event_time)
        np.testing.assert_array_equal(loaded.event_user, ds.event_user)
        np.testing.assert_array_equal(loaded.event_tag, ds.event_tag)
        np.testing.assert_array_equal(loaded.event_first, ds.event_first)
        np.testing.assert_array_equal(loaded.graph.dst, ds.graph.dst)

    # golden files: identical inputs + seed -> byte-identical outputs
    adoptions_csv = tmp_path / "a.csv"
    follows_csv = tmp_path / "f.csv"
    rng = np.random.Generator(np.random.PCG64(71))
    with open(adoptions_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "tag_id", "timestamp"])
        for _ in range(400):
            w.writerow([f"u{rng.integers(30)}", f"x{rng.integers(8)}", int(rng.integers(5000))])
    with open(follows_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src_id", "dst_id"])
        for _ in range(200):
            w.writerow([f"u{rng.integers(30)}", f"u{rng.integers(30)}"])

    outputs = []
    for tag in ("one", "two"):
        snap = tmp_path / f"{tag}.cscd"
        exp = tmp_path / f"{tag}_exposures.tsv"
        fitj = tmp_path / f"{tag}_fit.json"
        sim = tmp_path / f"{tag}_runs"
        assert main(["ingest", str(adoptions_csv), str(follows_csv), "--out", str(snap)]) == 0
        assert main(["thresholds", str(snap), "--out", str(exp)]) == 0
        assert main(["fit-powerlaw", str(snap), "--bootstrap", "20", "--seed", "5",
                     "--summary", str(fitj)]) == 0
        simcfg = tmp_path / "sim.json"
        simcfg.write_text(json.dumps({
            "graph": {"kind": "erdos_renyi", "n": 70, "mean_out_degree": 5},
            "params": {"thresholds": {"kind": "uniform", "a": 0, "b": 1}},
            "seeds": {"k": 3}, "max_steps": 40,
        }))
        assert main(["simulate", "--model", "threshold", "--config", str(simcfg),
                     "--runs", "2", "--seed", "17", "--out", str(sim)]) == 0
        outputs.append((snap, exp, fitj, sim))
    capsys.readouterr()  # drain report JSON

    (snap1, exp1, fit1, sim1), (snap2, exp2, fit2, sim2) = outputs
    assert snap1.read_bytes() == snap2.read_bytes()
    assert exp1.read_bytes() == exp2.read_bytes()
    assert fit1.read_bytes() == fit2.read_bytes()
    for rel in ("run_0000/adoptions.csv", "run_0000/follows.csv", "run_0000/manifest.json",
                "run_0001/adoptions.csv", "run_0001/manifest.json"):
        assert (sim1 / rel).read_bytes() == (sim2 / rel).read_bytes(), rel


@pytest.mark.acceptance(8, "desk scale: 1e5 users / 1e6 events / 1e5 edges under 60s and 2GB")
def test_acceptance_8_desk_scale_performance(tmp_path):
    rng = np.random.Generator(np.random.PCG64(88))
    n_users, n_events, n_edges = 100_000, 1_000_000, 100_000

    users = rng.integers(0, n_users, n_events)
    tags = np.minimum(rng.zipf(1.8, n_events), 38_000) - 1
    times = rng.integers(0, 365 * 86_400_000, n_events)
    adoptions_csv = tmp_path / "big_adoptions.csv"
    with open(adoptions_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "tag_id", "timestamp"])
        for i in range(n_events):
            w.writerow([f"u{users[i]:06d}", f"x{tags[i]:05d}", int(times[i])])
    srcs = rng.integers(0, n_users, n_edges)
    dsts = rng.integers(0, n_users, n_edges)
    follows_csv = tmp_path / "big_follows.csv"
    with open(follows_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src_id", "dst_id"])
        for i in range(n_edges):
            w.writerow([f"u{srcs[i]:06d}", f"u{dsts[i]:06d}"])
    del users, tags, times, srcs, dsts

    started = time.monotonic()
    rows, _ = read_adoptions(adoptions_csv)
    edges, _ = read_follows(follows_csv)
    ds = tc.build_dataset(rows, edges)
    save_snapshot(ds, tmp_path / "big.cscd")
    del rows, edges
    table = all_exposures(ds)
    thresholds = population_thresholds(ds, table=table)
    elapsed = time.monotonic() - started

    assert ds.n_events == n_events
    assert len(table) == ds.n_first_usages
    assert len(thresholds) > 0
    assert elapsed < 60.0, f"desk-scale pipeline took {elapsed:.1f}s (budget 60s)"

    peak_gb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / (1024 ** 2)
    assert peak_gb < 2.0, f"peak RSS {peak_gb:.2f} GB (budget 2 GB)"
