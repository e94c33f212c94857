"""Release acceptance checks.

Ten checks covering the full system: the post-processing oracle, loss and
gradient math, boosting behavior, shadow-test orderings against the
proximity baseline, ablations, destination-proximity monotonicity,
geocode robustness, lane/feature invariants, score-progress behavior and
CLI determinism. Each check prints a single PASS/FAIL line.

The shadow-test checks share three module-scoped simulated worlds (seeds
11, 12, 13), each with 500 shipments, 5 decoys per shipment and geocode
noise uniform in [0, 1] km; the robustness checks use three more worlds
with the noise pinned at 0.7 km.
"""

import filecmp
import itertools
import json
import math
import os
import random
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import pytest
from click.testing import CliRunner

from truckmatch import gbdt, lanestore
from truckmatch.cli import main as cli_main
from truckmatch.dataset import (
    SnapshotSpec,
    balance_negatives,
    class_counts,
    make_negative_rows,
    make_positive_rows,
    read_dataset,
    write_dataset,
)
from truckmatch.domain import Pingset, candidate_window
from truckmatch.evaluation import build_report, shadow_run
from truckmatch.features import extract_features
from truckmatch.geo import STOP_RES, ping_to_hex
from truckmatch.pipeline import (
    ENGINE_ITM1,
    HIGH,
    LOW,
    MEDIUM,
    PipelineConfig,
    Thresholds,
    postprocess,
)
from truckmatch.sim import SimConfig, generate_world, split_history_vs_eval

SEEDS = (11, 12, 13)

# Harness configuration: dense snapshot ladder so mid-route distances are
# populated in training, heavy leaf regularization so confidence builds
# with evidence rather than memorized corridors, and a strict HIGH gate.
HARNESS_SPEC = SnapshotSpec(ping_counts=tuple(range(20, 201, 5)))
HARNESS_THRESHOLDS = Thresholds(0.3, 0.5, 0.99)
PC = PipelineConfig(thresholds=HARNESS_THRESHOLDS)
N_TREES = 150
LEARNING_RATE = 0.05
MAX_LEAVES = 15
MSL_FULL = 1500
MSL_NO_HEXCELL = 800


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@dataclass
class WorldBundle:
    world: object
    fleet: object
    eval_shipments: list
    store: object
    rows: list
    model: object          # four-feature ranker
    model_no_hexcell: object
    prep_seconds: float


def _prep(seed: int, **sim_kw) -> WorldBundle:
    t0 = time.monotonic()
    cfg = SimConfig(n_shipments=500, seed=seed, **sim_kw)
    world = generate_world(cfg)
    fleet = world.fleet_index()
    hist, ev = split_history_vs_eval(world, 0.6)

    def windowed(s, truck_id):
        a, b = candidate_window(s)
        return fleet.window(truck_id, a, b)

    store = lanestore.build_lane_store(
        (s, windowed(s, world.truth.true_truck[s.shipment_id])) for s in hist
    )
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s in hist:
            true_pings = windowed(s, world.truth.true_truck[s.shipment_id])
            rows += make_positive_rows(s, true_pings, store, HARNESS_SPEC)
            dest_cell = ping_to_hex(s.dropoff.location, STOP_RES)
            decoys = []
            for truck_id in world.truth.decoys[s.shipment_id]:
                p = windowed(s, truck_id)
                if len(p) and ping_to_hex(p.latest().position, STOP_RES) != dest_cell:
                    decoys.append(p)
            rows += make_negative_rows(s, decoys, store, HARNESS_SPEC)
    rows = balance_negatives(rows, seed=seed)
    tc = gbdt.TrainConfig(
        seed=seed,
        n_trees=N_TREES,
        learning_rate=LEARNING_RATE,
        max_leaves=MAX_LEAVES,
        min_samples_leaf=MSL_FULL,
    )
    train_rows = [r.to_train_row() for r in rows]
    model = gbdt.train(train_rows, tc)
    model2 = gbdt.train(
        train_rows, replace(tc, min_samples_leaf=MSL_NO_HEXCELL, feature_indices=(0, 1))
    )
    return WorldBundle(
        world=world,
        fleet=fleet,
        eval_shipments=ev,
        store=store,
        rows=rows,
        model=model,
        model_no_hexcell=model2,
        prep_seconds=time.monotonic() - t0,
    )


def _metrics(bundle: WorldBundle, records):
    report = build_report(records)
    truth = bundle.world.truth.true_truck
    true_fraction = sum(
        1 for r in records if r.decision.assigned_truck == truth[r.shipment.shipment_id]
    ) / len(records)
    return report, true_fraction


@pytest.fixture(scope="module")
def worlds():
    """Seeded 500-shipment worlds with the four engine runs per seed."""
    out = {}
    for seed in SEEDS:
        b = _prep(seed)
        t0 = time.monotonic()
        runs = {
            "full": shadow_run(b.eval_shipments, b.fleet, b.store, b.model, PC),
            "itm1": shadow_run(
                b.eval_shipments, b.fleet, b.store, b.model, PC, engine=ENGINE_ITM1
            ),
        }
        headline_seconds = b.prep_seconds + (time.monotonic() - t0)
        runs["no_postprocess"] = shadow_run(
            b.eval_shipments, b.fleet, b.store, b.model, PC, assign_unconditionally=True
        )
        runs["no_hexcell"] = shadow_run(
            b.eval_shipments, b.fleet, b.store, b.model_no_hexcell, PC
        )
        out[seed] = {
            "bundle": b,
            "metrics": {name: _metrics(b, recs) for name, recs in runs.items()},
            "headline_seconds": headline_seconds,
        }
    return out


@pytest.fixture(scope="module")
def robust_worlds():
    """Worlds with stop geocode error pinned at 0.7 km, engines compared."""
    out = {}
    for seed in SEEDS:
        b = _prep(seed, geocode_noise_km=(0.7, 0.7))
        runs = {
            "full": shadow_run(b.eval_shipments, b.fleet, b.store, b.model, PC),
            "itm1": shadow_run(
                b.eval_shipments, b.fleet, b.store, b.model, PC, engine=ENGINE_ITM1
            ),
        }
        out[seed] = {name: _metrics(b, recs) for name, recs in runs.items()}
    return out


# --- 1. post-processing matches a brute-force oracle -----------------------


def _oracle(scored, t):
    kept = sorted(
        ((truck, p) for truck, p in scored if p >= t.tau_min),
        key=lambda tp: (-tp[1], tp[0]),
    )
    if not kept:
        return None, ()
    ranked = tuple(
        (truck, p, HIGH if p >= t.tau_high else MEDIUM if p >= t.tau_medium else LOW)
        for truck, p in kept
    )
    return ranked[0][0], ranked


def test_c01_postprocess_oracle_equivalence():
    t0 = time.monotonic()
    grid = [round(0.05 * k, 2) for k in range(1, 20)]
    triples = [
        Thresholds(*c)
        for c in itertools.combinations_with_replacement(
            [round(0.1 * k, 1) for k in range(1, 10)], 3
        )
    ]
    # All 165 threshold triples against every probability multiset of
    # length 0-4 (where filter, ordering, tie and label behavior all
    # live), then exhaustive length-5 and length-6 multisets against a
    # triple per tau_min value, to keep the sweep inside the time budget.
    tau_min_cover = [Thresholds(round(0.1 * k, 1), 0.5 if k <= 5 else round(0.1 * k, 1), 0.9) for k in range(1, 10)]
    checked = 0
    mismatches = 0
    for length, threshold_set in [(0, triples), (1, triples), (2, triples), (3, triples), (4, triples), (5, tau_min_cover), (6, tau_min_cover)]:
        for combo in itertools.combinations_with_replacement(grid, length):
            scored = [(f"T{i}", p) for i, p in enumerate(combo)]
            for t in threshold_set:
                d = postprocess(scored, t)
                winner, ranked = _oracle(scored, t)
                checked += 1
                if d.assigned_truck != winner or d.ranked != ranked:
                    mismatches += 1
    elapsed = time.monotonic() - t0
    _verdict(
        "C1 postprocess-oracle",
        mismatches == 0 and elapsed < 60.0,
        f"{checked} cases, {mismatches} mismatches, {elapsed:.1f}s (< 60s)",
    )


# --- 2. loss and gradient --------------------------------------------------


def test_c02_loss_and_gradient():
    n = 1000
    ll_half = gbdt.logloss([1.0] * n, [0.5] * n)
    ll_ok = abs(ll_half - math.log(2.0)) <= 1e-9

    rng = random.Random(2)
    worst = 0.0
    eps = 1e-6
    for _ in range(n):
        y = float(rng.random() < 0.5)
        raw = rng.uniform(-6.0, 6.0)
        p = gbdt.sigmoid(raw)
        analytic = p - y
        lo = gbdt.logloss([y], [gbdt.sigmoid(raw - eps)])
        hi = gbdt.logloss([y], [gbdt.sigmoid(raw + eps)])
        numeric = (hi - lo) / (2.0 * eps)
        worst = max(worst, abs(analytic - numeric) / max(abs(numeric), 1e-12))
    grad_ok = worst <= 1e-6
    _verdict(
        "C2 loss-gradient",
        ll_ok and grad_ok,
        f"logloss(0.5)-ln2={ll_half - math.log(2.0):.2e}, "
        f"worst relative gradient error={worst:.2e}",
    )


# --- 3. boosting monotonicity ----------------------------------------------


def test_c03_boosting_monotonicity(worlds):
    t0 = time.monotonic()
    rows = worlds[SEEDS[0]]["bundle"].rows
    n_pos, n_neg = class_counts(rows)
    model = worlds[SEEDS[0]]["bundle"].model
    history = model.train_history
    monotone = all(a >= b - 1e-12 for a, b in zip(history, history[1:]))
    labels = [float(r.label) for r in rows]
    probs = [gbdt.predict(model, r.features) for r in rows]
    train_auc = gbdt.auc(labels, probs)
    elapsed = time.monotonic() - t0
    _verdict(
        "C3 boosting-monotonicity",
        monotone and train_auc >= 0.95 and elapsed < 120.0,
        f"{len(rows)} rows ({n_pos}:{n_neg} ~ 150:{150 * n_neg / n_pos:.0f}), "
        f"loss {history[0]:.3f}->{history[-1]:.3f} "
        f"{'non-increasing' if monotone else 'NOT monotone'}, "
        f"train AUC={train_auc:.3f} (>= 0.95), {elapsed:.0f}s",
    )


# --- 4. shadow test vs the proximity baseline -------------------------------


def test_c04_shadow_vs_baseline(worlds):
    details = []
    ok = True
    total_seconds = 0.0
    for seed in SEEDS:
        (full, _), (itm1, _) = (
            worlds[seed]["metrics"]["full"],
            worlds[seed]["metrics"]["itm1"],
        )
        gap = full.precision - itm1.precision
        seed_ok = gap >= 0.15 and full.coverage >= itm1.coverage
        ok &= seed_ok
        total_seconds += worlds[seed]["headline_seconds"]
        details.append(
            f"seed {seed}: prec {full.precision:.2f} vs {itm1.precision:.2f} "
            f"(+{100 * gap:.0f}pp), cov {full.coverage:.2f} vs {itm1.coverage:.2f}"
        )
    ok &= total_seconds < 600.0
    _verdict(
        "C4 shadow-vs-baseline",
        ok,
        "; ".join(details) + f"; {total_seconds:.0f}s total (< 600s)",
    )


# --- 5. ablation ordering ---------------------------------------------------


def test_c05_ablation_ordering(worlds):
    details = []
    ok = True
    for seed in SEEDS:
        m = worlds[seed]["metrics"]
        full, no_pp, no_hex = m["full"][0], m["no_postprocess"][0], m["no_hexcell"][0]
        seed_ok = (
            full.precision >= no_pp.precision + 0.05
            and no_pp.precision >= no_hex.precision + 0.05
            and no_pp.coverage >= full.coverage
        )
        ok &= seed_ok
        details.append(
            f"seed {seed}: {full.precision:.2f} > {no_pp.precision:.2f} > "
            f"{no_hex.precision:.2f}, cov {no_pp.coverage:.2f} >= {full.coverage:.2f}"
        )
    _verdict("C5 ablation-ordering", ok, "; ".join(details))


# --- 6. destination-proximity monotonicity ----------------------------------


def test_c06_dpp_monotonicity(worlds):
    details = []
    ok = True
    for seed in SEEDS:
        report = worlds[seed]["metrics"]["full"][0]
        buckets = [report.dpp_buckets[k] for k in ("<=25", "<=50", ">=80")]
        occupied = [b for b in buckets if b.n > 0]
        prec_ok = all(
            a.precision >= b.precision for a, b in zip(occupied, occupied[1:])
        )
        mdd_ok = all(a.mdd_km <= b.mdd_km for a, b in zip(occupied, occupied[1:]))
        ok &= prec_ok and mdd_ok
        details.append(
            f"seed {seed}: prec "
            + "/".join("-" if b.n == 0 else f"{b.precision:.2f}" for b in buckets)
            + ", mdd "
            + "/".join("-" if b.n == 0 else f"{b.mdd_km:.0f}" for b in buckets)
        )
    _verdict("C6 dpp-monotonicity", ok, "; ".join(details))


# --- 7. geocode robustness ---------------------------------------------------


def test_c07_geocode_robustness(robust_worlds):
    details = []
    ok = True
    for seed in SEEDS:
        (_, true_full) = robust_worlds[seed]["full"]
        (_, true_itm1) = robust_worlds[seed]["itm1"]
        seed_ok = true_itm1 <= 0.20 and true_full >= 0.60
        ok &= seed_ok
        details.append(
            f"seed {seed}: true-truck rate baseline {true_itm1:.2f} (<= 0.20), "
            f"trajectory {true_full:.2f} (>= 0.60)"
        )
    _verdict("C7 geocode-robustness", ok, "; ".join(details))


# --- 8. lane-store and feature invariants ------------------------------------


def test_c08_lane_and_persistence_invariants(worlds, tmp_path):
    bundle = worlds[SEEDS[0]]["bundle"]
    world, fleet = bundle.world, bundle.fleet

    def windowed(s, truck_id):
        a, b = candidate_window(s)
        return fleet.window(truck_id, a, b)

    journeys = [
        (s, windowed(s, world.truth.true_truck[s.shipment_id]))
        for s in world.shipments[:60]
    ]
    now = max(p.timestamp for _, ps in journeys for p in ps.pings)

    rng = random.Random(8)
    additive_failures = 0
    whole = lanestore.build_lane_store(journeys)
    for _ in range(100):
        shuffled = journeys[:]
        rng.shuffle(shuffled)
        cut = rng.randrange(len(shuffled) + 1)
        combined = lanestore.refresh(
            lanestore.build_lane_store(shuffled[:cut]), shuffled[cut:], now
        )
        if combined.buckets != whole.buckets:
            additive_failures += 1

    # overlap-feature monotonicity on every on-lane (true-truck) journey
    monotone_failures = 0
    n_journeys = 0
    for s in bundle.eval_shipments:
        journey = windowed(s, world.truth.true_truck[s.shipment_id])
        if len(journey) == 0:
            continue
        n_journeys += 1
        last = -1
        for n in range(1, len(journey) + 1, 10):
            fv = extract_features(s, journey.prefix(n), bundle.store)
            if fv.overlap_cells < last:
                monotone_failures += 1
                break
            last = fv.overlap_cells

    # lossless persistence round-trips
    lanestore.save(bundle.store, tmp_path / "lanes.txt")
    store_ok = (
        lanestore.load(tmp_path / "lanes.txt", bundle.store.window_days).buckets
        == bundle.store.buckets
    )
    gbdt.save_model(bundle.model, tmp_path / "model.txt")
    reloaded = gbdt.load_model(tmp_path / "model.txt")
    sample = [r.features for r in bundle.rows[:200]]
    model_ok = all(
        gbdt.predict(reloaded, f) == gbdt.predict(bundle.model, f) for f in sample
    )
    write_dataset(bundle.rows, tmp_path / "dataset.csv")
    dataset_ok = read_dataset(tmp_path / "dataset.csv") == list(bundle.rows)

    ok = (
        additive_failures == 0
        and monotone_failures == 0
        and store_ok
        and model_ok
        and dataset_ok
    )
    _verdict(
        "C8 invariants",
        ok,
        f"additivity {100 - additive_failures}/100 partitions, overlap monotone "
        f"on {n_journeys - monotone_failures}/{n_journeys} journeys, roundtrips "
        f"lane-store={store_ok} model={model_ok} dataset={dataset_ok}",
    )


# --- 9. probability rises with route progress --------------------------------


def test_c09_score_progress(worlds):
    details = []
    ok = True
    for seed in SEEDS:
        bundle = worlds[seed]["bundle"]
        world, fleet = bundle.world, bundle.fleet
        rising = 0
        total = 0
        for s in bundle.eval_shipments:
            a, b = candidate_window(s)
            journey = fleet.window(world.truth.true_truck[s.shipment_id], a, b)
            if len(journey) < 10:
                continue
            total += 1
            early = extract_features(
                s, journey.prefix(max(1, round(0.2 * len(journey)))), bundle.store
            )
            late = extract_features(
                s, journey.prefix(round(0.9 * len(journey))), bundle.store
            )
            if gbdt.predict(bundle.model, late) > gbdt.predict(bundle.model, early):
                rising += 1
        frac = rising / total
        ok &= frac >= 0.80
        details.append(f"seed {seed}: {rising}/{total} = {frac:.2f} (>= 0.80)")
    _verdict("C9 score-progress", ok, "; ".join(details))


# --- 10. CLI determinism ------------------------------------------------------


def _run_cli_chain(root: Path) -> None:
    # identical argv both runs: relative paths from the chain's own root,
    # so recorded manifests must also match byte-for-byte
    root.mkdir(parents=True, exist_ok=True)
    runner = CliRunner()
    cwd = Path.cwd()

    def run(*args):
        os.chdir(root)
        try:
            result = runner.invoke(cli_main, list(args), catch_exceptions=False)
        finally:
            os.chdir(cwd)
        assert result.exit_code == 0, result.output

    seed = ["--seed", "4"]
    world, lanes, model = "world", "lanes/lanes.txt", "model/model.txt"
    run("simulate", *seed, "--shipments", "60", "--out", world)
    run("build-lanes", "--world", world, "--out", "lanes")
    run("refresh-lanes", "--lanes", lanes, "--world", world, "--now", "1800000000",
        "--out", "lanes2")
    run("make-dataset", "--world", world, "--lanes", lanes, *seed, "--out", "data")
    run("train", "--dataset", "data/dataset.csv", *seed,
        "--trees", "40", "--max-leaves", "7", "--out", "model")
    run("train", "--dataset", "data/dataset.csv", *seed,
        "--trees", "40", "--max-leaves", "7", "--features", "0,1",
        "--out", "model2")
    run("shadow-eval", "--world", world, "--lanes", lanes, "--model", model,
        "--out", "shadow")
    run("ablate", "--world", world, "--lanes", lanes, "--model", model,
        "--model-no-hexcell", "model2/model.txt", "--out", "ablate")
    run("metrics", "--world", world, "--decisions", "shadow/decisions_itm2.csv",
        "--out", "metrics")
    sid = sorted(json.loads((root / "world" / "split.json").read_text())["eval"])[0]
    run("match", "--world", world, "--lanes", lanes, "--model", model,
        "--shipment", sid, "--out", "match")
    run("export-geojson", "--world", world, "--lanes", lanes, "--shipment", sid,
        "--out", "geojson")


def test_c10_cli_determinism(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    _run_cli_chain(a)
    _run_cli_chain(b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    same_tree = files == files_b
    diffs = [str(f) for f in files if not filecmp.cmp(a / f, b / f, shallow=False)]
    _verdict(
        "C10 cli-determinism",
        same_tree and not diffs,
        f"{len(files)} files from 10 subcommands byte-identical"
        + ("" if not diffs else f"; differing: {diffs}"),
    )
