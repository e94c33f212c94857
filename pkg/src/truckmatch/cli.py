"""Command-line workflow: simulate -> build-lanes -> make-dataset -> train
-> match / shadow-eval / ablate / export-geojson / metrics.

Every command writes a ``manifest.json`` beside its outputs recording the
seed, the effective configuration and the input/output paths. Option
precedence is flags > config file (JSON, keys matching option names with
underscores) > built-in defaults; ``--print-config`` dumps the effective
configuration without running. Outputs are deterministic for a fixed
seed. Exit status: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import csv
import json
import sys
import warnings
from pathlib import Path

import click
from click.core import ParameterSource

from . import __version__, gbdt, geojson, lanestore
from .dataset import (
    DatasetRow,
    SnapshotSpec,
    balance_negatives,
    class_counts,
    make_negative_rows,
    make_positive_rows,
    read_dataset,
    write_dataset,
)
from .domain import candidate_window
from .errors import TruckmatchError
from .evaluation import ABLATIONS, DecisionRecord, build_report, shadow_run
from .geo import STOP_RES, lane_code, ping_to_hex
from .manifest import RunManifest, write_manifest
from .pipeline import ENGINE_ITM1, ENGINE_ITM2, PipelineConfig, Thresholds, match
from .sim import SimConfig, WorldData, generate_world, load_world, save_world

DECISION_HEADER = (
    "shipment_id",
    "engine",
    "assigned_truck",
    "probability",
    "confidence",
    "eval_count",
    "pings_seen",
)


@click.group()
@click.version_option(version=__version__, prog_name="truckmatch")
def main():
    """GPS truck-to-shipment matching toolkit."""


def _shared(fn):
    fn = click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="JSON file of option defaults (flags win).",
    )(fn)
    fn = click.option(
        "--print-config",
        is_flag=True,
        help="Dump the effective configuration and exit.",
    )(fn)
    return fn


def _effective(ctx: click.Context, config_path: str | None, values: dict) -> dict:
    """Apply precedence flags > config file > defaults."""
    from_file = {}
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise click.ClickException(f"config file {config_path}: {exc}")
        if not isinstance(from_file, dict):
            raise click.ClickException(f"config file {config_path}: expected an object")
    out = {}
    for name, val in values.items():
        src = ctx.get_parameter_source(name)
        if src == ParameterSource.DEFAULT and name in from_file:
            out[name] = from_file[name]
        else:
            out[name] = val
    return out


def _maybe_print_config(print_config: bool, command: str, cfg: dict) -> None:
    if print_config:
        click.echo(json.dumps({"command": command, **cfg}, indent=2, sort_keys=True))
        sys.exit(0)


def _fail(exc: Exception) -> "click.ClickException":
    return click.ClickException(str(exc))


def _load_world(world_dir: str) -> WorldData:
    try:
        return load_world(world_dir)
    except (TruckmatchError, OSError, KeyError, ValueError) as exc:
        raise _fail(exc)


def _load_lanes(path: str) -> lanestore.LaneStore:
    try:
        return lanestore.load(path)
    except (TruckmatchError, OSError) as exc:
        raise _fail(exc)


def _load_model(path: str) -> gbdt.BoostedModel:
    try:
        return gbdt.load_model(path)
    except (TruckmatchError, OSError) as exc:
        raise _fail(exc)


def _windowed(world: WorldData, shipment, truck_id: str):
    start, end = candidate_window(shipment)
    return world.fleet.window(truck_id, start, end)


def _history_pairs(world: WorldData):
    for sid in world.history_ids:
        s = world.shipment(sid)
        yield s, _windowed(world, s, world.truth.true_truck[sid])


def _pipeline_config(cfg: dict) -> PipelineConfig:
    try:
        return PipelineConfig(
            pickup_radius_km=cfg["pickup_radius_km"],
            min_pings=cfg["min_pings"],
            short_haul_km=cfg["short_haul_km"],
            thresholds=Thresholds(cfg["tau_min"], cfg["tau_medium"], cfg["tau_high"]),
        )
    except ValueError as exc:
        raise _fail(exc)


def _pipeline_flags(fn):
    for args, kwargs in (
        (("--tau-min",), dict(type=float, default=Thresholds().tau_min, show_default=True)),
        (("--tau-medium",), dict(type=float, default=Thresholds().tau_medium, show_default=True)),
        (("--tau-high",), dict(type=float, default=Thresholds().tau_high, show_default=True)),
        (
            ("--pickup-radius-km",),
            dict(type=float, default=PipelineConfig().pickup_radius_km, show_default=True),
        ),
        (("--min-pings",), dict(type=int, default=PipelineConfig().min_pings, show_default=True)),
        (
            ("--short-haul-km",),
            dict(type=float, default=PipelineConfig().short_haul_km, show_default=True),
        ),
    ):
        fn = click.option(*args, **kwargs)(fn)
    return fn


def _write_decisions(records: list[DecisionRecord], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DECISION_HEADER)
        for r in records:
            d = r.decision
            writer.writerow(
                [
                    r.shipment.shipment_id,
                    d.engine,
                    d.assigned_truck or "NONE",
                    "" if d.probability is None else repr(d.probability),
                    d.confidence,
                    d.eval_count,
                    d.pings_seen,
                ]
            )


def _report_lines(name: str, records: list[DecisionRecord]) -> list[str]:
    r = build_report(records)
    lines = [
        f"[{name}] eligible = all shipments routed to the engine",
        f"  eligible={r.n_eligible} assigned={r.n_assigned} correct={r.n_correct}",
        "  coverage={:.3f} precision={} mdd_km={}".format(
            r.coverage,
            "n/a" if r.precision is None else f"{r.precision:.3f}",
            "n/a" if r.mdd_km is None else f"{r.mdd_km:.1f}",
        ),
        "  {:<10} {:>5} {:>10} {:>8}".format("dpp", "n", "precision", "mdd_km"),
    ]
    for bucket, b in r.dpp_buckets.items():
        lines.append(
            "  {:<10} {:>5} {:>10} {:>8}".format(
                bucket,
                b.n,
                "n/a" if b.precision is None else f"{b.precision:.3f}",
                "n/a" if b.mdd_km is None else f"{b.mdd_km:.1f}",
            )
        )
    return lines


def _report_record(name: str, records: list[DecisionRecord]) -> dict:
    r = build_report(records)
    return {
        "run": name,
        "eligible_definition": "all shipments routed to the engine",
        "n_eligible": r.n_eligible,
        "n_assigned": r.n_assigned,
        "n_correct": r.n_correct,
        "coverage": r.coverage,
        "precision": r.precision,
        "mdd_km": r.mdd_km,
        "dpp_buckets": {
            k: {"n": b.n, "precision": b.precision, "mdd_km": b.mdd_km}
            for k, b in r.dpp_buckets.items()
        },
    }


def _write_reports(out: Path, named_records: dict[str, list[DecisionRecord]]) -> list[str]:
    written = []
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        for name, records in named_records.items():
            fh.write("\n".join(_report_lines(name, records)) + "\n")
    written.append("report.txt")
    with open(out / "report.ndjson", "w", encoding="utf-8") as fh:
        for name, records in named_records.items():
            fh.write(json.dumps(_report_record(name, records), sort_keys=True) + "\n")
    written.append("report.ndjson")
    for name, records in named_records.items():
        fname = f"decisions_{name}.csv"
        _write_decisions(records, out / fname)
        written.append(fname)
    return written


# --------------------------------------------------------------------------
# subcommands


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--shipments", type=int, default=200, show_default=True)
@click.option("--decoys", type=int, default=5, show_default=True, help="Decoys per shipment.")
@click.option(
    "--noise-km",
    nargs=2,
    type=float,
    default=SimConfig().geocode_noise_km,
    show_default=True,
    help="Geocode error range (min max) in km.",
)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def simulate(ctx, seed, shipments, decoys, noise_km, out_dir, config_path, print_config):
    """Generate a synthetic labeled world into --out."""
    cfg = _effective(
        ctx,
        config_path,
        dict(seed=seed, shipments=shipments, decoys=decoys, noise_km=tuple(noise_km)),
    )
    _maybe_print_config(print_config, "simulate", cfg)
    try:
        sim_cfg = SimConfig(
            seed=cfg["seed"],
            n_shipments=cfg["shipments"],
            decoys_per_shipment=cfg["decoys"],
            geocode_noise_km=tuple(cfg["noise_km"]),
        )
        world = generate_world(sim_cfg)
        save_world(world, out_dir)
    except (TruckmatchError, ValueError, OSError) as exc:
        raise _fail(exc)
    outputs = sorted(p.name for p in Path(out_dir).iterdir() if p.name != "manifest.json")
    write_manifest(
        RunManifest(command="simulate", seed=cfg["seed"], config=cfg, outputs=outputs),
        out_dir,
    )
    click.echo(f"world: {len(world.shipments)} shipments, {len(world.pings)} pings -> {out_dir}")


@main.command("build-lanes")
@click.option("--world", "world_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--window-days", type=int, default=lanestore.DEFAULT_WINDOW_DAYS, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def build_lanes(ctx, world_dir, window_days, out_dir, config_path, print_config):
    """Accumulate per-lane historical hexcells from the world's history split."""
    cfg = _effective(ctx, config_path, dict(world=world_dir, window_days=window_days))
    _maybe_print_config(print_config, "build-lanes", cfg)
    world = _load_world(world_dir)
    try:
        store = lanestore.build_lane_store(_history_pairs(world), cfg["window_days"])
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lanestore.save(store, out / "lanes.txt")
    except (TruckmatchError, OSError, ValueError) as exc:
        raise _fail(exc)
    write_manifest(
        RunManifest(
            command="build-lanes",
            seed=None,
            config=cfg,
            inputs=[world_dir],
            outputs=["lanes.txt"],
        ),
        out_dir,
    )
    click.echo(f"lane store: {len(store)} lanes -> {out / 'lanes.txt'}")


@main.command("refresh-lanes")
@click.option("--lanes", "lanes_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--world", "world_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--now", "now_ts", type=int, required=True, help="Refresh time, UTC epoch seconds.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def refresh_lanes(ctx, lanes_path, world_dir, now_ts, out_dir, config_path, print_config):
    """Fold the world's eval-split journeys into an existing lane store."""
    cfg = _effective(ctx, config_path, dict(lanes=lanes_path, world=world_dir, now=now_ts))
    _maybe_print_config(print_config, "refresh-lanes", cfg)
    store = _load_lanes(lanes_path)
    world = _load_world(world_dir)

    def eval_pairs():
        for sid in world.eval_ids:
            s = world.shipment(sid)
            yield s, _windowed(world, s, world.truth.true_truck[sid])

    try:
        refreshed = lanestore.refresh(store, eval_pairs(), cfg["now"])
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lanestore.save(refreshed, out / "lanes.txt")
    except (TruckmatchError, OSError, ValueError) as exc:
        raise _fail(exc)
    write_manifest(
        RunManifest(
            command="refresh-lanes",
            seed=None,
            config=cfg,
            inputs=[lanes_path, world_dir],
            outputs=["lanes.txt"],
        ),
        out_dir,
    )
    click.echo(f"lane store: {len(refreshed)} lanes -> {out / 'lanes.txt'}")


def build_training_rows(
    world: WorldData,
    store: lanestore.LaneStore,
    seed: int,
    spec: SnapshotSpec = SnapshotSpec(),
) -> list[DatasetRow]:
    """Snapshot rows for the history split: true trucks as positives,
    decoys as negatives (skipping decoys that end in the destination
    cell), then deterministic negative downsampling."""
    rows: list[DatasetRow] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for sid in world.history_ids:
            s = world.shipment(sid)
            rows.extend(
                make_positive_rows(
                    s, _windowed(world, s, world.truth.true_truck[sid]), store, spec
                )
            )
            dest_cell = ping_to_hex(s.dropoff.location, STOP_RES)
            decoys = []
            for tid in world.truth.decoys.get(sid, ()):
                ps = _windowed(world, s, tid)
                if len(ps) and ping_to_hex(ps.latest().position, STOP_RES) != dest_cell:
                    decoys.append(ps)
            rows.extend(make_negative_rows(s, decoys, store, spec))
    return balance_negatives(rows, seed=seed)


@main.command("make-dataset")
@click.option("--world", "world_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--lanes", "lanes_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def make_dataset(ctx, world_dir, lanes_path, seed, out_dir, config_path, print_config):
    """Build the labeled snapshot dataset from the history split."""
    cfg = _effective(ctx, config_path, dict(world=world_dir, lanes=lanes_path, seed=seed))
    _maybe_print_config(print_config, "make-dataset", cfg)
    world = _load_world(world_dir)
    store = _load_lanes(lanes_path)
    try:
        rows = build_training_rows(world, store, cfg["seed"])
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_dataset(rows, out / "dataset.csv")
    except (TruckmatchError, OSError, ValueError) as exc:
        raise _fail(exc)
    pos, neg = class_counts(rows)
    write_manifest(
        RunManifest(
            command="make-dataset",
            seed=cfg["seed"],
            config=cfg,
            inputs=[world_dir, lanes_path],
            outputs=["dataset.csv"],
        ),
        out_dir,
    )
    click.echo(f"dataset: {pos} positives, {neg} negatives -> {out / 'dataset.csv'}")


@main.command()
@click.option("--dataset", "dataset_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trees", type=int, default=gbdt.TrainConfig().n_trees, show_default=True)
@click.option(
    "--learning-rate", type=float, default=gbdt.TrainConfig().learning_rate, show_default=True
)
@click.option("--max-leaves", type=int, default=gbdt.TrainConfig().max_leaves, show_default=True)
@click.option(
    "--min-samples-leaf",
    type=int,
    default=gbdt.TrainConfig().min_samples_leaf,
    show_default=True,
)
@click.option(
    "--features",
    default="0,1,2,3",
    show_default=True,
    help="Comma-separated feature column indices to train on.",
)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def train(
    ctx,
    dataset_path,
    seed,
    trees,
    learning_rate,
    max_leaves,
    min_samples_leaf,
    features,
    out_dir,
    config_path,
    print_config,
):
    """Fit the boosted ranking model on a dataset CSV."""
    cfg = _effective(
        ctx,
        config_path,
        dict(
            dataset=dataset_path,
            seed=seed,
            trees=trees,
            learning_rate=learning_rate,
            max_leaves=max_leaves,
            min_samples_leaf=min_samples_leaf,
            features=features,
        ),
    )
    _maybe_print_config(print_config, "train", cfg)
    try:
        feature_indices = tuple(int(v) for v in str(cfg["features"]).split(","))
    except ValueError as exc:
        raise _fail(exc)
    rows = None
    try:
        rows = read_dataset(dataset_path)
        tc = gbdt.TrainConfig(
            n_trees=cfg["trees"],
            learning_rate=cfg["learning_rate"],
            max_leaves=cfg["max_leaves"],
            min_samples_leaf=cfg["min_samples_leaf"],
            seed=cfg["seed"],
            feature_indices=feature_indices,
        )
        model = gbdt.train((r.to_train_row() for r in rows), tc)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        gbdt.save_model(model, out / "model.txt")
    except (TruckmatchError, OSError, ValueError) as exc:
        raise _fail(exc)
    import numpy as np

    X = np.asarray([r.features.as_tuple() for r in rows])
    y = np.asarray([r.label for r in rows], dtype=float)
    probs = gbdt.predict_batch(model, X)
    write_manifest(
        RunManifest(
            command="train",
            seed=cfg["seed"],
            config=cfg,
            inputs=[dataset_path],
            outputs=["model.txt"],
        ),
        out_dir,
    )
    click.echo(
        "model: {} trees, train logloss={:.4f} auc={:.4f} -> {}".format(
            len(model.trees), model.train_history[-1], gbdt.auc(y, probs), out / "model.txt"
        )
    )


@main.command("match")
@click.option("--world", "world_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--lanes", "lanes_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--shipment", "shipment_id", required=True)
@_pipeline_flags
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def match_cmd(
    ctx,
    world_dir,
    lanes_path,
    model_path,
    shipment_id,
    tau_min,
    tau_medium,
    tau_high,
    pickup_radius_km,
    min_pings,
    short_haul_km,
    out_dir,
    config_path,
    print_config,
):
    """One-shot match for a single shipment over complete pingsets."""
    cfg = _effective(
        ctx,
        config_path,
        dict(
            world=world_dir,
            lanes=lanes_path,
            model=model_path,
            shipment=shipment_id,
            tau_min=tau_min,
            tau_medium=tau_medium,
            tau_high=tau_high,
            pickup_radius_km=pickup_radius_km,
            min_pings=min_pings,
            short_haul_km=short_haul_km,
        ),
    )
    _maybe_print_config(print_config, "match", cfg)
    world = _load_world(world_dir)
    store = _load_lanes(lanes_path)
    model = _load_model(model_path)
    pc = _pipeline_config(cfg)
    try:
        s = world.shipment(cfg["shipment"])
    except KeyError:
        raise click.ClickException(f"unknown shipment {cfg['shipment']!r}")
    start, end = candidate_window(s)
    fleet = [
        world.fleet.window(tid, start, end)
        for tid in world.fleet.truck_ids()
        if len(world.fleet.window(tid, start, end))
    ]
    try:
        decision = match(s, fleet, store, model, pc)
    except TruckmatchError as exc:
        raise _fail(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_decisions(
        [DecisionRecord(shipment=s, decision=decision)], out / "decisions.csv"
    )
    write_manifest(
        RunManifest(
            command="match",
            seed=None,
            config=cfg,
            inputs=[world_dir, lanes_path, model_path],
            outputs=["decisions.csv"],
        ),
        out_dir,
    )
    click.echo(
        f"{s.shipment_id}: engine={decision.engine} "
        f"assigned={decision.assigned_truck or 'NONE'} "
        f"confidence={decision.confidence}"
    )


def _eval_shipments(world: WorldData):
    return [world.shipment(sid) for sid in world.eval_ids]


@main.command("shadow-eval")
@click.option("--world", "world_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--lanes", "lanes_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@_pipeline_flags
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def shadow_eval(
    ctx,
    world_dir,
    lanes_path,
    model_path,
    tau_min,
    tau_medium,
    tau_high,
    pickup_radius_km,
    min_pings,
    short_haul_km,
    out_dir,
    config_path,
    print_config,
):
    """Replay the eval split through both engines and report quality."""
    cfg = _effective(
        ctx,
        config_path,
        dict(
            world=world_dir,
            lanes=lanes_path,
            model=model_path,
            tau_min=tau_min,
            tau_medium=tau_medium,
            tau_high=tau_high,
            pickup_radius_km=pickup_radius_km,
            min_pings=min_pings,
            short_haul_km=short_haul_km,
        ),
    )
    _maybe_print_config(print_config, "shadow-eval", cfg)
    world = _load_world(world_dir)
    store = _load_lanes(lanes_path)
    model = _load_model(model_path)
    pc = _pipeline_config(cfg)
    shipments = _eval_shipments(world)
    try:
        named = {
            "itm2": shadow_run(shipments, world.fleet, store, model, pc, engine=ENGINE_ITM2),
            "itm1": shadow_run(shipments, world.fleet, store, model, pc, engine=ENGINE_ITM1),
        }
    except TruckmatchError as exc:
        raise _fail(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = _write_reports(out, named)
    write_manifest(
        RunManifest(
            command="shadow-eval",
            seed=None,
            config=cfg,
            inputs=[world_dir, lanes_path, model_path],
            outputs=outputs,
        ),
        out_dir,
    )
    for name, records in named.items():
        click.echo("\n".join(_report_lines(name, records)))


@main.command()
@click.option("--world", "world_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--lanes", "lanes_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option(
    "--model-no-hexcell",
    "model2_path",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Model trained on the temporal features only.",
)
@_pipeline_flags
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def ablate(
    ctx,
    world_dir,
    lanes_path,
    model_path,
    model2_path,
    tau_min,
    tau_medium,
    tau_high,
    pickup_radius_km,
    min_pings,
    short_haul_km,
    out_dir,
    config_path,
    print_config,
):
    """Run the full engine and its two ablations over the eval split."""
    cfg = _effective(
        ctx,
        config_path,
        dict(
            world=world_dir,
            lanes=lanes_path,
            model=model_path,
            model_no_hexcell=model2_path,
            tau_min=tau_min,
            tau_medium=tau_medium,
            tau_high=tau_high,
            pickup_radius_km=pickup_radius_km,
            min_pings=min_pings,
            short_haul_km=short_haul_km,
        ),
    )
    _maybe_print_config(print_config, "ablate", cfg)
    world = _load_world(world_dir)
    store = _load_lanes(lanes_path)
    model = _load_model(model_path)
    model2 = _load_model(model2_path)
    pc = _pipeline_config(cfg)
    shipments = _eval_shipments(world)
    from .evaluation import ablate as run_ablations

    try:
        named = run_ablations(shipments, world.fleet, store, model, model2, pc)
    except TruckmatchError as exc:
        raise _fail(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = _write_reports(out, named)
    write_manifest(
        RunManifest(
            command="ablate",
            seed=None,
            config=cfg,
            inputs=[world_dir, lanes_path, model_path, model2_path],
            outputs=outputs,
        ),
        out_dir,
    )
    for name in ABLATIONS:
        click.echo("\n".join(_report_lines(name, named[name])))


@main.command("export-geojson")
@click.option("--world", "world_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--lanes", "lanes_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--shipment", "shipment_id", required=True)
@click.option("--truck", "truck_id", default=None, help="Defaults to the shipment's true truck.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def export_geojson(
    ctx, world_dir, lanes_path, shipment_id, truck_id, out_dir, config_path, print_config
):
    """Write trajectory and hexcell polygon layers for a map viewer."""
    cfg = _effective(
        ctx,
        config_path,
        dict(world=world_dir, lanes=lanes_path, shipment=shipment_id, truck=truck_id),
    )
    _maybe_print_config(print_config, "export-geojson", cfg)
    world = _load_world(world_dir)
    store = _load_lanes(lanes_path)
    try:
        s = world.shipment(cfg["shipment"])
    except KeyError:
        raise click.ClickException(f"unknown shipment {cfg['shipment']!r}")
    tid = cfg["truck"] or world.truth.true_truck.get(s.shipment_id)
    if not tid:
        raise click.ClickException(f"no truck given and no truth for {s.shipment_id}")
    pingset = _windowed(world, s, tid)
    try:
        lane = lane_code(s.pickup.location, s.dropoff.location)
        layers = geojson.export_layers(pingset, lane, store, s)
        paths = geojson.write_layers(layers, out_dir)
    except (TruckmatchError, OSError) as exc:
        raise _fail(exc)
    write_manifest(
        RunManifest(
            command="export-geojson",
            seed=None,
            config=cfg,
            inputs=[world_dir, lanes_path],
            outputs=sorted(p.name for p in paths),
        ),
        out_dir,
    )
    click.echo(f"geojson: {len(paths)} layers -> {out_dir}")


@main.command()
@click.option("--world", "world_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option(
    "--decisions",
    "decisions_path",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_shared
@click.pass_context
def metrics(ctx, world_dir, decisions_path, out_dir, config_path, print_config):
    """Recompute the quality report from a decision log."""
    cfg = _effective(ctx, config_path, dict(world=world_dir, decisions=decisions_path))
    _maybe_print_config(print_config, "metrics", cfg)
    world = _load_world(world_dir)
    from .evaluation import is_correct
    from .pipeline import MatchDecision

    records = []
    try:
        with open(decisions_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != DECISION_HEADER:
                raise click.ClickException(
                    f"{decisions_path}: expected header {','.join(DECISION_HEADER)}"
                )
            for rec in reader:
                s = world.shipment(rec["shipment_id"])
                assigned = None if rec["assigned_truck"] == "NONE" else rec["assigned_truck"]
                ranked = ()
                if assigned:
                    prob = float(rec["probability"]) if rec["probability"] else 0.0
                    ranked = ((assigned, prob, rec["confidence"]),)
                decision = MatchDecision(
                    engine=rec["engine"],
                    assigned_truck=assigned,
                    ranked=ranked,
                    eval_count=int(rec["eval_count"]),
                    pings_seen=int(rec["pings_seen"]),
                )
                correct = None
                if assigned:
                    correct = is_correct(s, world.fleet.all_pings(assigned))
                records.append(
                    DecisionRecord(shipment=s, decision=decision, correct=correct)
                )
    except (OSError, KeyError, ValueError) as exc:
        raise _fail(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(_report_lines("metrics", records)) + "\n")
    with open(out / "report.ndjson", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_report_record("metrics", records), sort_keys=True) + "\n")
    write_manifest(
        RunManifest(
            command="metrics",
            seed=None,
            config=cfg,
            inputs=[world_dir, decisions_path],
            outputs=["report.txt", "report.ndjson"],
        ),
        out_dir,
    )
    click.echo("\n".join(_report_lines("metrics", records)))


if __name__ == "__main__":
    main()
