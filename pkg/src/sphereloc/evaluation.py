"""Experiment harness: synthetic-world localization studies at desk scale.

The suite builds a seeded box world, renders a map and displaced queries,
trains the descriptor embedding on a disjoint world, and measures:

  recall     full recall@n curves (n = 1..n_max) per query sensor profile,
             where a retrieval succeeds when some returned entry lies
             within the success radius of the query position
  rotation   recall curves when the map is rebuilt from yaw-rotated scans
             while the queries stay unchanged (LiDAR channels only; the
             photometry channel is zeroed on both sides because a discrete
             camera ring does not rotate onto itself)
  selection  voting quality on the descriptor shortlist over a sweep of
             shortlist sizes k, counted over queries whose shortlist
             contains at least one true positive
  timing     per-stage wall clock over repeated single queries at high
             bandwidth, single-threaded

Queries are displaced from map places and keep the heading of the place
they revisit, as a vehicle re-traversing a route does.  The descriptor is
heading-invariant, so recall does not depend on this choice; the
correlation vote compares cross-spectra, which do.

Results land in CSV files plus a JSON summary that echoes the fully
resolved configuration and hashes both the inputs (the config) and the
deterministic outputs.  Accuracy experiments are seeded end to end and
reproduce byte-identical CSVs; timing is wall clock and its CSV is
excluded from the output hash.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config, resolved
from .descriptor import (EmbeddingModel, feature_vector, init_embedding,
                         mine_triplets, train_embedding)
from .errors import InvalidParameterError
from .grid import PointCloud, SphericalGrid, build_grid, project_lidar
from .map_store import KDTree, MapEntry, MapStore
from .pipeline import (LocalizationIndex, build_feature_sphere, describe,
                       make_taper_bank, query_with_sensors)
from .sensor_io import RigConfig
from .synth import World, make_rig, make_world, render_lidar, render_place, \
    sample_positions
from .transforms import RigidTransform

log = logging.getLogger("sphereloc")

FULL_PROFILE = "full"
LITE_PROFILE = "lite"

# Stage keys reported by timing_breakdown, in presentation order.
TIMING_COMPONENTS = ("projection", "sht", "fusion", "embedding", "knn",
                     "multitaper", "voting")


def rig_for_profile(profile: str, config: Config) -> tuple[RigConfig, int]:
    """Sensor suite for a named profile: (rig, beam count)."""
    size = (config.eval.image_width, config.eval.image_height)
    if profile == FULL_PROFILE:
        return make_rig(n_cameras=4, image_size=size), 128
    if profile == LITE_PROFILE:
        return make_rig(n_cameras=1, image_size=size), 64
    raise InvalidParameterError(f"unknown sensor profile {profile!r}")


@dataclass
class PlaceRecord:
    """One rendered place: pose, grid channels, optionally the raw scan."""

    pose: RigidTransform
    channels: np.ndarray            # (3, 2B, 2B) float32
    scan: PointCloud | None = None


def _poses_with_yaw(positions: np.ndarray, rng: np.random.Generator) -> list[RigidTransform]:
    return [RigidTransform.yaw(rng.uniform(0, 2 * np.pi), p) for p in positions]


def render_places(
    world: World,
    rig: RigConfig,
    poses: list[RigidTransform],
    n_beams: int,
    grid: SphericalGrid,
    config: Config,
    keep_scans: int = 0,
    label: str = "places",
) -> list[PlaceRecord]:
    """Render each pose; the first ``keep_scans`` records retain raw scans."""
    records = []
    for i, pose in enumerate(poses):
        scan, views = render_place(world, rig, pose, n_beams=n_beams,
                                   n_azimuths=config.synth.n_azimuths,
                                   max_range=config.synth.max_range)
        channels = build_feature_sphere(scan, views, rig, grid, config)
        records.append(PlaceRecord(pose=pose, channels=channels.astype(np.float32),
                                   scan=scan if i < keep_scans else None))
        if (i + 1) % 200 == 0:
            log.info("%s: rendered %d/%d", label, i + 1, len(poses))
    return records


def sample_queries(
    world: World,
    map_poses: list[RigidTransform],
    n_queries: int,
    offset: float,
    seed: int,
    source_limit: int | None = None,
) -> tuple[np.ndarray, list[RigidTransform]]:
    """Query poses displaced from map places, revisiting their heading.

    Returns (source indices, poses).  Each query sits 0.3..offset meters
    from its source place and reuses the source heading.
    """
    rng = np.random.default_rng(seed)
    n_sources = len(map_poses) if source_limit is None else min(source_limit,
                                                                len(map_poses))
    sources = []
    poses = []
    attempts = 0
    while len(poses) < n_queries and attempts < 500 * n_queries:
        attempts += 1
        src = int(rng.integers(n_sources))
        angle = rng.uniform(0, 2 * np.pi)
        radius = rng.uniform(0.3, offset)
        base = map_poses[src]
        pos = base.translation + radius * np.array([np.cos(angle), np.sin(angle), 0.0])
        if not world.is_free(pos, margin=0.8):
            continue
        sources.append(src)
        poses.append(RigidTransform(rotation=base.rotation, translation=pos))
    if len(poses) < n_queries:
        raise InvalidParameterError(
            f"could only place {len(poses)} of {n_queries} queries"
        )
    return np.array(sources), poses


def build_store(
    records: list[PlaceRecord],
    grid: SphericalGrid,
    model: EmbeddingModel,
    config: Config,
    lidar_only: bool = False,
) -> MapStore:
    store = MapStore(bandwidth=grid.bandwidth)
    for i, rec in enumerate(records):
        channels = rec.channels.astype(np.float64)
        if lidar_only:
            channels[0] = 0.0
        desc = describe(channels, grid, model, config)
        store.add(MapEntry(entry_id=i, pose=rec.pose, descriptor=desc,
                           channels=channels.astype(np.float32)))
    store.build_index()
    return store


def train_model(config: Config, grid: SphericalGrid) -> EmbeddingModel:
    """Train the embedding on a disjoint seeded world."""
    ev = config.eval
    world = make_world(seed=ev.seed + 101, n_boxes=ev.train_boxes, extent=ev.train_extent)
    positions = sample_positions(world, ev.train_places, ev.train_spacing,
                                 seed=ev.seed + 102)
    rng = np.random.default_rng(ev.seed + 103)
    poses = _poses_with_yaw(positions, rng)
    rig, n_beams = rig_for_profile(FULL_PROFILE, config)
    records = render_places(world, rig, poses, n_beams, grid, config,
                            label="training set")
    feats = np.stack([
        feature_vector(r.channels.astype(np.float64), grid,
                       l_feat=config.descriptor.l_feat,
                       standardize=config.descriptor.standardize)
        for r in records
    ])
    triplets = mine_triplets(positions,
                             min_spacing=config.mine.min_spacing,
                             positive_radius=config.mine.positive_radius,
                             negative_range=(config.mine.negative_min,
                                             config.mine.negative_max),
                             seed=config.train.seed)
    log.info("training on %d triplets from %d poses", len(triplets), len(positions))
    model, history = train_embedding(
        feats, triplets,
        d_out=config.descriptor.embed_dim,
        epochs=config.train.epochs,
        lr=config.train.lr,
        batch_size=config.train.batch_size,
        margin=config.train.margin,
        spread=config.train.spread,
        seed=config.train.seed,
    )
    log.info("triplet loss: first epoch %.4f, last epoch %.4f",
             history[0], history[-1])
    return model


def recall_at_n(
    store: MapStore,
    descriptors: np.ndarray,
    positions: np.ndarray,
    n_max: int,
    success_radius: float = 5.0,
) -> np.ndarray:
    """Recall@n curve for n = 1..n_max; entry [n-1] is recall@n.

    A query counts as recalled at n when any of its top-n retrieved map
    entries lies within ``success_radius`` of the query position.
    """
    descriptors = np.atleast_2d(np.asarray(descriptors))
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if len(descriptors) == 0:
        raise InvalidParameterError("recall needs at least one query")
    if len(descriptors) != len(positions):
        raise InvalidParameterError(
            f"{len(descriptors)} descriptors but {len(positions)} positions"
        )
    if not 1 <= n_max <= len(store.entries):
        raise InvalidParameterError(
            f"n_max must be in [1, {len(store.entries)}], got {n_max}"
        )
    curve = np.zeros(n_max)
    for desc, pos in zip(descriptors, positions):
        hits = store.query(desc, k=n_max)
        within = np.array([
            np.linalg.norm(store.get(h.entry_id).pose.translation - pos)
            <= success_radius
            for h in hits
        ])
        curve += np.maximum.accumulate(within)
    return curve / len(descriptors)


def _lidar_only_channels(
    scan: PointCloud,
    lidar_mount: RigidTransform,
    grid: SphericalGrid,
    config: Config,
) -> np.ndarray:
    max_angle = config.projection.max_angle or None
    range_ch, intens_ch = project_lidar(scan, lidar_mount, grid,
                                        max_angle=max_angle,
                                        k=config.projection.k)
    return np.stack([np.zeros_like(range_ch), range_ch, intens_ch])


def rotation_experiment(
    map_records: list[PlaceRecord],
    queries: list[PlaceRecord],
    angles_deg,
    grid: SphericalGrid,
    model: EmbeddingModel,
    config: Config,
) -> list[dict]:
    """Recall curves when the map is rebuilt from yaw-rotated scans.

    Every map record must carry its raw scan.  Per angle, each scan's
    points are spun about the sensor vertical axis, reprojected LiDAR-only,
    and described into a fresh map; the queries stay untouched.  Returns
    rows (angle_deg, n, recall) up to ``config.eval.rotation_recall_at``.
    """
    if any(rec.scan is None for rec in map_records):
        raise InvalidParameterError("rotation experiment needs raw map scans")
    ev = config.eval
    n_max = ev.rotation_recall_at
    rig, _ = rig_for_profile(FULL_PROFILE, config)
    query_descs = np.stack([
        describe(_zero_photometry(rec.channels), grid, model, config)
        for rec in queries
    ])
    query_pos = np.stack([rec.pose.translation for rec in queries])
    rows = []
    for angle_deg in angles_deg:
        angle = float(np.deg2rad(angle_deg))
        spin = RigidTransform.yaw(angle, np.zeros(3))
        store = MapStore(bandwidth=grid.bandwidth)
        for i, rec in enumerate(map_records):
            spun = PointCloud(points=spin.rotate(rec.scan.points),
                              intensities=rec.scan.intensities)
            channels = _lidar_only_channels(spun, rig.lidar, grid, config)
            desc = describe(channels, grid, model, config)
            store.add(MapEntry(entry_id=i, pose=rec.pose, descriptor=desc,
                               channels=channels.astype(np.float32)))
        store.build_index()
        curve = recall_at_n(store, query_descs, query_pos, n_max,
                            ev.success_radius)
        for n in range(1, n_max + 1):
            rows.append({"angle_deg": float(angle_deg), "n": n,
                         "recall": float(curve[n - 1])})
        log.info("rotation %g deg: recall@%d = %.3f", angle_deg, n_max,
                 curve[-1])
    return rows


def _zero_photometry(channels: np.ndarray) -> np.ndarray:
    out = channels.astype(np.float64)
    out[0] = 0.0
    return out


def selection_experiment(
    index: LocalizationIndex,
    queries: list[PlaceRecord],
    k_values,
    model: EmbeddingModel,
    config: Config,
    votes_path: Path | None = None,
) -> tuple[list[dict], dict]:
    """Wrong-selection rate per shortlist size k.

    Per query the shortlist is retrieved once at max(k_values) and every
    candidate scored; the vote at a smaller k is the argmax over the score
    prefix, which equals rerunning the vote on the truncated shortlist
    because candidate scores are independent.  A query counts at k only
    when its top-k contains an entry within the success radius; the vote
    is wrong when its pick lies outside that radius.

    Returns (per-k rows, detail dict with margins and selected distances).
    """
    k_values = sorted(set(int(k) for k in k_values))
    if not k_values or k_values[0] < 1:
        raise InvalidParameterError("k values must be positive")
    k_max = k_values[-1]
    if k_max > len(index.store.entries):
        raise InvalidParameterError(
            f"k={k_max} exceeds map size {len(index.store.entries)}"
        )
    radius = config.eval.success_radius
    scored = {k: 0 for k in k_values}
    wrong = {k: 0 for k in k_values}
    margins = []
    selected_dists = []
    vote_rows = []
    for qi, rec in enumerate(queries):
        outcome = index.locate(rec.channels.astype(np.float64), model, k=k_max)
        pos = rec.pose.translation
        dists = np.array([
            np.linalg.norm(index.store.get(h.entry_id).pose.translation - pos)
            for h in outcome.hits
        ])
        scores = outcome.vote.scores
        vote_rows.append({
            "query_id": qi,
            "candidate_ids": [h.entry_id for h in outcome.hits],
            "scores": [float(s) for s in scores],
            "selected": outcome.selected_id,
            "margin": outcome.vote.margin,
        })
        for k in k_values:
            prefix = dists[:k]
            if not (prefix <= radius).any():
                continue
            scored[k] += 1
            pick = int(np.argmax(scores[:k]))
            if prefix[pick] > radius:
                wrong[k] += 1
            if k == k_max:
                margins.append(outcome.vote.margin)
                selected_dists.append(float(prefix[pick]))
    if votes_path is not None:
        with open(votes_path, "w", encoding="ascii") as fh:
            for row in vote_rows:
                fh.write(json.dumps(row) + "\n")
    rows = []
    for k in k_values:
        rate = wrong[k] / scored[k] if scored[k] else 0.0
        rows.append({"k": k, "wrong_rate": rate, "n_scored": scored[k]})
    detail = {
        "n_queries": len(queries),
        "mean_margin": float(np.mean(margins)) if margins else 0.0,
        "max_selected_distance_m": max(selected_dists) if selected_dists else 0.0,
    }
    log.info("selection: k=%d scored %d, wrong rate %.3f", k_max,
             scored[k_max], rows[-1]["wrong_rate"])
    return rows, detail


def timing_breakdown(config: Config, n_samples: int | None = None) -> tuple[list[dict], dict]:
    """Mean/std per-stage wall clock over repeated single queries.

    Runs at ``config.eval.timing_bandwidth`` against a small rendered map,
    single-threaded.  Also times bare KD-tree lookups on a large random
    descriptor map, reported as component ``knn_map{N}``.  Returns
    (rows for timing.csv, detail dict).
    """
    ev = config.eval
    n_samples = int(ev.timing_samples if n_samples is None else n_samples)
    if n_samples < 1:
        raise InvalidParameterError("timing needs at least one sample")
    bandwidth = ev.timing_bandwidth
    grid = build_grid(bandwidth)
    world = make_world(seed=ev.seed + 401, n_boxes=config.synth.n_boxes,
                       extent=config.synth.extent)
    positions = sample_positions(world, config.synth.n_places,
                                 config.synth.min_spacing * 2, seed=ev.seed + 402)
    rng = np.random.default_rng(ev.seed + 403)
    poses = _poses_with_yaw(positions, rng)
    rig, n_beams = rig_for_profile(FULL_PROFILE, config)
    records = render_places(world, rig, poses, n_beams, grid, config,
                            label="timing map")
    # Timing measures compute, not accuracy, so an untrained map suffices.
    model = init_embedding(3 * config.descriptor.l_feat,
                           d_out=config.descriptor.embed_dim,
                           seed=config.train.seed)
    store = build_store(records, grid, model, config)
    bank = make_taper_bank(config)
    index = LocalizationIndex(store, bank, config)
    index.warm_cache()

    _, qposes = sample_queries(world, poses, n_samples, ev.query_offset,
                               seed=ev.seed + 404)
    samples = []
    for pose in qposes:
        scan, views = render_place(world, rig, pose, n_beams=n_beams,
                                   n_azimuths=config.synth.n_azimuths,
                                   max_range=config.synth.max_range)
        samples.append((scan, views))

    per_stage = {name: [] for name in TIMING_COMPONENTS}
    totals = []
    for scan, views in samples:
        start = time.perf_counter()
        outcome = query_with_sensors(scan, views, rig, index, model)
        totals.append(time.perf_counter() - start)
        for name in TIMING_COMPONENTS:
            per_stage[name].append(outcome.timings.get(name, 0.0))

    rows = []
    for name in TIMING_COMPONENTS:
        vals = np.array(per_stage[name]) * 1000.0
        rows.append({"component": name, "mean_ms": float(vals.mean()),
                     "std_ms": float(vals.std())})
    total_ms = np.array(totals) * 1000.0
    rows.append({"component": "total", "mean_ms": float(total_ms.mean()),
                 "std_ms": float(total_ms.std())})

    knn_rows, knn_detail = _time_bare_knn(config, n_samples)
    rows.extend(knn_rows)

    stage_sum = sum(r["mean_ms"] for r in rows if r["component"] in TIMING_COMPONENTS)
    detail = {
        "bandwidth": bandwidth,
        "n_samples": n_samples,
        "mean_total_ms": float(total_ms.mean()),
        "stage_sum_ms": stage_sum,
        **knn_detail,
    }
    log.info("timing at B=%d over %d samples: total %.1f ms, stages %.1f ms",
             bandwidth, n_samples, detail["mean_total_ms"], stage_sum)
    return rows, detail


def _time_bare_knn(config: Config, n_samples: int) -> tuple[list[dict], dict]:
    """KD-tree lookup time on a large random descriptor map."""
    n_entries = config.eval.timing_knn_entries
    dim = config.descriptor.embed_dim
    rng = np.random.default_rng(config.eval.seed + 405)
    points = rng.standard_normal((n_entries, dim)).astype(np.float32)
    tree = KDTree(points)
    lookups = rng.standard_normal((max(n_samples, 32), dim)).astype(np.float32)
    times = []
    for q in lookups:
        start = time.perf_counter()
        tree.query(q, k=config.vote.k_candidates)
        times.append(time.perf_counter() - start)
    vals = np.array(times) * 1000.0
    name = f"knn_map{n_entries}"
    row = {"component": name, "mean_ms": float(vals.mean()),
           "std_ms": float(vals.std())}
    return [row], {"knn_map_entries": n_entries, "knn_mean_ms": row["mean_ms"]}


def _write_csv(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in columns})


EXPERIMENTS = ("recall", "rotation", "selection", "timing")


def run_suite(config: Config, out_dir: str | Path,
              experiments: tuple[str, ...] = EXPERIMENTS) -> dict:
    """Run the selected experiments and write CSVs plus the JSON summary."""
    unknown = set(experiments) - set(EXPERIMENTS)
    if unknown or not experiments:
        raise InvalidParameterError(f"unknown experiments: {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ev = config.eval
    suite_start = time.perf_counter()
    needs_map = any(e in experiments for e in ("recall", "rotation", "selection"))
    needs_queries = any(e in experiments for e in ("recall", "selection"))

    if needs_map:
        grid = build_grid(ev.bandwidth)
        log.info("world: %d boxes, extent %.0f m", ev.n_boxes, ev.extent)
        world = make_world(seed=ev.seed, n_boxes=ev.n_boxes, extent=ev.extent)
        map_positions = sample_positions(world, ev.map_size, ev.map_spacing,
                                         seed=ev.seed + 1)
        rng = np.random.default_rng(ev.seed + 2)
        map_poses = _poses_with_yaw(map_positions, rng)
        model = train_model(config, grid)
        rig_full, beams_full = rig_for_profile(FULL_PROFILE, config)
        map_records = render_places(world, rig_full, map_poses, beams_full,
                                    grid, config,
                                    keep_scans=ev.rotation_map_size,
                                    label="map")
        store = build_store(map_records, grid, model, config)

    queries_by_profile = {}
    if needs_queries:
        _, query_poses = sample_queries(world, map_poses, ev.n_queries,
                                        ev.query_offset, seed=ev.seed + 3)
        for profile in ev.profiles:
            rig, beams = rig_for_profile(profile, config)
            queries_by_profile[profile] = render_places(
                world, rig, query_poses, beams, grid, config,
                label=f"queries ({profile})")

    # Recall curves per query profile against the full-profile map.
    recall_rows = []
    recall_summary = {}
    if "recall" in experiments:
        n_max = max(int(n) for n in ev.recall_at)
        for profile, queries in queries_by_profile.items():
            descs = np.stack([
                describe(rec.channels.astype(np.float64), grid, model, config)
                for rec in queries
            ])
            positions = np.stack([rec.pose.translation for rec in queries])
            curve = recall_at_n(store, descs, positions, n_max,
                                ev.success_radius)
            for n in range(1, n_max + 1):
                recall_rows.append({"map_profile": FULL_PROFILE,
                                    "query_profile": profile, "angle_deg": "",
                                    "n": n, "recall": float(curve[n - 1])})
            recall_summary[f"{FULL_PROFILE}/{profile}"] = {
                str(n): float(curve[n - 1]) for n in ev.recall_at
            }
            log.info("recall %s/%s: @1 %.3f, @%d %.3f", FULL_PROFILE, profile,
                     curve[0], n_max, curve[-1])

    # Rotated-map robustness on the scan-bearing subset, LiDAR only.
    rot_at = {}
    rotation_drop = None
    if "rotation" in experiments:
        rot_subset = map_records[:ev.rotation_map_size]
        _, rot_query_poses = sample_queries(world, map_poses,
                                            ev.rotation_queries,
                                            ev.query_offset,
                                            seed=ev.seed + 301,
                                            source_limit=ev.rotation_map_size)
        rot_queries = render_places(world, rig_full, rot_query_poses,
                                    beams_full, grid, config,
                                    label="rotation queries")
        rotation_rows = rotation_experiment(rot_subset, rot_queries,
                                            ev.rotation_angles_deg, grid,
                                            model, config)
        for row in rotation_rows:
            recall_rows.append({"map_profile": f"{FULL_PROFILE}-lidar",
                                "query_profile": f"{FULL_PROFILE}-lidar",
                                "angle_deg": row["angle_deg"], "n": row["n"],
                                "recall": row["recall"]})
        for row in rotation_rows:
            if row["n"] == ev.rotation_recall_at:
                rot_at[str(row["angle_deg"])] = row["recall"]
        rotation_drop = (max(rot_at.values()) - min(rot_at.values())
                         if rot_at else 0.0)

    # Selection sweep, same-setup then cross-setup.
    selection_rows = []
    selection_detail = {}
    if "selection" in experiments:
        for rec in map_records:
            rec.scan = None  # free the rotation scans before voting
        bank = make_taper_bank(config)
        index = LocalizationIndex(store, bank, config)
        k_values = range(1, config.vote.k_candidates + 1)
        for profile in ev.profiles:
            setup = f"{FULL_PROFILE}/{profile}"
            votes = out / "votes.jsonl" if profile == FULL_PROFILE else None
            rows, detail = selection_experiment(index,
                                                queries_by_profile[profile],
                                                k_values, model, config,
                                                votes_path=votes)
            for row in rows:
                selection_rows.append({"setup": setup, **row})
            selection_detail[setup] = detail

    timing_rows = []
    timing_detail = {}
    if "timing" in experiments:
        timing_rows, timing_detail = timing_breakdown(config)

    hashed = []
    if recall_rows:
        _write_csv(out / "recall.csv", recall_rows,
                   ["map_profile", "query_profile", "angle_deg", "n",
                    "recall"])
        hashed.append("recall.csv")
    if selection_rows:
        _write_csv(out / "selection.csv", selection_rows,
                   ["setup", "k", "wrong_rate", "n_scored"])
        hashed.append("selection.csv")
    if timing_rows:
        _write_csv(out / "timing.csv", timing_rows,
                   ["component", "mean_ms", "std_ms"])

    config_blob = json.dumps(resolved(config), sort_keys=True).encode("ascii")
    outputs = hashlib.sha256()
    for name in hashed:
        outputs.update((out / name).read_bytes())
    same = f"{FULL_PROFILE}/{FULL_PROFILE}"
    wrong_at_kmax = next(
        (r["wrong_rate"] for r in reversed(selection_rows)
         if r["setup"] == same),
        None,
    )
    summary = {
        "config": resolved(config),
        "experiments": list(experiments),
        "input_hash": hashlib.sha256(config_blob).hexdigest(),
        "output_hash": outputs.hexdigest(),
        "recall": recall_summary,
        "rotation": {"recall_at": ev.rotation_recall_at, "per_angle": rot_at,
                     "max_drop": rotation_drop},
        "selection": {"rows": selection_rows, "detail": selection_detail,
                      "wrong_rate_at_kmax_same_setup": wrong_at_kmax},
        "timing": {"rows": timing_rows, **timing_detail},
        "suite_seconds": time.perf_counter() - suite_start,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2),
                                      encoding="ascii")
    log.info("suite done in %.1f s", summary["suite_seconds"])
    return summary
