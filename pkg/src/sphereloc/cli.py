"""Command line driving the synthetic data, training, mapping, and queries.

Every subcommand accepts --config (a TOML file overriding the defaults in
config.py) and logs the fully resolved configuration before doing any work,
so runs are reproducible from their logs alone.  A bad configuration key is
a hard error naming the key.  --seed overrides the seeds of the synthetic,
training, and evaluation sections at once.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .config import Config, load_config, resolved
from .dataset import init_dataset, open_dataset, write_place, write_poses
from .descriptor import feature_vector, mine_triplets, train_embedding
from .errors import SpherelocError
from .grid import build_grid
from .map_store import MapStore
from .pipeline import (LocalizationIndex, build_feature_sphere, build_map,
                       describe, make_taper_bank, vote_from_correlations)
from .sensor_io import (read_embedding, read_map, read_taper_bank,
                        write_embedding, write_map, write_spectrum_text,
                        write_taper_bank)
from .sht import forward_sht
from .spectra import fuse_spectra, standardize_support
from .synth import make_rig, make_world, render_place, sample_positions
from .taper import fused_correlation, make_tapers, windowed_fused_spectra
from .transforms import RigidTransform

log = logging.getLogger("sphereloc")


def _setup(args) -> Config:
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        config.synth.seed = args.seed
        config.train.seed = args.seed
        config.eval.seed = args.seed
    log.info("resolved config: %s", json.dumps(resolved(config)))
    return config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="TOML file overriding the default configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the synth/train/eval seeds")
    parser.add_argument("--verbose", action="store_true",
                        help="debug-level logging")


def cmd_synth(args) -> int:
    config = _setup(args)
    sy = config.synth
    profile = args.profile
    n_cameras, n_beams = (4, 128) if profile == "full" else (1, 64)
    rig = make_rig(n_cameras=n_cameras,
                   image_size=(sy.image_width, sy.image_height))
    world = make_world(seed=sy.seed, n_boxes=sy.n_boxes, extent=sy.extent,
                       clear_radius=sy.clear_radius)
    n_places = args.places if args.places is not None else sy.n_places
    positions = sample_positions(world, n_places, sy.min_spacing, seed=sy.seed + 1)
    rng = np.random.default_rng(sy.seed + 2)
    poses = [RigidTransform.yaw(rng.uniform(0, 2 * np.pi), p) for p in positions]
    init_dataset(args.out, rig)
    write_poses(args.out, poses)
    for i, pose in enumerate(poses):
        scan, views = render_place(world, rig, pose, n_beams=n_beams,
                                   n_azimuths=sy.n_azimuths, max_range=sy.max_range)
        write_place(args.out, i, scan, views)
        if (i + 1) % 50 == 0:
            log.info("rendered %d/%d places", i + 1, n_places)
    log.info("wrote %d places to %s", n_places, args.out)
    return 0


def cmd_project(args) -> int:
    config = _setup(args)
    if args.bandwidth:
        config.grid.bandwidth = args.bandwidth
    data = open_dataset(args.data)
    grid = build_grid(config.grid.bandwidth)
    scan, views = data.load_place(args.index)
    channels = build_feature_sphere(scan, views, data.rig, grid, config)
    np.savez(args.out, channels=channels, bandwidth=grid.bandwidth,
             colatitudes=grid.colatitudes, azimuths=grid.azimuths,
             weights=grid.weights)
    log.info("projected place %d onto a %dx%d grid -> %s",
             args.index, *grid.shape, args.out)
    if args.spectrum:
        spectra = [forward_sht(c, grid) for c in channels]
        sel = None
        if config.fusion.standardize:
            sel = [forward_sht(standardize_support(c), grid) for c in channels]
        fused = fuse_spectra(spectra, selection_spectra=sel).spectrum
        write_spectrum_text(args.spectrum, fused)
        log.info("wrote fused spectrum (l_max=%d) -> %s", fused.l_max, args.spectrum)
    return 0


def cmd_taper_gen(args) -> int:
    config = _setup(args)
    theta0 = args.theta0 if args.theta0 is not None else config.taper.theta0
    l_h = args.l_h if args.l_h is not None else config.taper.l_h
    n_tapers = args.n_tapers if args.n_tapers is not None else (config.taper.n_tapers or None)
    bank = make_tapers(theta0=theta0, l_h=l_h, n_tapers=n_tapers)
    write_taper_bank(args.out, bank)
    log.info("wrote %d tapers (theta0=%.4f, l_h=%d), concentrations %s",
             bank.n_tapers, bank.theta0, bank.l_h,
             np.array2string(bank.eigenvalues, precision=6))
    return 0


def cmd_mine(args) -> int:
    config = _setup(args)
    data = open_dataset(args.data)
    triplets = mine_triplets(
        data.positions(),
        min_spacing=config.mine.min_spacing,
        positive_radius=config.mine.positive_radius,
        negative_range=(config.mine.negative_min, config.mine.negative_max),
        seed=config.train.seed,
    )
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write("anchor,positive,negative\n")
        for a, p, n in triplets:
            fh.write(f"{a},{p},{n}\n")
    log.info("mined %d triplets from %d poses -> %s",
             len(triplets), len(data), args.out)
    return 0


def _read_triplets_csv(path: Path) -> np.ndarray:
    rows = []
    for ln, line in enumerate(Path(path).read_text(encoding="ascii").splitlines(), 1):
        body = line.strip()
        if not body or body.startswith("anchor"):
            continue
        parts = body.split(",")
        if len(parts) != 3:
            raise SpherelocError(f"triplets: line {ln} has {len(parts)} fields")
        rows.append([int(p) for p in parts])
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def _dataset_features(data, grid, config) -> np.ndarray:
    feats = []
    for i in range(len(data)):
        scan, views = data.load_place(i)
        channels = build_feature_sphere(scan, views, data.rig, grid, config)
        feats.append(feature_vector(channels, grid,
                                    l_feat=config.descriptor.l_feat,
                                    standardize=config.descriptor.standardize))
        if (i + 1) % 50 == 0:
            log.info("featurized %d/%d places", i + 1, len(data))
    return np.stack(feats)


def cmd_train(args) -> int:
    config = _setup(args)
    data = open_dataset(args.data)
    grid = build_grid(config.grid.bandwidth)
    feats = _dataset_features(data, grid, config)
    if args.triplets:
        triplets = _read_triplets_csv(args.triplets)
    else:
        triplets = mine_triplets(
            data.positions(),
            min_spacing=config.mine.min_spacing,
            positive_radius=config.mine.positive_radius,
            negative_range=(config.mine.negative_min, config.mine.negative_max),
            seed=config.train.seed,
        )
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
    write_embedding(args.out, model)
    log.info("trained on %d triplets for %d epochs (loss %.4f -> %.4f) -> %s",
             len(triplets), config.train.epochs, history[0], history[-1], args.out)
    return 0


def cmd_build_map(args) -> int:
    config = _setup(args)
    data = open_dataset(args.data)
    grid = build_grid(config.grid.bandwidth)
    model = read_embedding(args.model)
    places = []
    for i in range(len(data)):
        scan, views = data.load_place(i)
        channels = build_feature_sphere(scan, views, data.rig, grid, config)
        places.append((i, data.poses[i], channels))
        if (i + 1) % 50 == 0:
            log.info("mapped %d/%d places", i + 1, len(data))
    store = build_map(places, grid.bandwidth, model, config)
    write_map(args.out, store)
    log.info("wrote %d-entry map -> %s", len(store), args.out)
    return 0


def _load_index(args, config) -> tuple[MapStore, LocalizationIndex]:
    store = read_map(args.map)
    bank = read_taper_bank(args.tapers) if args.tapers else make_taper_bank(config)
    return store, LocalizationIndex(store, bank, config)


def cmd_query(args) -> int:
    config = _setup(args)
    data = open_dataset(args.data)
    model = read_embedding(args.model)
    store, index = _load_index(args, config)
    scan, views = data.load_place(args.index)
    channels = build_feature_sphere(scan, views, data.rig, index.grid, config)
    outcome = index.locate(channels, model, k=args.k)
    payload = {
        "query_id": args.index,
        "candidate_ids": [h.entry_id for h in outcome.hits],
        "scores": [float(s) for s in outcome.vote.scores],
        "selected": outcome.selected_id,
        "margin": outcome.vote.margin,
    }
    if args.json:
        print(json.dumps(payload))
    else:
        for h, s in zip(outcome.hits, outcome.vote.scores):
            pos = store.get(h.entry_id).pose.translation
            print(f"candidate {h.entry_id}: distance {h.distance:.4f} "
                  f"score {s:.3f} at ({pos[0]:.2f}, {pos[1]:.2f})")
        print(f"selected {outcome.selected_id} (margin {outcome.vote.margin:.3f})")
    return 0


def cmd_vote(args) -> int:
    config = _setup(args)
    data = open_dataset(args.data)
    store, index = _load_index(args, config)
    scan, views = data.load_place(args.index)
    channels = build_feature_sphere(scan, views, data.rig, index.grid, config)
    candidate_ids = [int(c) for c in args.candidates.split(",") if c]
    if not candidate_ids:
        raise SpherelocError("no candidate ids given")
    query_ws = windowed_fused_spectra(channels, index.grid, index.bank,
                                      config.vote.l_eval,
                                      standardize=config.fusion.standardize)
    correlations = [fused_correlation(query_ws, index.candidate_spectra(c))
                    for c in candidate_ids]
    result = vote_from_correlations(correlations, config)
    payload = {
        "query_id": args.index,
        "candidate_ids": candidate_ids,
        "scores": [float(s) for s in result.scores],
        "selected": candidate_ids[result.selected],
        "margin": result.margin,
    }
    print(json.dumps(payload))
    return 0


def cmd_eval(args) -> int:
    config = _setup(args)
    if args.angles:
        config.eval.rotation_angles_deg = tuple(
            float(a) for a in args.angles.split(",") if a
        )
    chosen = (evaluation.EXPERIMENTS if args.experiment == "all"
              else (args.experiment,))
    summary = evaluation.run_suite(config, args.out, experiments=chosen)
    log.info("summary written to %s", Path(args.out) / "summary.json")
    for setup, curve in summary["recall"].items():
        log.info("recall %s: %s", setup,
                 ", ".join(f"@{n} {r:.3f}" for n, r in curve.items()))
    if summary["rotation"]["per_angle"]:
        log.info("rotation max recall drop: %.4f",
                 summary["rotation"]["max_drop"])
    if summary["selection"]["wrong_rate_at_kmax_same_setup"] is not None:
        log.info("wrong-selection rate at k max: %.3f",
                 summary["selection"]["wrong_rate_at_kmax_same_setup"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphereloc",
        description="Multi-modal place recognition on the sphere",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic dataset directory")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--places", type=int, default=None)
    p.add_argument("--profile", choices=("full", "lite"), default="full")
    _add_common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("project", help="project one place onto the sphere grid")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="output .npz")
    p.add_argument("--bandwidth", type=int, default=None)
    p.add_argument("--spectrum", type=Path, default=None,
                   help="also dump the fused spectrum as text")
    _add_common(p)
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("taper-gen", help="solve and store a taper bank")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--theta0", type=float, default=None)
    p.add_argument("--l-h", dest="l_h", type=int, default=None)
    p.add_argument("--n-tapers", dest="n_tapers", type=int, default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_taper_gen)

    p = sub.add_parser("mine", help="mine training triplets from a trajectory")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output .csv")
    _add_common(p)
    p.set_defaults(fn=cmd_mine)

    p = sub.add_parser("train", help="train the descriptor embedding")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output model file")
    p.add_argument("--triplets", type=Path, default=None,
                   help="triplet csv (mined on the fly when omitted)")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("build-map", help="build a place map from a dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output map file")
    _add_common(p)
    p.set_defaults(fn=cmd_build_map)

    p = sub.add_parser("query", help="localize one place against a map")
    p.add_argument("--map", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--tapers", type=Path, default=None)
    p.add_argument("--json", action="store_true")
    _add_common(p)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("vote", help="vote among explicit candidate entries")
    p.add_argument("--map", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--candidates", type=str, required=True,
                   help="comma-separated entry ids")
    p.add_argument("--tapers", type=Path, default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_vote)

    p = sub.add_parser("eval", help="run the experiment suite")
    p.add_argument("experiment", nargs="?", default="all",
                   choices=("all",) + evaluation.EXPERIMENTS,
                   help="restrict the run to one experiment")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--angles", type=str, default=None,
                   help="comma-separated yaw degrees for the rotation runs")
    _add_common(p)
    p.set_defaults(fn=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SpherelocError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
