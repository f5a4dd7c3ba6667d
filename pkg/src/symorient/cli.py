"""Command-line interface: ``symorient <command> [options]``.

Commands: ``gen``, ``train``, ``calibrate``, ``orient``, ``eval``, ``sweep``,
``flips``. Run ``symorient <command> --help`` for the options of each.

Exit codes: 0 success, 1 domain error, 2 input or parse error,
3 configuration error.
"""

import argparse
import copy
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import octahedral as octa
from .conformal import (ConformalCalibration, calibrate, calibration_score,
                        candidate_orientations, prediction_set)
from .evaluation import evaluate
from .exceptions import ConfigError, InvalidInputError, ParseError, StructuralError, SymorientError
from .geometry import (TriangleMesh, apply_rotation, dump_obj, dump_xyz, load_xyz, normalize,
                       read_cloud, sample_surface)
from .model import (ModelArch, TrainConfig, checkpoint_from_dict, checkpoint_to_dict,
                    init_params, train)
from .pipeline import PipelineConfig, canonicalize, rotation_sweep, sweep_csv
from .shapes import FAMILIES, FAMILY_NAMES, SyntheticShapeSpec, make_shape
from .so3 import random_rotation, rotation_from_list, rotation_to_list
from .symmetry import TOL_SYMMETRIZED, SymmetryGroup, detect_symmetries

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3

DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {
        "families": list(FAMILY_NAMES),
        "train_per_family": 40,
        "calibration_per_family": 15,
        "test_per_family": 36,
        "points": 512,
        "train_points": 1024,
        "verify_symmetries": True,
    },
    "orienter": {
        "hidden": [64, 128], "head": [128], "slope": 0.01, "frame": True,
        "steps": 5000, "batch_size": 16, "learning_rate": 1e-3, "optimizer": "adam",
        "schedule": "cosine", "points": 512, "precision": "float32",
    },
    "flipper": {
        "hidden": [64, 128], "head": [128], "slope": 0.01,
        "steps": 10000, "batch_size": 16, "learning_rate": 1e-3, "optimizer": "adam",
        "schedule": "cosine", "points": 512, "precision": "float32",
        "jitter_deg": [0.0, 10.0],
    },
    "pipeline": {"tta": True, "orient_k": 8, "flip_k": 8},
    "conformal": {"alpha": 0.3},
    "eval": {"threshold_deg": 10.0},
    "sweep": {"family": "bench", "axis": [1.0, 0.0, 0.0], "step_deg": 1.0, "points": 2048},
    "orient": {"points": 2048},
}

SPLIT_CODES = {"train": 0, "calibration": 1, "test": 2}
ARCH_KEYS = ("hidden", "head", "slope", "frame")


# ---------------------------------------------------------------- config

def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def load_config(path=None):
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge(cfg, doc)
    unknown = set(cfg["dataset"]["families"]) - set(FAMILIES)
    if unknown:
        raise ConfigError(f"dataset.families: unknown family {sorted(unknown)[0]!r}")
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _model_configs(section, role):
    kind = "orienter" if role == "orienter" else "flipper"
    try:
        arch = ModelArch(kind, tuple(section["hidden"]), tuple(section["head"]),
                         float(section["slope"]), bool(section.get("frame", False)))
        tc = TrainConfig(**{k: v for k, v in section.items() if k not in ARCH_KEYS})
    except (TypeError, InvalidInputError) as exc:
        raise ConfigError(f"{role}: {exc}") from exc
    return arch, tc


# ---------------------------------------------------------------- files

def write_atomic(path, text):
    """Write ``text`` to a temporary file next to ``path`` and rename it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc):
    write_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidInputError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what} {path} is not valid JSON: {exc.msg}", exc.lineno) from exc


def load_checkpoint(path):
    params, _, _ = checkpoint_from_dict(read_json(path, "checkpoint"))
    return params


def load_dataset(data_dir, split):
    """Shapes of one split as dicts with id, family, cloud, rotation, symmetry."""
    data_dir = Path(data_dir)
    manifest = read_json(data_dir / "manifest.json", "manifest")
    if manifest.get("fingerprint") != octa.fingerprint():
        raise ConfigError("dataset manifest was written under a different flip ordering")
    shapes = []
    for entry in manifest["shapes"]:
        if entry["split"] != split:
            continue
        text = (data_dir / entry["file"]).read_text()
        shapes.append({
            "id": entry["id"], "family": entry["family"],
            "cloud": load_xyz(text),
            "rotation": rotation_from_list(entry["rotation"]),
            "symmetry": SymmetryGroup(tuple(entry["symmetry"])),
        })
    return shapes, manifest


# ---------------------------------------------------------------- commands

def cmd_gen(cfg, out_dir):
    """Sample the synthetic splits and write clouds plus a manifest."""
    ds = cfg["dataset"]
    out_dir = Path(out_dir)
    seed = int(cfg["seed"])
    counts = {"train": ds["train_per_family"], "calibration": ds["calibration_per_family"],
              "test": ds["test_per_family"]}
    entries = []
    for split, per_family in counts.items():
        n_points = ds["train_points"] if split == "train" else ds["points"]
        for f_idx, family in enumerate(ds["families"]):
            for j in range(int(per_family)):
                rng = np.random.default_rng([seed, SPLIT_CODES[split], f_idx, j])
                spec = SyntheticShapeSpec.random(family, rng)
                cloud = make_shape(spec, int(n_points), rng)
                sym = spec.declared_symmetries
                if ds["verify_symmetries"]:
                    check = make_shape(spec, int(ds["points"]), rng, symmetrize=True)
                    found = detect_symmetries(check, TOL_SYMMETRIZED)
                    if found != sym:
                        raise SymorientError(
                            f"{family}: oracle found {found.members}, declared {sym.members}")
                rot = random_rotation(rng) if split != "train" else np.eye(3)
                shape_id = f"{split}-{family}-{j:03d}"
                rel = f"clouds/{shape_id}.xyz"
                write_atomic(out_dir / rel, dump_xyz(cloud))
                entries.append({"id": shape_id, "split": split, "family": family,
                                "params": spec.params, "symmetry": list(sym.members),
                                "rotation": rotation_to_list(rot), "file": rel,
                                "points": int(n_points)})
    manifest = {"fingerprint": octa.fingerprint(), "config_hash": config_hash(cfg),
                "seed": seed, "verified": bool(ds["verify_symmetries"]), "shapes": entries}
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def cmd_train(cfg, role, data_dir, out_path, resume=None, until=None):
    """Train one model on the train split; writes the checkpoint and a loss CSV."""
    if role not in ("orienter", "flipper"):
        raise ConfigError("role must be 'orienter' or 'flipper'")
    arch, tc = _model_configs(cfg[role], role)
    shapes, _ = load_dataset(data_dir, "train")
    if not shapes:
        raise InvalidInputError("the train split is empty")
    sizes = {len(s["cloud"]) for s in shapes}
    if len(sizes) != 1:
        raise InvalidInputError("train clouds must all have the same number of points")
    clouds = np.stack([s["cloud"] for s in shapes])
    params, state = init_params(arch, tc.seed), None
    if resume is not None:
        params, state, saved = checkpoint_from_dict(read_json(resume, "checkpoint"))
        if params.arch != arch or (saved is not None and
                                   vars(saved) != vars(tc)):
            raise ConfigError("resume checkpoint does not match the configuration")
    result = train(params, tc, clouds, state=state, until=until)
    out_path = Path(out_path)
    write_json(out_path, checkpoint_to_dict(result.params, result.state, tc, config_hash(cfg)))
    start = result.state.step - len(result.curve)
    curve = "step,loss\n" + "".join(f"{start + i},{v:.17g}\n" for i, v in enumerate(result.curve))
    write_atomic(out_path.with_suffix(".curve.csv"), curve)
    return result


def _pipeline_cfg(cfg):
    p = cfg["pipeline"]
    return PipelineConfig(bool(p["tta"]), int(p["orient_k"]), int(p["flip_k"]))


def models_digest(orienter, flipper):
    return hashlib.sha256((orienter.digest() + flipper.digest()).encode()).hexdigest()[:16]


def calibration_scores(orienter, flipper, shapes, pcfg, seed):
    """Scores of the single-pass flip distribution on each stage-1-aligned cloud.

    The label of shape ``i`` is the flip that takes its stage-1 estimate
    ``P`` to the true rotation: ``nearest_flip(P^T R)``.
    """
    scores = []
    for i, shape in enumerate(shapes):
        cloud = apply_rotation(shape["cloud"], shape["rotation"])
        _, est = canonicalize(orienter, flipper, cloud, pcfg, np.random.default_rng([seed, i]))
        label = octa.nearest_flip(est.stage1.T @ shape["rotation"])
        scores.append(calibration_score(est.flip_distribution, label))
    return scores


def cmd_calibrate(cfg, orienter_path, flipper_path, data_dir, out_path):
    orienter, flipper = load_checkpoint(orienter_path), load_checkpoint(flipper_path)
    shapes, _ = load_dataset(data_dir, "calibration")
    scores = calibration_scores(orienter, flipper, shapes, _pipeline_cfg(cfg), int(cfg["seed"]))
    cal = calibrate(scores, float(cfg["conformal"]["alpha"]),
                    model_digest=models_digest(orienter, flipper))
    doc = cal.to_dict()
    doc["config_hash"] = config_hash(cfg)
    write_json(out_path, doc)
    return cal


def _load_calibration(path, orienter, flipper):
    doc = read_json(path, "calibration")
    doc.pop("config_hash", None)
    cal = ConformalCalibration.from_dict(doc)
    if cal.model_digest != models_digest(orienter, flipper):
        raise ConfigError("calibration was produced for different model checkpoints")
    return cal


def _read_input(path, n_points, seed):
    """Normalised cloud from a mesh or cloud file, plus the mesh if any."""
    try:
        obj = read_cloud(path)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    if isinstance(obj, TriangleMesh):
        cloud = sample_surface(obj, int(n_points), np.random.default_rng(seed))
        return cloud, obj
    return obj, None


def cmd_orient(cfg, input_path, orienter_path, flipper_path, out_dir, calibration=None,
               aps=False):
    orienter, flipper = load_checkpoint(orienter_path), load_checkpoint(flipper_path)
    raw, mesh = _read_input(input_path, cfg["orient"]["points"], int(cfg["seed"]))
    centroid = raw.mean(axis=0)
    scale = float(np.max(np.linalg.norm(raw - centroid, axis=1)))
    cloud = normalize(raw)
    output, est = canonicalize(orienter, flipper, cloud, _pipeline_cfg(cfg),
                               np.random.default_rng(int(cfg["seed"])))
    out_dir = Path(out_dir)
    result = {"input": str(input_path), "estimate": est.to_dict(),
              "fingerprint": octa.fingerprint(), "config_hash": config_hash(cfg)}

    def emit(name, rotation):
        write_atomic(out_dir / f"{name}.xyz", dump_xyz(apply_rotation(cloud, rotation.T)))
        files = [f"{name}.xyz"]
        if mesh is not None:
            verts = apply_rotation((mesh.vertices - centroid) / scale, rotation.T)
            write_atomic(out_dir / f"{name}.obj", dump_obj(TriangleMesh(verts, mesh.triangles)))
            files.append(f"{name}.obj")
        return files

    result["files"] = emit("oriented", est.composed)
    if aps:
        if calibration is None:
            raise ConfigError("--aps needs --calibration")
        cal = _load_calibration(calibration, orienter, flipper)
        pset = prediction_set(est.flip_distribution, cal)
        cands = []
        for rank, (rot, prob) in enumerate(candidate_orientations(est.stage1, pset)):
            cands.append({"rank": rank, "flip": pset.flips[rank], "probability": prob,
                          "rotation": rotation_to_list(rot),
                          "files": emit(f"candidate_{rank:02d}", rot)})
        result["candidates"] = cands
        result["tau"] = cal.tau
    write_json(out_dir / "result.json", result)
    return result


def cmd_eval(cfg, orienter_path, flipper_path, data_dir, out_dir, calibration=None):
    orienter, flipper = load_checkpoint(orienter_path), load_checkpoint(flipper_path)
    shapes, _ = load_dataset(data_dir, "test")
    if not shapes:
        raise InvalidInputError("the test split is empty")
    cal = None if calibration is None else _load_calibration(calibration, orienter, flipper)
    seed, thr = int(cfg["seed"]), float(cfg["eval"]["threshold_deg"])
    pcfg = _pipeline_cfg(cfg)
    report = evaluate(orienter, flipper, shapes, pcfg, seed, cal, thr, label="pipeline (TTA)")
    plain = evaluate(orienter, flipper, shapes, PipelineConfig(tta=False), seed, None, thr,
                     label="pipeline (no TTA)")
    out_dir = Path(out_dir)
    write_atomic(out_dir / "records.csv", report.records_csv())
    write_atomic(out_dir / "ecdf.csv", report.ecdf_csv())
    write_atomic(out_dir / "records_no_tta.csv", plain.records_csv())
    rows = [plain.table_row(), report.table_row()]
    if cal is not None:
        rows.append(report.table_row(aps=True))
    write_atomic(out_dir / "table.txt", "\n".join(rows) + "\n")
    summary = {"tta": report.aggregates(), "no_tta": plain.aggregates(),
               "config_hash": config_hash(cfg), "fingerprint": octa.fingerprint()}
    write_json(out_dir / "aggregates.json", summary)
    return report, plain


def sweep_shape(cfg, shape):
    """Canonical cloud for the sweep: a family name or a cloud/mesh file."""
    n = int(cfg["sweep"]["points"])
    seed = int(cfg["seed"])
    if shape in FAMILIES:
        return make_shape(SyntheticShapeSpec(shape), n, np.random.default_rng(seed))
    cloud, _ = _read_input(shape, n, seed)
    return normalize(cloud)


def cmd_sweep(cfg, orienter_path, shape, out_path, axis=None, step_deg=None):
    orienter = load_checkpoint(orienter_path)
    if orienter.arch.kind != "orienter":
        raise ConfigError("sweep needs an orienter checkpoint")
    sw = cfg["sweep"]
    table = rotation_sweep(orienter, sweep_shape(cfg, shape),
                           sw["axis"] if axis is None else axis,
                           sw["step_deg"] if step_deg is None else step_deg)
    write_atomic(out_path, sweep_csv(table))
    return table


def cmd_flips(out_path):
    write_atomic(out_path, octa.ordering_text())


# ---------------------------------------------------------------- argparse

def build_parser():
    parser = argparse.ArgumentParser(prog="symorient", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", help="JSON config file (unknown keys are rejected)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help=out_help)
        return p

    p = common(sub.add_parser("gen", help="generate the synthetic dataset"), "output directory")
    p.add_argument("--points", type=int, help="points per calibration/test cloud")

    p = common(sub.add_parser("train", help="train the orienter or the flipper"),
               "checkpoint path (.json)")
    p.add_argument("--role", required=True, choices=["orienter", "flipper"])
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--steps", type=int, help="override the number of training steps")
    p.add_argument("--points", type=int, help="points per training cloud")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--until", type=int, help="stop after this many steps (resumable)")

    p = common(sub.add_parser("calibrate", help="conformal calibration of flip sets"),
               "calibration path (.json)")
    _models(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--alpha", type=float, help="miscoverage level (default 0.3)")
    p.add_argument("--tta-k", type=int, help="TTA draws per stage (0 disables TTA)")

    p = common(sub.add_parser("orient", help="orient a mesh or point cloud"), "output directory")
    p.add_argument("input", help=".obj mesh, .json cloud, or xyz text cloud")
    _models(p)
    p.add_argument("--calibration", help="calibration file (needed for --aps)")
    p.add_argument("--aps", action="store_true", help="emit the conformal candidate set")
    p.add_argument("--tta-k", type=int, help="TTA draws per stage (0 disables TTA)")
    p.add_argument("--points", type=int, help="points sampled from a mesh")

    p = common(sub.add_parser("eval", help="evaluate on the test split"), "report directory")
    _models(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--calibration", help="calibration file; adds prediction-set metrics")
    p.add_argument("--tta-k", type=int, help="TTA draws per stage (0 disables TTA)")
    p.add_argument("--threshold-deg", type=float, help="up-axis accuracy threshold")

    p = common(sub.add_parser("sweep", help="rotation sweep of the orienter"), "CSV path")
    p.add_argument("--orienter", required=True, help="orienter checkpoint")
    p.add_argument("--shape", default=None, help="family name or cloud/mesh file")
    p.add_argument("--axis", type=float, nargs=3, help="rotation axis")
    p.add_argument("--step", type=float, help="angle step in degrees (must divide 360)")
    p.add_argument("--points", type=int, help="points in the swept cloud")

    p = sub.add_parser("flips", help="write the canonical flip ordering")
    p.add_argument("--out", required=True, help="output text file")
    return parser


def _models(p):
    p.add_argument("--orienter", required=True, help="orienter checkpoint")
    p.add_argument("--flipper", required=True, help="flipper checkpoint")


def _apply_flags(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    points = getattr(args, "points", None)
    if points is not None:
        section = {"gen": ("dataset", "points"), "train": (args.role if args.command == "train"
                                                           else None, "points"),
                   "orient": ("orient", "points"), "sweep": ("sweep", "points")}[args.command]
        cfg[section[0]][section[1]] = points
    if getattr(args, "steps", None) is not None:
        cfg[args.role]["steps"] = args.steps
    if getattr(args, "alpha", None) is not None:
        cfg["conformal"]["alpha"] = args.alpha
    if getattr(args, "tta_k", None) is not None:
        if args.tta_k < 0:
            raise ConfigError("--tta-k must be >= 0")
        cfg["pipeline"]["tta"] = args.tta_k > 0
        if args.tta_k > 0:
            cfg["pipeline"]["orient_k"] = cfg["pipeline"]["flip_k"] = args.tta_k
    if getattr(args, "threshold_deg", None) is not None:
        cfg["eval"]["threshold_deg"] = args.threshold_deg
    return cfg


def run(args):
    if args.command == "flips":
        cmd_flips(args.out)
        return None
    cfg = _apply_flags(load_config(args.config), args)
    if args.command == "gen":
        return cmd_gen(cfg, args.out)
    if args.command == "train":
        if not (Path(args.data) / "manifest.json").is_file():
            raise InvalidInputError(f"no dataset manifest in {args.data}")
        return cmd_train(cfg, args.role, args.data, args.out, args.resume, args.until)
    if args.command == "calibrate":
        return cmd_calibrate(cfg, args.orienter, args.flipper, args.data, args.out)
    if args.command == "orient":
        return cmd_orient(cfg, args.input, args.orienter, args.flipper, args.out,
                          args.calibration, args.aps)
    if args.command == "eval":
        return cmd_eval(cfg, args.orienter, args.flipper, args.data, args.out, args.calibration)
    if args.command == "sweep":
        shape = args.shape or cfg["sweep"]["family"]
        return cmd_sweep(cfg, args.orienter, shape, args.out, args.axis, args.step)
    raise ConfigError(f"unknown command {args.command}")


def exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (ParseError, StructuralError, InvalidInputError)):
        return EXIT_INPUT
    return EXIT_DOMAIN


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except SymorientError as exc:
        print(f"symorient: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
