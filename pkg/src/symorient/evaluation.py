"""Metrics and the evaluation driver for the two-stage pipeline."""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import octahedral as octa
from .conformal import candidate_orientations, prediction_set
from .exceptions import InvalidInputError
from .geometry import ChamferReference, apply_rotation
from .pipeline import PipelineConfig, canonicalize
from .so3 import axis_angular_error

UP = 1  # column of an orientation holding the up-axis


def up_axis_error_deg(predicted, true_rotation, sym=None):
    """Angle between predicted and true up-axes, minimised over symmetries.

    The true orientations of a shape with symmetry group ``sym`` are
    ``true_rotation @ G`` for every ``G`` in the group; a prediction is as
    good as its closest one.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truths = [np.asarray(true_rotation)] if sym is None else np.asarray(true_rotation) @ sym.matrices()
    return float(np.degrees(min(axis_angular_error(predicted[:, UP], t[:, UP]) for t in truths)))


@dataclass
class ShapeRecord:
    shape_id: str
    family: str
    true_rotation: list
    predicted: list
    angular_error_deg: float
    chamfer: float
    aps_size: int = 0
    min_aps_chamfer: float = float("nan")
    aps_covered: bool = False


def up_axis_accuracy(records, threshold_deg=10.0):
    """Fraction of records whose up-axis error is below ``threshold_deg``."""
    errors = _errors(records)
    return float(np.mean(errors < threshold_deg))


def _errors(records):
    if len(records) == 0:
        raise InvalidInputError("no records to evaluate")
    return np.array([r.angular_error_deg if isinstance(r, ShapeRecord) else float(r)
                     for r in records])


def mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InvalidInputError("no values")
    return float(values.mean()), float(values.std())


def full_orientation_eval(outputs, truths):
    """Mean and standard deviation of ``chamfer(output_i, truth_i)``."""
    if len(outputs) != len(truths) or len(outputs) == 0:
        raise InvalidInputError("need matched, nonempty lists of outputs and truths")
    return mean_std([ChamferReference(t)(o) for o, t in zip(outputs, truths)])


def aps_min_chamfer(cloud, truth, candidates):
    """Smallest chamfer to ``truth`` over the candidate orientations of ``cloud``.

    ``cloud`` is the (centred) input ``R S``; candidate ``C`` maps it to
    ``C^T R S``.
    """
    ref = ChamferReference(truth)
    centred = cloud - cloud.mean(axis=0)
    return min(ref(apply_rotation(centred, np.asarray(c).T)) for c in candidates)


def set_covers(pset, stage1, true_rotation, sym=None):
    """Whether a flip set holds the true flip of the stage-1-aligned cloud.

    The true flip is ``nearest_flip(stage1^T R)``; with a symmetry group any
    ``compose(true, G)`` is just as correct, since ``R G S = R S``.
    """
    true = octa.nearest_flip(np.asarray(stage1).T @ np.asarray(true_rotation))
    members = (0,) if sym is None else sym.members
    return any(octa.compose(true, g) in pset.flips for g in members)


def size_histogram(sizes):
    """Counts of set sizes 1..24 (index 0 holds size 1)."""
    sizes = np.asarray(sizes, dtype=int)
    if sizes.size and (sizes.min() < 1 or sizes.max() > octa.N_FLIPS):
        raise InvalidInputError("set sizes must lie in 1..24")
    return np.bincount(sizes - 1, minlength=octa.N_FLIPS)


def aps_eval(min_chamfers, sizes):
    """Aggregate min-over-set chamfers and set sizes.

    Returns
    -------
    dict with ``mean``, ``std``, ``median_size`` and ``histogram``.
    """
    if len(min_chamfers) == 0 or len(min_chamfers) != len(sizes):
        raise InvalidInputError("need matched, nonempty chamfers and sizes")
    mean, std = mean_std(min_chamfers)
    return {"mean": mean, "std": std, "median_size": float(np.median(sizes)),
            "histogram": size_histogram(sizes).tolist()}


def ecdf(values):
    """Empirical CDF as ``(value, fraction <= value)`` rows at the distinct values."""
    values = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if values.size == 0:
        raise InvalidInputError("no values")
    uniq, counts = np.unique(values, return_counts=True)
    return np.column_stack([uniq, np.cumsum(counts) / values.size])


def ecdf_at(table, x):
    idx = np.searchsorted(table[:, 0], x, side="right")
    return 0.0 if idx == 0 else float(table[idx - 1, 1])


RECORD_FIELDS = ("shape_id", "angular_error_deg", "chamfer", "aps_size", "min_aps_chamfer")


@dataclass
class EvalReport:
    records: list
    threshold_deg: float = 10.0
    label: str = "pipeline"

    def aggregates(self):
        errs = _errors(self.records)
        mean, std = mean_std([r.chamfer for r in self.records])
        out = {
            "label": self.label,
            "n": len(self.records),
            "threshold_deg": self.threshold_deg,
            "up_axis_accuracy": float(np.mean(errs < self.threshold_deg)),
            "chamfer_mean": mean,
            "chamfer_std": std,
        }
        if all(r.aps_size > 0 for r in self.records):
            aps = aps_eval([r.min_aps_chamfer for r in self.records],
                           [r.aps_size for r in self.records])
            out.update({"aps_chamfer_mean": aps["mean"], "aps_chamfer_std": aps["std"],
                        "aps_median_size": aps["median_size"],
                        "aps_coverage": float(np.mean([r.aps_covered for r in self.records])),
                        "aps_size_histogram": aps["histogram"]})
        return out

    def records_csv(self):
        lines = [",".join(RECORD_FIELDS)]
        for r in self.records:
            lines.append(f"{r.shape_id},{r.angular_error_deg:.17g},{r.chamfer:.17g},"
                         f"{r.aps_size},{r.min_aps_chamfer:.17g}")
        return "\n".join(lines) + "\n"

    def ecdf_csv(self):
        rows = ecdf([r.angular_error_deg for r in self.records])
        return "value,cum_fraction\n" + "".join(f"{v:.17g},{c:.17g}\n" for v, c in rows)

    def table_row(self, aps=False):
        """One line in the style ``label: mean +/- std`` of chamfer."""
        agg = self.aggregates()
        if aps:
            return f"{self.label} (APS min): {agg['aps_chamfer_mean']:.6f} +/- {agg['aps_chamfer_std']:.6f}"
        return f"{self.label}: {agg['chamfer_mean']:.6f} +/- {agg['chamfer_std']:.6f}"

    def to_json(self):
        doc = {"aggregates": self.aggregates(), "records": [asdict(r) for r in self.records]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def evaluate(orienter, flipper, shapes, cfg=PipelineConfig(), seed=0, calibration=None,
             threshold_deg=10.0, label="pipeline"):
    """Run the pipeline on rotated test shapes and score it.

    Parameters
    ----------
    orienter, flipper : ModelParams or callable
    shapes : list of dict
        Each with ``id``, ``family``, ``cloud`` (canonical, normalised),
        ``rotation`` and ``symmetry`` (a SymmetryGroup).
    cfg : PipelineConfig
    seed : int
        TTA draws for shape ``i`` come from ``default_rng([seed, i])``.
    calibration : ConformalCalibration, optional
        When given, prediction sets are built and scored too.

    Returns
    -------
    EvalReport
    """
    if len(shapes) == 0:
        raise InvalidInputError("empty test split")
    records = []
    for i, shape in enumerate(shapes):
        truth = shape["cloud"]
        rot = np.asarray(shape["rotation"])
        cloud = apply_rotation(truth, rot)
        rng = np.random.default_rng([seed, i])
        output, est = canonicalize(orienter, flipper, cloud, cfg, rng)
        ref = ChamferReference(truth)
        rec = ShapeRecord(
            shape_id=str(shape["id"]), family=shape.get("family", ""),
            true_rotation=rot.ravel().tolist(), predicted=est.composed.ravel().tolist(),
            angular_error_deg=up_axis_error_deg(est.composed, rot, shape.get("symmetry")),
            chamfer=ref(output))
        if calibration is not None:
            pset = prediction_set(est.flip_distribution, calibration)
            cands = [c for c, _ in candidate_orientations(est.stage1, pset)]
            rec.aps_size = len(pset)
            rec.min_aps_chamfer = aps_min_chamfer(cloud, truth, cands)
            rec.aps_covered = set_covers(pset, est.stage1, rot, shape.get("symmetry"))
        records.append(rec)
    return EvalReport(records, threshold_deg, label)
