"""A small permutation-invariant point-cloud network in plain numpy.

Each point goes through a shared MLP, the per-point features are reduced by
max- and mean-pooling, and a second MLP maps the pooled vector to either 9
numbers (the orienter's raw 3x3 output) or 24 flip logits (the flipper).
Gradients are computed by hand in reverse mode.

Before anything else the points of each cloud are put in lexicographic order
of their coordinates. Every later reduction then runs in an order that
depends only on the point *values*, so permuting the input gives bitwise
identical outputs.
"""

import hashlib
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import octahedral as octa
from .exceptions import ConfigError, InvalidInputError, NumericError, TrainingError
from .frames import moment_frames
from .objectives import flip_cross_entropy_batch, quotient_l2_batch
from .so3 import random_rotations

KINDS = {"orienter": 9, "flipper": octa.N_FLIPS}
MIN_POINTS = 8
PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class ModelArch:
    kind: str = "orienter"
    hidden: tuple = (64, 128)
    head: tuple = (128,)
    slope: float = 0.01
    frame: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"kind must be one of {sorted(KINDS)}")
        if self.frame and self.kind != "orienter":
            raise InvalidInputError("only the orienter can work in the principal frame")
        if not 0.0 <= self.slope < 1.0:
            raise InvalidInputError("slope must lie in [0, 1)")
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        object.__setattr__(self, "head", tuple(int(w) for w in self.head))
        if not self.hidden or min(self.hidden + self.head + (1,)) < 1:
            raise InvalidInputError("layer widths must be >= 1")

    @property
    def out_dim(self):
        return KINDS[self.kind]

    @property
    def pooled_dim(self):
        return 2 * self.hidden[-1]

    def layer_dims(self):
        """``(fan_in, fan_out)`` for the trunk layers, then the head layers."""
        trunk = list(zip((3,) + self.hidden[:-1], self.hidden))
        head_in = (self.pooled_dim,) + self.head
        head = list(zip(head_in, self.head + (self.out_dim,)))
        return trunk, head

    def to_dict(self):
        d = asdict(self)
        d["hidden"], d["head"] = list(self.hidden), list(self.head)
        return d


class ModelParams:
    """Flat parameter vector plus the layout that slices it into layers."""

    def __init__(self, arch, vector):
        self.arch = arch
        trunk, head = arch.layer_dims()
        self.layout = []
        offset = 0
        for part, dims in (("trunk", trunk), ("head", head)):
            for i, (fan_in, fan_out) in enumerate(dims):
                for name, shape in ((f"{part}.{i}.W", (fan_in, fan_out)),
                                    (f"{part}.{i}.b", (fan_out,))):
                    size = math.prod(shape)
                    self.layout.append((name, shape, offset, size))
                    offset += size
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (offset,):
            raise InvalidInputError(
                f"parameter vector has {vector.size} entries, layout needs {offset}")
        if not np.all(np.isfinite(vector)):
            raise InvalidInputError("parameters must be finite")
        self.vector = vector
        self.n_trunk = len(trunk)

    @property
    def size(self):
        return self.vector.size

    def views(self, vector=None):
        """List of ``(W, b)`` pairs as views into ``vector`` (default: own)."""
        vector = self.vector if vector is None else vector
        arrays = [vector[o:o + s].reshape(shape) for _, shape, o, s in self.layout]
        return list(zip(arrays[::2], arrays[1::2]))

    def copy(self):
        return ModelParams(self.arch, self.vector.copy())

    def digest(self):
        """Hash of architecture and weights, used to tie calibrations to a model."""
        h = hashlib.sha256(repr(self.arch.to_dict()).encode())
        h.update(self.vector.tobytes())
        return h.hexdigest()[:16]

    def forward(self, cloud):
        """Model output for a single ``(N, 3)`` cloud."""
        cloud = np.asarray(cloud, dtype=np.float64)
        if cloud.ndim != 2 or cloud.shape[1] != 3:
            raise InvalidInputError(f"expected an (N, 3) cloud, got {cloud.shape}")
        return forward(self, cloud[None])[0]

    __call__ = forward


def init_params(arch, seed):
    """Fan-in scaled uniform weights (std ``sqrt(2 / fan_in)``), zero biases."""
    rng = np.random.default_rng(seed)
    proto = ModelParams(arch, np.zeros(_n_params(arch)))
    vector = np.zeros(proto.size)
    for name, shape, offset, size in proto.layout:
        if name.endswith(".W"):
            bound = math.sqrt(6.0 / shape[0])
            vector[offset:offset + size] = rng.uniform(-bound, bound, size)
    return ModelParams(arch, vector)


def _n_params(arch):
    trunk, head = arch.layer_dims()
    return sum(i * o + o for i, o in trunk + head)


def canonical_order(clouds):
    """Sort each cloud's points lexicographically by (x, y, z)."""
    order = np.stack([np.lexsort(c.T[::-1]) for c in clouds])
    return np.take_along_axis(clouds, order[:, :, None], axis=1)


def _check(a, layer):
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite activation", layer=layer)


def _leaky_grad(z, slope):
    d = (z > 0).astype(z.dtype)
    d *= 1 - slope
    d += slope
    return d


def forward(params, clouds, return_cache=False, dtype=np.float64):
    """Batched forward pass on ``(B, N, 3)`` clouds.

    ``dtype`` is the precision of the layer arithmetic; the output is always
    float64.
    """
    clouds = np.asarray(clouds, dtype=np.float64)
    if clouds.ndim != 3 or clouds.shape[2] != 3:
        raise InvalidInputError(f"expected (B, N, 3) clouds, got {clouds.shape}")
    b, n, _ = clouds.shape
    if n < MIN_POINTS:
        raise InvalidInputError(f"clouds need at least {MIN_POINTS} points")
    slope = dtype(params.arch.slope)
    layers = [(w.astype(dtype), bias.astype(dtype)) for w, bias in params.views()]
    trunk, head = layers[:params.n_trunk], layers[params.n_trunk:]

    clouds = canonical_order(clouds)
    frame = None
    if params.arch.frame:
        frame = moment_frames(clouds)
        clouds = clouds @ frame
    h = clouds.reshape(b * n, 3).astype(dtype)
    inputs, pre = [], []
    for i, (w, bias) in enumerate(trunk):
        inputs.append(h)
        z = h @ w + bias
        _check(z, i)
        pre.append(z)
        h = np.maximum(z, slope * z)
    feats = h.reshape(b, n, -1)
    argmax = feats.argmax(axis=1)
    pooled = np.concatenate([feats.max(axis=1), feats.sum(axis=1) / dtype(n)], axis=1)

    g = pooled
    for j, (w, bias) in enumerate(head):
        inputs.append(g)
        z = g @ w + bias
        _check(z, len(trunk) + j)
        pre.append(z)
        g = np.maximum(z, slope * z) if j < len(head) - 1 else z
    out = g.astype(np.float64)
    if frame is not None:
        out = (frame @ out.reshape(b, 3, 3)).reshape(b, 9)
    if not return_cache:
        return out
    return out, {"inputs": inputs, "pre": pre, "argmax": argmax, "shape": (b, n),
                 "frame": frame, "layers": layers, "dtype": dtype}


def backward(params, cache, grad_out):
    """Gradient of ``sum(grad_out * outputs)`` with respect to the parameters."""
    dtype = cache["dtype"]
    slope = dtype(params.arch.slope)
    grad = np.zeros(params.size)
    gviews = params.views(grad)
    layers = cache["layers"]
    nt = params.n_trunk
    inputs, pre = cache["inputs"], cache["pre"]
    b, n = cache["shape"]

    g = np.asarray(grad_out, dtype=np.float64)
    if cache["frame"] is not None:
        g = (cache["frame"].transpose(0, 2, 1) @ g.reshape(b, 3, 3)).reshape(b, 9)
    g = g.astype(dtype)
    for j in range(len(layers) - 1, nt - 1, -1):
        if j < len(layers) - 1:
            g = g * _leaky_grad(pre[j], slope)
        gviews[j][0][...] = inputs[j].T @ g
        gviews[j][1][...] = g.sum(axis=0)
        g = g @ layers[j][0].T

    c = params.arch.hidden[-1]
    g_max, g_mean = g[:, :c], g[:, c:]
    g_feats = np.repeat((g_mean / dtype(n))[:, None, :], n, axis=1)
    bi = np.arange(b)[:, None]
    ci = np.arange(c)[None, :]
    g_feats[bi, cache["argmax"], ci] += g_max
    g = g_feats.reshape(b * n, c)

    for j in range(nt - 1, -1, -1):
        g = g * _leaky_grad(pre[j], slope)
        gviews[j][0][...] = inputs[j].T @ g
        gviews[j][1][...] = g.sum(axis=0)
        if j:
            g = g @ layers[j][0].T
    return grad


def jitter_rotations(rng, n, max_deg, min_deg=0.0):
    """Rotations about Haar-random axes by angles uniform in ``[min_deg, max_deg]``."""
    axes = rng.standard_normal((n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = np.deg2rad(rng.uniform(min_deg, max_deg, n))
    k = np.zeros((n, 3, 3))
    k[:, 0, 1], k[:, 0, 2] = -axes[:, 2], axes[:, 1]
    k[:, 1, 0], k[:, 1, 2] = axes[:, 2], -axes[:, 0]
    k[:, 2, 0], k[:, 2, 1] = -axes[:, 1], axes[:, 0]
    s, c = np.sin(angles)[:, None, None], np.cos(angles)[:, None, None]
    return np.eye(3) + s * k + (1 - c) * (k @ k)


def rotate_batch(clouds, rotations):
    return np.einsum("bnj,bij->bni", clouds, rotations)


@dataclass
class Batch:
    """Augmented model inputs plus what each loss needs as targets."""

    inputs: np.ndarray
    rotations: np.ndarray = None
    orientations: np.ndarray = None
    labels: np.ndarray = None


def make_batch(clouds, kind, rng, jitter_deg=(0.0, 10.0), orientations=None):
    """Apply the training-time augmentation for ``kind`` to canonical clouds.

    Orienter: each cloud is rotated by a Haar-random ``R``; the target orbit
    is ``{R Q omega}``. Flipper: each cloud is flipped by a uniform ``Q`` and
    then jittered about a random axis; the label is the index of ``Q``.
    """
    clouds = np.asarray(clouds, dtype=np.float64)
    b = len(clouds)
    if kind == "orienter":
        r = random_rotations(rng, b)
        return Batch(rotate_batch(clouds, r), rotations=r, orientations=orientations)
    labels = rng.integers(0, octa.N_FLIPS, size=b)
    jitter = jitter_rotations(rng, b, jitter_deg[1], jitter_deg[0])
    return Batch(rotate_batch(clouds, jitter @ octa.ELEMENTS[labels]), labels=labels)


def batch_loss(params, batch, with_grad=True, dtype=np.float64):
    """Mean loss over the batch and (optionally) its parameter gradient."""
    out, cache = forward(params, batch.inputs, return_cache=True, dtype=dtype)
    b = len(out)
    if params.arch.kind == "orienter":
        values, grads, _ = quotient_l2_batch(out.reshape(b, 3, 3), batch.rotations,
                                             batch.orientations)
        grads = grads.reshape(b, 9)
    else:
        values, grads = flip_cross_entropy_batch(out, batch.labels)
    loss = float(values.mean())
    if not with_grad:
        return loss, values
    return loss, backward(params, cache, grads / b)


def loss_and_grad(params, clouds, rng, jitter_deg=(0.0, 10.0), orientations=None,
                  dtype=np.float64):
    """Build an augmented batch from ``clouds`` and return ``(loss, grad)``."""
    batch = make_batch(clouds, params.arch.kind, rng, jitter_deg, orientations)
    return batch_loss(params, batch, dtype=dtype)


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    schedule: str = "cosine"
    seed: int = 0
    points: int = 512
    jitter_deg: tuple = (0.0, 10.0)
    precision: str = "float32"

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1 or self.points < MIN_POINTS:
            raise InvalidInputError("steps, batch_size and points must be positive")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidInputError("optimizer must be 'adam' or 'sgd'")
        if self.schedule not in ("constant", "cosine"):
            raise InvalidInputError("schedule must be 'constant' or 'cosine'")
        if self.precision not in PRECISIONS:
            raise InvalidInputError(f"precision must be one of {sorted(PRECISIONS)}")
        self.jitter_deg = tuple(float(x) for x in self.jitter_deg)
        lo, hi = self.jitter_deg
        if not 0.0 <= lo <= hi:
            raise InvalidInputError("jitter_deg must satisfy 0 <= low <= high")

    def lr_at(self, step):
        if self.schedule == "constant" or self.steps == 0:
            return self.learning_rate
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / self.steps))


@dataclass
class OptimizerState:
    step: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    def to_dict(self):
        return {"step": self.step,
                "m": None if self.m is None else self.m.tolist(),
                "v": None if self.v is None else self.v.tolist()}

    @classmethod
    def from_dict(cls, d):
        arr = lambda x: None if x is None else np.asarray(x, dtype=np.float64)  # noqa: E731
        return cls(int(d["step"]), arr(d["m"]), arr(d["v"]))


def _update(vector, grad, state, cfg, lr):
    if state.m is None:
        state.m = np.zeros_like(vector)
        state.v = np.zeros_like(vector) if cfg.optimizer == "adam" else None
    if cfg.optimizer == "sgd":
        state.m = 0.9 * state.m + grad
        return vector - lr * state.m
    t = state.step + 1
    state.m = 0.9 * state.m + 0.1 * grad
    state.v = 0.999 * state.v + 0.001 * grad * grad
    mhat = state.m / (1 - 0.9 ** t)
    vhat = state.v / (1 - 0.999 ** t)
    return vector - lr * mhat / (np.sqrt(vhat) + 1e-8)


@dataclass
class TrainResult:
    params: ModelParams
    curve: list = field(default_factory=list)
    state: OptimizerState = None


def sample_points(clouds, idx, n_points, rng):
    """Random ``n_points`` subset (without replacement) of each chosen cloud."""
    total = clouds.shape[1]
    if n_points >= total:
        return clouds[idx]
    return np.stack([clouds[i][rng.choice(total, n_points, replace=False)] for i in idx])


def train(params, cfg, clouds, orientations=None, state=None, callback=None, until=None):
    """Optimise ``params`` on augmented batches drawn from canonical ``clouds``.

    The randomness of step ``k`` comes from ``default_rng([cfg.seed, k])``,
    so a run resumed from a saved ``state`` is bitwise identical to an
    uninterrupted one.

    Parameters
    ----------
    params : ModelParams
        Starting point; not modified.
    cfg : TrainConfig
    clouds : ndarray of shape (M, N, 3)
    orientations : ndarray of shape (M, 3, 3), optional
        Orientations of the shapes (identity when omitted). Orienter only.
    state : OptimizerState, optional
        Resume from this state.
    callback : callable, optional
        Called as ``callback(step, params)`` after every update.
    until : int, optional
        Stop after this many total steps (an interruption: the learning-rate
        schedule still spans ``cfg.steps``).

    Returns
    -------
    TrainResult
    """
    clouds = np.asarray(clouds, dtype=np.float64)
    if clouds.ndim != 3 or len(clouds) == 0:
        raise InvalidInputError("clouds must be a nonempty (M, N, 3) array")
    params = params.copy()
    state = OptimizerState() if state is None else state
    curve = []
    stop = cfg.steps if until is None else min(cfg.steps, int(until))
    while state.step < stop:
        step = state.step
        rng = np.random.default_rng([cfg.seed, step])
        idx = rng.integers(0, len(clouds), size=cfg.batch_size)
        pts = sample_points(clouds, idx, cfg.points, rng)
        omega = None if orientations is None else orientations[idx]
        try:
            loss, grad = loss_and_grad(params, pts, rng, cfg.jitter_deg, omega,
                                       dtype=PRECISIONS[cfg.precision])
        except NumericError as exc:
            raise TrainingError(str(exc), step=step) from exc
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingError("loss diverged", step=step)
        params.vector = _update(params.vector, grad, state, cfg, cfg.lr_at(step))
        state.step += 1
        curve.append(loss)
        if callback is not None:
            callback(step, params)
    return TrainResult(params, curve, state)


CHECKPOINT_FORMAT = "symorient-checkpoint"


def checkpoint_to_dict(params, state=None, cfg=None, config_hash=""):
    """JSON-ready checkpoint: arch, flip-ordering fingerprint, weights, optimizer."""
    return {
        "format": CHECKPOINT_FORMAT,
        "fingerprint": octa.fingerprint(),
        "arch": params.arch.to_dict(),
        "params": params.vector.tolist(),
        "digest": params.digest(),
        "optimizer": None if state is None else state.to_dict(),
        "train_config": None if cfg is None else {**asdict(cfg), "jitter_deg": list(cfg.jitter_deg)},
        "config_hash": config_hash,
    }


def checkpoint_from_dict(doc):
    """Inverse of :func:`checkpoint_to_dict`.

    Returns
    -------
    params : ModelParams
    state : OptimizerState or None
    cfg : TrainConfig or None
    """
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError("not a model checkpoint")
    if doc.get("fingerprint") != octa.fingerprint():
        raise ConfigError("checkpoint was written under a different flip ordering")
    try:
        arch = doc["arch"]
        arch = ModelArch(arch["kind"], tuple(arch["hidden"]), tuple(arch["head"]),
                         float(arch["slope"]), bool(arch["frame"]))
        params = ModelParams(arch, np.asarray(doc["params"], dtype=np.float64))
        state = None if doc.get("optimizer") is None else OptimizerState.from_dict(doc["optimizer"])
        cfg = None if doc.get("train_config") is None else TrainConfig(**doc["train_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed checkpoint: {exc}") from exc
    if doc.get("digest") not in (None, params.digest()):
        raise ConfigError("checkpoint digest does not match its parameters")
    return params, state, cfg
