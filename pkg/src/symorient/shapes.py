"""Parametric synthetic shapes with known octahedral symmetry groups.

Every family is built in canonical orientation (side = x, up = y,
front = z), so its orientation is the identity. Meshes are unions of boxes,
prisms and tetrahedra; overlapping parts are not merged, which is harmless
for surface sampling.
"""

from dataclasses import dataclass, field
from math import ceil, pi

import numpy as np

from .exceptions import InvalidInputError
from .geometry import TriangleMesh, normalize, sample_surface
from .so3 import rot_x, rot_y, rot_z
from .symmetry import SymmetryGroup

_BOX_FACES = np.array([
    [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
    [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
    [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
])


def box(lo, hi):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array([[hi[0] if i & 4 else lo[0],
                         hi[1] if i & 2 else lo[1],
                         hi[2] if i & 1 else lo[2]] for i in range(8)])
    return TriangleMesh(corners, _BOX_FACES)


def centered_box(half, center=(0.0, 0.0, 0.0)):
    half = np.asarray(half, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    return box(center - half, center + half)


def prism(profile, depth):
    """Extrude a convex 2D ``(y, z)`` polygon along x over ``[-depth, depth]``."""
    profile = np.asarray(profile, dtype=np.float64)
    k = len(profile)
    verts = np.concatenate([
        np.column_stack([np.full(k, -depth), profile]),
        np.column_stack([np.full(k, depth), profile]),
    ])
    tris = [(0, i, i + 1) for i in range(1, k - 1)]
    tris += [(k, k + i + 1, k + i) for i in range(1, k - 1)]
    for i in range(k):
        j = (i + 1) % k
        tris += [(i, j, k + j), (i, k + j, k + i)]
    return TriangleMesh(verts, np.array(tris))


def tetrahedron(vertices):
    return TriangleMesh(np.asarray(vertices, dtype=np.float64),
                        np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]))


def _legs(xs, zs, y0, y1, half):
    return [box((x - half, y0, z - half), (x + half, y1, z + half))
            for x in xs for z in zs]


def _box(p):
    return centered_box((p["a"], p["b"], p["c"]))


def _bench(p):
    w, d, t, h = p["width"], p["depth"], p["seat"], p["height"]
    parts = [box((-w, h, -d), (w, h + t, d)),
             box((-w, h + t, -0.04), (w, h + t + p["back"], 0.04))]
    parts += _legs((-w + 0.08, w - 0.08), (-d + 0.06, d - 0.06), 0.0, h, 0.05)
    return TriangleMesh.concatenate(parts)


def _l_bracket(p):
    t, w = p["thick"], p["depth"]
    return TriangleMesh.concatenate([
        box((0.0, 0.0, -w), (t, p["height"], w)),
        box((0.0, 0.0, -w), (p["length"], t, w)),
    ])


def _cross_prism(p):
    a, h, t = p["arm"], p["height"], p["thick"]
    return TriangleMesh.concatenate([
        centered_box((a, h, t)),
        centered_box((t, h, a)),
    ])


def _cube(p):
    parts = [centered_box((1.0, 1.0, 1.0))]
    s, e = p["boss"], p["boss_height"]
    if s > 0 and e > 0:
        for axis in range(3):
            for sign in (-1.0, 1.0):
                half = np.full(3, s)
                half[axis] = e / 2
                center = np.zeros(3)
                center[axis] = sign * (1.0 + e / 2)
                parts.append(centered_box(half, center))
    return TriangleMesh.concatenate(parts)


def _tetra_asym(p):
    return tetrahedron([(0.0, 0.0, 0.0), (p["a"], 0.0, 0.0),
                        (p["b"], p["c"], 0.0), (p["d"], p["e"], p["f"])])


def _stepped_pyramid(p):
    parts, y = [], 0.0
    for w in (p["w0"], p["w1"], p["w2"]):
        parts.append(box((-w, y, -w), (w, y + p["step"], w)))
        y += p["step"]
    return TriangleMesh.concatenate(parts)


def _chair(p):
    w, d, h, t = p["width"], p["depth"], p["height"], 0.06
    parts = [box((-w, h, -d), (w, h + t, d)),
             box((-w, h + t, -d), (w, h + t + p["back"], -d + t))]
    parts += _legs((-w + 0.05, w - 0.05), (-d + 0.05, d - 0.05), 0.0, h, 0.04)
    return TriangleMesh.concatenate(parts)


def _table(p):
    w, d, h, t = p["width"], p["depth"], p["height"], p["top"]
    parts = [box((-w, h, -d), (w, h + t, d))]
    parts += _legs((-w + 0.1, w - 0.1), (-d + 0.1, d - 0.1), 0.0, h, p["leg"])
    return TriangleMesh.concatenate(parts)


def _tray(p):
    w, h, t = p["width"], p["wall"], p["thick"]
    return TriangleMesh.concatenate([
        box((-w, 0.0, -w), (w, t, w)),
        box((-w, 0.0, -w), (w, h, -w + t)),
        box((-w, 0.0, w - t), (w, h, w)),
        box((-w, 0.0, -w), (-w + t, h, w)),
        box((w - t, 0.0, -w), (w, h, w)),
    ])


def _t_beam(p):
    h, f, ft, t, d = p["height"], p["flange"], p["flange_thick"], p["web"], p["depth"]
    return TriangleMesh.concatenate([
        box((-t, 0.0, -d), (t, h, d)),
        box((-f, h - ft, -d), (f, h, d)),
    ])


def _jack(p):
    t = p["thick"]
    return TriangleMesh.concatenate([
        centered_box((1.0, t, t)), centered_box((t, 1.0, t)), centered_box((t, t, 1.0))])


def _wedge(p):
    return prism([(0.0, 0.0), (0.0, p["run"]), (p["rise"], 0.0)], p["width"])


def _mug(p):
    w, h, t = p["width"], p["height"], 0.06
    cup = _tray({"width": w, "wall": h, "thick": t})
    r, b = p["reach"], 0.12
    handle = TriangleMesh.concatenate([
        box((w, 0.45 * h, -0.08), (w + r, 0.45 * h + b, 0.08)),
        box((w, h - b, -0.08), (w + r, h, 0.08)),
        box((w + r - b, 0.45 * h, -0.08), (w + r, h, 0.08)),
    ])
    return TriangleMesh.concatenate([cup, handle])


_Y2 = rot_y(pi)
_Y4 = rot_y(pi / 2)
_X2 = rot_x(pi)
_GROUPS = {
    "trivial": SymmetryGroup.trivial(),
    "C2_y": SymmetryGroup.generated_by(_Y2),
    "C4_y": SymmetryGroup.generated_by(_Y4),
    "D2": SymmetryGroup.generated_by(_X2, _Y2),
    "D4_y": SymmetryGroup.generated_by(_Y4, _X2),
    "O": SymmetryGroup.generated_by(rot_z(pi / 2), rot_x(pi / 2)),
}


@dataclass(frozen=True)
class Family:
    name: str
    build: callable
    ranges: dict
    group: str
    note: str = ""

    @property
    def symmetries(self):
        return _GROUPS[self.group]


FAMILIES = {f.name: f for f in [
    Family("box", _box, {"a": (0.9, 1.1), "b": (0.5, 0.7), "c": (0.2, 0.35)}, "D2",
           "cuboid with three distinct extents"),
    Family("box-with-back", _bench,
           {"width": (0.8, 1.0), "depth": (0.3, 0.4), "seat": (0.05, 0.08),
            "height": (0.35, 0.5), "back": (0.3, 0.5)}, "C2_y",
           "bench: seat, central backrest, four legs"),
    Family("l-bracket", _l_bracket,
           {"height": (1.0, 1.2), "length": (0.5, 0.7), "thick": (0.15, 0.25),
            "depth": (0.2, 0.3)}, "trivial"),
    Family("cross-prism", _cross_prism,
           {"arm": (0.9, 1.1), "height": (0.15, 0.25), "thick": (0.12, 0.18)}, "D4_y",
           "plus-shaped slab, equal arms in x and z"),
    Family("cube", _cube, {"boss": (0.3, 0.6), "boss_height": (0.05, 0.2)}, "O",
           "cube with a square boss on every face"),
    Family("tetra-asym", _tetra_asym,
           {"a": (1.0, 1.2), "b": (0.2, 0.4), "c": (0.8, 1.0), "d": (0.5, 0.7),
            "e": (0.2, 0.4), "f": (0.6, 0.8)}, "trivial"),
    Family("stepped-pyramid", _stepped_pyramid,
           {"w0": (0.8, 0.9), "w1": (0.5, 0.6), "w2": (0.2, 0.3), "step": (0.3, 0.4)},
           "C4_y"),
    Family("chair", _chair,
           {"width": (0.4, 0.5), "depth": (0.4, 0.5), "height": (0.4, 0.5),
            "back": (0.5, 0.7)}, "trivial"),
    Family("table", _table,
           {"width": (0.9, 1.1), "depth": (0.5, 0.65), "height": (0.6, 0.8),
            "top": (0.04, 0.08), "leg": (0.04, 0.06)}, "C2_y"),
    Family("tray", _tray,
           {"width": (0.6, 0.75), "wall": (0.55, 0.7), "thick": (0.06, 0.1)}, "C4_y",
           "open-topped square box"),
    Family("t-beam", _t_beam,
           {"height": (0.9, 1.1), "flange": (0.5, 0.7), "flange_thick": (0.1, 0.15),
            "web": (0.06, 0.1), "depth": (0.25, 0.35)}, "C2_y"),
    Family("jack", _jack, {"thick": (0.12, 0.25)}, "O",
           "three equal orthogonal bars"),
    Family("wedge", _wedge,
           {"rise": (0.5, 0.7), "run": (1.0, 1.3), "width": (0.3, 0.45)}, "trivial",
           "right-triangle ramp with unequal legs"),
    Family("mug", _mug,
           {"width": (0.35, 0.45), "height": (0.8, 1.0), "reach": (0.35, 0.5)}, "trivial",
           "square cup with a handle on +x"),
]}
FAMILIES["bench"] = FAMILIES["box-with-back"]
#: The default suite, without aliases.
FAMILY_NAMES = tuple(n for n in FAMILIES if n != "bench")


@dataclass(frozen=True)
class SyntheticShapeSpec:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown shape family {self.family!r}")
        fam = FAMILIES[self.family]
        params = {k: float(np.mean(v)) for k, v in fam.ranges.items()}
        unknown = set(self.params) - set(params)
        if unknown:
            raise InvalidInputError(f"unknown parameters for {self.family}: {sorted(unknown)}")
        params.update({k: float(v) for k, v in self.params.items()})
        for k, v in params.items():
            if not np.isfinite(v) or v <= 0:
                raise InvalidInputError(f"{self.family}.{k} must be positive, got {v}")
        object.__setattr__(self, "params", params)

    @property
    def declared_symmetries(self):
        return FAMILIES[self.family].symmetries

    def mesh(self):
        """Mesh with its area centroid at the origin."""
        mesh = FAMILIES[self.family].build(self.params)
        areas = mesh.triangle_areas()
        centers = mesh.vertices[mesh.triangles].mean(axis=1)
        centroid = (areas[:, None] * centers).sum(axis=0) / areas.sum()
        return TriangleMesh(mesh.vertices - centroid, mesh.triangles)

    @classmethod
    def random(cls, family, rng):
        """Draw parameters uniformly within the family's ranges."""
        ranges = FAMILIES[family].ranges
        return cls(family, {k: rng.uniform(lo, hi) for k, (lo, hi) in ranges.items()})


def make_shape(spec, n, rng, symmetrize=False):
    """Sample a normalised canonical cloud for ``spec``.

    With ``symmetrize=True`` the cloud is the orbit of ``ceil(n / |G|)``
    samples under the declared group ``G``, so it is exactly invariant under
    every declared symmetry; it then has ``|G| * ceil(n / |G|)`` points.
    """
    mesh = spec.mesh()
    if not symmetrize:
        return normalize(sample_surface(mesh, n, rng))
    mats = spec.declared_symmetries.matrices()
    base = sample_surface(mesh, ceil(n / len(mats)), rng)
    return normalize(np.concatenate([base @ q.T for q in mats]))
