"""Meshes, point clouds and the distances between them.

Point clouds are ``(N, 3)`` float64 arrays. Meshes are sampled into clouds
before any learning or evaluation happens.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import InvalidInputError, ParseError, StructuralError

MIN_AREA = 1e-12

# Record types that may appear in an OBJ file but carry nothing we use.
_IGNORED_OBJ_RECORDS = frozenset(
    {"vt", "vn", "vp", "o", "g", "s", "usemtl", "mtllib", "l", "p"})


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise StructuralError("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise StructuralError("non-finite vertex coordinate")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def triangle_areas(self):
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @staticmethod
    def concatenate(meshes):
        verts, tris, offset = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            offset += len(m.vertices)
        return TriangleMesh(np.concatenate(verts), np.concatenate(tris))


def _resolve_index(token, n_vertices, lineno):
    head = token.split("/", 1)[0]
    try:
        i = int(head)
    except ValueError:
        raise ParseError(f"bad face index {token!r}", lineno) from None
    if i > 0:
        i -= 1
    elif i < 0:
        i += n_vertices
    else:
        raise StructuralError(f"line {lineno}: face index 0 is invalid")
    return i


def load_obj(data):
    """Parse the ``v``/``f`` subset of Wavefront OBJ.

    Polygons are fan-triangulated from their first vertex. Negative indices
    are relative to the vertices read so far; ``/vt/vn`` sub-indices are
    dropped.

    Parameters
    ----------
    data : bytes or str

    Returns
    -------
    TriangleMesh

    Raises
    ------
    ParseError
        On a malformed record, with its line number.
    StructuralError
        On an out-of-range vertex index or an empty mesh.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8 text ({exc.reason})") from None
    vertices, faces = [], []
    for lineno, raw in enumerate(data.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        if tag == "v":
            if len(fields) not in (3, 4, 6, 7):
                raise ParseError("vertex record needs 3 coordinates", lineno)
            try:
                xyz = [float(x) for x in fields[:3]]
            except ValueError:
                raise ParseError("non-numeric vertex coordinate", lineno) from None
            if not all(np.isfinite(xyz)):
                raise ParseError("non-finite vertex coordinate", lineno)
            vertices.append(xyz)
        elif tag == "f":
            if len(fields) < 3:
                raise ParseError("face record needs at least 3 vertices", lineno)
            idx = [_resolve_index(tok, len(vertices), lineno) for tok in fields]
            for i in idx:
                if not 0 <= i < len(vertices):
                    raise StructuralError(
                        f"line {lineno}: face index out of range "
                        f"({len(vertices)} vertices defined)")
            faces.extend((idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1))
        elif tag not in _IGNORED_OBJ_RECORDS:
            raise ParseError(f"unknown record type {tag!r}", lineno)
    if not faces:
        raise StructuralError("OBJ contains no faces")
    return TriangleMesh(np.array(vertices), np.array(faces))


def read_obj(path):
    return load_obj(Path(path).read_bytes())


def dump_obj(mesh):
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"


def check_cloud(cloud, min_points=1):
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise InvalidInputError(f"point cloud must have shape (N, 3), got {cloud.shape}")
    if len(cloud) < min_points:
        raise InvalidInputError(f"point cloud needs at least {min_points} points")
    if not np.all(np.isfinite(cloud)):
        raise InvalidInputError("point cloud has non-finite coordinates")
    return cloud


def sample_surface(mesh, n, rng):
    """Draw ``n`` points uniformly (by area) from the mesh surface."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total < MIN_AREA:
        raise InvalidInputError("mesh has zero surface area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.triangles[tri, i]] for i in range(3))
    return ((1 - r1)[:, None] * a
            + (r1 * (1 - r2))[:, None] * b
            + (r1 * r2)[:, None] * c)


def normalize(cloud):
    """Centre on the centroid and scale so the farthest point has norm 1."""
    cloud = check_cloud(cloud)
    centred = cloud - cloud.mean(axis=0)
    scale = np.sqrt(np.max(np.einsum("ij,ij->i", centred, centred)))
    if scale < 1e-12:
        raise InvalidInputError("all points coincide; cannot normalise")
    return centred / scale


def apply_rotation(cloud, r):
    """Rotate every point: ``p -> r @ p``."""
    return np.asarray(cloud, dtype=np.float64) @ np.asarray(r, dtype=np.float64).T


def _nn_sq(source, target_tree):
    d, _ = target_tree.query(source, k=1)
    return d * d


def chamfer(p, q):
    """Symmetric chamfer distance.

    ``mean_x min_y |x-y|^2 + mean_y min_x |x-y|^2``; nearest neighbours are
    exact (k-d tree).
    """
    p = check_cloud(p)
    q = check_cloud(q)
    a = float(np.mean(_nn_sq(p, cKDTree(q))))
    b = float(np.mean(_nn_sq(q, cKDTree(p))))
    return a + b


class ChamferReference:
    """Caches the k-d tree of a fixed cloud for repeated chamfer queries."""

    def __init__(self, cloud):
        self.cloud = check_cloud(cloud)
        self._tree = cKDTree(self.cloud)

    def __call__(self, other):
        other = check_cloud(other)
        a = float(np.mean(_nn_sq(other, self._tree)))
        b = float(np.mean(_nn_sq(self.cloud, cKDTree(other))))
        return a + b


def dump_xyz(cloud):
    return "".join(f"{x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in cloud)


def load_xyz(text):
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError("expected 'x y z'", lineno)
        try:
            rows.append([float(x) for x in fields])
        except ValueError:
            raise ParseError("non-numeric coordinate", lineno) from None
    if not rows:
        raise ParseError("empty point cloud")
    return check_cloud(np.array(rows))


def read_cloud(path):
    """Read a cloud from ``.xyz``/``.txt`` text, ``.json`` or ``.obj``.

    OBJ files are read as meshes and returned unchanged; callers decide how
    to sample them.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text ({exc.reason})") from None
    if suffix == ".json":
        try:
            return check_cloud(np.array(json.loads(text), dtype=np.float64))
        except (json.JSONDecodeError, ValueError) as exc:
            raise ParseError(f"bad JSON point cloud: {exc}") from None
    return load_xyz(text)


def write_cloud(path, cloud):
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps([[float(x) for x in p] for p in cloud]))
    else:
        path.write_text(dump_xyz(cloud))
