"""Triangulated unit sphere, stereographic charts and the regions used on it."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache, cached_property

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "SphereMesh",
    "SphericalRegion",
    "LevelTooLarge",
    "LocateFailure",
    "MAX_LEVEL",
    "build_icosphere",
    "stereo_to_sphere",
    "sphere_to_stereo",
    "region_vertices",
    "geodesic_disc",
    "locate",
]

MAX_LEVEL = 8
NORTH = np.array([0.0, 0.0, 1.0])
SOUTH = np.array([0.0, 0.0, -1.0])


class LevelTooLarge(ValueError):
    pass


class LocateFailure(RuntimeError):
    """Point location found no containing face (indicates a bug)."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SphereMesh:
    """Icosphere with lumped (one third of incident area) vertex weights."""

    vertices: np.ndarray
    faces: np.ndarray
    level: int

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, "faces", _frozen(np.asarray(self.faces, dtype=np.int64)))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        cr = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return _frozen(0.5 * np.linalg.norm(cr, axis=1))

    @cached_property
    def vertex_weights(self) -> np.ndarray:
        w = np.zeros(self.n_vertices)
        for k in range(3):
            np.add.at(w, self.faces[:, k], self.face_areas / 3.0)
        return _frozen(w)

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return _frozen(np.unique(np.sort(e, axis=1), axis=0))

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices
        return _frozen(np.linalg.norm(v[self.edges[:, 0]] - v[self.edges[:, 1]], axis=1))

    @property
    def max_edge_length(self) -> float:
        return float(self.edge_lengths.max())

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_faces

    @cached_property
    def _centroid_tree(self) -> cKDTree:
        c = self.vertices[self.faces].mean(axis=1)
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        return cKDTree(c)

    def to_dict(self, full: bool = False) -> dict:
        out = {"level": self.level}
        if full:
            out["vertices"] = self.vertices.tolist()
            out["faces"] = self.faces.tolist()
        return out

    def to_json(self, full: bool = False) -> str:
        return json.dumps(self.to_dict(full))

    @classmethod
    def from_dict(cls, data: dict) -> "SphereMesh":
        if "vertices" in data:
            return cls(np.array(data["vertices"]), np.array(data["faces"]), int(data["level"]))
        return build_icosphere(int(data["level"]))


def _icosahedron():
    # vertex at each pole, two staggered rings of five
    h = 1.0 / math.sqrt(5.0)
    r = 2.0 / math.sqrt(5.0)
    verts = [NORTH]
    for k in range(5):
        t = 2 * math.pi * k / 5
        verts.append([r * math.cos(t), r * math.sin(t), h])
    for k in range(5):
        t = 2 * math.pi * (k + 0.5) / 5
        verts.append([r * math.cos(t), r * math.sin(t), -h])
    verts.append(SOUTH)
    faces = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        faces.append([0, u0, u1])
        faces.append([u0, l0, u1])
        faces.append([u1, l0, l1])
        faces.append([11, l1, l0])
    return np.array(verts, dtype=float), np.array(faces, dtype=np.int64)


def _subdivide(verts, faces):
    n = len(verts)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = verts[uniq[:, 0]] + verts[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    nf = len(faces)
    m01 = n + inv[:nf]
    m12 = n + inv[nf : 2 * nf]
    m20 = n + inv[2 * nf :]
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([m01, b, m12], axis=1),
            np.stack([m20, m12, c], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.concatenate([verts, mid]), new_faces


@lru_cache(maxsize=None)
def build_icosphere(level: int) -> SphereMesh:
    """Subdivided icosahedron with ``10 * 4**level + 2`` vertices.

    Both poles are mesh vertices. Results are cached per level; meshes are
    immutable so sharing them is safe.
    """
    if int(level) != level or level < 0:
        raise ValueError("level must be a non-negative integer")
    if level > MAX_LEVEL:
        raise LevelTooLarge(f"level {level} exceeds {MAX_LEVEL}")
    verts, faces = _icosahedron()
    for _ in range(level):
        verts, faces = _subdivide(verts, faces)
    return SphereMesh(verts, faces, int(level))


def stereo_to_sphere(z) -> np.ndarray:
    """Inverse stereographic projection from the north pole; ``inf`` maps to it."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (3,))
    inf = ~np.isfinite(z)
    zz = np.where(inf, 0, z)
    n2 = np.abs(zz) ** 2
    out[..., 0] = 2 * zz.real / (1 + n2)
    out[..., 1] = 2 * zz.imag / (1 + n2)
    out[..., 2] = (n2 - 1) / (1 + n2)
    out[inf] = NORTH
    return out


def sphere_to_stereo(p) -> np.ndarray:
    """Chart coordinate of unit vector(s); the north pole maps to ``inf``."""
    p = np.asarray(p, dtype=float)
    x, y, h = p[..., 0], p[..., 1], p[..., 2]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        # (x + iy) / (1 - h) equals (1 + h) / (x - iy); use the stable one
        south = h <= 0
        z = np.where(south, (x + 1j * y) / (1 - h), (1 + h) / (x - 1j * y))
    z = np.where(np.isnan(z) | (h >= 1.0), complex(np.inf, 0), z)
    return z if z.ndim else complex(z)


@dataclass(frozen=True)
class SphericalRegion:
    """Closed region of the sphere.

    ``chart_disc``: ``|z - center| <= radius`` in the chart; ``radius=inf``
    gives the whole sphere. ``chart_disc_complement``: ``|z - center| >=
    radius``, including ``inf``. ``cap``: ``<p, axis> <= level``.
    """

    kind: str
    center: complex = 0j
    radius: float = math.inf
    axis: tuple = (0.0, 0.0, 1.0)
    level: float = 0.0

    def __post_init__(self):
        if self.kind not in ("chart_disc", "chart_disc_complement", "cap"):
            raise ValueError(f"unknown region kind {self.kind!r}")

    @classmethod
    def chart_disc(cls, center=0j, radius=math.inf):
        return cls("chart_disc", center=complex(center), radius=float(radius))

    @classmethod
    def chart_disc_complement(cls, center=0j, radius=0.0):
        return cls("chart_disc_complement", center=complex(center), radius=float(radius))

    @classmethod
    def cap(cls, axis=(0.0, 0.0, 1.0), level=0.0):
        a = np.asarray(axis, dtype=float)
        a = a / np.linalg.norm(a)
        return cls("cap", axis=tuple(float(x) for x in a), level=float(level))

    @classmethod
    def whole(cls):
        return cls.chart_disc(0j, math.inf)

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "cap":
            return p @ np.asarray(self.axis) <= self.level + 1e-12
        z = np.atleast_1d(sphere_to_stereo(p))
        finite = np.isfinite(z)
        dist = np.where(finite, np.abs(np.where(finite, z, 0) - self.center), np.inf)
        if self.kind == "chart_disc":
            if math.isinf(self.radius):
                return np.ones(len(p), dtype=bool)
            return finite & (dist <= self.radius * (1 + 1e-12))
        return ~finite | (dist >= self.radius * (1 - 1e-12))

    def complement(self) -> "SphericalRegion":
        """Open complement, as a closed region up to the boundary convention."""
        if self.kind == "cap":
            return SphericalRegion.cap(tuple(-x for x in self.axis), -self.level)
        if self.kind == "chart_disc":
            return SphericalRegion.chart_disc_complement(self.center, self.radius)
        return SphericalRegion.chart_disc(self.center, self.radius)


def geodesic_disc(center, radius: float) -> SphericalRegion:
    """Closed round-metric ball of the given angular radius about ``center``."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    return SphericalRegion.cap(tuple(-c), -math.cos(radius))


def region_vertices(mesh: SphereMesh, region: SphericalRegion) -> np.ndarray:
    """Sorted indices of mesh vertices inside the closed region."""
    return np.flatnonzero(region.contains(mesh.vertices))


def _bary_dets(tri, p):
    # tri: (n, 3, 3) corners; p: (n, 3)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    da = np.einsum("ij,ij->i", p, np.cross(b, c))
    db = np.einsum("ij,ij->i", a, np.cross(p, c))
    dc = np.einsum("ij,ij->i", a, np.cross(b, p))
    return np.stack([da, db, dc], axis=1)


def locate(mesh: SphereMesh, points, tol: float = 1e-12, k: int = 1):
    """Containing face and barycentric coordinates for unit vector(s).

    Barycentric coordinates are those of the central projection of the point
    onto the flat face; they are non-negative and sum to one.
    """
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    norms = np.linalg.norm(p, axis=1)
    if not np.all(np.abs(norms - 1) <= 1e-6):
        raise ValueError("points must be unit vectors")
    npts = len(p)
    face_idx = np.full(npts, -1, dtype=np.int64)
    bary = np.zeros((npts, 3))
    pending = np.arange(npts)
    tree = mesh._centroid_tree
    kk = min(k, mesh.n_faces)
    while len(pending):
        _, cand = tree.query(p[pending], k=kk)
        cand = cand.reshape(len(pending), kk)
        left = np.ones(len(pending), dtype=bool)
        for j in range(kk):
            rows = np.flatnonzero(left)
            if not len(rows):
                break
            f = cand[rows, j]
            d = _bary_dets(mesh.vertices[mesh.faces[f]], p[pending[rows]])
            total = d.sum(axis=1)
            ok = (d >= -tol * np.abs(total)[:, None]).all(axis=1) & (total > 0)
            hit = pending[rows[ok]]
            w = np.clip(d[ok], 0.0, None)
            bary[hit] = w / w.sum(axis=1, keepdims=True)
            face_idx[hit] = f[ok]
            left[rows[ok]] = False
        pending = pending[left]
        if len(pending) and kk < mesh.n_faces:
            kk = min(mesh.n_faces, kk * 8)
        elif len(pending):
            raise LocateFailure(f"{len(pending)} point(s) not located")
    if single:
        return int(face_idx[0]), bary[0]
    return face_idx, bary
