"""Scalar functionals of discrete maps: energy, Sobolev norms, diameter, volume."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import mobius
from .mapspace import (
    DiscreteMap,
    SobolevParams,
    _check_compatible,
    bump_perturb,
    map_difference,
    pullback,
    stock_map,
)
from .sphere import SphereMesh, SphericalRegion, region_vertices

__all__ = [
    "EmptyRegion",
    "CalibrationReport",
    "energy",
    "energy_density",
    "face_gradients",
    "vertex_gradients",
    "cotangent_laplacian",
    "sobolev_norm",
    "sobolev_distance",
    "c0_distance",
    "diameter",
    "volume",
    "v1_energy",
    "calibrate_energy_bound",
    "sample_map_pair",
    "cap_fraction",
]

DIAMETER_EXACT_LIMIT = 5000


class EmptyRegion(ValueError):
    pass


def _cotangents(mesh: SphereMesh) -> np.ndarray:
    """Cotangent of the angle at each face corner, shape ``(n_faces, 3)``."""
    x = mesh.vertices[mesh.faces]
    out = np.empty((mesh.n_faces, 3))
    for i in range(3):
        u = x[:, (i + 1) % 3] - x[:, i]
        v = x[:, (i + 2) % 3] - x[:, i]
        out[:, i] = np.einsum("ij,ij->i", u, v) / np.linalg.norm(np.cross(u, v), axis=1)
    return out


def energy_density(f: DiscreteMap) -> np.ndarray:
    """Dirichlet energy of the P1 interpolant on each face."""
    cot = _cotangents(f.mesh)
    y = f.values[f.mesh.faces]
    e = np.zeros(f.mesh.n_faces)
    for i in range(3):
        d = y[:, (i + 1) % 3] - y[:, (i + 2) % 3]
        e += 0.5 * cot[:, i] * np.einsum("ij,ij->i", d, d)
    return e


def energy(f: DiscreteMap) -> float:
    """Conformal energy ``int |df|^2`` (Frobenius norm) of the P1 interpolant."""
    return float(math.fsum(energy_density(f)))


def face_gradients(mesh: SphereMesh, values) -> np.ndarray:
    """Ambient gradient of the P1 interpolant per face, shape ``(n_faces, 3, m)``."""
    x = mesh.vertices[mesh.faces]
    y = np.asarray(values)[mesh.faces]
    n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    two_area = np.linalg.norm(n, axis=1)
    n = n / two_area[:, None]
    grad = np.zeros((mesh.n_faces, 3, y.shape[-1]))
    for i in range(3):
        edge = x[:, (i + 2) % 3] - x[:, (i + 1) % 3]
        gphi = np.cross(n, edge) / two_area[:, None]
        grad += gphi[:, :, None] * y[:, i, None, :]
    return grad


def vertex_gradients(mesh: SphereMesh, values) -> np.ndarray:
    """Area-weighted average of the incident face gradients at each vertex."""
    g = face_gradients(mesh, values) * mesh.face_areas[:, None, None]
    out = np.zeros((mesh.n_vertices,) + g.shape[1:])
    for k in range(3):
        np.add.at(out, mesh.faces[:, k], g)
    return out / (3.0 * mesh.vertex_weights)[:, None, None]


def cotangent_laplacian(mesh: SphereMesh, values) -> np.ndarray:
    """Lumped-mass cotangent Laplacian, so that it approximates the Laplace-Beltrami operator."""
    y = np.asarray(values, dtype=float)
    cot = _cotangents(mesh)
    lap = np.zeros_like(y)
    for i in range(3):
        a = mesh.faces[:, (i + 1) % 3]
        b = mesh.faces[:, (i + 2) % 3]
        w = 0.5 * cot[:, i, None] * (y[b] - y[a])
        np.add.at(lap, a, w)
        np.add.at(lap, b, -w)
    return lap / mesh.vertex_weights[:, None]


def _norm_of_field(mesh: SphereMesh, y: np.ndarray, params: SobolevParams) -> float:
    p = params.p
    w = mesh.vertex_weights
    total = math.fsum(w * np.linalg.norm(y, axis=1) ** p)
    if params.k >= 1:
        g = vertex_gradients(mesh, y)
        total += math.fsum(w * np.sqrt((g**2).sum(axis=(1, 2))) ** p)
    if params.k >= 2:
        total += math.fsum(w * np.linalg.norm(cotangent_laplacian(mesh, y), axis=1) ** p)
    return total ** (1.0 / p)


def sobolev_norm(f: DiscreteMap, params: SobolevParams = SobolevParams()) -> float:
    """Discrete ``L_k^p`` norm of the ambient values.

    Terms: ``|f|``, the Frobenius norm of the vertex-averaged gradient and,
    for ``k = 2``, the magnitude of the cotangent Laplacian as a second-order
    proxy.
    """
    return _norm_of_field(f.mesh, f.values, params)


def sobolev_distance(f: DiscreteMap, h: DiscreteMap, params: SobolevParams = SobolevParams()) -> float:
    return _norm_of_field(f.mesh, map_difference(f, h), params)


def c0_distance(f: DiscreteMap, h: DiscreteMap) -> float:
    return float(np.linalg.norm(map_difference(f, h), axis=1).max())


def _diameter_exact(pts: np.ndarray, chunk: int = 1024) -> float:
    best = 0.0
    for s in range(0, len(pts), chunk):
        block = pts[s : s + chunk]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def _diameter_heuristic(pts: np.ndarray, restarts: int = 8) -> float:
    r = np.linalg.norm(pts, axis=1)
    if np.ptp(r) <= 1e-12 * max(1.0, float(r.max())):
        # equal norms: |x - y| is largest where |-x - y| is smallest, so a
        # nearest-neighbour query of the reflected points is exact
        d, j = cKDTree(pts).query(-pts, k=1)
        return float(np.linalg.norm(pts - pts[j], axis=1).max())
    # furthest-point iteration from deterministic, spread-out starts
    best = 0.0
    starts = np.linspace(0, len(pts) - 1, restarts).astype(int)
    for s in starts:
        i = int(s)
        prev = -1.0
        for _ in range(16):
            d = np.linalg.norm(pts - pts[i], axis=1)
            j = int(np.argmax(d))
            best = max(best, float(d[j]))
            if d[j] <= prev:
                break
            prev = float(d[j])
            i = j
    return best


def diameter(f: DiscreteMap, region: SphericalRegion | None = None, method: str = "auto") -> float:
    """Largest ambient distance between values at the region's vertices."""
    idx = np.arange(f.mesh.n_vertices) if region is None else region_vertices(f.mesh, region)
    if len(idx) == 0:
        raise EmptyRegion("region contains no mesh vertex")
    pts = f.values[idx]
    if method == "auto":
        method = "exact" if len(pts) < DIAMETER_EXACT_LIMIT else "heuristic"
    if method == "exact":
        return _diameter_exact(pts)
    if method == "heuristic":
        return _diameter_heuristic(pts)
    raise ValueError(f"unknown method {method!r}")


def _image_areas(f: DiscreteMap) -> np.ndarray:
    y = f.values[f.mesh.faces]
    u = y[:, 1] - y[:, 0]
    v = y[:, 2] - y[:, 0]
    uu = np.einsum("ij,ij->i", u, u)
    vv = np.einsum("ij,ij->i", v, v)
    uv = np.einsum("ij,ij->i", u, v)
    return 0.5 * np.sqrt(np.clip(uu * vv - uv**2, 0.0, None))


def cap_fraction(heights: np.ndarray, level: float) -> np.ndarray:
    """Fraction of each flat triangle where a linear height is ``<= level``.

    ``heights`` holds the three corner heights per face.
    """
    h = np.sort(np.asarray(heights, dtype=float), axis=1)
    a, b, d = h[:, 0], h[:, 1], h[:, 2]
    c = level
    frac = np.zeros(len(h))
    frac[c >= d] = 1.0
    mid = (c > a) & (c < d)
    # products of ratios rather than squared differences: tiny height gaps
    # would otherwise underflow to 0/0
    low = mid & (c <= b)
    al, bl, dl = a[low], b[low], d[low]
    frac[low] = ((c - al) / (bl - al)) * ((c - al) / (dl - al))
    high = mid & (c > b)
    ah, bh, dh = a[high], b[high], d[high]
    frac[high] = 1.0 - ((dh - c) / (dh - ah)) * ((dh - c) / (dh - bh))
    return np.clip(frac, 0.0, 1.0)


def volume(f: DiscreteMap, region: SphericalRegion | None = None, rule: str = "vertices") -> float:
    """Image area of the P1 interpolant, counted with multiplicity.

    With a region, ``rule="vertices"`` keeps faces whose three vertices lie in
    it. For caps, ``rule="clip"`` keeps the exact part of each flat face below
    the cutting plane; the P1 map is affine per face, so the image area
    scales by the same fraction.
    """
    areas = _image_areas(f)
    if region is None:
        return float(math.fsum(areas))
    if rule == "vertices":
        inside = region.contains(f.mesh.vertices)
        keep = inside[f.mesh.faces].all(axis=1)
        return float(math.fsum(areas[keep]))
    if rule == "clip":
        if region.kind != "cap":
            raise ValueError("clip rule needs a cap region")
        heights = f.mesh.vertices[f.mesh.faces] @ np.asarray(region.axis)
        return float(math.fsum(areas * cap_fraction(heights, region.level)))
    raise ValueError(f"unknown rule {rule!r}")


def v1_energy(f: DiscreteMap, m: int = 2) -> float:
    """``int ||df||^m`` with the operator norm of the vertex differential."""
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    g = vertex_gradients(f.mesh, f.values)
    op = np.linalg.norm(g, ord=2, axis=(1, 2))
    return float(math.fsum(f.mesh.vertex_weights * op**m))


@dataclass
class CalibrationReport:
    """Empirical constant in ``|E(f)-E(h)| <= C (|f| + |h|) |f - h|``."""

    constant_estimate: float
    sample_count: int
    max_ratio_observed: float
    params: SobolevParams
    excluded: int = 0
    level: int = 3
    seed: int | None = None
    ratios: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "constant_estimate": self.constant_estimate,
            "sample_count": self.sample_count,
            "max_ratio_observed": self.max_ratio_observed,
            "params": self.params.to_dict(),
            "excluded": self.excluded,
            "level": self.level,
            "seed": self.seed,
        }


_PAIR_BASES = ("identity", "power2", "power3", "axis", "radial")


def sample_map_pair(mesh: SphereMesh, rng: np.random.Generator):
    """Random pair ``(f, h)`` of nearby smooth maps for calibration."""
    base = stock_map(mesh, _PAIR_BASES[rng.integers(len(_PAIR_BASES))])
    f = pullback(base, mobius.random_element(2.0, mobius.GroupFamily.G0, rng))
    h = f
    for _ in range(int(rng.integers(1, 3))):
        c = rng.normal(size=3)
        h = bump_perturb(h, c, radius=rng.uniform(0.4, 1.5), amplitude=rng.uniform(0.01, 0.3), seed=rng)
    return f, h


def calibrate_energy_bound(
    samples: int, params: SobolevParams = SobolevParams(), seed=0, level: int = 3
) -> CalibrationReport:
    """Largest observed ``|E(f)-E(h)| / ((|f|+|h|) |f-h|)`` over random pairs.

    Pairs with ``|f - h| = 0`` are excluded and counted.
    """
    from .sphere import build_icosphere

    if samples < 10:
        raise ValueError("need at least 10 samples")
    mesh = build_icosphere(level)
    rng = np.random.default_rng(seed)
    ratios = []
    excluded = 0
    for _ in range(samples):
        f, h = sample_map_pair(mesh, rng)
        dist = sobolev_distance(f, h, params)
        if dist == 0.0:
            excluded += 1
            continue
        num = abs(energy(f) - energy(h))
        ratios.append(num / ((sobolev_norm(f, params) + sobolev_norm(h, params)) * dist))
    top = max(ratios) if ratios else 0.0
    return CalibrationReport(top, len(ratios), top, params, excluded, level, seed if isinstance(seed, int) else None, ratios)


def energy_bound_ratio(f: DiscreteMap, h: DiscreteMap, params: SobolevParams = SobolevParams()) -> float:
    _check_compatible(f, h)
    dist = sobolev_distance(f, h, params)
    if dist == 0:
        return 0.0
    return abs(energy(f) - energy(h)) / ((sobolev_norm(f, params) + sobolev_norm(h, params)) * dist)
