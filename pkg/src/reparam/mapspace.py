"""Discrete maps from the sphere into an embedded target and the action f -> f o g."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import mobius
from .mobius import MobiusElement
from .sphere import SphereMesh, build_icosphere, locate

__all__ = [
    "TargetManifold",
    "SobolevParams",
    "DiscreteMap",
    "MeshMismatch",
    "BadProfile",
    "UNIT_SPHERE",
    "FLAT_TORUS",
    "pullback",
    "map_difference",
    "identity_map",
    "antipodal_map",
    "constant_map",
    "power_map",
    "axis_map",
    "radial_map",
    "bump_perturb",
    "stock_map",
    "STOCK_MAPS",
]


class MeshMismatch(ValueError):
    pass


class BadProfile(ValueError):
    pass


_TARGETS = {"unit_sphere_in_R3": 3, "flat_torus_in_R4": 4}


@dataclass(frozen=True)
class TargetManifold:
    """Embedded target ``M``; ``project`` is the nearest-point map onto it.

    ``flat_torus_in_R4`` is the product of two unit circles.
    """

    tag: str = "unit_sphere_in_R3"
    dim: int = 3

    def __post_init__(self):
        if self.tag in _TARGETS:
            object.__setattr__(self, "dim", _TARGETS[self.tag])
        elif self.tag != "ambient_Rm":
            raise ValueError(f"unknown target {self.tag!r}")

    @classmethod
    def parse(cls, spec: str) -> "TargetManifold":
        if spec.startswith("ambient_R"):
            rest = spec[len("ambient_R") :]
            return cls("ambient_Rm", int(rest) if rest and rest != "m" else 3)
        return cls(spec)

    @property
    def name(self) -> str:
        return f"ambient_R{self.dim}" if self.tag == "ambient_Rm" else self.tag

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.tag == "unit_sphere_in_R3":
            return _normalize(x)
        if self.tag == "flat_torus_in_R4":
            return np.concatenate([_normalize(x[..., :2]), _normalize(x[..., 2:])], axis=-1)
        return x.copy()

    def distance_to(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - self.project(x), axis=-1)


def _normalize(x):
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    # the origin has no nearest point; send it to a fixed one
    fallback = np.zeros(x.shape[-1])
    fallback[-1] = 1.0
    safe = np.where(n > 0, x / np.where(n > 0, n, 1.0), fallback)
    # leave points already on the target bit-for-bit unchanged
    return np.where(np.abs(n - 1) <= 4e-16, x, safe)


UNIT_SPHERE = TargetManifold("unit_sphere_in_R3")
FLAT_TORUS = TargetManifold("flat_torus_in_R4")


@dataclass(frozen=True)
class SobolevParams:
    """Exponents of the ``L_k^p`` norm; ``k - 2/p > 1`` unless ``strict=False``.

    Non-strict parameters (for example ``k=1``) are accepted by the norm
    routines as diagnostic lower-order norms.
    """

    k: int = 2
    p: float = 4.0
    strict: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.k not in (0, 1, 2):
            raise ValueError("k must be 0, 1 or 2")
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if self.strict and not self.m0 > 1:
            raise ValueError(f"k - 2/p = {self.m0:.4g} must exceed 1 (pass strict=False to override)")

    @property
    def m0(self) -> float:
        return self.k - 2.0 / self.p

    def to_dict(self) -> dict:
        return {"k": self.k, "p": self.p}


@dataclass(frozen=True, eq=False)
class DiscreteMap:
    """Per-vertex values of a map from the mesh into ``target``.

    Values are projected onto the target on construction.
    """

    mesh: SphereMesh
    values: np.ndarray
    target: TargetManifold = UNIT_SPHERE

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices, self.target.dim):
            raise ValueError(
                f"values must have shape ({self.mesh.n_vertices}, {self.target.dim}), got {v.shape}"
            )
        if not np.isfinite(v).all():
            raise ValueError("values must be finite")
        v = self.target.project(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def level(self) -> int:
        return self.mesh.level

    def to_dict(self) -> dict:
        return {"mesh_level": self.mesh.level, "target": self.target.name, "values": self.values.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMap":
        mesh = build_icosphere(int(data["mesh_level"]))
        return cls(mesh, np.array(data["values"], dtype=float), TargetManifold.parse(data["target"]))

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMap":
        return cls.from_dict(json.loads(text))

    def is_constant(self, tol: float = 1e-12) -> bool:
        return bool(np.ptp(self.values, axis=0).max() <= tol)

    def lipschitz_bound(self) -> float:
        """Largest edge-wise ratio ``|f(x) - f(y)| / |x - y|``."""
        e = self.mesh.edges
        df = np.linalg.norm(self.values[e[:, 0]] - self.values[e[:, 1]], axis=1)
        return float((df / self.mesh.edge_lengths).max())

    def resampling_bound(self) -> float:
        """Mesh size times Lipschitz bound, a crude bound on one resampling error."""
        return self.mesh.max_edge_length * self.lipschitz_bound()


def _check_compatible(f: DiscreteMap, h: DiscreteMap):
    if f.mesh is not h.mesh and (f.mesh.level != h.mesh.level or f.mesh.n_vertices != h.mesh.n_vertices):
        raise MeshMismatch(f"meshes differ (levels {f.mesh.level} and {h.mesh.level})")
    if f.target != h.target:
        raise MeshMismatch(f"targets differ ({f.target.name} and {h.target.name})")


def pullback(f: DiscreteMap, g: MobiusElement) -> DiscreteMap:
    """The reparametrized map ``f o g`` sampled at the mesh vertices.

    Vertex ``i`` receives the barycentric interpolation of ``f`` at
    ``g(vertex_i)``, projected back onto the target.
    """
    if g == mobius.identity() or f.is_constant(0.0):
        return f
    pts = mobius.apply(g, f.mesh.vertices)
    face, bary = locate(f.mesh, pts)
    corners = f.values[f.mesh.faces[face]]
    vals = np.einsum("ij,ijk->ik", bary, corners)
    return DiscreteMap(f.mesh, vals, f.target)


def map_difference(f: DiscreteMap, h: DiscreteMap) -> np.ndarray:
    """Ambient displacement field ``f - h``."""
    _check_compatible(f, h)
    return f.values - h.values


def identity_map(mesh: SphereMesh) -> DiscreteMap:
    return DiscreteMap(mesh, mesh.vertices, UNIT_SPHERE)


def antipodal_map(mesh: SphereMesh) -> DiscreteMap:
    return DiscreteMap(mesh, -mesh.vertices, UNIT_SPHERE)


def constant_map(mesh: SphereMesh, q=(0.0, 0.0, 1.0), target: TargetManifold | None = None) -> DiscreteMap:
    q = np.asarray(q, dtype=float)
    if target is None:
        target = UNIT_SPHERE if len(q) == 3 else TargetManifold("ambient_Rm", len(q))
    q = target.project(q)
    return DiscreteMap(mesh, np.broadcast_to(q, (mesh.n_vertices, target.dim)), target)


def power_map(mesh: SphereMesh, d: int) -> DiscreteMap:
    """Degree-``d`` map ``z -> z**d`` in the chart; poles are fixed."""
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    z, w = mobius.sphere_to_homogeneous(mesh.vertices)
    s = np.maximum(np.abs(z), np.abs(w))
    z, w = z / s, w / s
    return DiscreteMap(mesh, mobius.homogeneous_to_sphere(z**d, w**d), UNIT_SPHERE)


def _profile_fn(profile, target: TargetManifold):
    if callable(profile):
        fn = profile
    else:
        samples = np.asarray(profile, dtype=float)
        if samples.ndim != 2 or len(samples) < 2 or samples.shape[1] != target.dim:
            raise BadProfile("profile samples must have shape (n >= 2, target dim)")
        if target.distance_to(samples).max() > 1e-6:
            raise BadProfile("profile samples leave the target")
        grid = np.linspace(-1.0, 1.0, len(samples))

        def fn(t):
            t = np.asarray(t, dtype=float)
            return np.stack([np.interp(t, grid, samples[:, j]) for j in range(samples.shape[1])], axis=-1)

    return fn


def axis_map(mesh: SphereMesh, profile, axis=(0.0, 0.0, 1.0), target: TargetManifold = UNIT_SPHERE) -> DiscreteMap:
    """Map constant on the circles ``<p, axis> = t``: ``p -> profile(<p, axis>)``.

    ``profile`` is a callable on ``[-1, 1]`` or an array of samples on a
    uniform grid of that interval.
    """
    fn = _profile_fn(profile, target)
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    t = mesh.vertices @ ax
    vals = np.asarray(fn(t), dtype=float)
    if vals.shape != (mesh.n_vertices, target.dim) or not np.isfinite(vals).all():
        raise BadProfile("profile must return finite points of the target dimension")
    # sampled profiles are interpolated linearly and projected afterwards
    if callable(profile) and target.distance_to(vals).max() > 1e-6:
        raise BadProfile("profile leaves the target")
    return DiscreteMap(mesh, vals, target)


def meridian_profile(t):
    """Default axis-map profile: ``t`` in ``[-1, 1]`` sweeps the xz-meridian from the south to the north pole."""
    theta = math.pi * (1 - np.asarray(t, dtype=float)) / 2
    return np.stack([np.sin(theta), np.zeros_like(theta), np.cos(theta)], axis=-1)


def radial_map(mesh: SphereMesh, height_profile) -> DiscreteMap:
    """Rotation-equivariant map about the z-axis that keeps longitude.

    ``height_profile`` sends the height ``t in [-1, 1]`` to a new height.
    """
    p = mesh.vertices
    t = np.asarray(height_profile(p[:, 2]), dtype=float)
    if t.shape != (mesh.n_vertices,) or np.abs(t).max() > 1 + 1e-12:
        raise BadProfile("height profile must map [-1, 1] into itself")
    t = np.clip(t, -1.0, 1.0)
    rho = np.hypot(p[:, 0], p[:, 1])
    ang_x = np.divide(p[:, 0], rho, out=np.ones_like(rho), where=rho > 0)
    ang_y = np.divide(p[:, 1], rho, out=np.zeros_like(rho), where=rho > 0)
    r = np.sqrt(1 - t**2)
    return DiscreteMap(mesh, np.stack([r * ang_x, r * ang_y, t], axis=1), UNIT_SPHERE)


def bump_perturb(f: DiscreteMap, center, radius: float, amplitude: float, seed=None) -> DiscreteMap:
    """Add a smooth bump of a random ambient direction, then project.

    The bump is ``amplitude * (1 - (d/radius)**2)**2`` in the geodesic
    distance ``d`` to ``center`` and vanishes outside ``radius``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if abs(amplitude) >= 0.5:
        raise ValueError("amplitude too large for a well-defined projection")
    rng = mobius._rng(seed)
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    d = np.arccos(np.clip(f.mesh.vertices @ c, -1.0, 1.0))
    s = np.clip(1 - (d / radius) ** 2, 0.0, None) ** 2
    direction = rng.normal(size=f.target.dim)
    direction /= np.linalg.norm(direction)
    return DiscreteMap(f.mesh, f.values + amplitude * s[:, None] * direction, f.target)


STOCK_MAPS = ("identity", "antipodal", "constant", "power2", "power3", "axis", "radial")


def stock_map(mesh: SphereMesh, name: str, **kwargs) -> DiscreteMap:
    """Named test maps used by the experiments and the CLI."""
    if name == "identity":
        return identity_map(mesh)
    if name == "antipodal":
        return antipodal_map(mesh)
    if name == "constant":
        return constant_map(mesh, kwargs.get("q", (0.0, 0.0, 1.0)))
    if name.startswith("power"):
        d = int(kwargs.get("d", name[len("power") :] or 2))
        return power_map(mesh, d)
    if name == "axis":
        return axis_map(mesh, meridian_profile)
    if name == "radial":
        # pulls heights down, so the upper half carries most of the image area
        return radial_map(mesh, lambda t: (t + 1) ** 2 / 2 - 1)
    raise ValueError(f"unknown stock map {name!r}")
