"""Moebius transformations of the Riemann sphere as canonical PSL(2, C) elements.

Conventions used throughout the package:

* stereographic projection is taken from the north pole ``(0, 0, 1)``, so the
  chart point ``0`` is the south pole and ``inf`` is the north pole;
* points are pushed through a matrix in homogeneous coordinates ``[z : w]``,
  never by dividing, so the pole needs no special case;
* a diagonal matrix ``diag(a, 1/a)`` acts on the chart as ``z -> a**2 z``; the
  number ``a**2`` is called the *chart factor*, and compact sets ``K_n`` of the
  dilation subgroups are expressed through it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = [
    "GroupFamily",
    "MobiusElement",
    "KAKFactors",
    "CompactExhaustionIndex",
    "FamilyMismatch",
    "InvalidMode",
    "ESCAPE_MODES",
    "identity",
    "compose",
    "inverse",
    "apply",
    "apply_homogeneous",
    "sphere_to_homogeneous",
    "homogeneous_to_sphere",
    "kak_decompose",
    "a_factor",
    "chart_factor",
    "translation_part",
    "in_compact_set",
    "minimal_compact_index",
    "escape_sequence",
    "random_element",
    "random_rotation",
    "dilation",
    "translation",
    "affine",
    "rotation_about",
    "rotation_matrix",
    "exp_traceless",
    "element_distance",
]

_DET_TOL = 1e-14
_ZERO_TOL = 1e-14
_MEMBER_TOL = 1e-10


class FamilyMismatch(ValueError):
    """The element does not belong to the requested subgroup."""


class InvalidMode(ValueError):
    """Escape mode not available for the requested subgroup."""


class GroupFamily(str, enum.Enum):
    """Full Moebius group and the stabilizers of one or two marked points.

    ``G1`` fixes ``inf`` (affine maps ``z -> a (z - c)``), ``G2`` fixes ``0``
    and ``inf`` (chart dilation-rotations ``z -> a z``).
    """

    G0 = "G0"
    G1 = "G1"
    G2 = "G2"


ESCAPE_MODES = ("dilate_to_zero", "dilate_to_inf", "translate_to_inf")


def _canonical(matrix) -> np.ndarray:
    m = np.array(matrix, dtype=complex).reshape(2, 2)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det == 0 or not np.isfinite(det):
        raise ValueError("matrix must be invertible and finite")
    if abs(det - 1) > _DET_TOL:
        m = m / np.sqrt(det)
    scale = np.abs(m).max()
    for entry in m.ravel():
        if abs(entry) > _ZERO_TOL * scale:
            # argument in [0, pi); a negligible imaginary part counts as zero so
            # that -x + 0j and x - 0j land on the same side
            if abs(entry.imag) <= _ZERO_TOL * abs(entry):
                flip = entry.real < 0
            else:
                flip = entry.imag < 0
            if flip:
                m = -m
            break
    m = m + 0.0  # normalizes signed zeros
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class MobiusElement:
    """A class in PSL(2, C) stored through its canonical SL(2, C) lift.

    The sign of the lift is fixed so that the first non-negligible entry in
    row-major order has argument in ``[0, pi)``; equality of group elements is
    then plain matrix equality.
    """

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _canonical(self.matrix))

    def __eq__(self, other):
        if not isinstance(other, MobiusElement):
            return NotImplemented
        return bool(np.array_equal(self.matrix, other.matrix))

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def __matmul__(self, other):
        return compose(self, other)

    def __repr__(self):
        (a, b), (c, d) = self.matrix
        return f"MobiusElement([[{a:.6g}, {b:.6g}], [{c:.6g}, {d:.6g}]])"

    def to_list(self) -> list[float]:
        """Eight reals: row-major real/imaginary parts of the canonical lift."""
        out = []
        for entry in self.matrix.ravel():
            out.extend([float(entry.real), float(entry.imag)])
        return out

    @classmethod
    def from_list(cls, values) -> "MobiusElement":
        v = [float(x) for x in values]
        if len(v) != 8:
            raise ValueError("expected 8 real numbers")
        m = np.array([complex(v[i], v[i + 1]) for i in range(0, 8, 2)]).reshape(2, 2)
        return cls(m)

    def in_family(self, family: GroupFamily, tol: float = _MEMBER_TOL) -> bool:
        family = GroupFamily(family)
        m = self.matrix
        if family is GroupFamily.G0:
            return True
        if abs(m[1, 0]) > tol:
            return False
        if family is GroupFamily.G2 and abs(m[0, 1]) > tol:
            return False
        return True


@dataclass(frozen=True)
class KAKFactors:
    u1: np.ndarray
    a: float
    u2: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.u1 @ np.diag([self.a, 1.0 / self.a]) @ self.u2


@dataclass(frozen=True)
class CompactExhaustionIndex:
    n: int
    family: GroupFamily = GroupFamily.G0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "family", GroupFamily(self.family))


_IDENTITY = MobiusElement(np.eye(2))


def identity() -> MobiusElement:
    return _IDENTITY


def compose(g1: MobiusElement, g2: MobiusElement) -> MobiusElement:
    """Group product ``g1 * g2`` (apply ``g2`` first)."""
    return MobiusElement(g1.matrix @ g2.matrix)


def inverse(g: MobiusElement) -> MobiusElement:
    (a, b), (c, d) = g.matrix
    return MobiusElement(np.array([[d, -b], [-c, a]]))


def sphere_to_homogeneous(points) -> tuple[np.ndarray, np.ndarray]:
    """Homogeneous chart coordinates ``[z : w]`` of unit vectors.

    Uses ``[x + iy : 1 - z3]`` on the southern half and the equivalent
    ``[1 + z3 : x - iy]`` on the northern half, so both entries never vanish
    together.
    """
    p = np.asarray(points, dtype=float)
    x, y, h = p[..., 0], p[..., 1], p[..., 2]
    south = h <= 0
    z = np.where(south, x + 1j * y, 1.0 + h)
    w = np.where(south, 1.0 - h, x - 1j * y)
    return z.astype(complex), w.astype(complex)


def homogeneous_to_sphere(z, w) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    zw = z * np.conj(w)
    nz = np.abs(z) ** 2
    nw = np.abs(w) ** 2
    out = np.stack([2 * zw.real, 2 * zw.imag, nz - nw], axis=-1) / (nz + nw)[..., None]
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def apply_homogeneous(g: MobiusElement, z, w):
    (a, b), (c, d) = g.matrix
    return a * z + b * w, c * z + d * w


def apply(g: MobiusElement, points) -> np.ndarray:
    """Act with ``g`` on unit vector(s); shape ``(3,)`` or ``(n, 3)``."""
    z, w = sphere_to_homogeneous(points)
    z2, w2 = apply_homogeneous(g, z, w)
    # keep homogeneous pairs well scaled before squaring
    s = np.maximum(np.abs(z2), np.abs(w2))
    return homogeneous_to_sphere(z2 / s, w2 / s)


def _special_unitary(u: np.ndarray) -> np.ndarray:
    return u / np.sqrt(np.linalg.det(u))


def kak_decompose(g: MobiusElement) -> KAKFactors:
    """Split ``g = u1 diag(a, 1/a) u2`` with ``u1, u2`` in SU(2) and ``a >= 1``."""
    m = g.matrix
    U, s, Vh = np.linalg.svd(m)
    a = float(s[0])
    if a - 1.0 <= 1e-12:
        return KAKFactors(_special_unitary(m), 1.0, np.eye(2, dtype=complex))
    if abs(m[0, 1]) == 0 and abs(m[1, 0]) == 0 and m[0, 0].real > 0 and m[0, 0].imag == 0:
        if m[0, 0].real >= 1:
            return KAKFactors(np.eye(2, dtype=complex), float(m[0, 0].real), np.eye(2, dtype=complex))
    u1 = _special_unitary(U)
    u2 = _special_unitary(Vh)
    # the phase split can leave an overall -1; fold it into u1
    rec = u1 @ np.diag([a, 1.0 / a]) @ u2
    if np.abs(rec + m).max() < np.abs(rec - m).max():
        u1 = -u1
    return KAKFactors(u1, a, u2)


def a_factor(g: MobiusElement) -> float:
    """Largest singular value of the canonical lift (the KAK ``a``)."""
    return float(np.linalg.svd(g.matrix, compute_uv=False)[0])


def chart_factor(g: MobiusElement) -> complex:
    """Multiplier ``alpha`` of an affine element ``z -> alpha z + beta``."""
    m = g.matrix
    return complex(m[0, 0] / m[1, 1])


def translation_part(g: MobiusElement) -> complex:
    """The point ``c`` in the affine form ``z -> alpha (z - c)``."""
    m = g.matrix
    return complex(-m[0, 1] / m[0, 0])


def in_compact_set(g: MobiusElement, idx: CompactExhaustionIndex) -> bool:
    """Membership in the exhaustion set ``K_n`` of ``idx.family``.

    G2: ``1/n <= |alpha| <= n``. G1: additionally ``|c| <= n``. G0:
    ``a**2 <= n`` with ``a`` the KAK factor, which restricts to the G2 rule on
    diagonal elements.
    """
    fam = idx.family
    n = idx.n
    if not g.in_family(fam):
        raise FamilyMismatch(f"element is not in {fam.value}")
    if fam is GroupFamily.G0:
        return a_factor(g) ** 2 <= n * (1 + 1e-12)
    alpha = abs(chart_factor(g))
    ok = 1.0 / n <= alpha * (1 + 1e-12) and alpha <= n * (1 + 1e-12)
    if fam is GroupFamily.G1:
        ok = ok and abs(translation_part(g)) <= n * (1 + 1e-12)
    return bool(ok)


def minimal_compact_index(g: MobiusElement, family: GroupFamily = GroupFamily.G0) -> int:
    """Smallest ``n`` with ``g`` in ``K_n``."""
    family = GroupFamily(family)
    if family is GroupFamily.G0:
        size = a_factor(g) ** 2
    else:
        alpha = abs(chart_factor(g))
        size = max(alpha, 1.0 / alpha)
        if family is GroupFamily.G1:
            size = max(size, abs(translation_part(g)))
    n = max(1, math.ceil(size * (1 - 1e-12)))
    while not in_compact_set(g, CompactExhaustionIndex(n, family)):
        n += 1
    return n


def dilation(factor: complex) -> MobiusElement:
    """Chart map ``z -> factor * z``."""
    s = np.sqrt(complex(factor))
    return MobiusElement(np.array([[s, 0], [0, 1 / s]]))


def affine(alpha: complex, c: complex = 0) -> MobiusElement:
    """Chart map ``z -> alpha (z - c)``."""
    s = np.sqrt(complex(alpha))
    return MobiusElement(np.array([[s, -s * c], [0, 1 / s]]))


def translation(b: complex) -> MobiusElement:
    """Chart map ``z -> z + b``."""
    return MobiusElement(np.array([[1, b], [0, 1]]))


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """SU(2) lift of the right-handed rotation of R^3 about ``axis``."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    # generator n_x sx - n_y sy + n_z sz matches projection from the north pole
    half = angle / 2
    nx, ny, nz = n
    sigma = np.array([[nz, nx + 1j * ny], [nx - 1j * ny, -nz]])
    return math.cos(half) * np.eye(2) + 1j * math.sin(half) * sigma


def rotation_about(axis, angle: float) -> MobiusElement:
    """Rotation of the sphere about ``axis`` by ``angle`` (right-hand rule)."""
    return MobiusElement(rotation_matrix(axis, angle))


def exp_traceless(params) -> np.ndarray:
    """``expm`` of the traceless matrix with 6 real coordinates.

    ``params = (re a, im a, re b, im b, re c, im c)`` for ``[[a, b], [c, -a]]``.
    """
    p = np.asarray(params, dtype=float)
    a = complex(p[0], p[1])
    b = complex(p[2], p[3])
    c = complex(p[4], p[5])
    return expm(np.array([[a, b], [c, -a]]))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_rotation(seed) -> MobiusElement:
    """Haar-distributed rotation."""
    rng = _rng(seed)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    u = np.array([[q[0] + 1j * q[1], q[2] + 1j * q[3]], [-q[2] + 1j * q[3], q[0] - 1j * q[1]]])
    return MobiusElement(u)


def random_element(bound: float, family: GroupFamily = GroupFamily.G0, seed=None) -> MobiusElement:
    """Random element of ``K_n``, ``n = ceil(bound)``; deterministic in ``seed``."""
    if bound < 1:
        raise ValueError("bound must be >= 1")
    family = GroupFamily(family)
    rng = _rng(seed)
    log_b = math.log(bound)
    if family is GroupFamily.G0:
        a2 = math.exp(rng.uniform(0.0, log_b))
        u1 = random_rotation(rng).matrix
        u2 = random_rotation(rng).matrix
        a = math.sqrt(a2)
        return MobiusElement(u1 @ np.diag([a, 1 / a]) @ u2)
    r = math.exp(rng.uniform(-log_b, log_b))
    alpha = r * np.exp(1j * rng.uniform(-math.pi, math.pi))
    if family is GroupFamily.G2:
        return dilation(alpha)
    rad = bound * math.sqrt(rng.uniform())
    c = rad * np.exp(1j * rng.uniform(-math.pi, math.pi))
    return affine(alpha, c)


def escape_sequence(family: GroupFamily, mode: str, n: int) -> MobiusElement:
    """n-th term of a sequence leaving every compact set ``K_m``.

    Dilations use the chart factor ``2**n`` (or ``2**-n``); translations use
    ``z -> z - (n + 1)``. The n-th term is outside ``K_n``.
    """
    family = GroupFamily(family)
    if n < 1:
        raise ValueError("n must be a positive integer")
    if mode == "dilate_to_inf":
        return dilation(2.0**n)
    if mode == "dilate_to_zero":
        return dilation(2.0**-n)
    if mode == "translate_to_inf":
        if family is GroupFamily.G2:
            raise InvalidMode("translations do not fix 0; not available in G2")
        return translation(-(n + 1))
    raise InvalidMode(f"unknown escape mode {mode!r}")


def element_distance(g1: MobiusElement, g2: MobiusElement) -> float:
    """Distance of the lifts modulo sign (Frobenius)."""
    m1, m2 = g1.matrix, g2.matrix
    return float(min(np.linalg.norm(m1 - m2), np.linalg.norm(m1 + m2)))
