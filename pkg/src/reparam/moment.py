"""Pseudo-moment map of the rotation group and centering along the non-compact directions."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import mobius
from .functionals import volume
from .mapspace import DiscreteMap, pullback
from .mobius import MobiusElement
from .sphere import SphericalRegion

__all__ = [
    "OrientedRotation",
    "MomentVector",
    "CenteringResult",
    "NotVStable",
    "NoConvergence",
    "VOLUME_FLOOR",
    "cap_level",
    "pseudo_moment_pair",
    "pseudo_moment",
    "moment_sensitivity",
    "straddle_area",
    "hermitian_exp",
    "center_map",
]

VOLUME_FLOOR = 1e-6 * 4 * math.pi
AXES = np.eye(3)


class NotVStable(ValueError):
    """Image volume is below the floor; the map has no well-defined centering."""


class NoConvergence(UserWarning):
    pass


@dataclass(frozen=True)
class OrientedRotation:
    """Rotation with an oriented axis that survives at angle 0 and pi."""

    axis: tuple
    angle: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(a)
        if not n > 0:
            raise ValueError("axis must be non-zero")
        if not 0.0 <= self.angle <= math.pi:
            raise ValueError("angle must lie in [0, pi]")
        object.__setattr__(self, "axis", tuple(float(x) for x in a / n))

    @classmethod
    def from_su2(cls, u, axis_hint=(0.0, 0.0, 1.0)) -> "OrientedRotation":
        """Read axis and angle off an SU(2) lift; ``axis_hint`` is kept at +-identity."""
        u = np.asarray(u, dtype=complex)
        # u = cos(t/2) I + i sin(t/2) (n_x sx - n_y sy + n_z sz)
        s = np.array([u[0, 1].imag, -u[0, 1].real, u[0, 0].imag])
        c = u[0, 0].real
        sn = np.linalg.norm(s)
        if sn < 1e-12:
            return cls(axis_hint, 0.0 if c > 0 else math.pi)
        angle = 2 * math.atan2(sn, c)
        axis = s / sn
        if angle > math.pi:
            angle = 2 * math.pi - angle
            axis = -axis
        return cls(tuple(axis), angle)

    def element(self) -> MobiusElement:
        return mobius.rotation_about(self.axis, self.angle)


@dataclass(frozen=True)
class MomentVector:
    components: tuple

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))

    def to_list(self) -> list[float]:
        return [float(c) for c in self.components]


def cap_level(f: DiscreteMap, axis) -> float:
    """Midpoint of the height function's range over the mesh."""
    h = f.mesh.vertices @ np.asarray(axis, dtype=float)
    return float((h.max() + h.min()) / 2)


def _pair(f: DiscreteMap, axis, total: float, shift: float = 0.0) -> float:
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    cap = SphericalRegion.cap(tuple(ax), cap_level(f, ax) + shift)
    return total / 2 - volume(f, cap, rule="clip")


def pseudo_moment_pair(f: DiscreteMap, rot: OrientedRotation) -> float:
    """``v(f)/2 - v(f restricted to the lower half-sphere of rot.axis)``."""
    return _pair(f, rot.axis, volume(f))


def pseudo_moment(f: DiscreteMap) -> MomentVector:
    """The pairings with rotations about the x, y and z axes."""
    total = volume(f)
    return MomentVector(tuple(_pair(f, ax, total) for ax in AXES))


def moment_sensitivity(f: DiscreteMap, axis) -> float:
    """Half the change of the pairing when the cap level moves by one edge length."""
    total = volume(f)
    h = f.mesh.max_edge_length
    return abs(_pair(f, axis, total, h) - _pair(f, axis, total, -h)) / 2


def straddle_area(f: DiscreteMap, axis) -> float:
    """Image area of faces cut by the cap plane."""
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    cap = SphericalRegion.cap(tuple(ax), cap_level(f, ax))
    inside = cap.contains(f.mesh.vertices)[f.mesh.faces]
    cut = inside.any(axis=1) & ~inside.all(axis=1)
    from .functionals import _image_areas

    return float(_image_areas(f)[cut].sum())


_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def hermitian_exp(t) -> MobiusElement:
    """``exp(t_x sx + t_y sy + t_z sz)``, a positive-definite element."""
    t = np.asarray(t, dtype=float)
    r = float(np.linalg.norm(t))
    if r == 0.0:
        return mobius.identity()
    n = sum(ti * s for ti, s in zip(t / r, _PAULI))
    return MobiusElement(math.cosh(r) * np.eye(2) + math.sinh(r) * n)


@dataclass
class CenteringResult:
    g: MobiusElement
    f_centered: DiscreteMap
    residual: float
    converged: bool
    iterations: int
    params: tuple = (0.0, 0.0, 0.0)

    def __iter__(self):
        return iter((self.g, self.f_centered, self.residual))


def _moment_at(f: DiscreteMap, t) -> np.ndarray:
    return np.asarray(pseudo_moment(pullback(f, hermitian_exp(t))))


def center_map(
    f: DiscreteMap,
    tol: float | None = None,
    max_iter: int = 50,
    volume_floor: float = VOLUME_FLOOR,
    fd_step: float = 1e-4,
) -> CenteringResult:
    """Find positive-definite ``g`` with ``pseudo_moment(f o g)`` near zero.

    Damped Newton on the three Hermitian-exponential parameters with a
    forward-difference Jacobian; when the damped step stalls, a bisection
    along the dominant residual component is tried. ``tol`` defaults to
    ``1e-3 * v(f)``. Without convergence the best iterate is returned with
    ``converged=False`` and a ``NoConvergence`` warning.
    """
    v = volume(f)
    if v <= volume_floor:
        raise NotVStable(f"image volume {v:.3g} is below the floor {volume_floor:.3g}")
    if tol is None:
        tol = 1e-3 * v
    if tol <= 0:
        raise ValueError("tol must be positive")
    t = np.zeros(3)
    m = _moment_at(f, t)
    r = float(np.linalg.norm(m))
    it = 0
    while r > tol and it < max_iter:
        it += 1
        jac = np.empty((3, 3))
        for j in range(3):
            dt = np.zeros(3)
            dt[j] = fd_step
            jac[:, j] = (_moment_at(f, t + dt) - m) / fd_step
        try:
            step = -np.linalg.solve(jac, m)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(jac, m, rcond=None)[0]
        # cap the step: one unit of t is a chart factor of e^2
        sn = np.linalg.norm(step)
        if sn > 1.0:
            step /= sn
        lam = 1.0
        accepted = False
        while lam > 1e-4:
            t_new = t + lam * step
            m_new = _moment_at(f, t_new)
            r_new = float(np.linalg.norm(m_new))
            if r_new < r:
                t, m, r = t_new, m_new, r_new
                accepted = True
                break
            lam /= 2
        if not accepted:
            t, m, r = _bisect_dominant(f, t, m, r)
            if not r < float(np.linalg.norm(m)) and it > 1:
                break
    g = hermitian_exp(t)
    converged = r <= tol
    if not converged:
        warnings.warn(f"centering stopped at residual {r:.3g} > tol {tol:.3g}", NoConvergence, stacklevel=2)
    return CenteringResult(g, pullback(f, g), r, converged, it, tuple(float(x) for x in t))


def _bisect_dominant(f, t, m, r):
    # the z-parameter moves the z-moment with negative slope, same for x, y
    j = int(np.argmax(np.abs(m)))
    lo, hi = 0.0, float(np.sign(m[j])) * 2.0
    best = (t, m, r)
    for _ in range(40):
        mid = (lo + hi) / 2
        tt = t.copy()
        tt[j] += mid
        mm = _moment_at(f, tt)
        rr = float(np.linalg.norm(mm))
        if rr < best[2]:
            best = (tt, mm, rr)
        if np.sign(mm[j]) == np.sign(m[j]):
            lo = mid
        else:
            hi = mid
    return best
