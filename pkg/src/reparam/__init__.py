"""Moebius reparametrizations of discretized maps from the 2-sphere."""

__version__ = "0.1.0"

from .mobius import GroupFamily, MobiusElement  # noqa: E402
from .sphere import SphereMesh, SphericalRegion, build_icosphere  # noqa: E402
from .mapspace import DiscreteMap, SobolevParams, TargetManifold, pullback  # noqa: E402
