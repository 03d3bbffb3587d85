"""Experiments probing properness of the reparametrization action.

Each experiment returns an :class:`ExperimentReport`: a self-describing,
seed-reproducible record of what was probed and what was observed. Sampling
is budget bounded, so a passing report is a witness, not a proof.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import __version__, mobius
from .functionals import (
    CalibrationReport,
    c0_distance,
    diameter,
    energy,
    sobolev_distance,
    sobolev_norm,
)
from .mapspace import DiscreteMap, SobolevParams, _check_compatible, bump_perturb, pullback
from .mobius import GroupFamily, MobiusElement
from .sphere import SphericalRegion

__all__ = [
    "ConstantMapRejected",
    "SameOrbitSuspected",
    "ZeroGap",
    "NeighborhoodSpec",
    "StabilizerEstimate",
    "ExperimentReport",
    "resampling_error",
    "orbit_escape_experiment",
    "separation_experiment",
    "energy_separation_threshold",
    "stabilizer_search",
    "precompact_witness",
    "align",
    "worker_count",
]

MESH_TOL = 1e-9
ESCAPE_N_MAX = 12
RESOLVED_A_FACTOR = 4.0


class ConstantMapRejected(ValueError):
    pass


class SameOrbitSuspected(ValueError):
    pass


class ZeroGap(ValueError):
    pass


def worker_count() -> int:
    env = os.environ.get("REPARAM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(fn, items):
    # ordered map keeps records in seed order whatever the worker count
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _distance(f: DiscreteMap, h: DiscreteMap, norm: SobolevParams | None) -> float:
    return c0_distance(f, h) if norm is None else sobolev_distance(f, h, norm)


def _norm_name(norm: SobolevParams | None):
    return "C0" if norm is None else norm.to_dict()


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Open ball ``{h : distance(center, h) < radius}``; ``norm=None`` means C0."""

    center: DiscreteMap
    radius: float
    norm: SobolevParams | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def distance(self, h: DiscreteMap) -> float:
        return _distance(self.center, h, self.norm)

    def contains(self, h: DiscreteMap) -> bool:
        return self.distance(h) < self.radius


def resampling_error(f: DiscreteMap, norm: SobolevParams | None = None, n_rot: int = 3, seed: int = 12345) -> float:
    """Empirical error of one resampling of ``f``.

    Half the largest round-trip error ``f -> f o r -> f o r o r^-1`` over a
    few fixed random rotations ``r``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_rot):
        r = mobius.random_rotation(rng)
        back = pullback(pullback(f, r), mobius.inverse(r))
        worst = max(worst, _distance(back, f, norm) / 2)
    return worst


def _check_nonconstant(f: DiscreteMap, what: str = "f"):
    if diameter(f) <= 10 * MESH_TOL:
        raise ConstantMapRejected(f"{what} is constant; the statement needs a non-constant map")


def _jsonable(x):
    if isinstance(x, MobiusElement):
        return x.to_list()
    if isinstance(x, SobolevParams):
        return x.to_dict()
    if isinstance(x, GroupFamily):
        return x.value
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


CSV_COLUMNS = ("step", "n", "distance", "energy_f", "energy_h")


@dataclass
class ExperimentReport:
    name: str
    parameters: dict
    records: list = field(default_factory=list)
    verdict: bool = False
    witnesses: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "experiment": self.name,
                "version": __version__,
                "parameters": self.parameters,
                "verdict": "pass" if self.verdict else "fail",
                "records": self.records,
                "witnesses": self.witnesses,
                "diagnostics": self.diagnostics,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        extra = sorted({k for r in self.records for k in r} - set(CSV_COLUMNS))
        cols = list(CSV_COLUMNS) + extra
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, restval="", extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for i, r in enumerate(self.records):
            row = {k: _csv_cell(v) for k, v in _jsonable(r).items()}
            row.setdefault("step", i)
            w.writerow(row)
        return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return v


def _radius_where_diameter_exceeds(f: DiscreteMap, target: float) -> float | None:
    """Smallest chart-disc radius about 0 on which the image diameter exceeds ``target``."""
    lo, hi = 1e-4, 1e4

    def big(r):
        try:
            return diameter(f, SphericalRegion.chart_disc(0j, r)) > target
        except ValueError:
            return False

    if not big(hi):
        return None
    if big(lo):
        return lo
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        if big(mid):
            hi = mid
        else:
            lo = mid
    return hi


def orbit_escape_experiment(
    f: DiscreteMap,
    family: GroupFamily,
    mode: str,
    n_max: int,
    nbhd: NeighborhoodSpec,
    n_min: int = 1,
    seed: int | None = None,
) -> ExperimentReport:
    """Distance from ``f`` to ``f o g_n`` along an escape sequence.

    Passes when from some index on every probed term stays outside the
    neighborhood. ``mode="rotate"`` is a control: random rotations (``seed``
    required) replace the escape sequence and the run is labelled
    non-escaping.
    """
    family = GroupFamily(family)
    _check_nonconstant(f)
    if nbhd.center is not f and _distance(nbhd.center, f, nbhd.norm) != 0:
        raise ValueError("neighborhood must be centred at f")
    control = mode == "rotate"
    if control and seed is None:
        raise ValueError("the rotation control needs a seed")
    rng = np.random.default_rng(seed)
    e_f = energy(f)
    records = []
    for n in range(n_min, n_max + 1):
        g = mobius.random_rotation(rng) if control else mobius.escape_sequence(family, mode, n)
        h = pullback(f, g)
        d = nbhd.distance(h)
        records.append(
            {
                "n": n,
                "distance": d,
                "energy_f": e_f,
                "energy_h": energy(h),
                "outside": d >= nbhd.radius,
                "in_K_n_minus_1": None if n < 2 or control else mobius.in_compact_set(g, mobius.CompactExhaustionIndex(n - 1, family)),
                "g": g,
            }
        )
    first_exit = None
    for i in range(len(records)):
        if all(r["outside"] for r in records[i:]):
            first_exit = records[i]["n"]
            break
    diam = diameter(f)
    diagnostics = {
        "first_exit": first_exit,
        "diameter_f": diam,
        "resampling_bound": f.resampling_bound(),
        "disc_radius_half_diameter": _radius_where_diameter_exceeds(f, diam / 2),
        "escaping": not control,
    }
    if control:
        verdict = all(r["distance"] <= diam + 1e-12 for r in records)
    else:
        verdict = first_exit is not None
    params = {
        "family": family,
        "mode": mode,
        "n_min": n_min,
        "n_max": n_max,
        "eps": nbhd.radius,
        "norm": _norm_name(nbhd.norm),
        "mesh_level": f.level,
        "seed": seed,
    }
    return ExperimentReport("escape", params, records, verdict, {}, diagnostics)


def energy_separation_threshold(
    f1: DiscreteMap, f2: DiscreteMap, calib: CalibrationReport, gap_tol: float | None = None
) -> float:
    """Positive root of ``2 C eps (|f1| + |f2| + eps) = delta``, ``delta = |E(f1) - E(f2)|``.

    Every smaller ``eps`` keeps ``delta - 2 C eps (|f1| + |f2| + eps)`` positive.
    ``gap_tol`` defaults to 2% of ``max(E(f1), E(f2), 1)``, the conformal
    invariance tolerance of the discrete energy.
    """
    e1, e2 = energy(f1), energy(f2)
    delta = abs(e1 - e2)
    if gap_tol is None:
        gap_tol = 0.02 * max(e1, e2, 1.0)
    if delta <= gap_tol:
        raise ZeroGap(f"energy gap {delta:.3g} is within the quadrature tolerance {gap_tol:.3g}")
    C = calib.constant_estimate
    if not C > 0:
        raise ValueError("calibration constant must be positive")
    s = sobolev_norm(f1, calib.params) + sobolev_norm(f2, calib.params)
    return (-s + math.sqrt(s * s + 2 * delta / C)) / 2


def _sample_nearby(f: DiscreteMap, eps: float, norm, rng: np.random.Generator) -> DiscreteMap:
    """Random bump perturbation of ``f`` strictly inside ``U_eps(f)``."""
    center = rng.normal(size=3)
    radius = rng.uniform(0.3, 1.2)
    amp = rng.uniform(0.0, 0.45)
    dseed = int(rng.integers(2**31))
    for _ in range(40):
        h = bump_perturb(f, center, radius, amp, seed=dseed)
        if _distance(f, h, norm) < eps:
            return h
        amp /= 2
    return f


def _random_probe(rng: np.random.Generator, bound: float, escape_prob: float = 0.2) -> MobiusElement:
    if rng.uniform() < escape_prob:
        fam = [GroupFamily.G2, GroupFamily.G1][int(rng.integers(2))]
        modes = ["dilate_to_zero", "dilate_to_inf"] + (["translate_to_inf"] if fam is GroupFamily.G1 else [])
        mode = modes[int(rng.integers(len(modes)))]
        g = mobius.escape_sequence(fam, mode, int(rng.integers(1, ESCAPE_N_MAX + 1)))
        return mobius.compose(mobius.random_rotation(rng), mobius.compose(g, mobius.random_rotation(rng)))
    return mobius.random_element(bound, GroupFamily.G0, rng)


def _orbit_certificate(f1, f2, eps_sum, params, seed, gap_tol=None):
    c1 = f1.is_constant(MESH_TOL)
    c2 = f2.is_constant(MESH_TOL)
    if c1 and c2:
        gap = float(np.abs(f1.values[0] - f2.values[0]).max())
        if gap <= MESH_TOL:
            raise SameOrbitSuspected("both maps are the same constant")
        return {"kind": "distinct_constants", "value": gap}
    if c1 or c2:
        return {"kind": "constant_vs_nonconstant", "value": max(diameter(f1), diameter(f2))}
    e1, e2 = energy(f1), energy(f2)
    tol = 0.02 * max(e1, e2, 1.0) if gap_tol is None else gap_tol
    if abs(e1 - e2) > tol:
        return {"kind": "energy_gap", "value": abs(e1 - e2)}
    _, res = align(f1, f2, params, budget=600, seed=seed)
    if res <= 3 * eps_sum:
        raise SameOrbitSuspected(f"registration residual {res:.3g} within 3(eps1+eps2) = {3 * eps_sum:.3g}")
    return {"kind": "registration", "value": res}


def separation_experiment(
    f1: DiscreteMap,
    f2: DiscreteMap,
    eps1: float,
    eps2: float,
    sample_budget: int,
    seed: int,
    params: SobolevParams = SobolevParams(),
    bound: float = 16.0,
    energy_check: bool | None = None,
) -> ExperimentReport:
    """Sample ``k_i = h_i o g_i`` with ``h_i`` in ``U_eps_i(f_i)`` and measure their separation.

    Passes when every sampled pair is at positive distance. When the energies
    differ the energy-gap certificate ``E(k1) != E(k2)`` is also checked and
    reported, on the samples whose group elements have a-factor at most
    ``RESOLVED_A_FACTOR`` (beyond that the mesh no longer resolves ``h o g``).
    """
    cert = _orbit_certificate(f1, f2, eps1 + eps2, params, seed)
    if energy_check is None:
        energy_check = cert["kind"] in ("energy_gap", "constant_vs_nonconstant")
    rng = np.random.default_rng(seed)
    sample_seeds = rng.integers(2**63 - 1, size=sample_budget)

    def one(s):
        r = np.random.default_rng(int(s))
        h1 = _sample_nearby(f1, eps1, params, r)
        h2 = _sample_nearby(f2, eps2, params, r)
        g1 = _random_probe(r, bound)
        g2 = _random_probe(r, bound)
        k1, k2 = pullback(h1, g1), pullback(h2, g2)
        e1, e2 = energy(k1), energy(k2)
        return {
            "distance": sobolev_distance(k1, k2, params),
            "energy_f": e1,
            "energy_h": e2,
            "d_h1": sobolev_distance(f1, h1, params),
            "d_h2": sobolev_distance(f2, h2, params),
            "a_g1": mobius.a_factor(g1),
            "a_g2": mobius.a_factor(g2),
        }

    records = _pmap(one, sample_seeds)
    for i, r in enumerate(records):
        r["step"] = i
        r["energy_gap"] = abs(r["energy_f"] - r["energy_h"])
    min_d = min(r["distance"] for r in records) if records else math.inf
    min_gap = min(r["energy_gap"] for r in records) if records else math.inf
    # the discrete energy is only conformally invariant on resolved elements
    resolved = [r["energy_gap"] for r in records if max(r["a_g1"], r["a_g2"]) <= RESOLVED_A_FACTOR]
    verdict = min_d > 0
    e1, e2 = energy(f1), energy(f2)
    diagnostics = {
        "min_distance": min_d,
        "min_energy_gap": min_gap,
        "energy_f1": e1,
        "energy_f2": e2,
        "energy_certificate": energy_check,
        "energy_certificate_holds": bool(min(resolved, default=math.inf) > 0) if energy_check else None,
        "min_energy_gap_resolved": min(resolved, default=None),
        "resolved_samples": len(resolved),
        "orbit_certificate": cert,
        "max_a_factor": max((max(r["a_g1"], r["a_g2"]) for r in records), default=1.0),
    }
    parameters = {
        "eps1": eps1,
        "eps2": eps2,
        "sample_budget": sample_budget,
        "seed": seed,
        "norm": params,
        "bound": bound,
        "mesh_level": f1.level,
    }
    return ExperimentReport("separate", parameters, records, verdict, {}, diagnostics)


@dataclass
class StabilizerEstimate:
    candidates: list
    threshold: float
    max_a_factor: float
    verdict: str
    clusters: list = field(default_factory=list)
    escape_min_residual: float = math.inf
    probed: int = 0
    circle_axis: tuple | None = None

    def to_dict(self) -> dict:
        return _jsonable(
            {
                "candidates": [{"g": g, "residual": r} for g, r in self.candidates],
                "threshold": self.threshold,
                "max_a_factor": self.max_a_factor,
                "verdict": self.verdict,
                "clusters": [{"g": g, "residual": r} for g, r in self.clusters],
                "escape_min_residual": self.escape_min_residual,
                "probed": self.probed,
                "circle_axis": self.circle_axis,
            }
        )


def _coordinate_descent(objective, start: MobiusElement, max_evals: int, step0: float = 0.25, step_min: float = 1e-6):
    """Pattern search over the 6 real coordinates of ``g = start exp(X)``."""
    theta = np.zeros(6)
    best_g = start
    best = objective(start)
    evals = 1
    step = step0
    while step >= step_min and evals < max_evals:
        improved = False
        for j in range(6):
            for sgn in (1.0, -1.0):
                if evals >= max_evals:
                    break
                trial = theta.copy()
                trial[j] += sgn * step
                g = mobius.MobiusElement(start.matrix @ mobius.exp_traceless(trial))
                val = objective(g)
                evals += 1
                if val < best:
                    best, best_g, theta = val, g, trial
                    improved = True
                    break
        if not improved:
            step /= 2
    return best_g, best, evals


def _cluster(cands, radius: float = 0.2):
    reps = []
    for g, r in sorted(cands, key=lambda c: c[1]):
        if all(mobius.element_distance(g, h) > radius for h, _ in reps):
            reps.append((g, r))
    return reps


def _rotation_axis(g: MobiusElement):
    k = mobius.kak_decompose(g)
    u = k.u1 @ k.u2
    from .moment import OrientedRotation

    rot = OrientedRotation.from_su2(u)
    return rot.axis, rot.angle


def stabilizer_search(
    f: DiscreteMap,
    threshold: float | None = None,
    budget: int = 400,
    n: int = 4,
    seed: int = 0,
    norm: SobolevParams | None = None,
    refine_seeds: int = 8,
    scan_points: int = 72,
) -> StabilizerEstimate:
    """Probe ``{g : distance(f o g, f) <= threshold}``.

    Probes random elements of ``K_n`` (half of them rotations), every escape
    sequence up to index 12, and refines the most promising samples by
    coordinate descent. A non-trivial accepted rotation triggers a scan of
    its one-parameter subgroup; if the whole circle is accepted the verdict is
    ``circle-like``. ``threshold`` defaults to three times the empirical
    resampling error.
    """
    _check_nonconstant(f)
    if threshold is None:
        threshold = 3 * resampling_error(f, norm)
    rng = np.random.default_rng(seed)

    def residual(g):
        return _distance(pullback(f, g), f, norm)

    samples = []
    for i in range(budget):
        g = mobius.random_rotation(rng) if i % 2 else mobius.random_element(float(n), GroupFamily.G0, rng)
        samples.append((g, residual(g)))
    probed = len(samples)

    escape_res = []
    for fam, modes in (
        (GroupFamily.G2, ("dilate_to_zero", "dilate_to_inf")),
        (GroupFamily.G1, ("translate_to_inf",)),
    ):
        for mode in modes:
            for k in range(1, ESCAPE_N_MAX + 1):
                escape_res.append(residual(mobius.escape_sequence(fam, mode, k)))
    probed += len(escape_res)

    order = sorted(range(len(samples)), key=lambda i: samples[i][1])
    seeds_idx = set(order[:refine_seeds]) | {i for i, (_, r) in enumerate(samples) if r < 4 * threshold}
    seeds_idx.add(-1)
    accepted = [(g, r) for g, r in samples if r <= threshold]
    for i in sorted(seeds_idx):
        start = mobius.identity() if i == -1 else samples[i][0]
        g, r, ev = _coordinate_descent(residual, start, max_evals=300, step0=0.1, step_min=1e-4)
        probed += ev
        if r <= threshold:
            accepted.append((g, r))

    clusters = _cluster(accepted)
    circle_axis = None
    ident = mobius.identity()
    for g, _ in list(clusters):
        if mobius.element_distance(g, ident) < 0.2 or mobius.a_factor(g) > 1.01:
            continue
        axis, _ = _rotation_axis(g)
        scan = []
        for t in np.linspace(0.0, 2 * math.pi, scan_points, endpoint=False):
            u = mobius.rotation_about(axis, float(t))
            scan.append((u, residual(u)))
        probed += len(scan)
        hits = [(u, r) for u, r in scan if r <= threshold]
        accepted.extend(hits)
        if len(hits) == len(scan):
            circle_axis = tuple(axis)
            break

    clusters = _cluster(accepted)
    max_a = max((mobius.a_factor(g) for g, _ in accepted), default=1.0)
    outside = any(mobius.minimal_compact_index(g) > n for g, _ in accepted)
    esc_min = min(escape_res) if escape_res else math.inf
    if outside or esc_min <= threshold:
        verdict = "noncompact-suspect"
    elif circle_axis is not None:
        verdict = "circle-like"
    else:
        verdict = "finite-like"
    return StabilizerEstimate(accepted, threshold, max_a, verdict, clusters, esc_min, probed, circle_axis)


class _BudgetSpent(Exception):
    pass


def _lsq_from(f: DiscreteMap, h: DiscreteMap, start: MobiusElement, max_evals: int):
    """Bounded least squares on the weighted L2 residual over ``start exp(X)``.

    Returns ``(g, l2_distance, evaluations)``; the best point seen is kept
    when the evaluation budget runs out mid-iteration.
    """
    w = np.sqrt(f.mesh.vertex_weights)[:, None]
    seen = {"n": 0, "cost": math.inf, "x": np.zeros(6)}

    def resid(x):
        if seen["n"] >= max_evals:
            raise _BudgetSpent
        seen["n"] += 1
        g = mobius.MobiusElement(start.matrix @ mobius.exp_traceless(x))
        r = (w * (pullback(f, g).values - h.values)).ravel()
        c = float(r @ r)
        if c < seen["cost"]:
            seen["cost"], seen["x"] = c, np.array(x, dtype=float)
        return r

    try:
        sol = least_squares(resid, np.zeros(6), method="trf", diff_step=1e-6, bounds=(-2.5, 2.5), xtol=1e-12, ftol=1e-14)
        x = sol.x if 2 * sol.cost <= seen["cost"] else seen["x"]
    except _BudgetSpent:
        x = seen["x"]
    g = mobius.MobiusElement(start.matrix @ mobius.exp_traceless(x))
    return g, math.sqrt(max(seen["cost"], 0.0)), seen["n"]


def align(
    f: DiscreteMap,
    h: DiscreteMap,
    params: SobolevParams | None = SobolevParams(),
    budget: int = 2000,
    seed: int = 0,
    n_starts: int = 6,
    n_polish: int = 3,
):
    """Approximate ``argmin_g distance(f o g, h)`` over the full group.

    Starts are the identity and random elements of ``K_4``. From each start a
    bounded least-squares fit of the values (L2 distance, smooth in ``g``)
    runs with a finite-difference Jacobian; the best distinct local minima
    are then polished on the requested distance by pattern search, and the
    best of those is returned as ``(g, residual)``. ``params=None`` means the
    C0 distance. ``budget`` caps the number of map resamplings.
    """
    _check_nonconstant(f, "f")
    _check_nonconstant(h, "h")
    _check_compatible(f, h)
    rng = np.random.default_rng(seed)
    starts = [mobius.identity()] + [mobius.random_element(4.0, GroupFamily.G0, rng) for _ in range(n_starts - 1)]

    def target(g):
        return _distance(pullback(f, g), h, params)

    fit_budget = max(20, (2 * budget) // (3 * len(starts)))
    runs = []
    for s in starts:
        g, l2, _ = _lsq_from(f, h, s, fit_budget)
        runs.append((l2, g))
        if l2 <= 1e-12:
            break
    runs.sort(key=lambda t: t[0])
    picked = []
    for val, g in runs:
        if all(mobius.element_distance(g, q) > 0.1 for _, q in picked):
            picked.append((val, g))
        if len(picked) == n_polish:
            break
    best_g, best = mobius.identity(), target(mobius.identity())
    polish = max(13, budget // (3 * len(picked)))
    for _, g in picked:
        if params != _L2:
            g, val, _ = _coordinate_descent(target, g, polish, step0=1e-3, step_min=1e-9)
        else:
            val = target(g)
        if val < best:
            best_g, best = g, val
    return best_g, best


_L2 = SobolevParams(0, 2.0, strict=False)


def precompact_witness(
    f1: DiscreteMap,
    f2: DiscreteMap,
    eps: float,
    sample_budget: int,
    seed: int,
    norm: SobolevParams | None = None,
    bound: float = 16.0,
    centers: list | None = None,
) -> ExperimentReport:
    """Record the ``g`` with ``h o g`` in ``U_eps(f2)`` for sampled ``h`` in ``U_eps(f1)``.

    Sampling mixes random elements of ``K_bound`` with local samples around
    ``centers`` (default: the identity and the registration of ``f1`` onto
    ``f2``). Every escape sequence up to index 12 is probed with ``h = f1``.
    Passes when each escape element is either excluded from ``U_eps(f2)`` or
    still inside the ``K_N`` of the recorded hull, and the last element of
    every sequence is excluded. The hull (a-factor range and compact index
    ``N``) is the witness.
    """
    _check_nonconstant(f1, "f1")
    _check_nonconstant(f2, "f2")
    rng = np.random.default_rng(seed)
    if centers is None:
        g_reg, res = align(f1, f2, norm, budget=600, seed=seed)
        centers = [mobius.identity(), g_reg]
    scales = (0.3, 0.1, 0.03, 0.01)
    plan = []
    for i in range(sample_budget):
        s = int(rng.integers(2**63 - 1))
        if i % 5 < 2:
            plan.append(("global", None, None, s))
        else:
            plan.append(("local", (i // 5) % len(centers), scales[i % len(scales)], s))

    def one(item):
        kind, ci, scale, s = item
        r = np.random.default_rng(s)
        h = f1 if r.uniform() < 0.25 else _sample_nearby(f1, eps, norm, r)
        if kind == "global":
            g = mobius.random_element(bound, GroupFamily.G0, r)
        else:
            x = r.normal(size=6) * scale
            g = mobius.MobiusElement(centers[ci].matrix @ mobius.exp_traceless(x))
        d = _distance(pullback(h, g), f2, norm)
        return {"kind": kind, "distance": d, "recorded": d < eps, "a_factor": mobius.a_factor(g), "g": g}

    records = _pmap(one, plan)
    for i, r in enumerate(records):
        r["step"] = i
    recorded = [r for r in records if r["recorded"]]

    if recorded:
        a_vals = [r["a_factor"] for r in recorded]
        hull = {
            "a_min": min(a_vals),
            "a_max": max(a_vals),
            "N": max(mobius.minimal_compact_index(r["g"]) for r in recorded),
            "count": len(recorded),
        }
    else:
        hull = {"a_min": None, "a_max": None, "N": None, "count": 0, "vacuous": True}

    # an escape element may only enter U_eps(f2) while it is still inside the
    # hull's K_N; the tail of every sequence has to stay out
    n_hull = hull["N"] or 1
    escapes = []
    tails_ok = True
    for fam, modes in (
        (GroupFamily.G2, ("dilate_to_zero", "dilate_to_inf")),
        (GroupFamily.G1, ("translate_to_inf",)),
    ):
        for mode in modes:
            for k in range(1, ESCAPE_N_MAX + 1):
                g = mobius.escape_sequence(fam, mode, k)
                d = _distance(pullback(f1, g), f2, norm)
                inside = mobius.in_compact_set(g, mobius.CompactExhaustionIndex(n_hull))
                escapes.append(
                    {"family": fam, "mode": mode, "n": k, "distance": d, "excluded": d >= eps, "in_K_N": inside}
                )
            tails_ok = tails_ok and escapes[-1]["excluded"]
    escapes_ok = tails_ok and all(e["excluded"] or e["in_K_N"] for e in escapes)
    diagnostics = {
        "hull": hull,
        "escape_probes": escapes,
        "escape_verdict": escapes_ok,
        "all_escape_probes_excluded": all(e["excluded"] for e in escapes),
    }
    parameters = {
        "eps": eps,
        "sample_budget": sample_budget,
        "seed": seed,
        "norm": _norm_name(norm),
        "bound": bound,
        "centers": [c.to_list() for c in centers],
        "mesh_level": f1.level,
    }
    witnesses = {"hull": hull, "recorded": [r["g"] for r in recorded]}
    return ExperimentReport("precompact", parameters, records, escapes_ok, witnesses, diagnostics)
