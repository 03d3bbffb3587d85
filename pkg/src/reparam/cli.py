"""Command-line entry point: ``reparam <command> ...``.

Exit status is 0 on success, 1 when an experiment verdict is "fail" and 2
on usage or input errors. Reports are JSON with sorted keys and no
timestamps, so identical arguments give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, mobius
from .functionals import (
    c0_distance,
    calibrate_energy_bound,
    diameter,
    energy,
    sobolev_norm,
    v1_energy,
    volume,
)
from .mapspace import DiscreteMap, MeshMismatch, SobolevParams, pullback, stock_map
from .mobius import ESCAPE_MODES, GroupFamily, MobiusElement
from .moment import NoConvergence, NotVStable, center_map, pseudo_moment
from .properness import (
    ConstantMapRejected,
    ExperimentReport,
    NeighborhoodSpec,
    SameOrbitSuspected,
    ZeroGap,
    _jsonable,
    align,
    energy_separation_threshold,
    orbit_escape_experiment,
    precompact_witness,
    separation_experiment,
    stabilizer_search,
)
from .sphere import LevelTooLarge, SphericalRegion, build_icosphere

STOCK_NAMES = ("identity", "antipodal", "constant", "power", "axis", "radial")


class UsageError(Exception):
    def __init__(self, flag: str, msg: str):
        super().__init__(f"{flag}: {msg}")
        self.flag = flag


@dataclass
class RunConfig:
    command: str
    mesh_level: int | None = None
    target: str | None = None
    sobolev: dict | None = None
    seed: int | None = None
    tolerances: dict = field(default_factory=dict)
    out_dir: str | None = None

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


# ---------------------------------------------------------------- helpers


def _load_map(path: str, flag: str) -> DiscreteMap:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(flag, f"cannot read {path!r} ({e.strerror})") from None
    try:
        return DiscreteMap.from_json(text)
    except (ValueError, KeyError, TypeError) as e:
        raise UsageError(flag, f"{path!r} is not a valid map file ({e})") from None


def _floats(text: str, n: int, flag: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(flag, f"expected {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(flag, f"expected {n} comma-separated numbers, got {len(vals)}")
    return vals


def _params(args) -> SobolevParams:
    try:
        return SobolevParams(args.k, args.p, strict=not args.diagnostic)
    except ValueError as e:
        raise UsageError("--k/--p", str(e)) from None


def _norm(args):
    return None if args.norm == "c0" else _params(args)


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2)


def _emit(args, name: str, payload: dict, report: ExperimentReport | None = None):
    text = _dump(payload) + "\n"
    out = getattr(args, "out", None)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{name}.json").write_text(text)
        if report is not None:
            (d / f"{name}.csv").write_text(report.to_csv())
        verdict = payload.get("verdict")
        print(f"{name}: wrote {d / (name + '.json')}" + (f" (verdict {verdict})" if verdict else ""))
    else:
        sys.stdout.write(text)


def _experiment_payload(cfg: RunConfig, report: ExperimentReport) -> dict:
    d = report.to_dict()
    d["config"] = cfg.to_dict()
    return d


def _cfg(args, f: DiscreteMap | None = None, **kw) -> RunConfig:
    sob = None
    if getattr(args, "k", None) is not None and getattr(args, "norm", "sobolev") != "c0":
        sob = {"k": args.k, "p": args.p}
    return RunConfig(
        command=args.command if args.command != "experiment" else f"experiment {args.verb}",
        mesh_level=f.level if f is not None else getattr(args, "level", None),
        target=f.target.name if f is not None else None,
        sobolev=sob,
        seed=getattr(args, "seed", None),
        out_dir=getattr(args, "out", None),
        **kw,
    )


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    try:
        mesh = build_icosphere(args.level)
    except LevelTooLarge as e:
        raise UsageError("--level", str(e)) from None
    kw = {}
    name = args.map
    if name == "power":
        kw["d"] = args.d
        name = f"power{args.d}"
    if args.q is not None:
        kw["q"] = tuple(_floats(args.q, 3, "--q"))
    f = stock_map(mesh, name, **kw)
    Path(args.out).write_text(f.to_json() + "\n")
    return 0


def _element(args) -> MobiusElement:
    given = [a for a in ("g", "dilation", "rotation", "translation", "random") if getattr(args, a) is not None]
    if len(given) != 1:
        raise UsageError("--g/--dilation/--rotation/--translation/--random", "give exactly one group element")
    if args.g is not None:
        v = _floats(args.g, 8, "--g")
        try:
            return MobiusElement.from_list(v)
        except ValueError as e:
            raise UsageError("--g", str(e)) from None
    if args.dilation is not None:
        if not args.dilation > 0:
            raise UsageError("--dilation", "chart factor must be positive")
        return mobius.dilation(args.dilation)
    if args.rotation is not None:
        ax, ay, az, ang = _floats(args.rotation, 4, "--rotation")
        return mobius.rotation_about((ax, ay, az), ang)
    if args.translation is not None:
        re, im = _floats(args.translation, 2, "--translation")
        return mobius.translation(complex(re, im))
    if args.seed is None:
        raise UsageError("--seed", "required with --random")
    return mobius.random_element(args.random, GroupFamily(args.family), seed=args.seed)


def cmd_pullback(args) -> int:
    f = _load_map(args.input, "--in")
    g = _element(args)
    Path(args.out).write_text(pullback(f, g).to_json() + "\n")
    return 0


def cmd_functional(args) -> int:
    f = _load_map(args.input, "--in")
    params = _params(args)
    lower = SphericalRegion.cap((0.0, 0.0, 1.0), 0.0)
    payload = {
        "config": _cfg(args, f).to_dict(),
        "version": __version__,
        "energy": energy(f),
        "volume": volume(f),
        "v1": v1_energy(f, args.m),
        "v1_m": args.m,
        "norms": {
            "sobolev": sobolev_norm(f, params),
            "sobolev_params": params.to_dict(),
            "L2": sobolev_norm(f, SobolevParams(0, 2.0, strict=False)),
            "C0": float(np.linalg.norm(f.values, axis=1).max()),
        },
        "diameters": {
            "whole": diameter(f),
            "lower_hemisphere": diameter(f, lower),
            "upper_hemisphere": diameter(f, lower.complement()),
        },
    }
    _emit(args, "functional", payload)
    return 0


def cmd_moment(args) -> int:
    f = _load_map(args.input, "--in")
    m = pseudo_moment(f)
    cfg = _cfg(args, f, tolerances={"tol": args.tol, "max_iter": args.max_iter})
    payload = {
        "config": cfg.to_dict(),
        "version": __version__,
        "moment": m.to_list(),
        "volume": volume(f),
        "centered": False,
        "g": None,
        "residual": m.norm,
    }
    status = 0
    if args.center:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoConvergence)
            try:
                res = center_map(f, tol=args.tol, max_iter=args.max_iter)
            except NotVStable as e:
                raise UsageError("--in", str(e)) from None
        payload.update(
            centered=bool(res.converged),
            g=res.g,
            a_factor=mobius.a_factor(res.g),
            residual=res.residual,
            iterations=res.iterations,
            moment_after=pseudo_moment(res.f_centered).to_list(),
        )
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            (Path(args.out) / "centered.json").write_text(res.f_centered.to_json() + "\n")
        status = 0 if res.converged else 1
    _emit(args, "moment", payload)
    return status


def cmd_calibrate(args) -> int:
    params = _params(args)
    if args.samples < 10:
        raise UsageError("--samples", "need at least 10 samples")
    rep = calibrate_energy_bound(args.samples, params, seed=args.seed, level=args.level)
    payload = {"config": _cfg(args).to_dict(), "version": __version__, "calibration": rep.to_dict()}
    _emit(args, "calibrate", payload)
    return 0


def exp_escape(args) -> int:
    f = _load_map(args.map, "--map")
    if args.mode == "rotate" and args.seed is None:
        raise UsageError("--seed", "required with --mode rotate")
    norm = _norm(args)
    nbhd = NeighborhoodSpec(f, args.eps, norm)
    rep = orbit_escape_experiment(f, GroupFamily(args.family), args.mode, args.nmax, nbhd, n_min=args.nmin, seed=args.seed)
    cfg = _cfg(args, f, tolerances={"eps": args.eps})
    _emit(args, "escape", _experiment_payload(cfg, rep), rep)
    return 0 if rep.verdict else 1


def exp_separate(args) -> int:
    f1 = _load_map(args.map1, "--map1")
    f2 = _load_map(args.map2, "--map2")
    params = _params(args)
    tol = {}
    eps1, eps2 = args.eps1, args.eps2
    if (eps1 is None) != (eps2 is None):
        raise UsageError("--eps1/--eps2", "give both radii or neither")
    if eps1 is None:
        calib = calibrate_energy_bound(args.calib_samples, params, seed=args.seed, level=f1.level)
        try:
            eps = energy_separation_threshold(f1, f2, calib)
        except ZeroGap as e:
            raise UsageError("--eps1/--eps2", f"{e}; give explicit radii") from None
        eps1 = eps2 = args.radius_fraction * eps
        tol.update(threshold=eps, radius_fraction=args.radius_fraction, calibration=calib.to_dict())
    tol.update(eps1=eps1, eps2=eps2)
    rep = separation_experiment(f1, f2, eps1, eps2, args.budget, args.seed, params)
    _emit(args, "separate", _experiment_payload(_cfg(args, f1, tolerances=tol), rep), rep)
    return 0 if rep.verdict else 1


def exp_stabilizer(args) -> int:
    f = _load_map(args.map, "--map")
    est = stabilizer_search(f, threshold=args.threshold, budget=args.budget, n=args.n, seed=args.seed, norm=_norm(args))
    rep = ExperimentReport(
        "stabilizer",
        {"budget": args.budget, "n": args.n, "norm": args.norm},
        records=[
            {"step": i, "residual": r, "a_factor": mobius.a_factor(g), "g": g} for i, (g, r) in enumerate(est.candidates)
        ],
        verdict=est.verdict != "noncompact-suspect",
        witnesses=est.to_dict(),
        diagnostics={"classification": est.verdict, "threshold": est.threshold},
    )
    cfg = _cfg(args, f, tolerances={"threshold": est.threshold})
    _emit(args, "stabilizer", _experiment_payload(cfg, rep), rep)
    return 0 if rep.verdict else 1


def exp_precompact(args) -> int:
    f1 = _load_map(args.map1, "--map1")
    f2 = _load_map(args.map2, "--map2")
    rep = precompact_witness(f1, f2, args.eps, args.budget, args.seed, norm=_norm(args), bound=args.bound)
    cfg = _cfg(args, f1, tolerances={"eps": args.eps})
    _emit(args, "precompact", _experiment_payload(cfg, rep), rep)
    return 0 if rep.verdict else 1


def exp_align(args) -> int:
    f = _load_map(args.map, "--map")
    h = _load_map(args.target_map, "--target-map")
    g, res = align(f, h, _norm(args), budget=args.budget, seed=args.seed, n_starts=args.starts)
    ok = args.max_residual is None or res <= args.max_residual
    rep = ExperimentReport(
        "align",
        {"budget": args.budget, "starts": args.starts, "norm": args.norm, "max_residual": args.max_residual},
        records=[{"step": 0, "distance": res, "a_factor": mobius.a_factor(g), "g": g}],
        verdict=ok,
        witnesses={"g": g, "residual": res, "c0_residual": c0_distance(pullback(f, g), h)},
    )
    cfg = _cfg(args, f, tolerances={"max_residual": args.max_residual})
    _emit(args, "align", _experiment_payload(cfg, rep), rep)
    return 0 if ok else 1


EXPERIMENTS = {
    "escape": exp_escape,
    "separate": exp_separate,
    "stabilizer": exp_stabilizer,
    "precompact": exp_precompact,
    "align": exp_align,
}


# ---------------------------------------------------------------- parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return v


def _sobolev_flags(p, norm=False):
    p.add_argument("--k", type=int, default=2, help="Sobolev derivative order (0..2)")
    p.add_argument("--p", type=float, default=4.0, help="Sobolev integrability exponent")
    p.add_argument("--diagnostic", action="store_true", help="allow k - 2/p <= 1")
    if norm:
        p.add_argument("--norm", choices=("c0", "sobolev"), default="c0")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reparam", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"reparam {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a stock map file")
    p.add_argument("--map", required=True, choices=STOCK_NAMES)
    p.add_argument("--level", type=int, default=4)
    p.add_argument("--d", type=_positive_int, default=2, help="degree for --map power")
    p.add_argument("--q", help="point x,y,z for --map constant")
    p.add_argument("--out", required=True, help="output map file")

    p = sub.add_parser("pullback", help="precompose a map with a group element")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output map file")
    p.add_argument("--g", help="8 comma-separated reals: re/im of a, b, c, d")
    p.add_argument("--dilation", type=float, help="chart factor of z -> a z")
    p.add_argument("--rotation", help="ax,ay,az,angle")
    p.add_argument("--translation", help="re,im of b in z -> z + b")
    p.add_argument("--random", type=_positive_float, help="draw from K_n with this bound")
    p.add_argument("--family", choices=[f.value for f in GroupFamily], default="G0")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("functional", help="energy, volume, norms and diameters of a map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--m", type=_positive_int, default=2, help="exponent of the v1 energy")
    _sobolev_flags(p)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("moment", help="pseudo-moment map and centering")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--center", action="store_true")
    p.add_argument("--tol", type=_positive_float)
    p.add_argument("--max-iter", type=_positive_int, default=50)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("calibrate", help="estimate the energy-difference constant")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--level", type=int, default=3)
    p.add_argument("--seed", type=int, required=True)
    _sobolev_flags(p)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("experiment", help="run a properness experiment")
    verbs = p.add_subparsers(dest="verb", required=True)

    e = verbs.add_parser("escape")
    e.add_argument("--map", required=True)
    e.add_argument("--family", choices=[f.value for f in GroupFamily], required=True)
    e.add_argument("--mode", choices=sorted(ESCAPE_MODES) + ["rotate"], required=True)
    e.add_argument("--nmax", type=_positive_int, default=12)
    e.add_argument("--nmin", type=_positive_int, default=1)
    e.add_argument("--eps", type=_positive_float, required=True)
    e.add_argument("--seed", type=int, help="required with --mode rotate")
    _sobolev_flags(e, norm=True)
    e.add_argument("--out", help="output directory")

    e = verbs.add_parser("separate")
    e.add_argument("--map1", required=True)
    e.add_argument("--map2", required=True)
    e.add_argument("--eps1", type=_positive_float)
    e.add_argument("--eps2", type=_positive_float)
    e.add_argument("--radius-fraction", type=_positive_float, default=0.49)
    e.add_argument("--calib-samples", type=int, default=200)
    e.add_argument("--budget", type=_positive_int, default=500)
    e.add_argument("--seed", type=int, required=True)
    _sobolev_flags(e)
    e.add_argument("--out", help="output directory")

    e = verbs.add_parser("stabilizer")
    e.add_argument("--map", required=True)
    e.add_argument("--threshold", type=_positive_float)
    e.add_argument("--budget", type=_positive_int, default=400)
    e.add_argument("--n", type=_positive_float, default=4.0)
    e.add_argument("--seed", type=int, required=True)
    _sobolev_flags(e, norm=True)
    e.add_argument("--out", help="output directory")

    e = verbs.add_parser("precompact")
    e.add_argument("--map1", required=True)
    e.add_argument("--map2", required=True)
    e.add_argument("--eps", type=_positive_float, required=True)
    e.add_argument("--budget", type=_positive_int, default=400)
    e.add_argument("--bound", type=_positive_float, default=16.0)
    e.add_argument("--seed", type=int, required=True)
    _sobolev_flags(e, norm=True)
    e.add_argument("--out", help="output directory")

    e = verbs.add_parser("align")
    e.add_argument("--map", required=True)
    e.add_argument("--target-map", required=True)
    e.add_argument("--budget", type=_positive_int, default=2000)
    e.add_argument("--starts", type=_positive_int, default=6)
    e.add_argument("--max-residual", type=_positive_float)
    e.add_argument("--seed", type=int, required=True)
    _sobolev_flags(e)
    e.add_argument("--norm", choices=("c0", "sobolev"), default="sobolev")
    e.add_argument("--out", help="output directory")
    return ap


COMMANDS = {
    "generate": cmd_generate,
    "pullback": cmd_pullback,
    "functional": cmd_functional,
    "moment": cmd_moment,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "experiment":
            return EXPERIMENTS[args.verb](args)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"{ap.prog}: error: {e}", file=sys.stderr)
        return 2
    except (ConstantMapRejected, SameOrbitSuspected, MeshMismatch, NotVStable, ZeroGap, LevelTooLarge) as e:
        print(f"{ap.prog}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
