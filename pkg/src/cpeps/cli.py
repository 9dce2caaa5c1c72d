"""Command-line experiment runner.

Exit status: ``0`` success, ``1`` tolerance or invariant failure, ``2``
configuration error, ``3`` resource budget exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from .exceptions import ConfigError, ConsistencyError, ResourceError
from .model import CouplingFields, LatticeSpec, ModelSpec, load_config

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


class ToleranceFailure(Exception):
    """A computed quantity missed its tolerance; artifacts are still written."""


def default_spec() -> ModelSpec:
    lat = LatticeSpec(epsilon=1.0, n_x=2, n_t=2)
    return ModelSpec(lat, CouplingFields.constant(lat, d=1, j=1.0, m0=0.0, r=1.0),
                     source_hash="default")


def _spec(args) -> ModelSpec:
    return load_config(args.config) if args.config else default_spec()


def _args_hash(args, *names) -> str:
    blob = json.dumps({n: getattr(args, n) for n in names}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _budget(args) -> int:
    return int(args.budget_mb * 2 ** 20)


def _emit_csv(args, columns, rows, config_hash, extra=None):
    text = cio.csv_text(columns, rows, config_hash=config_hash, seed=args.seed, extra=extra)
    if args.out:
        cio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _tol(args, default):
    return default if args.tol is None else args.tol


# ------------------------------------------------------------- subcommands

def cmd_cmps1d(args):
    from .cmps import CmpsData, density_limit, path_integral_state_1d, \
        path_ordered_state, select_sign_mode

    spec = _spec(args) if args.config else None
    cmps = spec.cmps if spec is not None and spec.cmps is not None else CmpsData(
        k=0.0, r1=1.0, omega_l=1.0, omega_r=1.0, length=1.0, n_steps=8,
        schedule=(8, 16, 32, 64))
    schedule = cmps.schedule or (8, 16, 32, 64)
    limit, table = density_limit(cmps, schedule)
    rows = [(n, val) for n, _, val in table]
    small = cmps.with_steps(min(cmps.n_steps, 4))
    dev = float(np.max(np.abs(path_ordered_state(small).amplitudes
                              - path_integral_state_1d(small).amplitudes)))
    selected, _, _ = select_sign_mode(small)
    rows.append(("limit", limit))
    _emit_csv(args, ["n_steps", "density"], rows, spec.source_hash if spec else "default",
              {"route_deviation": repr(dev), "sign_mode": selected})
    if dev > _tol(args, 1e-10):
        raise ToleranceFailure(f"path-ordered and path-integral states differ by {dev:.3g}")


def cmd_generate_state(args):
    from .fock import generate_state, write_state

    if not args.out:
        raise ConfigError("generate-state needs --out for the binary state file", "--out")
    spec = _spec(args)
    state = generate_state(spec, spec.boundary, budget_bytes=_budget(args))
    write_state(args.out, state)


def cmd_dispersion(args):
    from .spectrum import dispersion_zeros, kernel_symbol

    spec = _spec(args)
    eps = spec.lattice.epsilon
    zeros = dispersion_zeros(eps)
    exact = np.array([-2 * np.pi / (3 * eps), 2 * np.pi / (3 * eps)])
    err = float(np.max(np.abs(np.sort(zeros) - exact)))
    rows = [("zero", float(z), float(kernel_symbol(z, eps))) for z in np.sort(zeros)]
    grid = np.linspace(-np.pi / eps, np.pi / eps, args.samples + 1)[1:]
    rows += [("grid", float(p), float(kernel_symbol(p, eps))) for p in grid]
    _emit_csv(args, ["kind", "p", "kernel"], rows, spec.source_hash,
              {"epsilon": repr(eps), "zero_error": repr(err)})
    if err > _tol(args, 1e-12):
        raise ToleranceFailure(f"dispersion zeros off by {err:.3g}")


def cmd_flavors(args):
    from .spectrum import flavor_coupling_norm, gaussian_potential

    sizes = [int(n) for n in args.sizes.split(",")]
    rows = []
    for n_x in sizes:
        eps = args.length / n_x
        fc = flavor_coupling_norm(gaussian_potential(n_x, args.length), n_x, eps)
        rows.append((n_x, fc.inter, fc.intra, fc.ratio))
    _emit_csv(args, ["n_x", "inter", "intra", "ratio"], rows,
              _args_hash(args, "sizes", "length"), {"length": repr(args.length)})
    ratios = [r[3] for r in rows]
    if any(b >= a for a, b in zip(ratios, ratios[1:])):
        raise ToleranceFailure("inter-sector coupling is not monotonically decreasing")
    if ratios[-1] >= _tol(args, 1e-6):
        raise ToleranceFailure(f"final coupling ratio {ratios[-1]:.3g} above tolerance")


def cmd_oracle_check(args):
    from .fock import check_budget, basis_for, generate_state
    from .grassmann import contract_path_integral

    spec = _spec(args)
    basis = basis_for(spec)
    check_budget(basis.dim, spec.lattice.n_x, spec.lattice.n_t,
                 spec.statistics.phys_cutoff, _budget(args))
    fock = generate_state(spec, spec.boundary, budget_bytes=_budget(args)).amplitudes
    oracle = contract_path_integral(spec, spec.boundary)
    diff = np.abs(fock - oracle)
    rows = [(i, fock[i].real, fock[i].imag, oracle[i].real, oracle[i].imag, float(diff[i]))
            for i in range(fock.size)]
    _emit_csv(args, ["index", "fock_re", "fock_im", "oracle_re", "oracle_im", "abs_diff"],
              rows, spec.source_hash, {"max_abs_diff": repr(float(diff.max()))})
    if diff.max() > _tol(args, 1e-10):
        raise ToleranceFailure(f"oracle and Fock engine differ by {diff.max():.3g}")


def theta_grid(n, exclude=0.05):
    grid = np.linspace(0.0, np.pi / 2, n)
    return grid[np.abs(grid - np.pi / 4) >= exclude]


def cmd_clifford_scan(args):
    from .clifford import gamma_family, group_element

    rows = []
    worst = 0.0
    for th in theta_grid(args.theta_grid):
        g = gamma_family(th)
        r5 = g.gamma5_residuals()
        res = max(g.clifford_residual(), r5["square"], r5["anticommute"])
        worst = max(worst, res)
        rows.append((float(th), res, float(g.eta[0, 0]),
                     group_element(args.omega, th).unitarity_residual()))
    _emit_csv(args, ["theta", "clifford_residual", "eta00", "unitarity_residual"], rows,
              _args_hash(args, "theta_grid", "omega"), {"omega": repr(args.omega)})
    if worst > _tol(args, 1e-12):
        raise ToleranceFailure(f"Clifford residual {worst:.3g} above tolerance")


def _battery_cfg(seed, n=32, length=2 * np.pi):
    from .fields import FieldConfiguration

    rng = np.random.default_rng(seed)
    h = length / n
    t, x = np.meshgrid(np.arange(n) * h, np.arange(n) * h, indexing="ij")
    vals = np.zeros((1, n, n, 2), dtype=complex)
    for s in range(2):
        for _ in range(4):
            a, b = rng.integers(-3, 4, 2)
            vals[0, :, :, s] += (rng.normal() + 1j * rng.normal()) * np.exp(1j * (a * t + b * x))
    return FieldConfiguration(vals, h, h)


def cmd_action_eval(args):
    from .clifford import dirac_action, euclidean_action, family_action

    spec = _spec(args) if args.config else None
    theta = args.theta if args.theta is not None else (spec.theta if spec and spec.theta
                                                       is not None else 0.0)
    if abs(math.cos(2 * theta)) < 1e-8:
        raise ConfigError("|cos 2 theta| < 1e-8: metric continuation is singular", "--theta")
    cfg = _battery_cfg(args.seed)
    rows = [("family", theta, *_reim(family_action(cfg, args.mass, theta))),
            ("dirac", 0.0, *_reim(dirac_action(cfg, args.mass))),
            ("euclidean", np.pi / 2, *_reim(euclidean_action(cfg, args.mass)))]
    _emit_csv(args, ["action", "theta", "re", "im"], rows,
              spec.source_hash if spec else _args_hash(args, "theta", "mass"),
              {"mass": repr(args.mass)})


def _reim(z):
    return float(np.real(z)), float(np.imag(z))


def _load_regions(path, n_x, n_t):
    from .entanglement import Region

    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read regions: {exc}", str(path)) from None
    if isinstance(raw, dict):
        raw = raw.get("regions", [])
    regions = []
    for i, item in enumerate(raw):
        if "sites" in item:
            regions.append(Region(frozenset(map(tuple, item["sites"])), n_x, n_t))
        else:
            try:
                regions.append(Region.rectangle(item["x0"], item["width"], item["t0"],
                                                item["height"], n_x, n_t))
            except KeyError as exc:
                raise ConfigError(f"missing key {exc}", f"regions[{i}]") from None
    if not regions:
        raise ConfigError("no regions given", str(path))
    return regions


def cmd_area_law(args):
    from .entanglement import area_law_scan, square_regions, temporal_cut_rank
    from .fock import read_state

    if not args.state:
        raise ConfigError("area-law needs --state", "--state")
    state = read_state(args.state)
    regions = (_load_regions(args.regions, state.n_x, state.n_t) if args.regions
               else square_regions(state.n_x, state.n_t))
    report = area_law_scan(state, regions)
    rows = [(i, r.region_size, r.boundary_size, r.entropy, r.rank)
            for i, r in enumerate(report.rows)]
    cuts = [temporal_cut_rank(state, t0) for t0 in range(state.n_t + 1)]
    digest = hashlib.sha256(Path(args.state).read_bytes()).hexdigest()[:16]
    _emit_csv(args, ["region", "size", "boundary", "entropy", "rank"], rows, digest,
              {"constant": repr(report.constant), "subextensive": report.subextensive,
               "temporal_ranks": " ".join(str(c.rank) for c in cuts),
               "rank_bound": state.aux_dim})
    bad = [c for c in cuts if not c.within_bound]
    if bad:
        raise ToleranceFailure("temporal-cut Schmidt rank exceeds the auxiliary dimension")
    for r in report.rows:
        if r.rank > 0 and r.entropy > math.log(r.rank) + 1e-12:
            raise ToleranceFailure("entropy exceeds ln(rank)")


def cmd_square_compare(args):
    from .square import witness_battery, witness_ratio

    alphas = [float(eval_angle(a)) for a in args.alphas.split(",")]
    rows = []
    ratio_pi2 = None
    for alpha in alphas:
        sq, eu = witness_battery(seed=args.seed, count=args.count, alpha=alpha)
        rows.append((alpha, float(np.median(sq)), float(np.median(eu))))
        if np.isclose(alpha, np.pi / 2):
            ratio_pi2 = witness_ratio(sq, eu)
    _emit_csv(args, ["alpha", "witness_square", "witness_euclidean"], rows,
              _args_hash(args, "alphas", "count"), {"count": args.count})
    if ratio_pi2 is not None:
        sq_med = rows[[np.isclose(a, np.pi / 2) for a in alphas].index(True)][1]
        if sq_med <= 0.05 or ratio_pi2 < 1e4:
            raise ToleranceFailure(f"anisotropy contrast too weak (ratio {ratio_pi2:.3g})")


def eval_angle(text):
    """Parse ``pi``-multiples such as ``pi/2``, ``3pi/2`` or plain floats."""
    t = text.strip().replace(" ", "")
    if "pi" not in t:
        return float(t)
    num, _, den = t.partition("/")
    coef = num.replace("pi", "").replace("*", "")
    coef = {"": 1.0, "+": 1.0, "-": -1.0}.get(coef) or float(coef)
    return coef * np.pi / (float(den) if den else 1.0)


# ------------------------------------------------------------------ regress

def _parse_tol_overrides(items):
    out = {}
    for item in items or []:
        name, _, val = item.partition("=")
        try:
            out[name] = float(val)
        except ValueError:
            raise ConfigError(f"bad column tolerance {item!r}", "--column-tol") from None
    return out


def compare_csv(golden, candidate, tol=1e-9, column_tol=None):
    """Worst deviation between two CSV artifacts.

    Numeric cells compare by ``|a - b| / max(1, |a|)``; other cells must
    match exactly.  Returns ``(ok, worst, column, message)``.
    """
    column_tol = column_tol or {}
    try:
        hg, cg, rg = cio.read_csv(golden)
        hc, cc, rc = cio.read_csv(candidate)
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        return False, math.inf, None, f"unreadable: {exc}"
    if cg != cc:
        return False, math.inf, None, f"columns differ: {cg} vs {cc}"
    if len(rg) != len(rc):
        return False, math.inf, None, f"row count {len(rc)} != {len(rg)}"
    worst, worst_col, ok = 0.0, None, True
    for row_g, row_c in zip(rg, rc):
        if len(row_g) != len(cg) or len(row_c) != len(cg):
            return False, math.inf, None, "ragged row"
        for name, a, b in zip(cg, row_g, row_c):
            try:
                fa, fb = float(a), float(b)
            except ValueError:
                if a != b:
                    return False, math.inf, name, f"text mismatch in {name}: {a!r} vs {b!r}"
                continue
            if math.isnan(fa) and math.isnan(fb):
                continue
            dev = abs(fa - fb) / max(1.0, abs(fa))
            if not dev <= column_tol.get(name, tol):
                ok = False
            if dev > worst or math.isnan(dev):
                worst, worst_col = dev, name
    return ok, worst, worst_col, "ok" if ok else "tolerance exceeded"


def cmd_regress(args):
    golden = Path(args.golden)
    candidate = Path(args.candidate)
    if not golden.is_dir():
        raise ConfigError("golden directory does not exist", str(golden))
    column_tol = _parse_tol_overrides(args.column_tol)
    tol = _tol(args, 1e-9)
    files = sorted(p.name for p in golden.glob("*.csv"))
    if not files:
        raise ToleranceFailure(f"no golden CSV files in {golden}")
    rows, failed = [], False
    for name in files:
        cand = candidate / name
        if not cand.exists():
            rows.append((name, "missing", "inf", ""))
            failed = True
            continue
        ok, worst, col, msg = compare_csv(golden / name, cand, tol, column_tol)
        rows.append((name, "pass" if ok else "fail", repr(float(worst)), col or ""))
        failed |= not ok
    extra = sorted(p.name for p in candidate.glob("*.csv") if p.name not in files)
    _emit_csv(args, ["file", "status", "worst_deviation", "worst_column"], rows,
              _args_hash(args, "golden", "candidate"),
              {"unmatched_candidates": " ".join(extra) or "none"})
    if failed:
        raise ToleranceFailure("regression against goldens failed")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON model configuration")
    common.add_argument("--out", help="output artifact path (stdout when omitted)")
    common.add_argument("--seed", type=int, default=0, help="seed for random batteries")
    common.add_argument("--budget-mb", type=float, default=512.0, help="memory budget in MiB")
    common.add_argument("--tol", type=float, default=None, help="override the pass tolerance")

    # global flags live on each subcommand so they are not reset by subparser defaults
    parser = argparse.ArgumentParser(prog="cpeps",
                                     description="Continuum PEPS numerical laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    add("cmps1d", cmd_cmps1d, "1D cMPS density and route consistency")
    add("generate-state", cmd_generate_state, "contract the transfer operators to a state file")
    p = add("dispersion", cmd_dispersion, "hopping kernel and its zeros")
    p.add_argument("--samples", type=int, default=64)
    p = add("flavors", cmd_flavors, "inter-sector coupling of a Gaussian potential")
    p.add_argument("--sizes", default="24,48,96,192")
    p.add_argument("--length", type=float, default=10.0)
    add("oracle-check", cmd_oracle_check, "Grassmann oracle against the Fock engine")
    p = add("clifford-scan", cmd_clifford_scan, "Clifford residuals over a theta grid")
    p.add_argument("--theta-grid", type=int, default=64)
    p.add_argument("--omega", type=float, default=1.0)
    p = add("action-eval", cmd_action_eval, "evaluate the theta-family action")
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--mass", type=float, default=0.5)
    p = add("area-law", cmd_area_law, "entropies and ranks of a stored state")
    p.add_argument("--state")
    p.add_argument("--regions")
    p = add("square-compare", cmd_square_compare, "square-lattice vs Euclidean witnesses")
    p.add_argument("--alphas", default="pi/2,pi,3pi/2,2pi")
    p.add_argument("--count", type=int, default=20)
    p = add("regress", cmd_regress, "compare artifacts against goldens")
    p.add_argument("--golden", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--column-tol", action="append", metavar="NAME=TOL")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ToleranceFailure as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except ConsistencyError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
