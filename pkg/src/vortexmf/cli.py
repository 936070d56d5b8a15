"""Command line interface: ``vortexmf <subcommand> [options]``.

Every run writes ``<subcommand>.json`` into ``--out`` with the resolved
configuration, the package version, the wall time, hashes of the input files
and the result payload.  Tabular series go to CSV files next to it.

Exit codes: 0 success, 1 usage or configuration error, 2 non-convergence or
no root (and failed acceptance criteria), 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analytic, blowup, validate
from .cvp import solve_cvp, sweep_lambda
from .domain import WeightSpec, build_disk_mesh, build_grid_mesh, write_field_csv
from .errors import ConfigurationError, VortexError
from .mvp import classify_domain_type, mvp_regularization_limit, solve_mvp

log = logging.getLogger("vortexmf")

# defaults per subcommand; config files and flags override them (flags win)
DEFAULTS = {
    "cvp": {"sigma": 0.0, "lam": None, "lambda_grid": None, "eps": 0.0, "mesh": "disk:4096:log",
            "method": "newton", "damping": 0.5, "tol": None, "max_iter": 10000},
    "mvp": {"sigma": 0.0, "energy": None, "energy_grid": None, "classify": False, "eps": 1e-3,
            "eps_sequence": None, "mesh": "disk:4096", "lambda_bracket": None, "n_scan": 24,
            "energy_tol": 1e-8},
    "diagnose": {"family": None, "plant": None, "sigma": None, "ratio_threshold": blowup.RATIO_THRESHOLD,
                 "with_energy": False},
    "bubble": {"alpha": 0.0, "t0": 0.0, "c": None, "r_max": None},
    "validate": {"only": None, "emit_plot_data": False},
    "mesh": {"mesh": "disk:4096:log"},
}


# ---------------------------------------------------------------------------
# helpers


def parse_mesh(spec: str):
    """Build a mesh from ``disk:N[:uniform|log[:r_min]]`` or ``grid:h[:width:height]``."""
    parts = str(spec).split(":")
    try:
        if parts[0] == "disk":
            n = int(parts[1])
            grading = parts[2] if len(parts) > 2 else "uniform"
            if grading == "log" and len(parts) > 3:
                return build_disk_mesh(n, "log", r_min=float(parts[3]))
            return build_disk_mesh(n, grading)
        if parts[0] == "grid":
            h = float(parts[1])
            width = float(parts[2]) if len(parts) > 2 else 2.0
            height = float(parts[3]) if len(parts) > 3 else width
            return build_grid_mesh(width, height, h)
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"malformed mesh spec {spec!r}: {exc}") from exc
    raise ConfigurationError(f"unknown mesh kind in {spec!r}; use disk:N[:grading] or grid:h[:w:h]")


def parse_grid(spec) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace) or a comma separated list."""
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    text = str(spec)
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return np.linspace(float(a), float(b), int(n))
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as exc:
        raise ConfigurationError(f"malformed grid {spec!r}") from exc


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    else:
        import yaml

        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping of option names to values")
    return data


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, the config file (flat or under the subcommand key) and explicit flags."""
    defaults = DEFAULTS[command]
    conf = dict(defaults)
    if args.config:
        data = load_config(args.config)
        section = data.get(command, {}) if isinstance(data.get(command), dict) else {}
        flat = {k: v for k, v in data.items() if k not in DEFAULTS}
        for key, value in {**flat, **section}.items():
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key in ("out", "threads", "seed"):
                continue
            if key not in defaults:
                raise ConfigurationError(f"unknown option {key!r} for {command}")
            conf[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            conf[key] = value
    return conf


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_artifact(out: Path, command: str, config: dict, result: dict, started: float,
                   inputs: list | None = None) -> Path:
    payload = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in (inputs or [])},
        "result": result,
        "wall_time": round(time.perf_counter() - started, 3),
    }
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{command}.json"
    path.write_text(json.dumps(blowup._jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# subcommands


def _disk_oracle(mesh, sol) -> dict | None:
    spec = sol.spec
    if not mesh.is_radial or spec.eps != 0 or spec.lam == 0:
        return None
    try:
        exact = analytic.disk_solution(spec.sigma, spec.lam)
    except VortexError:
        return None
    return {
        "gamma2": exact.gamma2,
        "normalizer": exact.normalizer,
        "normalizer_relative_error": abs(math.exp(sol.log_partition) / exact.normalizer - 1.0),
        "psi_sup_error": float(np.max(np.abs(sol.psi - exact.psi(mesh.radii)))),
        "energy": analytic.disk_energy(spec.sigma, spec.lam),
        "entropy": analytic.disk_entropy(spec.sigma, spec.lam),
    }


def cmd_cvp(conf: dict, args) -> tuple[dict, int]:
    mesh = parse_mesh(conf["mesh"])
    opts = {"method": conf["method"], "damping": float(conf["damping"]), "max_iter": int(conf["max_iter"])}
    if conf["tol"] is not None:
        opts["tol"] = float(conf["tol"])
    if conf["lambda_grid"] is not None:
        grid = parse_grid(conf["lambda_grid"])
        curve = sweep_lambda(mesh, float(conf["sigma"]), float(conf["eps"]), grid,
                             threads=args.threads, **opts)
        curve.to_csv(args.out / "cvp_curve.csv")
        result = {"curve": curve.rows(), "branch_end": curve.branch_end, "mesh": mesh.describe()}
        return result, (0 if curve.branch_end is None else 2)
    if conf["lam"] is None:
        raise ConfigurationError("cvp needs --lambda or --lambda-grid")
    sol = solve_cvp(mesh, WeightSpec(float(conf["sigma"]), float(conf["lam"]), float(conf["eps"])), **opts)
    write_field_csv(args.out / "cvp_psi.csv", mesh, sol.psi)
    result = {"solution": sol.summary(), "mesh": mesh.describe(), "disk_oracle": _disk_oracle(mesh, sol)}
    return result, (0 if sol.converged else 2)


def cmd_mvp(conf: dict, args) -> tuple[dict, int]:
    mesh = parse_mesh(conf["mesh"])
    sigma, eps = float(conf["sigma"]), float(conf["eps"])
    opts = {"n_scan": int(conf["n_scan"]), "energy_tol": float(conf["energy_tol"])}
    if conf["lambda_bracket"] is not None:
        opts["lam_bracket"] = tuple(parse_grid(conf["lambda_bracket"]))
    if conf["classify"]:
        if conf["energy_grid"] is None:
            raise ConfigurationError("--classify needs --energy-grid")
        rep = classify_domain_type(mesh, sigma, eps, parse_grid(conf["energy_grid"]), **opts)
        return {"classification": rep.to_dict()}, (0 if rep.verdict != "inconclusive" else 2)
    if conf["energy"] is None:
        raise ConfigurationError("mvp needs --energy (or --classify with --energy-grid)")
    energy = float(conf["energy"])
    if conf["eps_sequence"] is not None:
        rep = mvp_regularization_limit(mesh, sigma, energy, parse_grid(conf["eps_sequence"]), **opts)
        return {"regularization_limit": rep.to_dict()}, (0 if rep.status == "ok" else 2)
    res = solve_mvp(mesh, sigma, eps, energy, **opts)
    out = res.to_dict()
    if res.solution is not None:
        write_field_csv(args.out / "mvp_psi.csv", mesh, res.solution.psi)
    return {"mvp": out, "mesh": mesh.describe()}, (0 if res.status == "ok" else 2)


def cmd_diagnose(conf: dict, args) -> tuple[dict, int]:
    inputs = []
    if conf["family"]:
        fam = blowup.load_family(conf["family"])
        inputs.append(conf["family"])
    elif conf["plant"]:
        if conf["sigma"] is None:
            raise ConfigurationError("--plant needs --sigma")
        fam = blowup.planted_family(conf["plant"], float(conf["sigma"]))
        blowup.save_family(fam, args.out / "family")
    else:
        raise ConfigurationError("diagnose needs --family MANIFEST or --plant KIND")
    rep = blowup.classify_profile(fam, float(conf["ratio_threshold"]), with_energy=bool(conf["with_energy"]))
    args.inputs = inputs
    return {"report": rep.to_dict()}, 0


def cmd_bubble(conf: dict, args) -> tuple[dict, int]:
    b = analytic.bubble_solve(float(conf["alpha"]), float(conf["t0"]),
                              None if conf["c"] is None else float(conf["c"]),
                              None if conf["r_max"] is None else float(conf["r_max"]))
    analytic.write_rows_csv(args.out / "bubble_profile.csv",
                            [{"r": float(r), "phi": float(p)} for r, p in zip(b.r, b.phi)], ["r", "phi"])
    result = {"alpha": b.alpha, "t0": b.t0, "c": b.c, "mass": b.mass, "beta": b.beta, "r_max": b.r_max,
              "tail_fraction": b.tail_fraction, "identity_residual": analytic.bubble_identity_residual(b),
              "mass_check": analytic.check_bubble_mass(b), "decay_slope": b.decay_slope()}
    return result, 0


def cmd_validate(conf: dict, args) -> tuple[dict, int]:
    only = conf["only"]
    if isinstance(only, str):
        only = [t for t in only.split(",") if t.strip()]
    try:
        validate.select(only)
    except KeyError as exc:
        raise ConfigurationError(f"unknown criterion {exc}") from exc
    plot_dir = args.out / "plot_data" if conf["emit_plot_data"] else None
    results = validate.run_all(only, plot_dir=plot_dir, progress=lambda r: print(r.line(), flush=True))
    passed = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return {"criteria": [r.to_dict() for r in results], "all_passed": passed}, (0 if passed else 2)


def cmd_mesh(conf: dict, args) -> tuple[dict, int]:
    mesh = parse_mesh(conf["mesh"])
    write_field_csv(args.out / "mesh_nodes.csv", mesh, mesh.boundary.astype(float))
    return {"mesh": mesh.describe(), "min_cell": mesh.min_cell()}, 0


COMMANDS = {"cvp": cmd_cvp, "mvp": cmd_mvp, "diagnose": cmd_diagnose, "bubble": cmd_bubble,
            "validate": cmd_validate, "mesh": cmd_mesh}


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker cap for parallel sweeps")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--config", help="YAML or JSON file with option values (flags win)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="vortexmf", description="Mean field vortex equilibria with a fixed point vortex.")
    p.add_argument("--version", action="version", version=f"vortexmf {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cvp", parents=[common], help="canonical solve or lambda sweep")
    c.add_argument("--sigma", type=float)
    c.add_argument("--lambda", dest="lam", type=float)
    c.add_argument("--lambda-grid", help="start:stop:num or comma list")
    c.add_argument("--eps", type=float)
    c.add_argument("--mesh", help="disk:N[:uniform|log[:r_min]] or grid:h[:width:height]")
    c.add_argument("--method", choices=["picard", "newton"])
    c.add_argument("--damping", type=float)
    c.add_argument("--tol", type=float)
    c.add_argument("--max-iter", type=int)

    m = sub.add_parser("mvp", parents=[common], help="microcanonical solve, classification or eps limit")
    m.add_argument("--sigma", type=float)
    m.add_argument("--energy", type=float)
    m.add_argument("--energy-grid")
    m.add_argument("--classify", action="store_true")
    m.add_argument("--eps", type=float)
    m.add_argument("--eps-sequence", help="decreasing comma list of eps values")
    m.add_argument("--mesh")
    m.add_argument("--lambda-bracket", help="lo,hi")
    m.add_argument("--n-scan", type=int)
    m.add_argument("--energy-tol", type=float)

    d = sub.add_parser("diagnose", parents=[common], help="blow-up diagnostics of a family")
    d.add_argument("--family", help="family manifest JSON")
    d.add_argument("--plant", choices=["disk", "I", "II", "III"], help="generate a planted family")
    d.add_argument("--sigma", type=float)
    d.add_argument("--ratio-threshold", type=float)
    d.add_argument("--with-energy", action="store_true")

    b = sub.add_parser("bubble", parents=[common], help="entire radial bubble")
    b.add_argument("--alpha", type=float)
    b.add_argument("--t0", type=float)
    b.add_argument("--c", type=float)
    b.add_argument("--r-max", type=float)

    v = sub.add_parser("validate", parents=[common], help="run the acceptance checks")
    v.add_argument("--only", help="comma list of criterion numbers, keys or groups")
    v.add_argument("--emit-plot-data", action="store_true")

    g = sub.add_parser("mesh", parents=[common], help="build and describe a mesh")
    g.add_argument("--mesh")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    args.inputs = []
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        conf = resolve(args.command, args)
        if args.config:
            args.inputs.append(args.config)
        np.random.seed(args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        config_inputs = list(args.inputs)
        result, code = COMMANDS[args.command](conf, args)
        echo = {**conf, "out": str(args.out), "threads": args.threads, "seed": args.seed}
        path = write_artifact(args.out, args.command, echo, result, started,
                              inputs=config_inputs + [i for i in args.inputs if i not in config_inputs])
        print(path)
        return code
    except VortexError as exc:
        print(f"vortexmf: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - safety net
        log.exception("internal error")
        print(f"vortexmf: internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
