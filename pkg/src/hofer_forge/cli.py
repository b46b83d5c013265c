"""Scenario runner: ``hofer-forge <kind> [options]``.

Settings come from built-in defaults, then a flat YAML file given with
``--config``, then command-line flags; later sources win.  The report holds
every input that influenced a number, the measured quantities, tolerances
and a pass/fail entry per check.  Wall-clock data (timestamp, timings) lives
in the ``header`` block so that the rest is reproducible byte for byte.

Exit status: 0 when every check passes, 1 when a check fails or a run-time
invariant breaks, 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from typing import Optional

import numpy as np
import yaml

from .errors import (
    ConfigError,
    ContainmentError,
    DConditionError,
    DisjoinConfigError,
    DomainError,
    HoferForgeError,
)

SCHEMA = "hofer-forge.report/1"
KINDS = ("calculus-check", "disjoin", "shorten", "index", "length")


@dataclass
class ScenarioConfig:
    kind: str
    weights: tuple = (3, 1)
    alpha: float = 1.0
    d: float = 0.9
    split: Optional[tuple] = None
    A: float = 1.0
    eps: float = 0.1
    eps_bar: Optional[float] = None
    delta: Optional[float] = None
    lam: Optional[tuple] = None
    grid: Optional[int] = None
    t_nodes: int = 257
    steps: Optional[int] = None
    samples: Optional[int] = None
    seed: int = 0
    format: str = "json"
    out: Optional[str] = None

    def validate(self) -> "ScenarioConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}; choose from {', '.join(KINDS)}")
        try:
            self.weights = tuple(int(w) for w in self.weights)
        except (TypeError, ValueError):
            raise ConfigError(f"weights must be integers, got {self.weights!r}") from None
        if not self.weights or any(w < 1 for w in self.weights):
            raise ConfigError(f"weights must be positive integers, got {self.weights}")
        for name in ("alpha", "d", "A", "eps"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.split is not None and (len(self.split) != 2 or min(self.split) < 1):
            raise ConfigError(f"split must be two positive integers a,b, got {self.split}")
        if not 0 < self.eps < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if self.A < 0:
            raise ConfigError(f"A must be non-negative, got {self.A}")
        if self.t_nodes < 3 or self.t_nodes % 2 == 0:
            raise ConfigError(f"tnodes must be an odd integer >= 3, got {self.t_nodes}")
        for name in ("grid", "steps", "samples"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got {self.format!r}")
        return self


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hofer-forge", description="Hofer-length experiments near a fixed maximum.")
    sub = parser.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="flat YAML file of settings; flags override it")
        p.add_argument("--out", help="output path (default: standard output)")
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--seed", type=int)
        p.add_argument("--grid", type=int, help="grid resolution (radial rings or lambda-grid points)")
        p.add_argument("--tnodes", dest="t_nodes", type=int, help="odd number of time nodes")
        p.add_argument("--steps", type=int, help="integrator step budget")
        p.add_argument("--samples", type=int)
        p.add_argument("--weights", type=_int_list, help="comma-separated weights, e.g. 3,1")
        p.add_argument("--alpha", type=float)
        p.add_argument("--d", type=float)
        p.add_argument("--split", type=_int_list, help="a,b with a + b equal to the split weight")
        p.add_argument("--A", type=float, help="inner area of the target annulus")
        p.add_argument("--eps", type=float)
        p.add_argument("--eps-bar", dest="eps_bar", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--lam", type=_float_list, help="real deformation parameters, (re, im) per entry")
    return parser


def _read_config(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a flat mapping")
    known = {f.name for f in fields(ScenarioConfig)} | {"tnodes", "eps-bar"}
    out = {}
    for key, value in data.items():
        if key not in known or key == "kind":
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, (dict, list)) and key not in ("weights", "split", "lam"):
            raise ConfigError(f"config key {key!r} must hold a scalar")
        key = {"tnodes": "t_nodes", "eps-bar": "eps_bar"}.get(key, key)
        try:
            if key in ("weights", "split") and not isinstance(value, list):
                value = _int_list(value)
            if key == "lam" and not isinstance(value, list):
                value = _float_list(value)
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
        if key in _FLOATS and value is not None:
            value = _coerce(key, value, float)
        if key in _INTS:
            value = _coerce(key, value, int)
        out[key] = tuple(value) if isinstance(value, list) else value
    return out


_FLOATS = ("alpha", "d", "A", "eps", "eps_bar", "delta")
_INTS = ("grid", "t_nodes", "steps", "samples", "seed")


def _coerce(key, value, kind):
    # YAML 1.1 reads 1e-3 as a string
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} must be {kind.__name__}, got {value!r}") from None
    if kind is int and out != float(value):
        raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
    return out


def parse_config(argv) -> ScenarioConfig:
    args = vars(build_parser().parse_args(argv))
    settings = {}
    if args.get("config"):
        settings.update(_read_config(args["config"]))
    settings.update({k: v for k, v in args.items() if v is not None and k != "config"})
    try:
        return ScenarioConfig(**settings).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# reports


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


class Report:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.inputs = {k: v for k, v in asdict(config).items() if k not in ("out", "format")}
        self.measured = {}
        self.checks = {}
        self.table = None
        self.timings = {}

    def check(self, name: str, value, tol, passed: bool, relation: str):
        self.checks[name] = {"value": value, "tol": tol, "relation": relation, "pass": bool(passed)}

    def at_most(self, name, value, tol):
        self.check(name, value, tol, value <= tol, "<=")

    def at_least(self, name, value, bound):
        self.check(name, value, bound, value >= bound, ">=")

    def set_table(self, columns: dict, rows):
        self.table = {"columns": columns, "rows": [list(r) for r in rows]}

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values())

    def body(self) -> dict:
        body = {"kind": self.config.kind, "inputs": self.inputs, "measured": self.measured,
                "checks": self.checks, "passed": self.passed}
        if self.table is not None:
            body["table"] = self.table
        return _plain(body)

    def header(self) -> dict:
        from . import __version__

        return _plain({"timestamp": datetime.now(timezone.utc).isoformat(), "version": __version__,
                       "timings": self.timings})

    def to_json(self) -> str:
        return json.dumps({"schema": SCHEMA, "header": self.header(), "report": self.body()},
                          indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """The sweep table, or the checks when there is none; '#' lines carry the header."""
        buf = io.StringIO()
        head = self.header()
        buf.write(f"# schema: {SCHEMA}\n# timestamp: {head['timestamp']}\n# kind: {self.config.kind}\n")
        buf.write(f"# inputs: {json.dumps(self.body()['inputs'], sort_keys=True)}\n")
        buf.write(f"# passed: {self.passed}\n")
        w = csv.writer(buf, lineterminator="\n")
        if self.table is not None:
            for col, doc in self.table["columns"].items():
                buf.write(f"# column {col}: {doc}\n")
            w.writerow(list(self.table["columns"]))
            for row in _plain(self.table["rows"]):
                w.writerow(row)
        else:
            w.writerow(["check", "value", "relation", "tol", "pass"])
            for name, c in _plain(self.checks).items():
                w.writerow([name, c["value"], c["relation"], c["tol"], c["pass"]])
        return buf.getvalue()


def write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".hofer-forge-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# scenarios


def run_calculus_check(cfg: ScenarioConfig, rep: Report):
    from .calculus import LoopGenerator, compose_generators, conjugate, simpson, verify_loop_closure
    from .core import EllipsoidModel, Rotation, SymplecticMapChain, Translation, rotation_chain
    from .flows import FlowConfig, integrate_flow, sign_self_test
    from .hamiltonians import QuadraticAffine
    from .shorten import circle_flow, polterovich_loop

    n_samples = cfg.samples or 100
    steps = cfg.steps or 2000
    rng = np.random.default_rng(cfg.seed)
    model = EllipsoidModel(cfg.weights, cfg.alpha)
    n = model.n
    z = model.sample(rng, n_samples)
    rep.inputs.update(samples=n_samples, steps=steps)

    rep.at_most("sign_self_test", sign_self_test(), 1e-8)

    # K rotates by the weights, F translates coordinate 0 with constant velocity 2i l
    K = QuadraticAffine.circle_action(cfg.weights)
    lin = np.zeros(n, complex)
    lin[0] = 0.1 + 0.05j
    F = QuadraticAffine.constant(0.0, linear=lin)
    G = compose_generators(K, F, circle_flow(K))
    t = 0.37
    got = integrate_flow(G, 0.0, t, z, FlowConfig(steps=steps))
    shift = z.copy()
    shift[:, 0] += 2j * lin[0] * t
    expected = rotation_chain(cfg.weights, t).apply(shift)
    rep.at_most("composition_vs_composed_flows", float(np.max(np.abs(got - expected))), 1e-6)

    b = SymplecticMapChain((Translation(0, 0.2 - 0.1j), Rotation(0, 1.0, 0.3)))
    got = integrate_flow(conjugate(K, b), 0.0, t, z, FlowConfig(steps=steps))
    expected = b.apply(rotation_chain(cfg.weights, t).apply(b.inverse().apply(z)))
    rep.at_most("conjugation_vs_conjugated_flow", float(np.max(np.abs(got - expected))), 1e-6)

    closure_steps = cfg.steps or 10_000
    loop = LoopGenerator(K, model)
    rep.at_most("circle_action_closure", verify_loop_closure(loop, 50, closure_steps, cfg.seed), 1e-5)
    doubled = QuadraticAffine.circle_action([2 * k for k in cfg.weights])
    pol = polterovich_loop(doubled, SymplecticMapChain((Translation(0, 0.05),)), model)
    rep.at_most("polterovich_closure", verify_loop_closure(pol, 50, closure_steps, cfg.seed), 1e-5)

    # RK4 order against the exact rotation
    H = QuadraticAffine.circle_action((2,))
    p = np.array([[0.3 + 0.1j]])
    exact = np.exp(-2j * np.pi * 2 * 0.9) * p

    def err(s):
        return float(np.abs(integrate_flow(H, 0.0, 0.9, p, FlowConfig(steps=s)) - exact).max())

    e1, e4 = err(50), err(200)
    rep.measured["rk4_errors"] = {"50": e1, "200": e4}
    rep.at_least("rk4_order_ratio", e1 / e4, 200.0)

    ts = np.linspace(0.0, 1.0, cfg.t_nodes)
    osc = max(abs(simpson(np.exp(-2j * np.pi * k * ts))) for k in (1, 2, 3))
    rep.at_most("oscillatory_vanishing", osc, 1e-10)


def run_disjoin(cfg: ScenarioConfig, rep: Report):
    from .disjoin.discs import DisjoinSpec, disc_disjoiner
    from .flows import audit_symplectic

    n_samples = cfg.samples or 1000
    kwargs = {"slit_steps": cfg.steps} if cfg.steps else {}
    t0 = time.perf_counter()
    try:
        dj = disc_disjoiner(DisjoinSpec(cfg.A, cfg.eps, cfg.delta), **kwargs)
    except (ValueError, DisjoinConfigError) as exc:
        raise ConfigError(str(exc)) from None
    rng = np.random.default_rng(cfg.seed)
    r = np.sqrt(rng.uniform(0.0, 1.0, n_samples) / np.pi)
    disc = (r * np.exp(1j * rng.uniform(0.0, 2 * np.pi, n_samples)))[:, None]
    outer = 1.0 + cfg.A + cfg.eps
    r_out = np.sqrt(rng.uniform(outer, outer + 1.0, n_samples) / np.pi)
    ext = (r_out * np.exp(1j * rng.uniform(0.0, 2 * np.pi, n_samples)))[:, None]
    rep.inputs.update(samples=n_samples, slit_steps=dj.slit_steps, push_steps=dj.push_steps)

    actions = np.pi * np.abs(dj.apply(disc, 1.0)[:, 0]) ** 2
    rep.measured.update(T=dj.T, delta=dj.delta, action_min=float(actions.min()), action_max=float(actions.max()),
                        margins=dj.margins)
    rep.at_least("disc_image_above_A", float(actions.min() - cfg.A), 0.0)
    rep.at_least("disc_image_below_1_plus_A_plus_eps", float(outer - actions.max()), 0.0)
    moved = float(np.max(np.abs(dj.apply(ext, 1.0) - ext)))
    rep.at_most("exterior_fixed", moved, 1e-9)
    audit_pts = disc[: min(n_samples, 200)]
    audit = max(audit_symplectic(dj(0.5).apply, audit_pts), audit_symplectic(dj(1.0).apply, audit_pts))
    rep.at_most("symplecticity_audit", audit, 1e-5)
    rep.timings["total"] = time.perf_counter() - t0


def run_shorten(cfg: ScenarioConfig, rep: Report):
    from .shorten import ShorteningScenario, theorem_isolated_pipeline

    try:
        sc = ShorteningScenario.from_weights(cfg.weights, cfg.alpha, cfg.d, split=cfg.split, eps_bar=cfg.eps_bar)
    except (ContainmentError, DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    grid = {"radii": cfg.grid, "angles": 2 * cfg.grid} if cfg.grid else None
    tol = 0.01
    res = theorem_isolated_pipeline(sc, t_nodes=cfg.t_nodes, grid=grid, disjoint_samples=cfg.samples or 500,
                                    seed=cfg.seed, tol=tol)
    rep.inputs.update(index=sc.index, a=sc.a, b=sc.b, s=sc.s, eps_bar=sc.eps_bar, tol=tol,
                      samples=cfg.samples or 500, grid=grid or "default")
    diag = res.diagnostics
    rep.measured.update(
        drop=res.drop, predicted_drop=sc.s, ell_plus=res.ell_plus, ell_minus=res.ell_minus,
        T=diag["T"], delta=diag["delta"], eps=diag["eps"], window=diag["window"],
        quad_error=[r.quad_error for r in res.reports],
        extremizer={k: v for k, v in diag.items() if k not in ("T", "delta", "eps", "eps_bar", "window", "argmax")},
    )
    rep.at_least("drop", res.drop, sc.s - tol)
    rep.at_most("max_safety_violation", res.checks["max_safety_violation"], 1e-6)
    rep.at_most("inf_deviation", res.checks["inf_deviation"], 1e-6)
    rep.at_most("path_above_start", res.checks["path_above_start"], tol)
    rep.at_least("disjointness_gap", res.checks["disjointness_gap"], 0.0)
    rep.set_table(
        {"u": "disjoiner strength", "ell_plus": "positive length", "ell_minus": "negative length",
         "max_h": "max over the model of the generator (t-independent)",
         "min_h": "min over the model of the generator"},
        [(u, p, m, mx[0], mn[0]) for u, p, m, mx, mn in
         zip(res.u_values, res.ell_plus, res.ell_minus, res.max_values, res.min_values)],
    )
    rep.timings.update(res.timings)


def run_index(cfg: ScenarioConfig, rep: Report):
    from .index import DeformationParams, hessian_at_origin, total_length

    t0 = time.perf_counter()
    hr = hessian_at_origin(cfg.weights, t_nodes=cfg.t_nodes)
    rep.measured.update(labels=hr.labels, numeric_hessian=hr.numeric, analytic_hessian=hr.analytic,
                        coefficients=hr.coefficients, numeric_coefficients=hr.numeric_coefficients,
                        index=len(hr.labels))
    rep.inputs.update(fd_step=hr.step)
    rep.at_most("coefficient_relative_deviation", hr.max_relative_deviation, 5e-3)
    rep.at_most("off_diagonal", float(np.max(np.abs(hr.numeric - np.diag(np.diag(hr.numeric))), initial=0.0)), 1e-6)
    rep.at_most("asymmetry", hr.asymmetry, 1e-6)
    rep.at_most("cross_block", hr.cross_block, 1e-6)
    points = cfg.grid or 11
    radius = 0.5
    rep.inputs.update(lambda_grid_points=points, lambda_grid_radius=radius)
    rows = []
    dim = len(hr.labels)
    for i, label in enumerate(hr.labels):
        for r in np.linspace(-radius, radius, points):
            v = np.zeros(dim)
            v[i] = r
            rows.append((label, r, total_length(DeformationParams.from_real(cfg.weights, v), cfg.t_nodes),
                         hr.coefficients[i] * r * r))
    rep.set_table({"parameter": "real parameter varied (others zero)", "value": "its value",
                   "length": "sum of block lengths", "predicted": "coefficient times value squared"}, rows)
    rep.timings["total"] = time.perf_counter() - t0


def run_length(cfg: ScenarioConfig, rep: Report):
    from .calculus import LoopGenerator, hofer_length, verify_loop_closure
    from .core import EllipsoidModel
    from .index import DeformationParams, check_d_conditions, d_radius, deformation_generator, embed_deformation

    model = EllipsoidModel(cfg.weights, cfg.alpha)
    eps_bar = cfg.eps_bar if cfg.eps_bar is not None else 0.25 * cfg.alpha
    dim = DeformationParams.zeros(model.weights).dimension
    lam = cfg.lam if cfg.lam is not None else (0.0,) * dim
    try:
        params = DeformationParams.from_real(model.weights, lam)
        loop = embed_deformation(model, params, eps_bar)
    except DConditionError as exc:
        raise ConfigError(f"deformation outside the verified neighbourhood: {exc}") from None
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    rep.inputs.update(eps_bar=eps_bar, lam=lam)
    t_nodes = cfg.t_nodes
    hr = hofer_length(loop, t_nodes)
    half = 0.5 * cfg.alpha
    rep.measured.update(ell_plus=hr.ell_plus, ell_minus=hr.ell_minus, total=hr.total, quad_error=hr.quad_error)
    if params.is_zero:
        rep.at_most("baseline_total_relative_error", abs(hr.total - cfg.alpha) / cfg.alpha, 0.01)
    else:
        dc = check_d_conditions(params, eps_bar)
        rep.measured.update(d_conditions=asdict(dc), d_radius=d_radius(params, eps_bar), lam_norm=params.norm())
        rep.at_most("ell_plus_above_undeformed", hr.ell_plus - half, 1e-9)
    rep.at_most("ell_minus_change", abs(hr.ell_minus - half), 1e-9)
    steps = cfg.steps or 10_000
    closure = verify_loop_closure(LoopGenerator(deformation_generator(params), model),
                                  cfg.samples or 50, steps, cfg.seed)
    rep.inputs.update(closure_steps=steps, samples=cfg.samples or 50)
    rep.at_most("deformation_closure", closure, 1e-5)


RUNNERS = {
    "calculus-check": run_calculus_check,
    "disjoin": run_disjoin,
    "shorten": run_shorten,
    "index": run_index,
    "length": run_length,
}


def run(cfg: ScenarioConfig) -> tuple:
    """Execute a validated scenario; returns (exit code, report)."""
    rep = Report(cfg)
    RUNNERS[cfg.kind](cfg, rep)
    return (0 if rep.passed else 1), rep


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        code, rep = run(cfg)
    except ConfigError as exc:
        print(f"hofer-forge: configuration error: {exc}", file=sys.stderr)
        return 2
    except HoferForgeError as exc:
        print(f"hofer-forge: invariant failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    text = rep.to_json() if cfg.format == "json" else rep.to_csv()
    if cfg.out:
        write_atomic(cfg.out, text)
    else:
        sys.stdout.write(text)
    for name, c in rep.checks.items():
        if not c["pass"]:
            print(f"hofer-forge: check failed: {name} = {c['value']} (needs {c['relation']} {c['tol']})",
                  file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
