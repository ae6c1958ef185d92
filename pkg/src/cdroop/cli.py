"""Scenario-driven command line front end.

Scenario files are YAML documents whose physical values carry explicit
units, e.g. ``eta: 0.02 omega0`` or ``l_g: 0.2 pu``.  See README.md for the
full grammar.  Exit codes: 0 success, 2 scenario error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from . import __version__, analysis, certify
from .equilibrium import (classical_droop_equilibria, equilibria, lift,
                          voltage_following_equilibrium)
from .model import (ControllerParams, FilterAndLoops, GridLink, PerUnitBase,
                    StateVector, SystemParams, impedance_angle)
from .sim import Event, IntegratorConfig, integrate, model_dim

log = logging.getLogger("cdroop")

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_SCENARIO, EXIT_NUMERICAL = 0, 2, 3


class ScenarioError(ValueError):
    """Invalid scenario; the message starts with the offending field path."""


# ---------------------------------------------------------------------------
# quantities with units

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QTY = re.compile(rf"^\s*({_NUM})\s*\*?\s*([A-Za-z/0-9]*)\s*$")

# kind -> {suffix: scale to canonical unit}; omega0 handled separately
UNITS = {
    "pu": {"pu": 1.0},
    "pu_time": {"pu": 1.0, "s/rad": "omega0"},   # inductance/capacitance
    "rate": {"rad/s": 1.0, "omega0": "omega0"},
    "angle": {"rad": 1.0, "deg": math.pi / 180},
    "time": {"s": 1.0, "ms": 1e-3},
    "power": {"VA": 1.0, "kVA": 1e3, "MVA": 1e6},
    "voltage": {"V": 1.0, "kV": 1e3},
    "frequency": {"Hz": 1.0},
    "gain": {"": 1.0, "pu": 1.0},
    "gain_rate": {"": 1.0, "pu/s": 1.0},
    "number": {"": 1.0},
}
CANONICAL = {"pu": "pu", "pu_time": "pu", "rate": "rad/s", "angle": "rad", "time": "s",
             "power": "VA", "voltage": "V", "frequency": "Hz", "gain": "", "gain_rate": "",
             "number": ""}


def parse_quantity(value, kind: str, path: str, omega0: float = 2 * math.pi * 50) -> float:
    table = UNITS[kind]
    if isinstance(value, bool):
        raise ScenarioError(f"{path}: expected a quantity, got a boolean")
    if isinstance(value, (int, float)):
        if "" not in table:
            raise ScenarioError(f"{path}: missing unit (expected one of {sorted(table)})")
        return float(value)
    m = _QTY.match(str(value))
    if not m:
        raise ScenarioError(f"{path}: cannot parse quantity {value!r}")
    num, unit = float(m.group(1)), m.group(2)
    if unit not in table:
        raise ScenarioError(f"{path}: unit {unit!r} not allowed here "
                            f"(expected one of {sorted(u or '<none>' for u in table)})")
    scale = table[unit]
    # "x omega0" rates and s/rad time constants both scale by omega0
    return num * (omega0 if scale == "omega0" else scale)


def format_quantity(x: float, kind: str) -> Any:
    unit = CANONICAL[kind]
    return float(x) if not unit else f"{float(x)!r} {unit}"


# ---------------------------------------------------------------------------
# scenario schema

PARAM_SCHEMA = {
    "base": (PerUnitBase, {"s_base": "power", "v_base": "voltage", "f_nominal": "frequency"}),
    "grid": (GridLink, {"r_g": "pu", "l_g": "pu_time", "v_g": "pu", "omega_g": "pu"}),
    "controller": (ControllerParams, {"eta": "rate", "alpha": "pu", "phi": "angle",
                                      "p_star": "pu", "q_star": "pu", "v_star": "pu"}),
    "filter": (FilterAndLoops, {"r_f": "pu", "l_f": "pu_time", "g_f": "pu", "c_f": "pu_time",
                                "k_pv": "gain", "k_rv": "gain_rate",
                                "k_pc": "gain", "k_rc": "gain_rate"}),
}
EVENT_SCHEMA = {"v_g": "pu", "omega_g": "pu", "p_star": "pu", "q_star": "pu", "v_star": "pu"}
INTEGRATOR_SCHEMA = {"method": "str", "step": "time", "t_end": "time", "rtol": "number",
                     "atol": "number", "output_stride": "int"}
ANALYSIS_SCHEMA = {
    "certify2": {},
    "certify_full": {"epsilon": "number", "epsilon_scan": "bool", "c1_fraction": "number"},
    "simulate": {},
    "classify": {},
    "boundary_sweep": {"alpha": "list:pu", "mode": "str", "bracket": "list:rate",
                       "tol": "rate", "horizon": "time", "step": "time", "v_g_pre": "pu",
                       "model": "int", "empirical_alpha": "list:pu"},
    "phase_portrait": {"half_width": "pu", "n": "int", "horizon": "time", "step": "time"},
    "existence_suite": {"draws": "int"},
}
MODELS = (2, 4, 8, 12, "offgrid")


@dataclass
class Analysis:
    name: str
    options: Dict[str, Any] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    params: SystemParams
    model: Any
    integrator: IntegratorConfig
    initial: Any = "equilibrium"        # "equilibrium", "grid_voltage" or a tuple of pu values
    events: Tuple[Event, ...] = ()
    analyses: Tuple[Analysis, ...] = ()
    description: str = ""
    phi_auto: bool = False

    def analysis(self, name) -> Optional[Analysis]:
        for a in self.analyses:
            if a.name == name:
                return a
        return None

    @property
    def final_params(self) -> SystemParams:
        p = self.params
        for e in self.events:
            p = e.apply(p)
        return p


def _typed(value, kind, path, omega0):
    if kind == "str":
        if not isinstance(value, str):
            raise ScenarioError(f"{path}: expected a string")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ScenarioError(f"{path}: expected true/false")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(f"{path}: expected an integer")
        return value
    if kind.startswith("list:"):
        if not isinstance(value, list) or not value:
            raise ScenarioError(f"{path}: expected a non-empty list")
        return tuple(_typed(v, kind[5:], f"{path}[{k}]", omega0) for k, v in enumerate(value))
    return parse_quantity(value, kind, path, omega0)


def _untyped(value, kind):
    if kind in ("str", "bool", "int"):
        return value
    if kind.startswith("list:"):
        return [_untyped(v, kind[5:]) for v in value]
    return format_quantity(value, kind)


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ScenarioError(f"{path}: expected a mapping")
    extra = set(d) - set(allowed)
    if extra:
        raise ScenarioError(f"{path}.{sorted(extra)[0]}: unknown field")


def scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(doc, {"name", "description", "model", "base", "grid", "controller", "filter",
                      "initial", "events", "integrator", "analyses"}, "scenario")
    for key in ("name", "model", "grid", "controller", "integrator"):
        if key not in doc:
            raise ScenarioError(f"{key}: required field missing")
    base_d = doc.get("base", {}) or {}
    _check_keys(base_d, PARAM_SCHEMA["base"][1], "base")
    try:
        base = PerUnitBase(**{k: parse_quantity(v, PARAM_SCHEMA["base"][1][k], f"base.{k}")
                              for k, v in base_d.items()})
    except ValueError as e:
        raise ScenarioError(f"base: {e}") from None
    w0 = base.omega0

    parts, phi_auto = {}, False
    for sec in ("grid", "controller", "filter"):
        cls, schema = PARAM_SCHEMA[sec]
        raw = doc.get(sec, {}) or {}
        _check_keys(raw, schema, sec)
        vals = {}
        for k, v in raw.items():
            if sec == "controller" and k == "phi" and v == "auto":
                phi_auto = True
                continue
            vals[k] = parse_quantity(v, schema[k], f"{sec}.{k}", w0)
        parts[sec] = vals
    if phi_auto or "phi" not in parts["controller"]:
        g = parts["grid"]
        if "r_g" not in g or "l_g" not in g:
            raise ScenarioError("grid: r_g and l_g are required")
        parts["controller"]["phi"] = impedance_angle(g["r_g"], g["l_g"])
        phi_auto = True
    try:
        grid = GridLink(**parts["grid"])
        ctrl = ControllerParams(**parts["controller"])
        filt = FilterAndLoops(**parts["filter"])
    except TypeError as e:
        raise ScenarioError(f"parameters: {e}") from None
    except ValueError as e:
        raise ScenarioError(f"parameters: {e}") from None
    params = SystemParams(grid, ctrl, filt, base)

    model = doc["model"]
    if model not in MODELS:
        raise ScenarioError(f"model: must be one of {list(MODELS)}")

    integ = doc["integrator"]
    _check_keys(integ, INTEGRATOR_SCHEMA, "integrator")
    try:
        cfg = IntegratorConfig(**{k: _typed(v, INTEGRATOR_SCHEMA[k], f"integrator.{k}", w0)
                                  for k, v in integ.items()})
    except TypeError as e:
        raise ScenarioError(f"integrator: {e}") from None
    except ScenarioError:
        raise
    except ValueError as e:
        raise ScenarioError(f"integrator: {e}") from None

    initial = doc.get("initial", "equilibrium")
    if isinstance(initial, list):
        initial = tuple(parse_quantity(v, "pu", f"initial[{k}]") for k, v in enumerate(initial))
        if len(initial) != model_dim(model):
            raise ScenarioError(f"initial: model needs {model_dim(model)} values")
    elif initial not in ("equilibrium", "grid_voltage"):
        raise ScenarioError("initial: expected 'equilibrium', 'grid_voltage' or a list")

    events = []
    for k, ev in enumerate(doc.get("events", []) or []):
        path = f"events[{k}]"
        _check_keys(ev, set(EVENT_SCHEMA) | {"time"}, path)
        if "time" not in ev:
            raise ScenarioError(f"{path}.time: required field missing")
        t = parse_quantity(ev["time"], "time", f"{path}.time")
        ch = {kk: parse_quantity(v, EVENT_SCHEMA[kk], f"{path}.{kk}") for kk, v in ev.items()
              if kk != "time"}
        try:
            events.append(Event(t, ch))
        except ValueError as e:
            raise ScenarioError(f"{path}: {e}") from None
    for a, b in zip(events, events[1:]):
        if not b.time > a.time:
            raise ScenarioError("events: times must be strictly increasing")
    for k, e in enumerate(events):
        if not 0 <= e.time <= cfg.t_end:
            raise ScenarioError(f"events[{k}].time: outside [0, t_end]")

    analyses = []
    for k, item in enumerate(doc.get("analyses", []) or []):
        path = f"analyses[{k}]"
        if isinstance(item, str):
            name, opts = item, {}
        elif isinstance(item, dict) and len(item) == 1:
            name, opts = next(iter(item.items()))
            opts = opts or {}
        else:
            raise ScenarioError(f"{path}: expected a name or a single-key mapping")
        if name not in ANALYSIS_SCHEMA:
            raise ScenarioError(f"{path}: unknown analysis {name!r}")
        _check_keys(opts, ANALYSIS_SCHEMA[name], f"{path}.{name}")
        analyses.append(Analysis(name, {kk: _typed(v, ANALYSIS_SCHEMA[name][kk],
                                                   f"{path}.{name}.{kk}", w0)
                                        for kk, v in opts.items()}))
    names = [a.name for a in analyses]
    if "classify" in names and "simulate" not in names:
        raise ScenarioError("analyses: classify requires simulate")

    return Scenario(str(doc["name"]), params, model, cfg, initial, tuple(events),
                    tuple(analyses), str(doc.get("description", "")), phi_auto)


def scenario_to_dict(sc: Scenario) -> dict:
    p = sc.params
    doc = {"name": sc.name}
    if sc.description:
        doc["description"] = sc.description
    doc["model"] = sc.model
    objs = {"base": p.base, "grid": p.grid, "controller": p.ctrl, "filter": p.filt}
    for sec, (_, schema) in PARAM_SCHEMA.items():
        doc[sec] = {k: format_quantity(getattr(objs[sec], k), kind) for k, kind in schema.items()}
    if sc.phi_auto:
        doc["controller"]["phi"] = "auto"
    doc["initial"] = ([format_quantity(v, "pu") for v in sc.initial]
                      if isinstance(sc.initial, tuple) else sc.initial)
    doc["events"] = [{"time": format_quantity(e.time, "time"),
                      **{k: format_quantity(v, EVENT_SCHEMA[k]) for k, v in e.change}}
                     for e in sc.events]
    c = sc.integrator
    doc["integrator"] = {"method": c.method, "step": format_quantity(c.step, "time"),
                         "t_end": format_quantity(c.t_end, "time"), "rtol": c.rtol,
                         "atol": c.atol, "output_stride": c.output_stride}
    doc["analyses"] = [
        {a.name: {k: _untyped(v, ANALYSIS_SCHEMA[a.name][k]) for k, v in a.options.items()}}
        if a.options else a.name for a in sc.analyses]
    return doc


def parse_scenario(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError(f"scenario: not valid YAML ({e})") from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: top level must be a mapping")
    return scenario_from_dict(doc)


def serialize_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)


# ---------------------------------------------------------------------------
# presets

PRESETS = ("caseI_slow", "caseI_fast", "caseII_boundary", "caseIII_cycle", "caseIII_stable",
           "example3", "example4_roa", "offgrid_hopf")


def list_presets() -> Tuple[str, ...]:
    return PRESETS


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ScenarioError(f"preset {name!r} does not exist")
    return resources.files("cdroop").joinpath("presets", f"{name}.yaml").read_text()


def load_scenario(ref: str) -> Scenario:
    """Load a scenario from a file path or a preset name."""
    path = Path(ref)
    if path.is_file():
        return parse_scenario(path.read_text())
    if ref in PRESETS:
        return parse_scenario(preset_text(ref))
    raise ScenarioError(f"scenario: {ref!r} is neither a readable file nor a preset")


# ---------------------------------------------------------------------------
# execution

def _initial_state(sc: Scenario) -> StateVector:
    n = model_dim(sc.model)
    if isinstance(sc.initial, tuple):
        return np.array(sc.initial)
    p = sc.params
    if sc.initial == "grid_voltage":
        if n != 2:
            raise ScenarioError("initial: 'grid_voltage' is for second-order models")
        return np.array([p.grid.v_g, 0.0])
    if sc.model == "offgrid":
        raise ScenarioError("initial: off-grid runs need an explicit initial state")
    eq = voltage_following_equilibrium(p) if p.ctrl.alpha == 0 else equilibria(p)[0]
    return lift(eq, p, n).data


def _eq_dict(e):
    return {"v_s": e.v_s, "delta_s": e.delta_s, "v_vec": [float(x) for x in e.v_vec],
            "residual": e.residual}


def _num(x):
    return float(x) if x is not None and math.isfinite(x) else None


def certificate_report(sc: Scenario, epsilon: float = None) -> dict:
    """Second-order and full-order certificates for the post-event parameters."""
    p = sc.final_params
    rep: Dict[str, Any] = {"schema_version": SCHEMA_VERSION, "tool_version": __version__,
                           "scenario": sc.name, "conditions": []}
    conds = rep["conditions"]
    if p.grid.v_g == 0:
        og = certify.off_grid_classification(p)
        rep["off_grid"] = {"kind": og.kind, "amplitude_sq": og.amplitude_sq}
        k = certify.kappa(p)
        conds.append(certify.Condition("off_grid_origin_gas", -(k.kappa_r + p.ctrl.alpha),
                                       "Re{e^{j phi} sigma*} + alpha <= Re{e^{j phi} y}").as_dict())
        return rep
    if p.ctrl.alpha == 0:
        e = voltage_following_equilibrium(p)
        rep["equilibria"] = [_eq_dict(e)]
        conds.append(certify.check_voltage_following(p).as_dict())
        return rep

    eqs = equilibria(p)
    cert = certify.certify_second_order(p, eqs)
    rep["equilibria"] = [_eq_dict(e) for e in eqs]
    rep["uniqueness"] = eqs.uniqueness
    rep["discriminant"] = eqs.coeffs.delta
    rep["cubic"] = {k: getattr(eqs.coeffs, k) for k in "abcd"}
    rep["classical_equilibria"] = [{"v_s": v, "delta_s": d} for v, d in classical_droop_equilibria(p)]
    rep["kappa"] = {"kappa_r": cert.kappa.kappa_r, "kappa_i": cert.kappa.kappa_i}
    rep["v_m"] = cert.v_m
    rep["scr_theta"] = cert.scr_theta
    rep["local"] = [{"hurwitz": pc.local.hurwitz,
                     "eigenvalues": [[ev.real, ev.imag] for ev in pc.local.eigenvalues]}
                    for pc in cert.points]
    conds.extend(c.as_dict() for c in cert.conditions())

    full = sc.analysis("certify_full")
    if full is not None or epsilon is not None:
        opts = full.options if full is not None else {}
        eps = epsilon if epsilon is not None else opts.get("epsilon")
        frac = opts.get("c1_fraction")
        fo: Dict[str, Any] = {}
        try:
            if eps is not None:
                c1 = None
                if frac is not None:
                    c1 = frac * certify.perturbation_coefficients(p, eps, eqs[0]).alpha_1
                fc = certify.check_full_order(p, eps, c1)
                fo.update(epsilon=eps, c=[_num(fc.c1), _num(fc.c2), _num(fc.c3)],
                          roa_radius=fc.roa_radius, M=fc.M.tolist(),
                          m_eigenvalues=fc.m_eigenvalues.tolist(),
                          positive_definite=fc.positive_definite)
                for c in fc.conditions:
                    d = c.as_dict()
                    d["name"] = "full_order." + d["name"]
                    conds.append(d)
            if opts.get("epsilon_scan", False):
                kw = {} if frac is None else {"c1_fraction": frac}
                er = certify.epsilon_range(p, **kw)
                fo["epsilon_range"] = {
                    "lower": er.lower, "upper": er.upper, "empty": er.empty, "capped": er.capped,
                    "c1": er.c1,
                    "cond_d_at_upper": None if er.cond_d_at_upper is None
                    else er.cond_d_at_upper.as_dict()}
                if not er.empty:
                    fo["roa_radius_at_upper"] = certify.roa_radius(er.upper, eqs[0].v_s) \
                        if er.upper > 3 else None
        except (certify.TheoremInapplicable, ValueError) as e:
            fo["error"] = str(e)
        rep["full_order"] = fo
    return rep


def _write_csv(path: Path, traj):
    d = traj.derived
    cols = [traj.times[:, None], traj.states] + [d[k][:, None] for k in ("p", "q", "v", "omega", "eps")]
    header = ",".join(("t",) + traj.names + ("p", "q", "v", "omega", "eps"))
    np.savetxt(path, np.hstack(cols), delimiter=",", header=header, comments="", fmt="%.17g")


class NumericalError(RuntimeError):
    pass


def run_scenario(sc: Scenario, out: Path, seed: int = None, epsilon: float = None,
                 certify_only: bool = False) -> Tuple[dict, dict]:
    out.mkdir(parents=True, exist_ok=True)
    report = certificate_report(sc, epsilon) if (
        certify_only or sc.analysis("certify2") or sc.analysis("certify_full")) else \
        {"schema_version": SCHEMA_VERSION, "tool_version": __version__,
         "scenario": sc.name, "conditions": []}
    result: Dict[str, Any] = {"schema_version": SCHEMA_VERSION, "scenario": sc.name}
    if not certify_only:
        if sc.analysis("simulate"):
            traj = integrate(sc.model, sc.params, _initial_state(sc), sc.events, sc.integrator)
            _write_csv(out / "trajectory.csv", traj)
            result["trajectory"] = {"file": "trajectory.csv", "samples": int(traj.times.size),
                                    "flag": traj.flag, "message": traj.message}
            if traj.flag != "ok":
                _dump(out, report, result)
                raise NumericalError(f"integration failed: {traj.message}")
            if sc.analysis("classify"):
                oc = analysis.classify(traj)
                result["outcome"] = oc.as_dict()
                p = traj.params
                if p.ctrl.alpha > 0 and p.grid.v_g > 0:
                    result["v_m"] = certify.voltage_bound(p)
                    x = traj.states[:, :2]
                    result["max_vhat"] = float(np.max(np.linalg.norm(x, axis=1)))
        bs = sc.analysis("boundary_sweep")
        if bs:
            o = bs.options
            p = sc.final_params
            model = o.get("model", 4)
            mode = o.get("mode", "analytic")
            kw = {}
            for k in ("horizon", "step", "v_g_pre"):
                if k in o:
                    kw[k] = o[k]
            if "bracket" in o:
                kw["bracket"] = tuple(b / p.omega0 for b in o["bracket"])
            if "tol" in o:
                kw["tol"] = o["tol"] / p.omega0
            alphas = o.get("alpha", (p.ctrl.alpha,))
            curve = {}
            if mode in ("analytic", "both"):
                c = analysis.boundary_sweep(p, alphas, model, "analytic")
                curve["analytic"] = c.as_dict()
            if mode in ("empirical", "both"):
                c = analysis.boundary_sweep(p, o.get("empirical_alpha", alphas), model,
                                            "empirical", **kw)
                curve["empirical"] = c.as_dict()
            curve["omega0"] = p.omega0
            result["boundary"] = curve
        pp = sc.analysis("phase_portrait")
        if pp:
            o = pp.options
            p = sc.final_params
            grid = analysis.initial_grid(o.get("half_width", 0.7), o.get("n", 20))
            res = analysis.phase_portrait(p, grid, 2, o.get("horizon", 20.0), o.get("step", 1e-3))
            result["phase_portrait"] = {
                "fractions": res.fractions(), "sup_norm": res.sup_norm,
                "v_m": certify.voltage_bound(p) if p.ctrl.alpha > 0 else None,
                "excluded": res.excluded.tolist(),
                "entries": [{"initial": e.initial.tolist(), "kind": e.outcome.kind,
                             "period": _num(e.outcome.period)} for e in res.entries]}
        ex = sc.analysis("existence_suite")
        if ex:
            s = analysis.existence_suite(ex.options.get("draws", 1000), 0 if seed is None else seed)
            result["existence_suite"] = s.as_dict()
    _dump(out, report, result)
    return report, result


def _dump(out, report, result):
    (out / "report.json").write_text(json.dumps(report, indent=2, allow_nan=False, default=_num))
    (out / "analysis.json").write_text(json.dumps(result, indent=2, allow_nan=False, default=_num))


def _summary(report, result) -> str:
    lines = [f"scenario {report['scenario']}"]
    for c in report.get("conditions", []):
        m = c["margin"]
        lines.append(f"  {c['name']:<24} {'yes' if c['satisfied'] else 'no ':<4} "
                     f"margin {m if m is None else f'{m:.6g}'}")
    fo = report.get("full_order", {})
    if "epsilon_range" in fo:
        er = fo["epsilon_range"]
        lines.append(f"  epsilon range           (3, {er['upper']:.4g}]" if not er["empty"]
                     else "  epsilon range           empty")
    if "outcome" in result:
        lines.append(f"  outcome                 {result['outcome']['kind']}")
    if "phase_portrait" in result:
        lines.append(f"  phase portrait          {result['phase_portrait']['fractions']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cdroop", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario file or preset")
    r.add_argument("scenario")
    r.add_argument("--out", default=None, help="output directory (default out/<name>)")
    r.add_argument("--seed", type=int, default=None, help="seed for randomized suites")
    sub.add_parser("list-presets", help="print the preset names")
    c = sub.add_parser("certify", help="evaluate the analytical certificates only")
    c.add_argument("scenario")
    c.add_argument("--epsilon", type=float, default=None)
    c.add_argument("--out", default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.cmd == "list-presets":
        print("\n".join(list_presets()))
        return EXIT_OK
    try:
        sc = load_scenario(args.scenario)
        out = Path(args.out) if args.out else Path("out") / sc.name
        if args.cmd == "certify":
            if args.epsilon is not None and not args.epsilon > 3:
                raise ScenarioError("--epsilon: must be > 3")
            report, result = run_scenario(sc, out, epsilon=args.epsilon, certify_only=True)
        else:
            report, result = run_scenario(sc, out, seed=args.seed)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    except (NumericalError, FloatingPointError, OverflowError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(_summary(report, result))
    print(f"outputs written to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
