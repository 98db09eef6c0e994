"""Scenario files: JSON schema checks, canonical form, hashing and problem construction.

A scenario is a JSON object with the blocks ``geometry``, ``regions``,
``materials``, ``sources``, ``initial``, ``time``, ``objective``, ``solver``,
``optimizer``, ``output`` and optionally ``manufactured``. Missing optional
entries are filled with defaults so that the canonical form is complete;
``dump(parse(x))`` is then a fixed point.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import numbers
from dataclasses import dataclass

import numpy as np

from .assembly import MaterialField, as_tensor_field, load_vector, project_initial_B, project_initial_E
from .mesh import build_mesh, make_predicate, tag_regions
from .objective import ObjectiveConfig
from .optimizer import OptimSettings
from .problem import Discretization, SourceTerm, TimeGrid
from .scenarios import AbsorberProfile, ManufacturedWaveform, Waveform, builtin_scenario, eval_absorber

__all__ = ["ScenarioConfig", "ConfigError", "validate", "normalize", "parse_scenario", "load_scenario",
           "dump_scenario", "canonical_json", "config_hash", "build_problem", "Problem", "from_preset"]

DEFAULTS = {
    "name": "scenario",
    "geometry": {"origin": [0.0, 0.0, 0.0], "periodic": [False, False, False]},
    "regions": {},
    "materials": {"sigma": 0.0, "eps_floor": 0.0, "mu_floor": 0.0},
    "sources": [],
    "initial": {"E": None, "B": None},
    "objective": {"w_track": 1.0, "alpha1": 1.0, "alpha2": 1.0},
    "solver": {"method": "cg", "tol": 1e-10, "max_iter": None, "preconditioner": "jacobi", "source_order": 4,
               "load_order": 3},
    "optimizer": {"memory": 10, "tol": 1e-6, "max_iter": 100, "c1": 1e-4, "backtrack": 0.5,
                  "max_backtracks": 60, "inner_product": "dual", "h0": "dynamic", "h0_scale": 1.0,
                  "gtol_floor": 1.0},
    "output": {"stride": 1, "line": None, "snapshot_time": None},
}

_KEYS = {
    "": {"name", "description", "geometry", "regions", "materials", "sources", "initial", "time", "objective",
         "solver", "optimizer", "output", "manufactured"},
    "geometry": {"counts", "spacing", "origin", "periodic"},
    "materials": {"epsilon", "mu", "sigma", "eps_floor", "mu_floor"},
    "initial": {"E", "B"},
    "time": {"T", "steps"},
    "objective": {"w_track", "alpha1", "alpha2"},
    "solver": {"method", "tol", "max_iter", "preconditioner", "source_order", "load_order"},
    "optimizer": set(DEFAULTS["optimizer"]),
    "output": {"stride", "line", "snapshot_time"},
    "manufactured": {"omega", "field"},
}
_SOURCE_KEYS = {"region", "polarization", "amplitude", "waveform", "name"}
_WAVE_KEYS = {"kind", "f_center", "sigma_J", "t_offset", "amplitude", "times", "values"}
_MATERIAL_KEYS = {"value", "pieces", "absorber"}
_ABSORBER_KEYS = {"sigma_max", "L_abs", "axes", "exponent"}
_LINE_KEYS = {"axis", "point", "samples"}


class ConfigError(ValueError):
    """Raised with the full list of validation errors."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


def _is_num(v):
    return isinstance(v, numbers.Real) and not isinstance(v, bool) and math.isfinite(float(v))


def _is_int(v):
    return isinstance(v, numbers.Integral) and not isinstance(v, bool)


def _merge(defaults, data):
    out = copy.deepcopy(defaults)
    for k, v in data.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def normalize(data):
    """Fill defaults and convert tuples to lists (no validation)."""
    data = json.loads(json.dumps(data))
    return _merge(DEFAULTS, data)


def _unknown(block, allowed, path, errors):
    for k in block:
        if k not in allowed:
            errors.append(f"unknown key '{path + '.' if path else ''}{k}'")


def _vec3(v, path, errors, positive=False, kind="number"):
    if not isinstance(v, list) or len(v) != 3:
        errors.append(f"{path}: expected a list of 3 values")
        return False
    for i, x in enumerate(v):
        if kind == "bool":
            if not isinstance(x, bool):
                errors.append(f"{path}[{i}]: expected true/false")
        elif kind == "int":
            if not _is_int(x) or x < 1:
                errors.append(f"{path}[{i}]: expected an integer >= 1")
        elif not _is_num(x) or (positive and x <= 0):
            errors.append(f"{path}[{i}]: expected a {'positive ' if positive else ''}finite number")
    return True


def _tensor_values(spec):
    """All constant tensors appearing in a material spec (base and pieces)."""
    if isinstance(spec, dict):
        vals = [spec.get("value", 0.0)] + [p.get("value") for p in spec.get("pieces", []) if isinstance(p, dict)]
    else:
        vals = [spec]
    return vals


def _check_material(spec, path, floor, strict, regions, errors):
    if isinstance(spec, dict):
        _unknown(spec, _MATERIAL_KEYS, path, errors)
        if "value" not in spec:
            errors.append(f"{path}.value: missing")
        for i, p in enumerate(spec.get("pieces", [])):
            if not isinstance(p, dict) or "value" not in p or "region" not in p:
                errors.append(f"{path}.pieces[{i}]: needs 'region' and 'value'")
            elif isinstance(p["region"], str) and p["region"] not in regions:
                errors.append(f"{path}.pieces[{i}].region: unknown region '{p['region']}'")
        ab = spec.get("absorber")
        if ab is not None:
            if strict:
                errors.append(f"{path}.absorber: only sigma may carry an absorber")
            elif not isinstance(ab, dict):
                errors.append(f"{path}.absorber: expected an object")
            else:
                _unknown(ab, _ABSORBER_KEYS, f"{path}.absorber", errors)
                for k in ("sigma_max", "L_abs"):
                    if not _is_num(ab.get(k)) or ab.get(k) < 0 or (k == "L_abs" and ab.get(k) == 0):
                        errors.append(f"{path}.absorber.{k}: expected a positive number")
    for v in _tensor_values(spec):
        try:
            T = np.asarray(v, dtype=float)
            if T.ndim == 0:
                T = T * np.eye(3)
            if T.shape != (3, 3) or not np.all(np.isfinite(T)):
                raise ValueError
        except (TypeError, ValueError):
            errors.append(f"{path}: expected a number or a 3x3 tensor")
            continue
        if np.max(np.abs(T - T.T)) > 1e-12 * max(1.0, np.max(np.abs(T))):
            errors.append(f"{path}: tensor is not symmetric")
            continue
        lam = float(np.linalg.eigvalsh(T).min())
        if strict and not (lam > floor and lam > 0):
            errors.append(f"{path}: ellipticity violated (min eigenvalue {lam:g} must exceed floor {floor:g})")
        if not strict and lam < 0:
            errors.append(f"{path}: conductivity must be positive semidefinite (min eigenvalue {lam:g})")


def _check_predicate(spec, path, errors):
    try:
        make_predicate(spec)
    except Exception as exc:  # any malformed spec
        errors.append(f"{path}: invalid region predicate ({exc.__class__.__name__}: {exc})")


def validate(data):
    """Return the list of all validation errors of a normalized scenario dict."""
    errors = []
    if not isinstance(data, dict):
        return ["scenario must be a JSON object"]
    _unknown(data, _KEYS[""], "", errors)
    for block in ("geometry", "materials", "initial", "time", "objective", "solver", "optimizer", "output"):
        if block not in data or not isinstance(data[block], dict):
            errors.append(f"{block}: missing block")
            continue
        _unknown(data[block], _KEYS[block], block, errors)
    if errors and any(e.endswith("missing block") for e in errors):
        return errors
    g = data["geometry"]
    for k in ("counts", "spacing"):
        if k not in g:
            errors.append(f"geometry.{k}: missing")
    if "counts" in g:
        _vec3(g["counts"], "geometry.counts", errors, kind="int")
    if "spacing" in g:
        _vec3(g["spacing"], "geometry.spacing", errors, positive=True)
    _vec3(g["origin"], "geometry.origin", errors)
    _vec3(g["periodic"], "geometry.periodic", errors, kind="bool")
    regions = data.get("regions", {})
    if not isinstance(regions, dict):
        errors.append("regions: expected an object")
        regions = {}
    for name, spec in regions.items():
        _check_predicate(spec, f"regions.{name}", errors)
    m = data["materials"]
    for k in ("epsilon", "mu"):
        if k not in m:
            errors.append(f"materials.{k}: missing")
    for k in ("eps_floor", "mu_floor"):
        if not _is_num(m.get(k)) or m.get(k) < 0:
            errors.append(f"materials.{k}: expected a non-negative number")
    eps_floor = m["eps_floor"] if _is_num(m.get("eps_floor")) else 0.0
    mu_floor = m["mu_floor"] if _is_num(m.get("mu_floor")) else 0.0
    if "epsilon" in m:
        _check_material(m["epsilon"], "materials.epsilon", eps_floor, True, regions, errors)
    if "mu" in m:
        _check_material(m["mu"], "materials.mu", mu_floor, True, regions, errors)
    _check_material(m["sigma"], "materials.sigma", 0.0, False, regions, errors)
    if not isinstance(data.get("sources", []), list):
        errors.append("sources: expected a list")
    else:
        for i, s in enumerate(data.get("sources", [])):
            p = f"sources[{i}]"
            if not isinstance(s, dict):
                errors.append(f"{p}: expected an object")
                continue
            _unknown(s, _SOURCE_KEYS, p, errors)
            reg = s.get("region")
            if isinstance(reg, str):
                if reg not in regions:
                    errors.append(f"{p}.region: unknown region '{reg}'")
            elif isinstance(reg, (dict, list)):
                _check_predicate(reg, f"{p}.region", errors)
            else:
                errors.append(f"{p}.region: missing")
            if "polarization" not in s:
                errors.append(f"{p}.polarization: missing")
            else:
                _vec3(s["polarization"], f"{p}.polarization", errors)
            if "amplitude" in s and not _is_num(s["amplitude"]):
                errors.append(f"{p}.amplitude: expected a number")
            w = s.get("waveform")
            if not isinstance(w, dict):
                errors.append(f"{p}.waveform: missing")
            else:
                _unknown(w, _WAVE_KEYS, f"{p}.waveform", errors)
                kind = w.get("kind", "gauss-ramped-cosine")
                if kind == "gauss-ramped-cosine":
                    for k in ("f_center", "sigma_J", "t_offset"):
                        if not _is_num(w.get(k)) or w.get(k) < 0:
                            errors.append(f"{p}.waveform.{k}: expected a non-negative number")
                elif kind == "tabulated":
                    try:
                        Waveform(kind="tabulated", times=tuple(w["times"]), values=tuple(w["values"]))
                    except (KeyError, TypeError, ValueError) as exc:
                        errors.append(f"{p}.waveform: {exc}")
                else:
                    errors.append(f"{p}.waveform.kind: unknown kind '{kind}'")
    for k in ("E", "B"):
        v = data["initial"].get(k)
        if v is None:
            continue
        if not isinstance(v, dict) or v.get("kind") not in ("uniform",) or "value" not in v:
            errors.append(f"initial.{k}: expected null or {{'kind': 'uniform', 'value': [x, y, z]}}")
        else:
            _vec3(v["value"], f"initial.{k}.value", errors)
    t = data.get("time", {})
    if not _is_num(t.get("T")) or t.get("T") <= 0:
        errors.append("time.T: expected a positive number")
    if not _is_int(t.get("steps")) or t.get("steps") < 1:
        errors.append("time.steps: expected an integer >= 1")
    o = data["objective"]
    for k in ("w_track", "alpha1", "alpha2"):
        if not _is_num(o.get(k)) or o.get(k) < 0:
            errors.append(f"objective.{k}: expected a non-negative number")
    s = data["solver"]
    if s.get("method") not in ("cg", "direct", "dense"):
        errors.append("solver.method: expected 'cg', 'direct' or 'dense'")
    if not _is_num(s.get("tol")) or s.get("tol") <= 0:
        errors.append("solver.tol: expected a positive number")
    if s.get("max_iter") is not None and (not _is_int(s.get("max_iter")) or s.get("max_iter") < 1):
        errors.append("solver.max_iter: expected null or an integer >= 1")
    if s.get("preconditioner") not in ("jacobi", "none"):
        errors.append("solver.preconditioner: expected 'jacobi' or 'none'")
    for k in ("source_order", "load_order"):
        if not _is_int(s.get(k)) or s.get(k) < 1:
            errors.append(f"solver.{k}: expected an integer >= 1")
    opt = data["optimizer"]
    try:
        errors += [f"optimizer: {e}" for e in OptimSettings(**opt).validate()]
    except TypeError as exc:
        errors.append(f"optimizer: {exc}")
    out = data["output"]
    if not _is_int(out.get("stride")) or out.get("stride") < 1:
        errors.append("output.stride: expected an integer >= 1")
    line = out.get("line")
    if line is not None:
        if not isinstance(line, dict):
            errors.append("output.line: expected an object")
        else:
            _unknown(line, _LINE_KEYS, "output.line", errors)
            if line.get("axis") not in (0, 1, 2):
                errors.append("output.line.axis: expected 0, 1 or 2")
    man = data.get("manufactured")
    if man is not None:
        if not isinstance(man, dict):
            errors.append("manufactured: expected an object")
        else:
            _unknown(man, _KEYS["manufactured"], "manufactured", errors)
            if not _is_num(man.get("omega")) or man.get("omega") <= 0:
                errors.append("manufactured.omega: expected a positive number")
    return errors


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(data):
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """A validated, normalized scenario."""

    data: dict

    @property
    def name(self):
        return self.data.get("name", "scenario")

    @property
    def hash(self):
        return config_hash(self.data)

    @property
    def grid(self):
        return TimeGrid(float(self.data["time"]["T"]), int(self.data["time"]["steps"]))

    @property
    def dt(self):
        return self.grid.dt

    def to_json(self, indent=2):
        return json.dumps(self.data, sort_keys=True, indent=indent, allow_nan=False) + "\n"


def parse_scenario(obj):
    """Validate a scenario dict (or JSON text) and return a :class:`ScenarioConfig`.

    Raises
    ------
    ConfigError
        Listing every problem found.
    """
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"invalid JSON: {exc}"]) from None
    if not isinstance(obj, dict):
        raise ConfigError(["scenario must be a JSON object"])
    data = normalize(obj)
    errors = validate(data)
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(data)


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def dump_scenario(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())


def from_preset(name, **kwargs):
    return parse_scenario(builtin_scenario(name, **kwargs))


# ---------------------------------------------------------------------------
# Problem construction


@dataclass(eq=False)
class Problem:
    """Everything needed to run a scenario."""

    config: ScenarioConfig
    disc: Discretization
    objective: ObjectiveConfig
    optim: OptimSettings
    manufactured: dict | None = None

    def exact_state(self, t):
        """Exact semi-discrete solution of a manufactured scenario at time ``t``."""
        if self.manufactured is None:
            raise ValueError("scenario has no manufactured solution")
        w = self.manufactured["omega"]
        e_hat = self.manufactured["e_hat"]
        return math.cos(w * t) * e_hat, -(math.sin(w * t) / w) * self.manufactured["curl_e_hat"]


def _region_mask(spec, mesh, regions):
    if isinstance(spec, str):
        return regions.cell_mask(spec)
    return make_predicate(spec)(mesh.cell_centers())


def _material_array(spec, mesh, regions):
    n = mesh.n_cells
    if not isinstance(spec, dict):
        return as_tensor_field(spec, n)
    arr = as_tensor_field(spec["value"], n)
    for piece in spec.get("pieces", []):
        mask = _region_mask(piece["region"], mesh, regions)
        arr[mask] = as_tensor_field(piece["value"], 1)[0]
    ab = spec.get("absorber")
    if ab is not None:
        prof = AbsorberProfile(float(ab["sigma_max"]), float(ab["L_abs"]), tuple(ab.get("axes", (0, 1, 2))),
                               float(ab.get("exponent", 3.0)))
        lo, hi = mesh.bounds
        sig = eval_absorber(prof, mesh.cell_centers(), 0.5 * (hi - lo), 0.5 * (hi + lo))
        arr = arr + sig[:, None, None] * np.eye(3)[None]
    return arr


def _uniform(value):
    v = np.asarray(value, dtype=float)
    return lambda p: np.broadcast_to(v, p.shape).copy()


def _sine_field(p):
    s = np.sin(np.pi * p)
    return np.stack([s[:, 1] * s[:, 2], s[:, 0] * s[:, 2], s[:, 0] * s[:, 1]], axis=1)


def build_problem(cfg, solver_overrides=None):
    """Assemble the discretization, objective and optimizer settings of a scenario."""
    if not isinstance(cfg, ScenarioConfig):
        cfg = parse_scenario(cfg)
    d = cfg.data
    g = d["geometry"]
    mesh = build_mesh(tuple(g["counts"]), tuple(g["spacing"]), tuple(g["origin"]), tuple(g["periodic"]))
    regions = tag_regions(mesh, d["regions"])
    m = d["materials"]
    materials = MaterialField.from_values(
        mesh.n_cells, _material_array(m["epsilon"], mesh, regions), _material_array(m["mu"], mesh, regions),
        _material_array(m["sigma"], mesh, regions), m["eps_floor"], m["mu_floor"],
    )
    sv = d["solver"]
    solver_options = {"method": sv["method"], "tol": sv["tol"], "max_iter": sv["max_iter"],
                      "preconditioner": sv["preconditioner"]}
    solver_options.update(solver_overrides or {})
    disc = Discretization(mesh, regions, materials, cfg.grid, [], None, None, solver_options)
    order = sv["load_order"]
    sources = []
    for i, s in enumerate(d["sources"]):
        mask = _region_mask(s["region"], mesh, regions)
        load = load_vector(mesh, _uniform(s["polarization"]), "edge", cells=mask, order=order)[disc.ie]
        w = dict(s["waveform"])
        if w.get("kind", "gauss-ramped-cosine") == "tabulated":
            wave = Waveform(kind="tabulated", times=tuple(w["times"]), values=tuple(w["values"]),
                            amplitude=float(w.get("amplitude", 1.0)))
        else:
            wave = Waveform(float(w["f_center"]), float(w["sigma_J"]), float(w["t_offset"]),
                            float(w.get("amplitude", 1.0)))
        sources.append(SourceTerm(float(s.get("amplitude", 1.0)) * load, wave, s.get("name", f"source{i}")))
    init = d["initial"]
    E0 = None if init["E"] is None else _uniform(init["E"]["value"])
    B0 = None if init["B"] is None else _uniform(init["B"]["value"])
    disc.e0 = project_initial_E(mesh, disc.ops, E0, order=order)
    disc.b0 = project_initial_B(mesh, disc.ops, B0, order=order)
    manufactured = None
    if d.get("manufactured") is not None:
        omega = float(d["manufactured"]["omega"])
        e_hat = project_initial_E(mesh, disc.ops, _sine_field, order=order)
        C0 = disc.ops.C0
        curl_e = C0 @ e_hat
        sources += [
            SourceTerm(disc.Me @ e_hat, ManufacturedWaveform(omega, "dphi"), "manufactured_dphi"),
            SourceTerm(disc.Ms @ e_hat, ManufacturedWaveform(omega, "phi"), "manufactured_phi"),
            SourceTerm(C0.T @ (disc.Mmu @ curl_e), ManufacturedWaveform(omega, "Phi"), "manufactured_Phi"),
        ]
        disc.e0 = e_hat.copy()
        disc.b0 = np.zeros(mesh.n_faces)
        manufactured = {"omega": omega, "e_hat": e_hat, "curl_e_hat": curl_e}
    disc.sources = sources
    disc.source_order = sv["source_order"]
    o = d["objective"]
    objective = ObjectiveConfig(float(o["w_track"]), float(o["alpha1"]), float(o["alpha2"]))
    optim = OptimSettings(**d["optimizer"])
    return Problem(cfg, disc, objective, optim, manufactured)
