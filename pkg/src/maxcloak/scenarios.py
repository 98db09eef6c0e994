"""Source waveforms, absorber ramps and the builtin scenario presets.

Presets are returned as plain JSON-compatible dictionaries (see
:mod:`maxcloak.config` for the schema) so they can be dumped, edited and
re-parsed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EPS0",
    "MU0",
    "Waveform",
    "ManufacturedWaveform",
    "AbsorberProfile",
    "eval_waveform",
    "eval_absorber",
    "builtin_scenario",
    "PRESETS",
    "THUNDERBIRD_UM",
]

EPS0 = 8.854187817e-12
MU0 = 1.2566370614e-6


@dataclass(frozen=True)
class Waveform:
    """Gaussian-ramped cosine ``cos(2 pi f (t - t0)) * exp(-2 [pi sJ (t - t0)]^2)`` for ``t <= t0``.

    After ``t0`` the Gaussian factor is dropped. ``kind="tabulated"`` instead
    interpolates ``(times, values)`` linearly (constant beyond the ends).
    """

    f_center: float = 0.0
    sigma_J: float = 0.0
    t_offset: float = 0.0
    amplitude: float = 1.0
    kind: str = "gauss-ramped-cosine"
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("gauss-ramped-cosine", "tabulated"):
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if self.kind == "tabulated":
            t = np.asarray(self.times, dtype=float)
            if len(t) < 2 or len(t) != len(self.values) or np.any(np.diff(t) <= 0):
                raise ValueError("tabulated waveform needs >= 2 strictly increasing times and matching values")

    def __call__(self, t):
        return eval_waveform(self, t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "tabulated":
            raise NotImplementedError("derivative of a tabulated waveform")
        w = 2.0 * math.pi * self.f_center
        u = t - self.t_offset
        g = np.cos(w * u)
        dg = -w * np.sin(w * u)
        k = 2.0 * (math.pi * self.sigma_J) ** 2
        ramp = np.exp(-k * u * u)
        dramp = -2.0 * k * u * ramp
        out = np.where(u <= 0.0, dg * ramp + g * dramp, dg)
        return self.amplitude * out

    def average(self, a, b, order=4):
        """Mean over ``(a, b)``: Gauss on the ramped part, closed form on the pure cosine."""
        if not b > a:
            raise ValueError("empty averaging interval")
        if self.kind == "tabulated":
            t = np.asarray(self.times, dtype=float)
            inner = t[(t > a) & (t < b)]
            pts = np.concatenate([[a], inner, [b]])
            vals = np.interp(pts, t, np.asarray(self.values, dtype=float))
            area = 0.5 * float(np.sum((vals[1:] + vals[:-1]) * np.diff(pts)))
            return self.amplitude * area / (b - a)
        t0 = self.t_offset
        total = 0.0
        if a < t0:
            hi = min(b, t0)
            x, w = np.polynomial.legendre.leggauss(order)
            s = 0.5 * (a + hi) + 0.5 * (hi - a) * x
            total += 0.5 * (hi - a) * float(np.sum(w * eval_waveform(self, s)))
        if b > t0:
            lo = max(a, t0)
            om = 2.0 * math.pi * self.f_center
            if om == 0.0:
                total += self.amplitude * (b - lo)
            else:
                total += self.amplitude * (math.sin(om * (b - t0)) - math.sin(om * (lo - t0))) / om
        return total / (b - a)

    def to_dict(self):
        if self.kind == "tabulated":
            return {"kind": "tabulated", "times": list(self.times), "values": list(self.values),
                    "amplitude": self.amplitude}
        return {"kind": self.kind, "f_center": self.f_center, "sigma_J": self.sigma_J,
                "t_offset": self.t_offset, "amplitude": self.amplitude}


def eval_waveform(w, t):
    """Evaluate a :class:`Waveform` at scalar or array ``t``."""
    t = np.asarray(t, dtype=float)
    if w.kind == "tabulated":
        out = np.interp(t, np.asarray(w.times, float), np.asarray(w.values, float))
        return w.amplitude * out
    u = t - w.t_offset
    g = np.cos(2.0 * math.pi * w.f_center * u)
    ramp = np.exp(-2.0 * (math.pi * w.sigma_J * np.minimum(u, 0.0)) ** 2)
    out = w.amplitude * g * ramp
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ManufacturedWaveform:
    """``cos(omega t)`` (``part="phi"``), its derivative or its antiderivative, with exact means."""

    omega: float
    part: str = "phi"

    def _prim(self, t):
        w = self.omega
        if self.part == "phi":
            return math.sin(w * t) / w
        if self.part == "dphi":
            return math.cos(w * t)
        if self.part == "Phi":
            return -math.cos(w * t) / (w * w)
        raise ValueError(self.part)

    def __call__(self, t):
        w = self.omega
        return {"phi": math.cos(w * t), "dphi": -w * math.sin(w * t), "Phi": math.sin(w * t) / w}[self.part]

    def average(self, a, b, order=4):
        return (self._prim(b) - self._prim(a)) / (b - a)


@dataclass(frozen=True)
class AbsorberProfile:
    """Cubic conductivity ramp ``sigma_max (s / L_abs)^p`` summed over ``axes``."""

    sigma_max: float
    L_abs: float
    axes: tuple = (2,)
    exponent: float = 3.0

    def to_dict(self):
        return {"sigma_max": self.sigma_max, "L_abs": self.L_abs, "axes": list(self.axes),
                "exponent": self.exponent}


def eval_absorber(profile, points, half_width, center=(0.0, 0.0, 0.0)):
    """Conductivity at ``points`` (shape ``(m, 3)``) for a box of given per-axis half widths.

    ``s(x_i) = |x_i - c_i| - (half_width_i - L_abs)``, clamped at zero.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hw = np.broadcast_to(np.asarray(half_width, dtype=float), (3,))
    c = np.asarray(center, dtype=float)
    out = np.zeros(len(pts))
    for a in profile.axes:
        if profile.L_abs > hw[a]:
            raise ValueError(f"L_abs={profile.L_abs:g} exceeds the half width {hw[a]:g} on axis {a}")
        s = np.abs(pts[:, a] - c[a]) - (hw[a] - profile.L_abs)
        s = np.clip(s, 0.0, None)
        out += profile.sigma_max * (s / profile.L_abs) ** profile.exponent
    return out


# ---------------------------------------------------------------------------
# Presets

# Stylized thunderbird outline (micrometres), symmetric about x = 0.
_TB_RIGHT = [
    (0.0, 5.0), (0.8, 4.4), (0.8, 3.4), (2.5, 3.6), (4.5, 4.2), (5.5, 3.0), (4.8, 2.0),
    (3.0, 1.6), (1.2, 1.4), (1.0, -1.0), (2.5, -3.0), (2.2, -4.5), (0.8, -3.6), (0.0, -4.8),
]
THUNDERBIRD_UM = _TB_RIGHT + [(-x, y) for x, y in reversed(_TB_RIGHT[1:-1])]

_EX2_WAVE = {"kind": "gauss-ramped-cosine", "f_center": 42.9e12, "sigma_J": 12.5e12, "t_offset": 50e-15,
             "amplitude": 1.0}


def _example1():
    n = 396
    h = 80e-6 / n
    return {
        "name": "example1",
        "geometry": {"counts": [1, 1, n], "spacing": [h, h, h], "origin": [0.0, 0.0, -40e-6],
                     "periodic": [True, True, False]},
        "regions": {
            "source": {"type": "box", "lo": [None, None, -0.404e-6], "hi": [None, None, 0.404e-6]},
            "control": {"type": "or", "terms": [
                {"type": "box", "lo": [None, None, -12e-6], "hi": [None, None, -4e-6]},
                {"type": "box", "lo": [None, None, 4e-6], "hi": [None, None, 12e-6]}]},
            "observation": {"type": "or", "terms": [
                {"type": "box", "lo": [None, None, None], "hi": [None, None, -12e-6]},
                {"type": "box", "lo": [None, None, 12e-6], "hi": [None, None, None]}]},
            "absorber": {"type": "or", "terms": [
                {"type": "box", "lo": [None, None, None], "hi": [None, None, -32e-6]},
                {"type": "box", "lo": [None, None, 32e-6], "hi": [None, None, None]}]},
        },
        "materials": {
            "epsilon": EPS0, "mu": MU0,
            "sigma": {"value": 0.0, "absorber": {"sigma_max": 1e4, "L_abs": 8e-6, "axes": [2], "exponent": 3.0}},
        },
        "sources": [{"region": "source", "polarization": [1.0, 0.0, 0.0], "waveform": {
            "kind": "gauss-ramped-cosine", "f_center": 75e12,
            "sigma_J": 40e12 / (2.0 * math.sqrt(2.0 * math.log(2.0))), "t_offset": 50e-15, "amplitude": 1.0}}],
        "time": {"T": 200e-15, "steps": 400},
        "objective": {"w_track": 1e35, "alpha1": 1e5, "alpha2": 1e5},
        "optimizer": {"max_iter": 200, "tol": 1e-6, "gtol_floor": 0.0},
        "output": {"stride": 4, "line": {"axis": 2, "point": [0.0, 0.0, 0.0], "samples": 397},
                   "snapshot_time": 178e-15},
    }


def _example2(counts=180):
    h = 72e-6 / counts
    ctrl = [{"type": "ball", "center": [sx * 7e-6, sy * 7e-6, 0.0], "radius": 2e-6, "axes": [0, 1]}
            for sx in (-1, 1) for sy in (-1, 1)]
    return {
        "name": "example2",
        "geometry": {"counts": [counts, counts, 1], "spacing": [h, h, h], "origin": [-36e-6, -36e-6, 0.0],
                     "periodic": [False, False, True]},
        "regions": {
            "source": {"type": "polygon", "vertices": [[x * 1e-6, y * 1e-6] for x, y in THUNDERBIRD_UM],
                       "axes": [0, 1]},
            "control": {"type": "or", "terms": ctrl},
            "observation": {"type": "not", "term": {"type": "ball", "center": [0.0, 0.0, 0.0], "radius": 18e-6,
                                                   "axes": [0, 1]}},
            "absorber": {"type": "not", "term": {"type": "box", "lo": [-26e-6, -26e-6, None],
                                                "hi": [26e-6, 26e-6, None]}},
        },
        "materials": {
            "epsilon": EPS0, "mu": MU0,
            "sigma": {"value": 0.0, "absorber": {"sigma_max": 1e4, "L_abs": 10e-6, "axes": [0, 1],
                                                 "exponent": 3.0}},
        },
        "sources": [{"region": "source", "polarization": [0.0, 0.0, 1.0], "waveform": dict(_EX2_WAVE)}],
        "time": {"T": 200e-15, "steps": 400},
        "objective": {"w_track": 1e35, "alpha1": 1e5, "alpha2": 1e5},
        "optimizer": {"max_iter": 200, "tol": 1e-6, "gtol_floor": 0.0},
        "output": {"stride": 20, "line": {"axis": 0, "point": [0.0, -6e-6, 0.0], "samples": 361},
                   "snapshot_time": 150e-15},
    }


def _example3(counts=48, steps=200):
    h = 40e-6 / counts
    um = 1e-6
    balls = [{"type": "ball", "center": [sx * 3.2 * um, sy * 3.2 * um, sz * 3.2 * um], "radius": 1.5 * um}
             for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    cup = {"type": "and", "terms": [
        {"type": "ball", "center": [0.0, 0.0, 0.0], "radius": 3.5 * um, "inner_radius": 2.0 * um},
        {"type": "box", "lo": [None, None, None], "hi": [None, None, 0.0]}]}
    return {
        "name": "example3-scaled",
        "geometry": {"counts": [counts] * 3, "spacing": [h] * 3, "origin": [-20e-6] * 3,
                     "periodic": [False, False, False]},
        "regions": {
            "source": cup,
            "control": {"type": "or", "terms": balls},
            "observation": {"type": "not", "term": {"type": "ball", "center": [0.0, 0.0, 0.0], "radius": 8 * um}},
            "absorber": {"type": "not", "term": {"type": "box", "lo": [-10e-6] * 3, "hi": [10e-6] * 3}},
        },
        "materials": {
            "epsilon": EPS0, "mu": MU0,
            "sigma": {"value": 0.0, "absorber": {"sigma_max": 1e4, "L_abs": 10e-6, "axes": [0, 1, 2],
                                                 "exponent": 3.0}},
        },
        "sources": [{"region": "source", "polarization": [1.0, 0.0, 0.0], "waveform": dict(_EX2_WAVE)}],
        "time": {"T": 200e-15, "steps": steps},
        "objective": {"w_track": 1e37, "alpha1": 1e5, "alpha2": 1e5},
        "optimizer": {"max_iter": 100, "tol": 1e-6, "gtol_floor": 0.0},
        "output": {"stride": 20, "line": {"axis": 0, "point": [0.0, 0.0, -2.5e-6], "samples": counts + 1},
                   "snapshot_time": 140e-15},
    }


def _tiny():
    h = 0.125
    return {
        "name": "tiny",
        "geometry": {"counts": [1, 1, 16], "spacing": [h, h, h], "origin": [0.0, 0.0, -1.0],
                     "periodic": [True, True, False]},
        "regions": {
            "source": {"type": "box", "lo": [None, None, -0.125], "hi": [None, None, 0.125]},
            "control": {"type": "or", "terms": [
                {"type": "box", "lo": [None, None, -0.375], "hi": [None, None, -0.125]},
                {"type": "box", "lo": [None, None, 0.125], "hi": [None, None, 0.375]}]},
            "observation": {"type": "or", "terms": [
                {"type": "box", "lo": [None, None, None], "hi": [None, None, -0.5]},
                {"type": "box", "lo": [None, None, 0.5], "hi": [None, None, None]}]},
            "absorber": {"type": "or", "terms": [
                {"type": "box", "lo": [None, None, None], "hi": [None, None, -0.625]},
                {"type": "box", "lo": [None, None, 0.625], "hi": [None, None, None]}]},
        },
        "materials": {"epsilon": 1.0, "mu": 1.0,
                      "sigma": {"value": 0.0, "absorber": {"sigma_max": 5.0, "L_abs": 0.375, "axes": [2],
                                                           "exponent": 3.0}}},
        "sources": [{"region": "source", "polarization": [1.0, 0.0, 0.0], "waveform": {
            "kind": "gauss-ramped-cosine", "f_center": 2.0, "sigma_J": 1.5, "t_offset": 0.3, "amplitude": 1.0}}],
        "time": {"T": 1.0, "steps": 16},
        "objective": {"w_track": 1.0, "alpha1": 1e-3, "alpha2": 1e-3},
        "solver": {"method": "cg", "tol": 1e-13},
        "optimizer": {"max_iter": 500, "tol": 1e-10, "memory": 20, "inner_product": "riesz"},
        "output": {"stride": 1, "line": {"axis": 2, "point": [0.0, 0.0, 0.0], "samples": 17}},
    }


def _manufactured(counts=16, steps=25):
    h = 1.0 / counts
    return {
        "name": "manufactured",
        "geometry": {"counts": [counts] * 3, "spacing": [h] * 3, "origin": [0.0, 0.0, 0.0],
                     "periodic": [False, False, False]},
        "regions": {},
        "materials": {"epsilon": 1.0, "mu": 1.0, "sigma": 0.5},
        "sources": [],
        "manufactured": {"omega": 2.0 * math.pi, "field": "sine"},
        "time": {"T": 1.0, "steps": steps},
        "objective": {"w_track": 1.0, "alpha1": 1.0, "alpha2": 1.0},
        "solver": {"method": "direct"},
        "output": {"stride": steps, "line": {"axis": 0, "point": [0.5, 0.5, 0.5], "samples": counts + 1}},
    }


PRESETS = {
    "example1": _example1,
    "example2": _example2,
    "example3-scaled": _example3,
    "manufactured": _manufactured,
    "tiny": _tiny,
}


def builtin_scenario(name, **kwargs):
    """Scenario dictionary for a named preset.

    ``example2`` accepts ``counts``; ``example3-scaled`` and ``manufactured``
    accept ``counts`` and ``steps``.
    """
    try:
        make = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
    return make(**kwargs)
