"""Limited-memory BFGS with Armijo backtracking over control trajectories, and a gradient check."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .adjoint import RieszMap, reduced_gradient
from .objective import ControlTrajectory

__all__ = ["OptimSettings", "OptimReport", "IterationRecord", "lbfgs", "minimize", "GradCheckReport",
           "grad_check", "make_reduced_functional"]


@dataclass
class OptimSettings:
    """L-BFGS parameters.

    ``inner_product`` is ``"dual"`` (Euclidean pairing of coefficient
    vectors) or ``"riesz"`` (control inner product with the gradient mapped
    to its Riesz representer). ``h0`` selects the initial inverse-Hessian
    scaling: ``"dynamic"`` uses the latest secant ratio, ``"fixed"`` uses
    ``h0_scale``. Iteration stops when ``||g|| <= tol * max(gtol_floor, ||g0||)``.
    """

    memory: int = 10
    tol: float = 1e-6
    max_iter: int = 100
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    inner_product: str = "dual"
    h0: str = "dynamic"
    h0_scale: float = 1.0
    gtol_floor: float = 1.0

    def validate(self):
        errors = []
        if not self.tol > 0:
            errors.append("tol must be > 0")
        if not 0 < self.backtrack < 1:
            errors.append("backtrack must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            errors.append("c1 must lie in (0, 1)")
        if self.memory < 1:
            errors.append("memory must be >= 1")
        if self.max_iter < 0:
            errors.append("max_iter must be >= 0")
        if self.max_backtracks < 1:
            errors.append("max_backtracks must be >= 1")
        if self.inner_product not in ("dual", "riesz"):
            errors.append("inner_product must be 'dual' or 'riesz'")
        if self.h0 not in ("dynamic", "fixed"):
            errors.append("h0 must be 'dynamic' or 'fixed'")
        if not self.h0_scale > 0:
            errors.append("h0_scale must be > 0")
        if self.gtol_floor < 0:
            errors.append("gtol_floor must be >= 0")
        return errors


@dataclass
class IterationRecord:
    iteration: int
    J: float
    terms: dict
    grad_norm: float
    step: float
    backtracks: int
    cg_iterations: int


@dataclass
class OptimReport:
    history: list = field(default_factory=list)
    converged: bool = False
    line_search_failed: bool = False
    message: str = ""
    n_evaluations: int = 0
    cg_iterations: int = 0
    wall_time: float = 0.0

    @property
    def J(self):
        return np.array([h.J for h in self.history])

    @property
    def monotone(self):
        J = self.J
        return bool(np.all(np.diff(J) < 0)) if len(J) > 1 else True

    def rows(self):
        for h in self.history:
            yield (h.iteration, h.J, h.terms.get("tracking", np.nan), h.terms.get("control_l2", np.nan),
                   h.terms.get("control_curl", np.nan), h.grad_norm, h.step, h.backtracks, h.cg_iterations)


def lbfgs(fun, x0, settings, inner=None, riesz=None, callback=None):
    """Minimize ``fun(x) -> (J, dual_gradient, terms, cg_its)`` from ``x0``.

    ``inner(u, v)`` is the Hilbert inner product and ``riesz(g)`` maps a dual
    gradient to its representer in it (both Euclidean by default).
    """
    errs = settings.validate()
    if errs:
        raise ValueError("; ".join(errs))
    inner = inner or (lambda u, v: float(np.vdot(u, v)))
    riesz = riesz or (lambda g: g)
    t0 = time.perf_counter()
    rep = OptimReport()
    x = np.array(x0, dtype=float)
    J, g, terms, its = fun(x)
    rep.n_evaluations = 1
    rep.cg_iterations = its
    G = riesz(g)
    gnorm = np.sqrt(max(inner(G, G), 0.0))
    stop = settings.tol * max(settings.gtol_floor, gnorm)
    rep.history.append(IterationRecord(0, J, terms, gnorm, 0.0, 0, its))
    S, Y, RHO = [], [], []
    gamma = settings.h0_scale
    for k in range(1, settings.max_iter + 1):
        if gnorm <= stop:
            rep.converged = True
            rep.message = "gradient tolerance reached"
            break
        if S:
            q = G.copy()
            alphas = []
            for s, y, r in zip(reversed(S), reversed(Y), reversed(RHO)):
                a = r * inner(s, q)
                alphas.append(a)
                q = q - a * y
            d = gamma * q
            for (s, y, r), a in zip(zip(S, Y, RHO), reversed(alphas)):
                b = r * inner(y, d)
                d = d + (a - b) * s
            d = -d
            slope = inner(G, d)
            if not slope < 0:
                S, Y, RHO = [], [], []
                d = -G / gnorm
                slope = inner(G, d)
        else:
            d = -G / gnorm
            slope = -gnorm
        t = 1.0
        accepted = False
        nb = 0
        for nb in range(settings.max_backtracks):
            xt = x + t * d
            Jt, gt, terms_t, its = fun(xt)
            rep.n_evaluations += 1
            rep.cg_iterations += its
            if np.isfinite(Jt) and Jt <= J + settings.c1 * t * slope and Jt < J:
                accepted = True
                break
            t *= settings.backtrack
        if not accepted:
            rep.line_search_failed = True
            rep.message = f"line search failed after {settings.max_backtracks} backtracks"
            break
        Gt = riesz(gt)
        s = xt - x
        y = Gt - G
        sy = inner(s, y)
        if sy > 1e-14 * np.sqrt(inner(s, s) * inner(y, y)):
            S.append(s)
            Y.append(y)
            RHO.append(1.0 / sy)
            if len(S) > settings.memory:
                S.pop(0)
                Y.pop(0)
                RHO.pop(0)
            if settings.h0 == "dynamic":
                gamma = sy / inner(y, y)
        x, J, g, G = xt, Jt, gt, Gt
        gnorm = np.sqrt(max(inner(G, G), 0.0))
        rep.history.append(IterationRecord(k, J, terms_t, gnorm, t, nb, its))
        if callback is not None:
            callback(rep.history[-1], x)
    else:
        if gnorm <= stop:
            rep.converged = True
            rep.message = "gradient tolerance reached"
        else:
            rep.message = "iteration limit reached"
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def make_reduced_functional(disc, cfg, solver=None):
    """``fun(z_flat) -> (J, g_flat, terms, cg_its)`` for the reduced cost of ``disc``."""
    shape = (disc.grid.steps, disc.n_ctrl)

    def fun(zf):
        z = np.asarray(zf).reshape(shape)
        cost, g, _, _, its = reduced_gradient(disc, cfg, z, solver=solver)
        return cost.total, g.ravel(), cost.as_dict(), its

    return fun


def minimize(disc, cfg, settings=None, z0=None, solver=None, callback=None):
    """L-BFGS on the reduced cost; returns ``(ControlTrajectory, OptimReport)``."""
    settings = settings or OptimSettings()
    shape = (disc.grid.steps, disc.n_ctrl)
    x0 = np.zeros(shape) if z0 is None else np.asarray(getattr(z0, "z", z0), dtype=float)
    fun = make_reduced_functional(disc, cfg, solver)
    inner = riesz = None
    if settings.inner_product == "riesz":
        R = RieszMap(disc, cfg.alpha1, cfg.alpha2)

        def inner(u, v):
            return R.inner(u.reshape(shape), v.reshape(shape))

        def riesz(g):
            return R(g.reshape(shape)).ravel()

    x, rep = lbfgs(fun, x0.ravel(), settings, inner=inner, riesz=riesz, callback=callback)
    return ControlTrajectory(x.reshape(shape), disc.ctrl_edges), rep


@dataclass
class GradCheckReport:
    steps: list
    rows: list  # (direction, step, directional_derivative, finite_difference, rel_error)
    min_errors: list
    threshold: float

    @property
    def worst(self):
        return max(self.min_errors) if self.min_errors else 0.0

    @property
    def passed(self):
        return self.worst <= self.threshold

    def to_text(self):
        lines = ["direction,step,gradient_dot,finite_difference,relative_error"]
        for r in self.rows:
            lines.append(f"{r[0]},{r[1]!r},{r[2]!r},{r[3]!r},{r[4]!r}")
        lines.append(f"# worst minimum relative error {self.worst!r} threshold {self.threshold!r} "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def grad_check(fun, z, n_directions=5, steps=(1e-3, 1e-4, 1e-5, 1e-6, 1e-7), seed=0, threshold=1e-6):
    """Central finite differences of ``fun`` against its gradient along random directions.

    Directions are standard normal, scaled to the Euclidean norm of ``z``
    (or 1 when ``z = 0``). A direction passes if the minimum relative error
    over the step sweep is within ``threshold``; when both the directional
    derivative and all differences vanish the error is defined as zero.
    """
    z = np.asarray(z, dtype=float).ravel()
    J0, g, _, _ = fun(z)
    rng = np.random.default_rng(seed)
    scale = max(float(np.linalg.norm(z)), 1.0)
    rows, mins = [], []
    for i in range(n_directions):
        w = rng.standard_normal(z.shape)
        w *= scale / np.linalg.norm(w)
        gd = float(g @ w)
        errs = []
        for s in steps:
            jp = fun(z + s * w)[0]
            jm = fun(z - s * w)[0]
            fd = (jp - jm) / (2.0 * s)
            if gd == 0.0:
                err = 0.0 if fd == 0.0 else np.inf
            else:
                err = abs(gd - fd) / abs(gd)
            errs.append(err)
            rows.append((i, s, gd, fd, err))
        mins.append(min(errs))
    return GradCheckReport(list(steps), rows, mins, threshold)
