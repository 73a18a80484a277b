"""Flux-controlled memristor models.

A device is described by its charge-flux curve ``g`` and the memductance
``W = dg/dphi``.  The simulator only ever evaluates ``W``; ``g`` is kept so the
derivative relation can be checked numerically.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import bisect

# kernel kinds understood by the compiled integrator
KIND_ARCTAN = 0
KIND_TABLE = 1


class RealizabilityError(ValueError):
    """A requested memductance or weight cannot be produced by the device."""


@dataclass(frozen=True)
class DeviceModel:
    """Memristor with memductance ``W`` bounded in ``[W_min, W_max]``.

    ``g`` and ``W`` must accept numpy arrays.  ``inverse`` is an optional
    closed-form inverse of ``W``; without it :func:`flux_for` bisects.
    ``kernel`` is ``(kind, params)`` for the compiled integrator, or ``None``
    for devices that only run on the numpy engine.
    """

    g: Callable
    W: Callable
    W_min: float
    W_max: float
    beta: float
    monotone_increasing: bool = True
    name: str = "custom"
    inverse: Callable | None = None
    kernel: tuple[int, np.ndarray] | None = field(default=None, repr=False)


@dataclass
class Violation:
    kind: str
    x: float
    y: float | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    subject: str
    n_samples: int
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def summary(self) -> str:
        if self.ok:
            return f"{self.subject}: no violation found on {self.n_samples} samples"
        counts: dict[str, int] = {}
        for v in self.violations:
            counts[v.kind] = counts.get(v.kind, 0) + 1
        parts = ", ".join(f"{k} x{n}" for k, n in sorted(counts.items()))
        return f"{self.subject}: {len(self.violations)} violation(s) on {self.n_samples} samples ({parts})"


def arctan_device(center: float = 2.0, amplitude: float = 1.0, width: float = 1.0,
                  beta: float | None = None) -> DeviceModel:
    """W(phi) = center + amplitude * arctan(phi / width).

    The defaults give the built-in device, ``g(phi) = 2 phi - log(phi^2 + 1)/2
    + phi arctan(phi)`` with ``W = 2 + arctan(phi)`` on ``(2 - pi/2, 2 + pi/2)``
    and Lipschitz constant 1.  ``beta`` defaults to the analytic constant
    ``amplitude / width``.
    """
    if amplitude <= 0 or width <= 0:
        raise ValueError("amplitude and width must be positive")

    def g(phi):
        s = np.asarray(phi, dtype=float) / width
        return center * width * s + amplitude * width * (s * np.arctan(s) - 0.5 * np.log1p(s * s))

    def W(phi):
        return center + amplitude * np.arctan(np.asarray(phi, dtype=float) / width)

    def inverse(w):
        return width * np.tan((np.asarray(w, dtype=float) - center) / amplitude)

    half = amplitude * math.pi / 2
    is_builtin = (center, amplitude, width) == (2.0, 1.0, 1.0)
    return DeviceModel(
        g=g, W=W,
        W_min=center - half, W_max=center + half,
        beta=amplitude / width if beta is None else beta,
        monotone_increasing=True,
        name="arctan" if is_builtin else f"arctan({center},{amplitude},{width})",
        inverse=inverse,
        kernel=(KIND_ARCTAN, np.array([center, amplitude, width], dtype=float)),
    )


def tabulated_device(phi, W, *, W_min: float, W_max: float, beta: float,
                     name: str = "tabulated") -> DeviceModel:
    """Device from a table of (phi, W), linearly interpolated.

    Outside the table W is held constant.  The bounds and Lipschitz constant
    are declared by the caller and checked only by :func:`validate_device`.
    """
    xp = np.asarray(phi, dtype=float)
    fp = np.asarray(W, dtype=float)
    if xp.ndim != 1 or xp.shape != fp.shape or xp.size < 2:
        raise ValueError("need matching 1-d phi and W columns with at least two rows")
    if np.any(np.diff(xp) <= 0):
        raise ValueError("phi column must be strictly increasing")

    # g(phi) = integral_0^phi W, exact for the piecewise-linear interpolant
    knots_g = np.concatenate([[0.0], np.cumsum(0.5 * (fp[1:] + fp[:-1]) * np.diff(xp))])

    def _prim(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        lo, hi = x < xp[0], x > xp[-1]
        mid = ~(lo | hi)
        out[lo] = fp[0] * (x[lo] - xp[0])
        out[hi] = knots_g[-1] + fp[-1] * (x[hi] - xp[-1])
        xm = x[mid]
        i = np.clip(np.searchsorted(xp, xm, side="right") - 1, 0, xp.size - 2)
        dx = xm - xp[i]
        slope = (fp[i + 1] - fp[i]) / (xp[i + 1] - xp[i])
        out[mid] = knots_g[i] + fp[i] * dx + 0.5 * slope * dx * dx
        return out

    g0 = float(_prim(np.array([0.0]))[0])

    def g(x):
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        val = _prim(arr) - g0
        return val if np.ndim(x) else float(val[0])

    def Wf(x):
        return np.interp(x, xp, fp)

    return DeviceModel(
        g=g, W=Wf, W_min=float(W_min), W_max=float(W_max), beta=float(beta),
        monotone_increasing=bool(fp[-1] > fp[0]), name=name,
        kernel=(KIND_TABLE, np.concatenate([xp, fp])),
    )


def load_device_csv(path, *, W_min: float, W_max: float, beta: float) -> DeviceModel:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"phi", "W"} <= set(rows[0]):
        raise ValueError(f"{path}: expected CSV columns 'phi' and 'W'")
    phi = [float(r["phi"]) for r in rows]
    W = [float(r["W"]) for r in rows]
    return tabulated_device(phi, W, W_min=W_min, W_max=W_max, beta=beta, name=Path(path).stem)


def memductance(model: DeviceModel, phi):
    w = model.W(phi)
    return float(w) if np.ndim(w) == 0 else w


def charge(model: DeviceModel, phi):
    q = model.g(phi)
    return float(q) if np.ndim(q) == 0 else q


def flux_for(model: DeviceModel, target, tol: float = 1e-12):
    """Flux whose memductance equals ``target`` (element-wise).

    Uses the closed-form inverse when the model has one, else bisection on the
    strictly monotone ``W``.
    """
    t = np.asarray(target, dtype=float)
    if np.any(t <= model.W_min) or np.any(t >= model.W_max):
        raise RealizabilityError(
            f"memductance outside the open interval ({model.W_min:.6g}, {model.W_max:.6g})")
    if model.inverse is not None:
        out = model.inverse(t)
    else:
        out = np.vectorize(lambda v: _bisect_flux(model, v, tol), otypes=[float])(t)
    return float(out) if np.ndim(out) == 0 else out


def _bisect_flux(model: DeviceModel, target: float, tol: float) -> float:
    sign = 1.0 if model.monotone_increasing else -1.0

    def f(x):
        return sign * (float(model.W(x)) - target)

    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2.0
        if lo < -1e300:
            raise RealizabilityError(f"no flux found for memductance {target}")
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise RealizabilityError(f"no flux found for memductance {target}")
    return bisect(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=2000)


def validate_device(model: DeviceModel, sample_range=(-10.0, 10.0), n_samples: int = 1000,
                    seed: int = 0) -> ValidationReport:
    """Search for sampled counterexamples to positivity, bounds, Lipschitz,
    monotonicity, and ``dg/dphi == W``.

    Samples a uniform grid plus ``n_samples`` random points.  Finding nothing
    is evidence, not proof.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    a, b = map(float, sample_range)
    rng = np.random.default_rng(seed)
    grid = np.linspace(a, b, n_samples)
    xs = np.concatenate([grid, rng.uniform(a, b, n_samples)])
    w = np.asarray(model.W(xs), dtype=float)
    report = ValidationReport(f"device {model.name}", n_samples)
    viol = report.violations

    for x, v in zip(xs, w):
        if not np.isfinite(v) or v <= 0:
            viol.append(Violation("positivity", x, detail=f"W={v:.6g}"))
        elif v < model.W_min or v > model.W_max:
            viol.append(Violation("bounds", x, detail=f"W={v:.6g} not in [{model.W_min:.6g}, {model.W_max:.6g}]"))

    # pairs: grid neighbours plus random pairs
    px = np.concatenate([grid[:-1], xs[:n_samples]])
    py = np.concatenate([grid[1:], rng.permutation(xs)[:n_samples]])
    keep = px != py
    px, py = px[keep], py[keep]
    wx, wy = np.asarray(model.W(px), float), np.asarray(model.W(py), float)
    dw, dx = wx - wy, px - py
    lip_bad = np.abs(dw) > model.beta * np.abs(dx) * (1 + 1e-9) + 1e-15
    for x, y, s in zip(px[lip_bad], py[lip_bad], (dw / dx)[lip_bad]):
        viol.append(Violation("lipschitz", x, y, f"slope {s:.6g} > beta={model.beta:.6g}"))
    prod = dw * dx if model.monotone_increasing else -dw * dx
    for x, y in zip(px[prod <= 0], py[prod <= 0]):
        viol.append(Violation("monotonicity", x, y))

    h = 1e-4 * max(1.0, (b - a) / 20.0)
    fd = (np.asarray(model.g(xs + h), float) - np.asarray(model.g(xs - h), float)) / (2 * h)
    fd_bad = np.abs(fd - w) > 1e-6 * np.maximum(1.0, np.abs(w))
    for x, d, v in zip(xs[fd_bad], fd[fd_bad], w[fd_bad]):
        viol.append(Violation("derivative", x, detail=f"dg/dphi={d:.8g} vs W={v:.8g}"))
    return report
