"""Neuron activation functions (the CCVS transfer curve P = sigma(Jbar))."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .device import ValidationReport, Violation

KIND_SCALED_TANH = 0


@dataclass(frozen=True)
class Activation:
    """Odd, strictly increasing, ``eta``-Lipschitz map from current to voltage.

    ``kernel`` is ``(kind, params)`` for the compiled integrator or ``None``.
    """

    sigma: Callable
    eta: float
    name: str = "custom"
    kernel: tuple[int, np.ndarray] | None = field(default=None, repr=False)


def scaled_tanh(amplitude: float, width: float, eta: float | None = None, name: str | None = None) -> Activation:
    """amplitude * tanh(x / width); odd to the last bit since tanh is."""
    def sigma(x):
        return amplitude * np.tanh(np.asarray(x, dtype=float) / width)

    return Activation(
        sigma=sigma,
        eta=amplitude / width if eta is None else eta,
        name=name or f"scaled_tanh({amplitude},{width})",
        kernel=(KIND_SCALED_TANH, np.array([amplitude, width], dtype=float)),
    )


def tanh(eta: float | None = None) -> Activation:
    return scaled_tanh(1.0, 1.0, eta, name="tanh")


def scaled_sigmoid(eta: float | None = None) -> Activation:
    # 3 * sigmoid(x) - 1.5 == 1.5 * tanh(x / 2), written this way for exact oddness
    return scaled_tanh(1.5, 2.0, eta, name="scaled_sigmoid")


def sigmoid(eta: float = 0.25) -> Activation:
    """Plain logistic sigmoid.  Not odd: only here to be rejected by validation."""
    def sigma(x):
        return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))

    return Activation(sigma=sigma, eta=eta, name="sigmoid")


BUILTINS = {"tanh": tanh, "scaled_sigmoid": scaled_sigmoid, "sigmoid": sigmoid}


def by_name(name: str, eta: float | None = None) -> Activation:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory() if eta is None else factory(eta)


def apply(act: Activation, x):
    y = act.sigma(x)
    return float(y) if np.ndim(y) == 0 else y


def apply_vec(act: Activation, x) -> np.ndarray:
    return np.asarray(act.sigma(np.asarray(x, dtype=float)), dtype=float)


def validate_activation(act: Activation, sample_range=(-5.0, 5.0), n_samples: int = 1000,
                        seed: int = 0) -> ValidationReport:
    """Sample for oddness, strict monotonicity and the Lipschitz bound."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    a, b = map(float, sample_range)
    rng = np.random.default_rng(seed)
    grid = np.linspace(a, b, n_samples)
    xs = np.concatenate([grid, rng.uniform(a, b, n_samples)])
    report = ValidationReport(f"activation {act.name}", n_samples)
    viol = report.violations

    s0 = float(act.sigma(0.0))
    if s0 != 0.0:
        viol.append(Violation("oddness", 0.0, detail=f"sigma(0)={s0:.6g}"))
    pos, neg = apply_vec(act, xs), apply_vec(act, -xs)
    odd_bad = np.abs(pos + neg) > 1e-12 * np.maximum(1.0, np.abs(pos))
    for x, p, n in zip(xs[odd_bad], pos[odd_bad], neg[odd_bad]):
        viol.append(Violation("oddness", x, detail=f"sigma(x)={p:.6g}, sigma(-x)={n:.6g}"))

    px = np.concatenate([grid[:-1], xs[:n_samples]])
    py = np.concatenate([grid[1:], rng.permutation(xs)[:n_samples]])
    keep = px != py
    px, py = px[keep], py[keep]
    dy = apply_vec(act, px) - apply_vec(act, py)
    dx = px - py
    for x, y in zip(px[dy * dx <= 0], py[dy * dx <= 0]):
        viol.append(Violation("monotonicity", x, y))
    lip_bad = np.abs(dy) > act.eta * np.abs(dx) * (1 + 1e-9) + 1e-15
    for x, y, s in zip(px[lip_bad], py[lip_bad], (dy / dx)[lip_bad]):
        viol.append(Violation("lipschitz", x, y, f"slope {s:.6g} > eta={act.eta:.6g}"))
    return report
