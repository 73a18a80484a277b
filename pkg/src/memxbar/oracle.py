"""Reference implementations that share no code path with the circuit simulator.

* ``ann_forward``: the software network, plain matrix-vector recursion.
* ``chain_integrate_reference``: one isolated current path, integrated by an
  adaptive embedded RK 5(4) (scipy) at tight tolerance.
* ``write_fixed_point``: the first-layer writing controller as a scalar map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .activation import Activation, tanh
from .device import DeviceModel


class ConvergenceError(RuntimeError):
    """An iterative write did not meet its tolerance within the iteration cap."""


@dataclass
class AnnSpec:
    """Signed weight matrices ``M^1..M^L`` (``M^l`` is n_l x n_{l-1})."""

    weights: list[np.ndarray]
    activation: Activation

    def __post_init__(self):
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        if not self.weights:
            raise ValueError("need at least one layer")
        for l, w in enumerate(self.weights, start=1):
            if w.ndim != 2 or 0 in w.shape:
                raise ValueError(f"layer {l} must be a non-empty matrix, got shape {w.shape}")
            if l > 1 and w.shape[1] != self.weights[l - 2].shape[0]:
                raise ValueError(f"layer {l} has {w.shape[1]} columns but layer {l - 1} has "
                                 f"{self.weights[l - 2].shape[0]} rows")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def L(self) -> int:
        return len(self.weights)


def ann_forward(spec: AnnSpec, u_hat) -> np.ndarray:
    a = np.asarray(u_hat, dtype=float)
    if a.shape != (spec.widths[0],):
        raise ValueError(f"input has shape {a.shape}, expected ({spec.widths[0]},)")
    for w in spec.weights:
        a = np.asarray(spec.activation.sigma(w @ a), dtype=float)
    return a


def academic_spec(activation: Activation | None = None) -> AnnSpec:
    """The 2-3-2 demonstration network."""
    m1 = 0.5 * np.array([[1.0, 7.0], [5.0, 5.0], [7.0, 1.0]])
    m2 = 0.5 * np.array([[1.0, 3.0, 7.0], [7.0, 2.0, 1.0]])
    return AnnSpec([m1, m2], activation or tanh())


def chain_rhs(device: DeviceModel, activation: Activation, P0: float):
    """Right-hand side of a path-isolated chain: phi^1' = P0 and
    phi^{k+1}' = sigma(W(phi^k) * phi^k')."""
    def rhs(t, phi):
        out = np.empty_like(phi)
        f = P0
        for k in range(phi.size):
            out[k] = f
            f = float(activation.sigma(float(device.W(phi[k])) * f))
        return out

    return rhs


def chain_integrate_reference(device: DeviceModel, activation: Activation, phi0: Sequence[float],
                              P0: float, duration: float, rtol: float = 1e-12,
                              atol: float = 1e-12) -> np.ndarray:
    if duration < 0:
        raise ValueError("duration must be non-negative")
    phi0 = np.asarray(phi0, dtype=float)
    if duration == 0 or P0 == 0:
        return phi0.copy()
    sol = solve_ivp(chain_rhs(device, activation, float(P0)), (0.0, float(duration)), phi0,
                    method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return sol.y[:, -1]


def write_fixed_point(device: DeviceModel, W_target: float, phi0: float, alpha: float, T: float,
                      eps: float, x0: float = 1.0, max_iter: int = 10**6) -> list[float]:
    """Flux iterates ``[phi_0, phi_1, ...]`` of the first-layer controller.

    ``phi_1 = phi_0 + T x0`` is the probe; afterwards
    ``phi_{i+1} = phi_i + T alpha (W_target - W(phi_i))`` until the error is
    within ``eps``.
    """
    if alpha * T > 1.0 / device.beta * (1 + 1e-12):
        raise ValueError(f"alpha*T = {alpha * T:.6g} exceeds 1/beta = {1.0 / device.beta:.6g}")
    phis = [float(phi0), float(phi0) + T * x0]
    while abs(W_target - float(device.W(phis[-1]))) > eps:
        if len(phis) > max_iter:
            raise ConvergenceError(f"no convergence within {max_iter} iterations")
        phis.append(phis[-1] + T * alpha * (W_target - float(device.W(phis[-1]))))
    return phis
