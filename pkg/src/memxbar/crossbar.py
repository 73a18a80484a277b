"""A single n x m crossbar with a switch per crosspoint and grounded row bars."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import DeviceModel


@dataclass
class CrossbarState:
    """Fluxes and switch settings of one array; ``switches`` holds 0/1."""

    phi: np.ndarray
    switches: np.ndarray

    def __post_init__(self):
        self.phi = np.array(self.phi, dtype=float)
        if self.phi.ndim != 2:
            raise ValueError("phi must be a 2-d matrix")
        self.switches = check_switches(self.switches, self.phi.shape)
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("phi must be finite")

    @property
    def n_rows(self) -> int:
        return self.phi.shape[0]

    @property
    def n_cols(self) -> int:
        return self.phi.shape[1]

    @classmethod
    def closed(cls, phi) -> "CrossbarState":
        phi = np.asarray(phi, dtype=float)
        return cls(phi, np.ones(phi.shape, dtype=np.int8))

    def copy(self) -> "CrossbarState":
        return CrossbarState(self.phi.copy(), self.switches.copy())


@dataclass
class CrossbarTerminals:
    """Terminal quantities: column potentials/currents and row currents.

    Row potentials are identically zero (grounded rows).
    """

    P: np.ndarray
    J: np.ndarray
    Jbar: np.ndarray

    @property
    def Pbar(self) -> np.ndarray:
        return np.zeros_like(self.Jbar)

    @property
    def P_tilde(self) -> np.ndarray:
        return np.concatenate([self.P, self.Pbar])

    @property
    def J_tilde(self) -> np.ndarray:
        return np.concatenate([self.J, -self.Jbar])


def check_switches(S, shape) -> np.ndarray:
    S = np.asarray(S)
    if S.shape != tuple(shape):
        raise ValueError(f"switch matrix has shape {S.shape}, expected {tuple(shape)}")
    if not np.all((S == 0) | (S == 1)):
        raise ValueError("switch entries must be 0 or 1")
    return S.astype(np.int8)


def _column_vector(state: CrossbarState, P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.shape != (state.n_cols,):
        raise ValueError(f"expected {state.n_cols} column potentials, got shape {P.shape}")
    return P


def flux_rhs(state: CrossbarState, P) -> np.ndarray:
    """d(phi)/dt = S * (1 P^T): entry (k, j) is S_kj P_j."""
    P = _column_vector(state, P)
    return state.switches * P[None, :]


def row_currents(state: CrossbarState, model: DeviceModel, P) -> np.ndarray:
    """Jbar = (W(phi) * S) P."""
    P = _column_vector(state, P)
    return (model.W(state.phi) * state.switches) @ P


def terminal_currents(state: CrossbarState, model: DeviceModel, P) -> CrossbarTerminals:
    """Branch currents summed by Kirchhoff's current law at both bar ends."""
    P = _column_vector(state, P)
    branch = state.switches * (model.W(state.phi) * P[None, :])
    return CrossbarTerminals(P=P, J=branch.sum(axis=0), Jbar=branch.sum(axis=1))
