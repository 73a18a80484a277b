"""Layered interconnection of crossbars and CCVS neurons, and its integration.

Layers are numbered 1..L as in the network equations; layer l has
``widths[l]`` neurons fed by ``widths[l-1]`` column potentials.  In
differential mode layer l stores ``2 * widths[l]`` physical rows: row k holds
the positive memristor of weight (k, j) and row ``k + widths[l]`` the negative
one, and neuron k sees ``Jbar_k - Jbar_{k+n}``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernel
from .activation import Activation
from .crossbar import CrossbarState, check_switches
from .device import DeviceModel, RealizabilityError, flux_for

MODES = ("single", "differential")


class IntegrationError(RuntimeError):
    """The integrated state became non-finite."""


@dataclass
class CircuitState:
    layers: list[CrossbarState]
    widths: tuple[int, ...]
    device: DeviceModel
    activation: Activation
    mode: str = "single"
    # switch pattern used for inference; open entries are unused partners of a
    # differential pair
    mask: list[np.ndarray] | None = None
    time: float = 0.0

    def __post_init__(self):
        self.widths = tuple(int(n) for n in self.widths)
        if len(self.widths) < 2 or min(self.widths) <= 0:
            raise ValueError("need at least two positive layer widths")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if len(self.layers) != self.L:
            raise ValueError(f"{len(self.layers)} crossbars for {self.L} layers")
        for l, xb in enumerate(self.layers, start=1):
            if xb.phi.shape != self.layer_shape(l):
                raise ValueError(f"layer {l} has shape {xb.phi.shape}, expected {self.layer_shape(l)}")
        if self.mask is None:
            self.mask = [np.ones(self.layer_shape(l), dtype=np.int8) for l in range(1, self.L + 1)]
        else:
            self.mask = [check_switches(m, self.layer_shape(l)) for l, m in enumerate(self.mask, start=1)]

    @property
    def L(self) -> int:
        return len(self.widths) - 1

    @property
    def differential(self) -> bool:
        return self.mode == "differential"

    def layer_shape(self, layer: int) -> tuple[int, int]:
        rows = self.widths[layer] * (2 if self.differential else 1)
        return rows, self.widths[layer - 1]

    def crossbar(self, layer: int) -> CrossbarState:
        if not 1 <= layer <= self.L:
            raise IndexError(f"layer {layer} outside 1..{self.L}")
        return self.layers[layer - 1]

    def fluxes(self) -> list[np.ndarray]:
        return [xb.phi.copy() for xb in self.layers]

    def memductances(self) -> list[np.ndarray]:
        return [self.device.W(xb.phi) for xb in self.layers]

    def copy(self) -> "CircuitState":
        return CircuitState([xb.copy() for xb in self.layers], self.widths, self.device,
                            self.activation, self.mode, [m.copy() for m in self.mask], self.time)


def build_circuit(widths: Sequence[int], device: DeviceModel, activation: Activation,
                  mode: str = "single", phi0=0.0) -> CircuitState:
    """Circuit with every switch closed.  ``phi0`` is a scalar or per-layer matrices."""
    widths = tuple(int(n) for n in widths)
    diff = mode == "differential"
    layers = []
    for l in range(1, len(widths)):
        shape = (widths[l] * (2 if diff else 1), widths[l - 1])
        phi = np.full(shape, float(phi0)) if np.isscalar(phi0) else np.asarray(phi0[l - 1], float)
        layers.append(CrossbarState.closed(phi))
    return CircuitState(layers, widths, device, activation, mode)


class SplitWeight(NamedTuple):
    w_plus: float
    w_minus: float
    s_plus: int
    s_minus: int


def split_weight(target: float, model: DeviceModel) -> SplitWeight:
    """Represent a signed weight as ``W+ * s+ - W- * s-``.

    Weights with ``|target| < W_max - W_min`` use both memristors, centred on
    the middle of the memductance range.  Otherwise a single memristor carries
    ``|target|`` and its partner is switched out, which needs
    ``W_min < |target| < W_max``.
    """
    t = float(target)
    span = model.W_max - model.W_min
    center = 0.5 * (model.W_max + model.W_min)
    if abs(t) < span:
        return SplitWeight(center + t / 2, center - t / 2, 1, 1)
    if model.W_min < abs(t) < model.W_max:
        return SplitWeight(t, center, 1, 0) if t > 0 else SplitWeight(center, -t, 0, 1)
    raise RealizabilityError(f"weight {t:.6g} not representable: need |w| < {span:.6g} "
                             f"or {model.W_min:.6g} < |w| < {model.W_max:.6g}")


def circuit_from_weights(weights: Sequence[np.ndarray], device: DeviceModel, activation: Activation,
                         mode: str = "single") -> CircuitState:
    """Circuit whose frozen forward pass implements the given weight matrices."""
    mats = [np.asarray(w, dtype=float) for w in weights]
    widths = (mats[0].shape[1],) + tuple(m.shape[0] for m in mats)
    for l, m in enumerate(mats, start=1):
        if m.shape != (widths[l], widths[l - 1]):
            raise ValueError(f"weight matrix {l} has shape {m.shape}, expected {(widths[l], widths[l - 1])}")
    if mode == "single":
        return build_circuit(widths, device, activation, mode, [flux_for(device, m) for m in mats])
    phis, masks = [], []
    for m in mats:
        targets, mask = split_matrix(m, device)
        phis.append(flux_for(device, targets))
        masks.append(mask)
    c = build_circuit(widths, device, activation, mode, phis)
    c.mask = masks
    return c


def split_matrix(weights: np.ndarray, device: DeviceModel) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-entry splits into a (2n, m) memductance matrix and switch mask."""
    n, m = weights.shape
    targets = np.empty((2 * n, m))
    mask = np.empty((2 * n, m), dtype=np.int8)
    for k in range(n):
        for j in range(m):
            s = split_weight(weights[k, j], device)
            targets[k, j], targets[k + n, j] = s.w_plus, s.w_minus
            mask[k, j], mask[k + n, j] = s.s_plus, s.s_minus
    return targets, mask


def effective_weights(c: CircuitState, use_mask: bool = True) -> list[np.ndarray]:
    """Signed weight matrices the frozen circuit implements under its inference mask."""
    out = []
    for l, xb in enumerate(c.layers, start=1):
        S = c.mask[l - 1] if use_mask else xb.switches
        g = c.device.W(xb.phi) * S
        n = c.widths[l]
        out.append(g[:n] - g[n:] if c.differential else g)
    return out


def set_switches(c: CircuitState, layer: int, S) -> None:
    xb = c.crossbar(layer)
    xb.switches = check_switches(S, xb.phi.shape)


def forward_potentials(c: CircuitState, u) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Instantaneous potentials ``[P^0..P^L]`` and neuron input currents
    ``[X^1..X^L]`` at the present fluxes.  ``X^l`` is the row current in
    single mode and the paired difference in differential mode.  Pure.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (c.widths[0],):
        raise ValueError(f"input has shape {u.shape}, expected ({c.widths[0]},)")
    P = [u]
    X = []
    for l, xb in enumerate(c.layers, start=1):
        jbar = (c.device.W(xb.phi) * xb.switches) @ P[-1]
        x = _neuron_input(jbar, c.widths[l], c.differential)
        X.append(x)
        P.append(np.asarray(c.activation.sigma(x), dtype=float))
    return P, X


def _neuron_input(jbar: np.ndarray, n: int, diff: bool) -> np.ndarray:
    return jbar[:n] - jbar[n:] if diff else jbar


@dataclass
class SegmentSignal:
    """Piecewise-constant source voltages: ``values[i]`` holds on
    ``[breakpoints[i], breakpoints[i+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.breakpoints.ndim != 1 or self.breakpoints.size < 2:
            raise ValueError("need at least two breakpoints")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.values.shape[0] != self.breakpoints.size - 1:
            raise ValueError("need one value vector per segment")

    @classmethod
    def constant(cls, value, duration: float) -> "SegmentSignal":
        return cls([0.0, float(duration)], [np.asarray(value, dtype=float)])

    @property
    def duration(self) -> float:
        return float(self.breakpoints[-1] - self.breakpoints[0])

    @property
    def n_inputs(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: float) -> np.ndarray:
        """Value at relative time t; the last segment includes its right end."""
        b = self.breakpoints - self.breakpoints[0]
        if t < 0 or t > b[-1]:
            return np.zeros(self.n_inputs)
        i = min(int(np.searchsorted(b, t, side="right")) - 1, self.values.shape[0] - 1)
        return self.values[i].copy()

    def to_csv(self, path, samples_per_segment: int = 1) -> None:
        b = self.breakpoints - self.breakpoints[0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"u[{j + 1}]" for j in range(self.n_inputs)])
            for i, v in enumerate(self.values):
                for t in np.linspace(b[i], b[i + 1], samples_per_segment + 1)[:-1]:
                    w.writerow([repr(float(t))] + [repr(float(x)) for x in v])
            w.writerow([repr(float(b[-1]))] + [repr(float(x)) for x in self.values[-1]])


@dataclass
class Trace:
    """Samples recorded during integration.

    At a breakpoint the recorded sample belongs to the segment that ends there
    (left limit); only the very first sample uses the first segment's value.
    """

    widths: tuple[int, ...]
    differential: bool = False
    record_flux: bool = True
    _chunks: list = field(default_factory=list, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def for_circuit(cls, c: CircuitState, record_flux: bool = True) -> "Trace":
        return cls(c.widths, c.differential, record_flux)

    @property
    def L(self) -> int:
        return len(self.widths) - 1

    def _rows(self, layer: int) -> int:
        return self.widths[layer] * (2 if self.differential else 1)

    def _append(self, t, phi, J, P) -> None:
        self._chunks.append((t, phi, J, P))
        self._cache.clear()

    def __len__(self) -> int:
        return int(sum(ch[0].size for ch in self._chunks))

    def _cat(self, k: int) -> np.ndarray:
        if k not in self._cache:
            if not self._chunks:
                raise ValueError("empty trace")
            self._cache[k] = np.concatenate([ch[k] for ch in self._chunks])
        return self._cache[k]

    @property
    def last_time(self) -> float | None:
        return float(self._chunks[-1][0][-1]) if self._chunks else None

    @property
    def times(self) -> np.ndarray:
        return self._cat(0)

    def _offsets(self, sizes):
        return np.concatenate([[0], np.cumsum(sizes)])

    def phi(self, layer: int) -> np.ndarray:
        if not self.record_flux:
            raise ValueError("flux was not recorded in this trace")
        sizes = [self._rows(l) * self.widths[l - 1] for l in range(1, self.L + 1)]
        off = self._offsets(sizes)
        flat = self._cat(1)[:, off[layer - 1]:off[layer]]
        return flat.reshape(-1, self._rows(layer), self.widths[layer - 1])

    def jbar(self, layer: int) -> np.ndarray:
        """Physical row currents of layer ``layer``, shape (samples, rows)."""
        off = self._offsets([self._rows(l) for l in range(1, self.L + 1)])
        return self._cat(2)[:, off[layer - 1]:off[layer]]

    def neuron_input(self, layer: int) -> np.ndarray:
        j = self.jbar(layer)
        n = self.widths[layer]
        return j[:, :n] - j[:, n:] if self.differential else j

    def P(self, layer: int) -> np.ndarray:
        """Potentials of layer ``layer`` (0 is the source), shape (samples, n)."""
        off = self._offsets(self.widths)
        return self._cat(3)[:, off[layer]:off[layer + 1]]

    @property
    def y(self) -> np.ndarray:
        return self.P(self.L)

    def index_at(self, t: float, atol: float = 1e-9) -> int:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > atol * max(1.0, abs(t)):
            raise KeyError(f"no sample at t={t}")
        return i

    def columns(self) -> list[str]:
        cols = ["time"]
        if self.record_flux:
            for l in range(1, self.L + 1):
                cols += [f"phi[{l}][{k + 1}][{j + 1}]" for k in range(self._rows(l))
                         for j in range(self.widths[l - 1])]
        for l in range(1, self.L + 1):
            cols += [f"Jbar[{l}][{k + 1}]" for k in range(self._rows(l))]
        for l in range(self.L + 1):
            cols += [f"P[{l}][{k + 1}]" for k in range(self.widths[l])]
        return cols

    def matrix(self) -> np.ndarray:
        parts = [self.times[:, None]]
        if self.record_flux:
            parts.append(self._cat(1))
        parts += [self._cat(2), self._cat(3)]
        return np.hstack(parts)

    def to_csv(self, path, comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(self.columns())
            for row in self.matrix():
                w.writerow([repr(float(x)) for x in row])


class _Layout(NamedTuple):
    rows: np.ndarray
    widths: np.ndarray
    phi_off: np.ndarray
    j_off: np.ndarray
    p_off: np.ndarray


def _layout(c: CircuitState) -> _Layout:
    rows = np.array([c.layer_shape(l)[0] for l in range(1, c.L + 1)], dtype=np.int64)
    widths = np.array(c.widths, dtype=np.int64)
    sizes = rows * widths[:-1]
    cat = lambda s: np.concatenate([[0], np.cumsum(s)]).astype(np.int64)  # noqa: E731
    return _Layout(rows, widths, cat(sizes), cat(rows), cat(widths))


def default_step(length: float) -> float:
    return min(length / 1000.0, 1e-2)


def integrate(c: CircuitState, signal: SegmentSignal, step: float | None = None,
              sink: Trace | None = None, record_every: int | None = 1,
              engine: str = "auto") -> CircuitState:
    """Advance the fluxes of ``c`` over ``signal`` with classical RK4.

    Each segment is split into equal steps no longer than ``step`` (default
    ``min(segment/1000, 1e-2)``), so integration never crosses a breakpoint.
    Switches stay as they are.  ``record_every=None`` records only segment
    ends.  Samples carry absolute times starting at ``c.time``; the circuit
    clock is advanced by the signal duration.
    """
    if signal.n_inputs != c.widths[0]:
        raise ValueError(f"signal drives {signal.n_inputs} inputs, circuit has {c.widths[0]}")
    if step is not None and step <= 0:
        raise ValueError("step must be positive")
    if engine == "auto":
        engine = "numba" if c.device.kernel is not None and c.activation.kernel is not None else "numpy"
    if engine == "numba" and (c.device.kernel is None or c.activation.kernel is None):
        raise ValueError("device or activation has no compiled kernel; use engine='numpy'")
    run = _run_numba if engine == "numba" else _run_numpy

    lay = _layout(c)
    phi = np.concatenate([xb.phi.ravel() for xb in c.layers])
    S = np.concatenate([xb.switches.ravel() for xb in c.layers]).astype(float)
    origin = c.time
    b = signal.breakpoints - signal.breakpoints[0]
    for i, u in enumerate(signal.values):
        length = b[i + 1] - b[i]
        target = step if step is not None else default_step(length)
        n = max(1, math.ceil(length / target - 1e-9))
        h = length / n
        every = n if record_every is None else max(1, int(record_every))
        record_flux = sink.record_flux if sink is not None else False
        idx, phis, Js, Ps, finite = run(c, lay, phi, S, u, h, n, every, record_flux)
        if not finite:
            raise IntegrationError(f"non-finite flux in segment {i} starting at t={origin + b[i]:.6g}")
        if sink is not None:
            t = origin + b[i] + idx * h
            t[-1] = origin + b[i + 1]
            start = 0 if sink.last_time is None or sink.last_time < t[0] - 1e-12 * max(1.0, abs(t[0])) else 1
            sink._append(t[start:], phis[start:] if record_flux else phis, Js[start:], Ps[start:])
    off = lay.phi_off
    for l, xb in enumerate(c.layers):
        xb.phi = phi[off[l]:off[l + 1]].reshape(xb.phi.shape).copy()
    c.time = origin + float(b[-1])
    return c


def _run_numba(c, lay, phi, S, u, h, n, every, record_flux):
    dk, dp = c.device.kernel
    ak, ap = c.activation.kernel
    return _kernel.rk4_segment(phi, S, np.ascontiguousarray(u, dtype=float), h, n, every, record_flux,
                               lay.rows, lay.widths, lay.phi_off, lay.j_off, lay.p_off,
                               c.differential, dk, dp, ak, ap)


def _run_numpy(c, lay, phi, S, u, h, n, every, record_flux):
    """Same scheme as the compiled kernel, with arbitrary Python callables."""
    W, sigma = c.device.W, c.activation.sigma
    shapes = [c.layer_shape(l) for l in range(1, c.L + 1)]
    off = lay.phi_off
    Sm = [S[off[l]:off[l + 1]].reshape(shapes[l]) for l in range(c.L)]

    def evaluate(x):
        P = [np.asarray(u, dtype=float)]
        J = []
        dphi = []
        for l in range(c.L):
            ph = x[off[l]:off[l + 1]].reshape(shapes[l])
            dphi.append((Sm[l] * P[-1][None, :]).ravel())
            jb = (np.asarray(W(ph), float) * Sm[l]) @ P[-1]
            J.append(jb)
            P.append(np.asarray(sigma(_neuron_input(jb, c.widths[l + 1], c.differential)), float))
        return np.concatenate(dphi), np.concatenate(J), np.concatenate(P)

    rec_idx, rec_phi, rec_J, rec_P = [0], [], [], []
    k1, J, P = evaluate(phi)
    rec_phi.append(phi.copy())
    rec_J.append(J)
    rec_P.append(P)
    for s in range(n):
        k2 = evaluate(phi + 0.5 * h * k1)[0]
        k3 = evaluate(phi + 0.5 * h * k2)[0]
        k4 = evaluate(phi + h * k3)[0]
        phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        k1, J, P = evaluate(phi)
        if (s + 1) % every == 0 or s == n - 1:
            rec_idx.append(s + 1)
            rec_phi.append(phi.copy())
            rec_J.append(J)
            rec_P.append(P)
    phis = np.array(rec_phi) if record_flux else np.empty((0, phi.size))
    return (np.array(rec_idx), phis, np.array(rec_J), np.array(rec_P), bool(np.all(np.isfinite(phi))))
