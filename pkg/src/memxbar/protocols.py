"""Inference, reading and writing protocols on a :class:`CircuitState`.

Indices are 0-based.  A path to memristor (k, j) of layer l is a tuple
``(g_0, ..., g_l)`` with ``g_{l-1} = j`` and ``g_l = k``; layer kappa keeps
only the switch at ``(g_kappa, g_{kappa-1})`` closed and every layer after l
is fully open.  In differential mode the target row ``g_l`` is a physical row
(``k + n_l`` addresses the negative memristor) while upstream path entries
use the positive rows.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .circuit import CircuitState, SegmentSignal, Trace, integrate, split_matrix
from .device import RealizabilityError, flux_for
from .oracle import ConvergenceError
from .signals import ProtocolError, decode, encode

READ_DIVISOR_MIN = 1e-12


class GainConditionError(ValueError):
    """alpha * T is above the bound that guarantees convergence."""


@dataclass(frozen=True)
class Path:
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(self.indices) < 2:
            raise ValueError("a path needs at least a column and a row index")

    @property
    def target_layer(self) -> int:
        return len(self.indices) - 1

    @property
    def row(self) -> int:
        return self.indices[-1]

    @property
    def col(self) -> int:
        return self.indices[-2]

    @classmethod
    def to(cls, layer: int, row: int, col: int) -> "Path":
        """Default path: every free index is the first neuron."""
        return cls((0,) * (layer - 1) + (col, row))

    def validate(self, widths: Sequence[int], differential: bool = False) -> None:
        l = self.target_layer
        if l > len(widths) - 1:
            raise IndexError(f"path reaches layer {l} but the circuit has {len(widths) - 1}")
        for kappa, g in enumerate(self.indices):
            limit = widths[kappa] * (2 if differential and kappa == l else 1)
            if not 0 <= g < limit:
                raise IndexError(f"path index {g} at layer {kappa} outside 0..{limit - 1}")

    def one_based(self) -> list[int]:
        return [g + 1 for g in self.indices]


def path_switches(path: Path, widths: Sequence[int], differential: bool = False) -> list[np.ndarray]:
    path.validate(widths, differential)
    mats = []
    for kappa in range(1, len(widths)):
        rows = widths[kappa] * (2 if differential else 1)
        S = np.zeros((rows, widths[kappa - 1]), dtype=np.int8)
        if kappa <= path.target_layer:
            S[path.indices[kappa], path.indices[kappa - 1]] = 1
        mats.append(S)
    return mats


def _apply_switches(c: CircuitState, mats) -> list[np.ndarray]:
    saved = [xb.switches.copy() for xb in c.layers]
    for xb, S in zip(c.layers, mats):
        xb.switches = np.asarray(S, dtype=np.int8).copy()
    return saved


def _pulse_vector(n0: int, col: int, value: float) -> np.ndarray:
    u = np.zeros(n0)
    u[col] = value
    return u


def infer(c: CircuitState, u_hat, tau: float, step: float | None = None,
          record_every: int | None = 1, record_flux: bool = True):
    """Drive the encoded input through the circuit with its inference switches.

    Returns ``(y_hat, trace)``.  Switch settings are restored afterwards.
    """
    saved = _apply_switches(c, c.mask)
    trace = Trace.for_circuit(c, record_flux)
    t0 = c.time
    try:
        integrate(c, encode(u_hat, tau), step=step, sink=trace, record_every=record_every)
    finally:
        _apply_switches(c, saved)
    return decode(trace, tau, t0), trace


def _measured(trace: Trace, path: Path, i: int) -> tuple[float, float]:
    """Row current of the target and the potential feeding it, at sample i."""
    l = path.target_layer
    jbar = float(trace.jbar(l)[i, path.row])
    div = float(trace.P(l - 1)[i, path.col])
    return jbar, div


def read_one(c: CircuitState, layer: int, row: int, col: int, tau: float, step: float | None = None,
             path: Path | None = None, sink: Trace | None = None, record_every: int | None = None) -> float:
    """Memductance of memristor (row, col) of ``layer`` from terminal currents."""
    path = path or Path.to(layer, row, col)
    if (path.target_layer, path.row, path.col) != (layer, row, col):
        raise ValueError("path does not end at the requested memristor")
    saved = _apply_switches(c, path_switches(path, c.widths, c.differential))
    trace = sink if sink is not None else Trace.for_circuit(c, record_flux=False)
    t0 = c.time
    try:
        integrate(c, encode(_pulse_vector(c.widths[0], path.indices[0], 1.0), tau),
                  step=step, sink=trace, record_every=record_every)
    finally:
        _apply_switches(c, saved)
    i = trace.index_at(t0 + 2 * tau)
    jbar, div = _measured(trace, path, i)
    if abs(div) < READ_DIVISOR_MIN:
        raise ProtocolError(f"divisor {div:.3g} at t=T/2 is too small; device or activation "
                            "violates its assumptions")
    return jbar / div


def read_time(widths: Sequence[int], tau: float, differential: bool = False) -> float:
    """Protocol time of a full sequential read: 4 tau per memristor."""
    m = 2 if differential else 1
    return 4 * tau * sum(m * widths[k + 1] * widths[k] for k in range(len(widths) - 1))


@dataclass
class ReadReport:
    memductances: list[np.ndarray]
    paths: dict
    protocol_time: float
    start_time: float
    tau: float
    batched: bool = False

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "batched": self.batched,
            "start_time": self.start_time,
            "protocol_time": self.protocol_time,
            "memductances": [m.tolist() for m in self.memductances],
            "paths": [{"layer": l, "row": k + 1, "col": j + 1, "path": list(p)}
                      for (l, k, j), p in self.paths.items()],
        }


def read_all(c: CircuitState, tau: float, step: float | None = None, batched: bool = False,
             sink: Trace | None = None, record_every: int | None = None) -> ReadReport:
    """Read every memristor: layer by layer, column by column, row by row.

    ``batched=True`` reads a whole column of a layer with one pulse; each row
    current then carries its own memductance times the shared column potential.
    """
    start = c.time
    out = [np.empty(c.layer_shape(l)) for l in range(1, c.L + 1)]
    paths = {}
    for l in range(1, c.L + 1):
        rows, cols = c.layer_shape(l)
        for j in range(cols):
            if batched:
                _read_column(c, l, j, tau, step, out[l - 1], paths, sink, record_every)
                continue
            for k in range(rows):
                p = Path.to(l, k, j)
                out[l - 1][k, j] = read_one(c, l, k, j, tau, step, p, sink, record_every)
                paths[(l, k, j)] = tuple(p.one_based())
    return ReadReport(out, paths, c.time - start, start, tau, batched)


def _read_column(c, l, j, tau, step, dest, paths, sink, record_every):
    rows = c.layer_shape(l)[0]
    p = Path.to(l, 0, j)
    mats = path_switches(p, c.widths, c.differential)
    mats[l - 1][:, j] = 1
    saved = _apply_switches(c, mats)
    trace = sink if sink is not None else Trace.for_circuit(c, record_flux=False)
    t0 = c.time
    try:
        integrate(c, encode(_pulse_vector(c.widths[0], p.indices[0], 1.0), tau),
                  step=step, sink=trace, record_every=record_every)
    finally:
        _apply_switches(c, saved)
    i = trace.index_at(t0 + 2 * tau)
    div = float(trace.P(l - 1)[i, j])
    if abs(div) < READ_DIVISOR_MIN:
        raise ProtocolError(f"divisor {div:.3g} at t=T/2 is too small")
    dest[:, j] = trace.jbar(l)[i] / div
    for k in range(rows):
        paths[(l, k, j)] = tuple(Path.to(l, k, j).one_based())


def gain_bound(device, activation, layer: int, T: float) -> float:
    """Largest alpha with ``T alpha <= 1 / (beta (eta W_max)^(layer-1))``."""
    if T <= 0:
        raise ValueError("T must be positive")
    return 1.0 / (T * device.beta * (activation.eta * device.W_max) ** (layer - 1))


def select_gains(device, activation, layer, T: float, L: int | None = None) -> float:
    """Gain for one layer, or with ``layer="all"`` the smallest over layers 1..L."""
    if layer == "all":
        if L is None:
            raise ValueError("layer='all' needs L")
        return 1.0 / (T * device.beta * max(1.0, (activation.eta * device.W_max) ** (L - 1)))
    return gain_bound(device, activation, int(layer), T)


@dataclass
class WriteEntry:
    layer: int
    row: int
    col: int
    target: float
    target_flux: float
    alpha: float
    iterations: int = 0
    T_hat: float = 0.0
    start_time: float = 0.0
    final_memductance: float = float("nan")
    final_error: float = float("nan")
    path: tuple = ()
    # one value per interval boundary i*T, i = 0..iterations
    times: list = field(default_factory=list)
    flux: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    # measured memductance at the end of each interval, i = 1..iterations
    measured: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["row"] += 1
        d["col"] += 1
        d["path"] = list(self.path)
        return d


def write_one(c: CircuitState, layer: int, row: int, col: int, W_target: float, eps: float, T: float,
              alpha: float, x0: float = 1.0, step: float | None = None, max_iter: int = 10**6,
              path: Path | None = None, sink: Trace | None = None,
              record_every: int | None = None) -> WriteEntry:
    """Closed-loop write of one memristor.

    A probe ``x0`` is held for T, then each interval applies
    ``alpha * (W_target - measured)`` where ``measured`` is the target row
    current over its input potential at the end of the previous interval.
    """
    dev = c.device
    if not dev.W_min < W_target < dev.W_max:
        raise RealizabilityError(f"target {W_target:.6g} outside ({dev.W_min:.6g}, {dev.W_max:.6g})")
    if eps <= 0 or T <= 0:
        raise ValueError("eps and T must be positive")
    if x0 == 0:
        raise ValueError("probe voltage x0 must be nonzero")
    bound = gain_bound(dev, c.activation, layer, 1.0)
    if alpha <= 0 or alpha * T > bound * (1 + 1e-12):
        raise GainConditionError(f"alpha*T = {alpha * T:.6g} violates the bound {bound:.6g} for layer {layer}")
    path = path or Path.to(layer, row, col)
    if (path.target_layer, path.row, path.col) != (layer, row, col):
        raise ValueError("path does not end at the requested memristor")

    xb = c.crossbar(layer)
    phi_hat = float(flux_for(dev, W_target))
    entry = WriteEntry(layer, row, col, float(W_target), phi_hat, float(alpha),
                       start_time=c.time, path=tuple(path.one_based()))

    def note():
        ph = float(xb.phi[row, col])
        entry.times.append(c.time)
        entry.flux.append(ph)
        entry.xi.append((ph - phi_hat) ** 2)

    saved = _apply_switches(c, path_switches(path, c.widths, c.differential))
    trace = sink if sink is not None else Trace.for_circuit(c, record_flux=False)
    n0, g0 = c.widths[0], path.indices[0]
    try:
        note()
        v = float(x0)
        while True:
            integrate(c, SegmentSignal.constant(_pulse_vector(n0, g0, v), T), step=step,
                      sink=trace, record_every=record_every)
            entry.iterations += 1
            note()
            jbar, div = _measured(trace, path, len(trace) - 1)
            if div == 0.0:
                raise ProtocolError("input potential of the target vanished during writing")
            w = jbar / div
            entry.measured.append(w)
            err = W_target - w
            if abs(err) <= eps:
                break
            if entry.iterations >= max_iter:
                raise ConvergenceError(f"layer {layer} ({row + 1},{col + 1}): error {err:.3g} after "
                                       f"{max_iter} intervals")
            v = alpha * err
    finally:
        _apply_switches(c, saved)
    entry.T_hat = entry.iterations * T
    entry.final_memductance = entry.measured[-1]
    entry.final_error = abs(W_target - entry.measured[-1])
    return entry


@dataclass
class WriteReport:
    entries: list[WriteEntry]
    protocol_time: float
    start_time: float
    eps: float
    T: float
    x0: float
    batched: bool = False

    @property
    def total_T_hat(self) -> float:
        return math.fsum(e.T_hat for e in self.entries)

    @property
    def max_error(self) -> float:
        return max((e.final_error for e in self.entries), default=0.0)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "T": self.T, "x0": self.x0, "batched": self.batched,
            "start_time": self.start_time, "protocol_time": self.protocol_time,
            "sum_T_hat": self.total_T_hat, "max_final_error": self.max_error,
            "entries": [e.to_dict() for e in self.entries],
        }

    def curve_rows(self):
        """(protocol_time, layer, row, col, memductance) rows, 1-based indices."""
        for e in self.entries:
            for t, w in zip(e.times[1:], e.measured):
                yield (t - self.start_time, e.layer, e.row + 1, e.col + 1, w)


def _resolve_alpha(c: CircuitState, alpha, layer: int, T: float) -> float:
    if alpha is None or alpha == "layer":
        return select_gains(c.device, c.activation, layer, T)
    if alpha in ("auto", "all"):
        return select_gains(c.device, c.activation, "all", T, c.L)
    return float(alpha)


def write_all(c: CircuitState, targets: Sequence[np.ndarray], eps: float, T: float, x0: float = 1.0,
              alpha=None, step: float | None = None, batched: bool = False, max_iter: int = 10**6,
              sink: Trace | None = None, record_every: int | None = None) -> WriteReport:
    """Write every memristor, last layer first, then column by column, row by row.

    ``targets`` are memductances shaped like the physical layers; NaN entries
    are skipped.  ``alpha`` is a number, ``"auto"``/``"all"`` for the gain that is
    admissible in every layer, or ``None``/``"layer"`` for the per-layer gain.  ``batched=True`` writes
    first-layer memristors on the same wrapped diagonal simultaneously.
    """
    mats = [np.asarray(t, dtype=float) for t in targets]
    if len(mats) != c.L:
        raise ValueError(f"{len(mats)} target matrices for {c.L} layers")
    for l, m in enumerate(mats, start=1):
        if m.shape != c.layer_shape(l):
            raise ValueError(f"targets for layer {l} have shape {m.shape}, expected {c.layer_shape(l)}")
        vals = m[~np.isnan(m)]
        if np.any(vals <= c.device.W_min) or np.any(vals >= c.device.W_max):
            raise RealizabilityError(f"layer {l} has targets outside ({c.device.W_min:.6g}, {c.device.W_max:.6g})")
    start = c.time
    entries = []
    for l in range(c.L, 0, -1):
        a = _resolve_alpha(c, alpha, l, T)
        if batched and l == 1:
            entries += _write_diagonals(c, mats[0], eps, T, a, x0, step, max_iter)
            continue
        rows, cols = c.layer_shape(l)
        for j in range(cols):
            for k in range(rows):
                if np.isnan(mats[l - 1][k, j]):
                    continue
                entries.append(write_one(c, l, k, j, mats[l - 1][k, j], eps, T, a, x0, step,
                                         max_iter, sink=sink, record_every=record_every))
    return WriteReport(entries, c.time - start, start, eps, T, x0, batched)


def write_weights(c: CircuitState, weights: Sequence[np.ndarray], eps: float, T: float, **kw) -> WriteReport:
    """Write signed weights: directly in single mode, split into pairs in differential mode."""
    if not c.differential:
        return write_all(c, weights, eps, T, **kw)
    targets, masks = [], []
    for w in weights:
        t, m = split_matrix(np.asarray(w, dtype=float), c.device)
        t[m == 0] = np.nan
        targets.append(t)
        masks.append(m)
    c.mask = masks
    return write_all(c, targets, eps, T, **kw)


def _write_diagonals(c, targets, eps, T, alpha, x0, step, max_iter) -> list[WriteEntry]:
    """First-layer memristors with distinct rows and columns share no input or
    output bar, so a wrapped diagonal can be driven at once.  First-layer flux
    only integrates its own column voltage, so each entry follows exactly the
    sequential iterates; results are returned in sequential (j, k) order."""
    dev = c.device
    rows, cols = targets.shape
    N = max(rows, cols)
    bound = gain_bound(dev, c.activation, 1, 1.0)
    if alpha <= 0 or alpha * T > bound * (1 + 1e-12):
        raise GainConditionError(f"alpha*T = {alpha * T:.6g} violates the bound {bound:.6g} for layer 1")
    xb = c.layers[0]
    done = {}
    for d in range(N):
        group = [(k, (k + d) % N) for k in range(rows) if (k + d) % N < cols
                 and not np.isnan(targets[k, (k + d) % N])]
        if not group:
            continue
        S = [np.zeros(c.layer_shape(l), dtype=np.int8) for l in range(1, c.L + 1)]
        for k, j in group:
            S[0][k, j] = 1
        saved = _apply_switches(c, S)
        trace = Trace.for_circuit(c, record_flux=False)
        state = {}
        for k, j in group:
            w = float(targets[k, j])
            phi_hat = float(flux_for(dev, w))
            e = WriteEntry(1, k, j, w, phi_hat, float(alpha), start_time=c.time, path=(j + 1, k + 1))
            ph = float(xb.phi[k, j])
            e.times.append(c.time)
            e.flux.append(ph)
            e.xi.append((ph - phi_hat) ** 2)
            state[(k, j)] = [e, float(x0), True]
        try:
            while any(s[2] for s in state.values()):
                u = np.zeros(c.widths[0])
                for (k, j), (e, v, active) in state.items():
                    if active:
                        u[j] = v
                integrate(c, SegmentSignal.constant(u, T), step=step, sink=trace, record_every=None)
                last = len(trace) - 1
                for (k, j), s in state.items():
                    e, v, active = s
                    if not active:
                        continue
                    e.iterations += 1
                    ph = float(xb.phi[k, j])
                    e.times.append(c.time)
                    e.flux.append(ph)
                    e.xi.append((ph - e.target_flux) ** 2)
                    w = float(trace.jbar(1)[last, k]) / float(trace.P(0)[last, j])
                    e.measured.append(w)
                    err = e.target - w
                    if abs(err) <= eps:
                        s[2] = False
                    elif e.iterations >= max_iter:
                        raise ConvergenceError(f"layer 1 ({k + 1},{j + 1}): error {err:.3g} after "
                                               f"{max_iter} intervals")
                    else:
                        s[1] = alpha * err
        finally:
            _apply_switches(c, saved)
        for (k, j), (e, _, _) in state.items():
            e.T_hat = e.iterations * T
            e.final_memductance = e.measured[-1]
            e.final_error = abs(e.target - e.measured[-1])
            done[(k, j)] = e
    return [done[(k, j)] for j in range(cols) for k in range(rows) if (k, j) in done]


@dataclass
class BoundViolation:
    time: float
    kind: str
    layer: int
    detail: str


def chain_bound_violations(trace: Trace, path: Path, device, activation,
                           rel: float = 1e-12) -> list[BoundViolation]:
    """Check sign, growth and lower-bound properties of the potentials along a path.

    With ``f^kappa = P^{kappa-1}`` on the path: ``sign f^kappa = sign P^0``,
    ``|f^kappa| <= (eta W_max)^(kappa-1) |P^0|`` and
    ``|f^{kappa+1}| >= sigma(W_min |f^kappa|)``.  ``rel`` absorbs rounding.
    """
    l = path.target_layer
    t = trace.times
    f = [trace.P(kappa)[:, path.indices[kappa]] for kappa in range(l)]
    p0 = f[0]
    g = activation.eta * device.W_max
    out = []
    for kappa in range(1, l + 1):
        fk = f[kappa - 1]
        bad = np.sign(fk) != np.sign(p0)
        for i in np.flatnonzero(bad):
            out.append(BoundViolation(t[i], "sign", kappa, f"f={fk[i]:.6g}, P0={p0[i]:.6g}"))
        cap = g ** (kappa - 1) * np.abs(p0)
        for i in np.flatnonzero(np.abs(fk) > cap * (1 + rel)):
            out.append(BoundViolation(t[i], "growth", kappa, f"|f|={abs(fk[i]):.6g} > {cap[i]:.6g}"))
        if kappa < l:
            floor = np.asarray(activation.sigma(device.W_min * np.abs(fk)), dtype=float)
            nxt = np.abs(f[kappa])
            for i in np.flatnonzero(nxt < floor * (1 - rel)):
                out.append(BoundViolation(t[i], "lower", kappa + 1, f"|f|={nxt[i]:.6g} < {floor[i]:.6g}"))
    return out
