"""Block pulse used for inference and reading, plus parity checks on samples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import SegmentSignal, Trace

DEFAULT_TAU = 5.0


class ProtocolError(RuntimeError):
    """A protocol could not take the measurement it needs."""


def block_value(tau: float, t: float) -> float:
    """Q(t): -1 on [-2tau, -tau), +1 on [-tau, tau], -1 on (tau, 2tau], else 0."""
    if t < -2 * tau or t > 2 * tau:
        return 0.0
    if -tau <= t <= tau:
        return 1.0
    return -1.0


@dataclass(frozen=True)
class BlockSignal:
    """``amplitude * Q(t - 2 tau)`` on ``[0, 4 tau]``; the period is ``T = 4 tau``."""

    tau: float
    amplitude: tuple

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "amplitude", tuple(float(a) for a in np.atleast_1d(self.amplitude)))

    @property
    def T(self) -> float:
        return 4 * self.tau

    def value_at(self, t: float) -> np.ndarray:
        return np.asarray(self.amplitude) * block_value(self.tau, t - 2 * self.tau)

    def segments(self) -> SegmentSignal:
        u = np.asarray(self.amplitude)
        tau = self.tau
        return SegmentSignal(tau * np.arange(5.0), [-u, u, u, -u])


def encode(u_hat, tau: float = DEFAULT_TAU) -> SegmentSignal:
    """Four segments -u, +u, +u, -u of length tau each."""
    return BlockSignal(tau, tuple(np.atleast_1d(np.asarray(u_hat, dtype=float)))).segments()


def decode(trace: Trace, tau: float, t0: float | None = None) -> np.ndarray:
    """Output sample at ``t0 + 2 tau`` (``t0`` defaults to the first trace time)."""
    start = trace.times[0] if t0 is None else t0
    try:
        i = trace.index_at(start + 2 * tau)
    except KeyError:
        raise ProtocolError(f"trace has no sample at t={start + 2 * tau}") from None
    return trace.y[i].copy()


def check_parity(times, values, interval, parity: str = "odd") -> float:
    """Largest ``|f(t) -/+ f(a + b - t)|`` over samples in ``[a, b]``.

    ``parity="odd"`` uses the sum, ``"even"`` the difference.  The mirror
    value is linearly interpolated.  The midpoint is skipped: it pairs with
    itself, and a jump there has no meaningful one-sided value.
    """
    if parity not in ("odd", "even"):
        raise ValueError("parity must be 'odd' or 'even'")
    t = np.asarray(times, dtype=float)
    f = np.asarray(values, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    f = f.reshape(f.shape[0], -1)
    a, b = map(float, interval)
    tol = 1e-9 * max(1.0, abs(a), abs(b))
    if t.size == 0 or t[0] > a + tol or t[-1] < b - tol:
        raise ValueError(f"samples do not cover [{a}, {b}]")
    inside = (t >= a - tol) & (t <= b + tol) & (np.abs(t - 0.5 * (a + b)) > tol)
    ti = t[inside]
    if ti.size == 0:
        return 0.0
    lo, hi = np.searchsorted(t, a - tol), np.searchsorted(t, b + tol, side="right")
    mirror = np.clip(a + b - ti, t[lo], t[hi - 1])
    sign = 1.0 if parity == "odd" else -1.0
    worst = 0.0
    for col in range(f.shape[1]):
        fm = np.interp(mirror, t[lo:hi], f[lo:hi, col])
        worst = max(worst, float(np.max(np.abs(f[inside, col] + sign * fm))))
    return worst
