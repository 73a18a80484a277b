"""Randomised invariants of the device, crossbar, circuit and protocols."""
import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from memxbar.activation import scaled_sigmoid, tanh
from memxbar.circuit import (SegmentSignal, Trace, build_circuit, circuit_from_weights, effective_weights,
                             forward_potentials, integrate, set_switches)
from memxbar.crossbar import CrossbarState, flux_rhs, row_currents, terminal_currents
from memxbar.device import arctan_device, charge, memductance
from memxbar.oracle import AnnSpec, ann_forward, write_fixed_point
from memxbar.protocols import (Path, chain_bound_violations, infer, read_one, select_gains,
                               write_one)
from memxbar.signals import BlockSignal, block_value, check_parity, encode

DEV = arctan_device()
ACTS = [tanh(), scaled_sigmoid()]

finite = st.floats(-1e6, 1e6, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)
small_widths = st.lists(st.integers(1, 3), min_size=2, max_size=3).map(tuple)


def random_circuit(widths, seed, act=None, lo=-3.0, hi=3.0, mode="single"):
    rng = np.random.default_rng(seed)
    c = build_circuit(widths, DEV, act or ACTS[0], mode=mode)
    for xb in c.layers:
        xb.phi = rng.uniform(lo, hi, xb.phi.shape)
    return c, rng


# device

@given(finite)
def test_memductance_in_open_range(phi):
    w = memductance(DEV, phi)
    assert DEV.W_min < w < DEV.W_max or (w in (DEV.W_min, DEV.W_max) and abs(phi) > 1e15)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=50, unique=True))
def test_memductance_increasing(phis):
    x = np.sort(phis)
    assume(np.all(np.diff(x) > 1e-6))
    assert np.all(np.diff(memductance(DEV, x)) > 0)


@given(st.floats(-20, 20))
def test_charge_derivative(phi):
    h = 1e-4
    fd = (charge(DEV, phi + h) - charge(DEV, phi - h)) / (2 * h)
    assert abs(fd - memductance(DEV, phi)) <= 1e-6


# activation

@given(st.sampled_from(ACTS), finite)
def test_activation_odd_exact(act, x):
    assert act.sigma(-x) == -act.sigma(x)


# beyond |x| ~ 5 a 1e-6 step falls below the double resolution of tanh
@given(st.sampled_from(ACTS), st.floats(-5, 5), st.floats(1e-6, 10))
def test_activation_increasing(act, x, d):
    assert act.sigma(x) < act.sigma(x + d)


# crossbar

@given(seeds, st.integers(1, 5), st.integers(1, 5), st.floats(-100, 100))
def test_crossbar_linear_in_potential(seed, n, m, scale):
    rng = np.random.default_rng(seed)
    xb = CrossbarState(rng.uniform(-3, 3, (n, m)), rng.integers(0, 2, (n, m)))
    P = rng.uniform(-1, 1, m)
    a = row_currents(xb, DEV, scale * P)
    b = scale * row_currents(xb, DEV, P)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * max(1.0, abs(scale)))


@given(seeds)
def test_crossbar_dense_double_loop(seed):
    rng = np.random.default_rng(seed)
    xb = CrossbarState.closed(rng.uniform(-3, 3, (5, 5)))
    P = rng.uniform(-1, 1, 5)
    ref = [sum(float(DEV.W(xb.phi[k, j])) * P[j] for j in range(5)) for k in range(5)]
    assert np.max(np.abs(row_currents(xb, DEV, P) - ref)) <= 1e-12


@given(seeds, st.integers(1, 5), st.integers(1, 5))
def test_crossbar_current_conservation(seed, n, m):
    rng = np.random.default_rng(seed)
    xb = CrossbarState(rng.uniform(-3, 3, (n, m)), rng.integers(0, 2, (n, m)))
    t = terminal_currents(xb, DEV, rng.uniform(-1, 1, m))
    assert math.isclose(t.J.sum(), t.Jbar.sum(), rel_tol=1e-12, abs_tol=1e-12)
    assert np.allclose(t.Jbar, row_currents(xb, DEV, t.P), atol=1e-14)


@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_open_switches_freeze_flux(seed, n, m):
    c, rng = random_circuit((m, n), seed)
    S = rng.integers(0, 2, (n, m))
    set_switches(c, 1, S)
    before = c.layers[0].phi.copy()
    assert not flux_rhs(c.layers[0], rng.uniform(-1, 1, m))[S == 0].any()
    integrate(c, SegmentSignal.constant(rng.uniform(-1, 1, m), 0.3), step=0.01)
    assert np.array_equal(c.layers[0].phi[S == 0], before[S == 0])


# circuit and block signals

@settings(max_examples=25)
@given(small_widths, seeds, st.sampled_from(ACTS))
def test_block_signal_non_invasive(widths, seed, act):
    c, rng = random_circuit(widths, seed, act)
    tau = 1.0
    step = tau / 1000
    before = c.fluxes()
    infer(c, rng.uniform(-1, 1, widths[0]), tau, step=step, record_every=None)
    dev = max(np.max(np.abs(a - b)) for a, b in zip(before, c.fluxes()))
    assert dev <= 10 * step**4 * 4 * tau + 1e-12


@settings(max_examples=20)
@given(small_widths, seeds)
def test_flux_even_and_potential_odd(widths, seed):
    c, rng = random_circuit(widths, seed)
    tau = 1.0
    sig = encode(rng.uniform(-1, 1, widths[0]), tau)
    tr = Trace.for_circuit(c)
    integrate(c, sig, step=tau / 200, sink=tr)
    t = tr.times
    for a, b in ((0, 2 * tau), (2 * tau, 4 * tau)):
        for l in range(1, c.L + 1):
            assert check_parity(t, tr.phi(l), (a, b), "even") <= 1e-6
        for l in range(c.L + 1):
            assert check_parity(t, tr.P(l), (a, b), "odd") <= 1e-6


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.floats(1e-3, 1e3))
def test_encode_zero_integral(u, tau):
    s = encode(u, tau)
    # four segments of length tau whose values cancel exactly
    assert np.allclose(np.diff(s.breakpoints), tau, rtol=1e-15, atol=0)
    assert not s.values.sum(axis=0).any()
    assert not (tau * s.values).sum(axis=0).any()


@given(st.floats(0.01, 100), st.floats(0.001, 0.999))
def test_block_value_half_window_oddness(tau, frac):
    s = frac * tau
    assert block_value(tau, tau + s) == -block_value(tau, tau - s)
    assert block_value(tau, -tau + s) == -block_value(tau, -tau - s)
    q = BlockSignal(tau, (1.0,))
    assert q.value_at(2 * tau)[0] == 1.0


@given(seeds, st.sampled_from(ACTS))
def test_trace_first_sample_is_forward(seed, act):
    c, rng = random_circuit((3, 2, 2), seed, act)
    u = rng.uniform(-1, 1, 3)
    P, _ = forward_potentials(c, u)
    tr = Trace.for_circuit(c)
    integrate(c, SegmentSignal.constant(u, 0.1), sink=tr)
    # the kernel sums in loop order, numpy in matmul order: allow a few ulps
    assert all(np.allclose(tr.P(l)[0], P[l], rtol=0, atol=1e-15) for l in range(3))


@given(seeds, st.sampled_from(ACTS))
def test_differential_forward_matches_oracle(seed, act):
    rng = np.random.default_rng(seed)
    span = DEV.W_max - DEV.W_min
    w = [rng.uniform(-0.99 * DEV.W_max, 0.99 * DEV.W_max, (3, 2)),
         rng.uniform(-0.99 * span, 0.99 * span, (2, 3))]
    c = circuit_from_weights(w, DEV, act, "differential")
    for l in range(2):
        c.layers[l].switches = c.mask[l].copy()
    u = rng.uniform(-1, 1, 2)
    assert np.max(np.abs(forward_potentials(c, u)[0][-1] - ann_forward(AnnSpec(w, act), u))) <= 1e-12
    assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(effective_weights(c), w))


# protocols

@settings(max_examples=20)
@given(small_widths, seeds)
def test_read_one_exact(widths, seed):
    c, rng = random_circuit(widths, seed)
    l = int(rng.integers(1, len(widths)))
    k, j = int(rng.integers(widths[l])), int(rng.integers(widths[l - 1]))
    want = float(DEV.W(c.layers[l - 1].phi[k, j]))
    before = c.fluxes()
    got = read_one(c, l, k, j, 1.0, step=1e-3)
    assert abs(got - want) <= 1e-6
    assert max(np.max(np.abs(a - b)) for a, b in zip(before, c.fluxes())) <= 1e-6


@settings(max_examples=25)
@given(st.integers(1, 3), st.floats(-2, 2), st.floats(0.7, 3.3), st.floats(0.1, 1.0),
       st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([-1.0, 0.3, 1.0]))
def test_write_lyapunov_and_sign(layer, phi0, target, gain_frac, T, x0):
    act = ACTS[0]
    c = build_circuit((1,) * (layer + 1), DEV, act, phi0=phi0)
    alpha = gain_frac * select_gains(DEV, act, layer, T)
    tr = Trace.for_circuit(c, record_flux=False)
    e = write_one(c, layer, 0, 0, target, 0.05, T, alpha, x0, step=T / 100, sink=tr, record_every=10)
    assert e.final_error <= 0.05
    xi, phi = np.array(e.xi), np.array(e.flux)
    # index 1 is the end of the probe interval; the controller acts from there on
    assert np.all(np.diff(xi[1:]) <= 1e-15)
    for i in range(1, len(phi) - 1):
        assert np.sign(phi[i + 1] - phi[i]) == -np.sign(phi[i] - e.target_flux)
    assert chain_bound_violations(tr, Path.to(layer, 0, 0), DEV, act) == []


@given(st.floats(-3, 3), st.floats(0.7, 3.3), st.floats(0.05, 0.99), st.floats(-1, 1))
def test_fixed_point_error_strictly_decreasing(phi0, target, frac, x0):
    assume(abs(x0) > 1e-3)
    phis = write_fixed_point(DEV, target, phi0, frac / DEV.beta, 1.0, 1e-3, x0)
    err = [abs(p - math.tan(target - 2)) for p in phis[1:]]
    assert all(b < a for a, b in zip(err, err[1:]))
