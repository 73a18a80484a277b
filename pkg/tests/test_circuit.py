import math

import numpy as np
import pytest

from memxbar.activation import Activation, scaled_sigmoid
from memxbar.circuit import (CircuitState, IntegrationError, SegmentSignal, Trace, build_circuit,
                             circuit_from_weights, effective_weights, forward_potentials, integrate,
                             set_switches, split_weight)
from memxbar.crossbar import flux_rhs
from memxbar.device import DeviceModel, RealizabilityError, flux_for
from memxbar.oracle import ann_forward, chain_integrate_reference
from memxbar.protocols import Path, path_switches


def test_forward_zero_input(dev, act):
    c = build_circuit((3, 4, 2), dev, act, phi0=0.7)
    P, X = forward_potentials(c, np.zeros(3))
    assert all(not x.any() for x in X) and not P[-1].any()


def test_forward_academic_matches_oracle(dev, act, academic):
    c = circuit_from_weights(academic.weights, dev, act)
    P, X = forward_potentials(c, [-1.0, 1.0])
    assert np.allclose(P[-1], ann_forward(academic, [-1.0, 1.0]), atol=1e-12)
    assert np.allclose(X[0], [3.0, 0.0, -3.0], atol=1e-12)


def test_forward_single_memristor(dev, act):
    c = build_circuit((1, 1), dev, act)
    P, _ = forward_potentials(c, [1.0])
    assert P[-1][0] == pytest.approx(math.tanh(2.0), abs=1e-15)


def test_forward_pure_and_checks_shape(dev, act):
    c = build_circuit((2, 2), dev, act, phi0=0.3)
    before = c.fluxes()
    forward_potentials(c, [1.0, 2.0])
    assert all(np.array_equal(a, b) for a, b in zip(before, c.fluxes()))
    with pytest.raises(ValueError):
        forward_potentials(c, [1.0])


def test_state_invariants(dev, act):
    c = build_circuit((2, 3, 2), dev, act, mode="differential")
    assert [xb.phi.shape for xb in c.layers] == [(6, 2), (4, 3)]
    with pytest.raises(ValueError):
        build_circuit((2, 0), dev, act)
    with pytest.raises(ValueError):
        build_circuit((2, 3), dev, act, mode="triple")
    with pytest.raises(ValueError):
        CircuitState(c.layers[:1], (2, 3, 2), dev, act, "differential")


def test_integrate_linear_first_layer(dev, act):
    c = build_circuit((1, 1), dev, act, phi0=0.25)
    integrate(c, SegmentSignal.constant([1.0], 3.7))
    assert c.layers[0].phi[0, 0] == pytest.approx(0.25 + 3.7, abs=1e-12)
    assert c.time == pytest.approx(3.7)


def test_integrate_zero_signal_keeps_state(dev, act, rng):
    c = build_circuit((2, 3, 2), dev, act)
    for xb in c.layers:
        xb.phi = rng.uniform(-2, 2, xb.phi.shape)
    before = c.fluxes()
    integrate(c, SegmentSignal([0, 1, 2], np.zeros((2, 2))))
    assert all(np.array_equal(a, b) for a, b in zip(before, c.fluxes()))


def test_integrate_two_layer_chain_vs_reference(dev, act):
    c = build_circuit((1, 1, 1), dev, act)
    integrate(c, SegmentSignal.constant([1.0], 1.0))
    ref = chain_integrate_reference(dev, act, [0.0, 0.0], 1.0, 1.0)
    assert c.layers[0].phi[0, 0] == pytest.approx(1.0, abs=1e-14)
    assert abs(c.layers[1].phi[0, 0] - ref[1]) <= 1e-8


def test_open_layer_is_frozen(dev, act):
    c = build_circuit((2, 2, 2), dev, act, phi0=0.1)
    set_switches(c, 2, np.zeros((2, 2)))
    integrate(c, SegmentSignal.constant([1.0, -0.5], 2.0))
    assert np.array_equal(c.layers[1].phi, np.full((2, 2), 0.1))
    set_switches(c, 1, np.ones((2, 2)))
    assert flux_rhs(c.layers[0], [1.0, 2.0]).all()
    with pytest.raises(ValueError):
        set_switches(c, 1, np.ones((3, 2)))
    with pytest.raises(ValueError):
        set_switches(c, 1, np.full((2, 2), 2))


def test_path_switch_example(dev, act):
    c = build_circuit((2, 3, 2), dev, act)
    for l, S in enumerate(path_switches(Path((0, 2, 1)), c.widths), start=1):
        set_switches(c, l, S)
    assert [int(xb.switches.sum()) for xb in c.layers] == [1, 1]
    assert c.layers[0].switches[2, 0] == 1 and c.layers[1].switches[1, 2] == 1


def test_trace_first_sample_matches_forward(dev, act, rng):
    c = build_circuit((3, 2, 2), dev, act)
    for xb in c.layers:
        xb.phi = rng.uniform(-1, 1, xb.phi.shape)
    u = rng.uniform(-1, 1, 3)
    P, X = forward_potentials(c, u)
    tr = Trace.for_circuit(c)
    integrate(c, SegmentSignal.constant(u, 0.5), sink=tr)
    for l in range(3):
        assert np.allclose(tr.P(l)[0], P[l], atol=1e-15)
    assert np.allclose(tr.jbar(1)[0], X[0], atol=1e-15)
    assert np.all(np.diff(tr.times) > 0)


def test_trace_breakpoint_sample_is_left_limit(dev, act):
    c = build_circuit((1, 1), dev, act)
    tr = Trace.for_circuit(c)
    integrate(c, SegmentSignal([0, 1, 2], [[1.0], [-1.0]]), step=0.1, sink=tr)
    i = tr.index_at(1.0)
    assert tr.P(0)[i, 0] == 1.0 and tr.P(0)[i + 1, 0] == -1.0
    assert len(tr) == 21


def test_trace_decimation_and_csv(dev, act, tmp_path):
    c = build_circuit((2, 2), dev, act)
    tr = Trace.for_circuit(c)
    integrate(c, SegmentSignal([0, 1, 2], [[1.0, 0.5], [0.0, 1.0]]), step=0.01, sink=tr, record_every=25)
    assert np.allclose(tr.times, np.concatenate([np.arange(0, 1.01, 0.25), np.arange(1.25, 2.01, 0.25)]))
    path = tmp_path / "t.csv"
    tr.to_csv(path, comment="demo")
    lines = path.read_text().splitlines()
    assert lines[0] == "# demo"
    assert lines[1] == ("time,phi[1][1][1],phi[1][1][2],phi[1][2][1],phi[1][2][2],"
                        "Jbar[1][1],Jbar[1][2],P[0][1],P[0][2],P[1][1],P[1][2]")
    assert len(lines) == 2 + len(tr)
    ends = Trace.for_circuit(c)
    integrate(c, SegmentSignal([0, 1, 2], [[1.0, 0.5], [0.0, 1.0]]), sink=ends, record_every=None)
    assert len(ends) == 3


def test_step_subdivides_segments_evenly(dev, act):
    c = build_circuit((1, 1), dev, act)
    tr = Trace.for_circuit(c)
    integrate(c, SegmentSignal.constant([1.0], 1.0), step=0.3, sink=tr)
    assert np.allclose(np.diff(tr.times), 0.25)
    with pytest.raises(ValueError):
        integrate(c, SegmentSignal.constant([1.0], 1.0), step=0.0)
    with pytest.raises(ValueError):
        integrate(c, SegmentSignal.constant([1.0, 2.0], 1.0))


def test_engines_agree(dev, act, rng):
    c = build_circuit((3, 3, 2), dev, act, mode="differential")
    for xb in c.layers:
        xb.phi = rng.uniform(-2, 2, xb.phi.shape)
    sig = SegmentSignal([0, 0.5, 1.2], rng.uniform(-1, 1, (2, 3)))
    a, b = c.copy(), c.copy()
    ta, tb = Trace.for_circuit(a), Trace.for_circuit(b)
    integrate(a, sig, sink=ta, engine="numba")
    integrate(b, sig, sink=tb, engine="numpy")
    assert np.max(np.abs(ta.matrix() - tb.matrix())) < 1e-13


def test_custom_callables_use_numpy_engine(dev):
    soft = Activation(sigma=lambda x: np.asarray(x) / (1 + np.abs(x)), eta=1.0, name="softsign")
    c = build_circuit((1, 1, 1), dev, soft)
    integrate(c, SegmentSignal.constant([1.0], 1.0))
    ref = chain_integrate_reference(dev, soft, [0.0, 0.0], 1.0, 1.0)
    assert abs(c.layers[1].phi[0, 0] - ref[1]) < 1e-8
    with pytest.raises(ValueError):
        integrate(c, SegmentSignal.constant([1.0], 1.0), engine="numba")


def test_non_finite_state_aborts(act):
    blow = DeviceModel(g=lambda x: x, W=lambda x: np.where(np.asarray(x) > 0.5, np.nan, 1.0),
                       W_min=0.5, W_max=2.0, beta=1.0)
    c = build_circuit((1, 1, 1), blow, act)
    with pytest.raises(IntegrationError):
        integrate(c, SegmentSignal.constant([1.0], 2.0), engine="numpy")


def test_split_weight_examples(dev):
    s = split_weight(0.0, dev)
    assert (s.w_plus, s.w_minus, s.s_plus, s.s_minus) == (2.0, 2.0, 1, 1)
    s = split_weight(1.0, dev)
    assert (s.w_plus, s.w_minus, s.s_plus, s.s_minus) == (2.5, 1.5, 1, 1)
    # below the pair span a centred pair is used
    s = split_weight(3.0, dev)
    assert (s.w_plus, s.w_minus, s.s_plus, s.s_minus) == (3.5, 0.5, 1, 1)
    # above the pair span the partner is switched out
    s = split_weight(3.3, dev)
    assert (s.w_plus, s.s_plus, s.s_minus) == (3.3, 1, 0)
    assert dev.W_min < s.w_plus < dev.W_max
    s = split_weight(-3.3, dev)
    assert (s.w_minus, s.s_plus, s.s_minus) == (3.3, 0, 1)
    for bad in (3.6, -4.0):
        with pytest.raises(RealizabilityError):
            split_weight(bad, dev)


def test_differential_forward_matches_signed_oracle(dev, ssig, rng):
    from memxbar.oracle import AnnSpec
    w = [rng.uniform(-3.4, 3.4, (4, 3)), rng.uniform(-2, 2, (2, 4))]
    spec = AnnSpec(w, ssig)
    c = circuit_from_weights(w, dev, ssig, "differential")
    for l in range(2):
        c.layers[l].switches = c.mask[l].copy()
    for _ in range(5):
        u = rng.uniform(-1, 1, 3)
        assert np.max(np.abs(forward_potentials(c, u)[0][-1] - ann_forward(spec, u))) <= 1e-12
    assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(effective_weights(c), w))


def test_segment_signal_validation_and_csv(tmp_path):
    with pytest.raises(ValueError):
        SegmentSignal([0, 1, 1], [[1], [2]])
    with pytest.raises(ValueError):
        SegmentSignal([0, 1], [[1], [2]])
    s = SegmentSignal([0, 1, 3], [[1.0], [-2.0]])
    assert s.duration == 3 and s.value_at(2.0)[0] == -2.0 and s.value_at(3.0)[0] == -2.0
    assert s.value_at(4.0)[0] == 0.0
    s.to_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "time,u[1]"


def test_from_weights_flux_inversion(dev, act, academic):
    c = circuit_from_weights(academic.weights, dev, act)
    for xb, w in zip(c.layers, academic.weights):
        assert np.allclose(xb.phi, np.tan(w - 2), atol=1e-14)
    assert np.allclose(c.layers[0].phi, flux_for(dev, academic.weights[0]))
