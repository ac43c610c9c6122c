import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffcontract import intervals as iv
from ffcontract import synth
from ffcontract.errors import InvalidInputError, PeriodizationError, StructuralError, SynthesisInfeasible
from ffcontract.synth import FeedforwardInput, GainFunction, InputPiece

from .conftest import C_ALPHA5, C_EQ47, C_ODD_EQ47, EQ47_KNOTS, ZETA_EDGE_EQ47, ZETA_EQ47
from .helpers import envelope_system

P6, P56, P76, P116 = EQ47_KNOTS


# -- smoothstep ---------------------------------------------------------------


def test_smoothstep_endpoint_identities_are_exact():
    assert synth.smoothstep(0.0) == 0.0 and synth.smoothstep(1.0) == 1.0
    for d in (synth.smoothstep_d1, synth.smoothstep_d2):
        assert d(0.0) == 0.0 and d(1.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_smoothstep_is_monotone_and_bounded(a, b):
    lo, hi = min(a, b), max(a, b)
    assert 0.0 <= synth.smoothstep(lo) <= synth.smoothstep(hi) <= 1.0


def test_smoothstep_derivatives_match_finite_differences():
    s = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    np.testing.assert_allclose(synth.smoothstep_d1(s), (synth.smoothstep(s + h) - synth.smoothstep(s - h)) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(synth.smoothstep_d2(s), (synth.smoothstep_d1(s + h) - synth.smoothstep_d1(s - h)) / (2 * h), atol=1e-6)


# -- constants ----------------------------------------------------------------


def test_eq47_constants(eq47_window_synthesis):
    c = eq47_window_synthesis.constants
    assert c.c == pytest.approx(C_EQ47, rel=1e-8)
    assert len(c.c_odd) == 3
    for v in c.c_odd:
        assert v == pytest.approx(C_ODD_EQ47, rel=1e-8)
    k, lam = c.ies_constants()
    assert lam == 0.25
    assert k == pytest.approx(math.exp(2.5 * math.pi / 6), rel=1e-8)


def test_constants_without_odd_intervals():
    sys = envelope_system(lambda t: 2.0 + 0.0 * np.asarray(t, dtype=float))
    s = iv.find_knots(sys, (0.0, 10.0), 1.0)
    c = synth.choose_constants(s, 1.0, 1.1)
    assert c.c == pytest.approx(1.1)
    assert c.c_odd == ()


def test_constants_preconditions(eq47):
    s = iv.find_knots(eq47, (0.0, 2 * math.pi), 1.0)
    with pytest.raises(InvalidInputError):
        synth.choose_constants(s, 0.0, 1.05)
    with pytest.raises(InvalidInputError):
        synth.choose_constants(s, 0.5, 1.0)
    with pytest.raises(SynthesisInfeasible):
        synth.choose_constants(s, 1e4, 1.05)


def test_large_alpha_still_synthesizes(eq47):
    syn = synth.synthesize_periodic(eq47, 1.0, 5.0, 1.05)
    assert syn.constants.c == pytest.approx(C_ALPHA5, rel=1e-8)
    assert all(ch.passed for ch in syn.smoothness.checks)


# -- input --------------------------------------------------------------------


def test_eq47_input_pieces(eq47_window_synthesis):
    u = eq47_window_synthesis.input
    amp = C_ODD_EQ47
    inner = [(p.kind, p.start, p.end, p.v0, p.v1) for p in u.pieces if P6 - 1e-9 <= p.start and p.end <= P116 + 1e-9]
    expected = [
        ("plateau", P6, P56, -amp, -amp),
        ("blend", P56, math.pi, -amp, 0.0),
        ("blend", math.pi, P76, 0.0, amp),
        ("plateau", P76, P116, amp, amp),
    ]
    assert len(inner) == len(expected)
    for got, want in zip(inner, expected):
        assert got[0] == want[0]
        np.testing.assert_allclose(got[1:], want[1:], rtol=1e-8, atol=1e-9)


def test_input_vanishes_to_second_order_at_transition(eq47_window_synthesis):
    u = eq47_window_synthesis.input
    (tr,) = [t for t in eq47_window_synthesis.transitions if t.degenerate and 1.0 < t.T1 < 5.0]
    assert tr.T1 == pytest.approx(math.pi, abs=1e-9)
    for order in (0, 1, 2):
        assert u.derivative(tr.T1, order) == 0.0


def test_case_two_interval_is_constant_nonpositive():
    sys = envelope_system(lambda t: 1.2 + 0.6 * np.cos(np.asarray(t, dtype=float)))
    syn = synth.synthesize(sys, (0.0, 2 * math.pi), 1.0, 0.5)
    (seg,) = [g for g in syn.structure.odd_segments() if g.edge is None]
    ts = np.linspace(seg.start, seg.end, 101)
    us = syn.input.evaluate(ts)
    assert np.all(us == us[0]) and us[0] < 0
    assert us[0] == pytest.approx(-syn.constants.c_odd[seg.index] * syn.structure.m)


def test_missing_transitions_are_structural_errors(eq47):
    s = iv.find_knots(eq47, (0.0, 2 * math.pi), 1.0)
    c = synth.choose_constants(s, 0.5)
    trs = [iv.locate_transitions(s, eq47, g.index) for g in s.odd_segments()]
    with pytest.raises(StructuralError):
        synth.build_input(s, c, trs[:-1])
    broken = [iv.TransitionTimes(t.odd_index, None, None, case=1) if t.case == 1 else t for t in trs]
    with pytest.raises(StructuralError):
        synth.build_input(s, c, broken)


@pytest.mark.parametrize("fixture", ["eq47_window_synthesis", "eq47_periodic_synthesis"])
def test_smoothness_report_passes(fixture, request):
    syn = request.getfixturevalue(fixture)
    checks = {c.name: c for c in syn.smoothness.checks}
    assert checks["C2 junctions"].worst_margin == 0.0
    assert all(c.passed for c in syn.smoothness.checks)
    assert all(c.passed for c in syn.gain_report.checks)


def test_discontinuous_input_is_flagged():
    u = FeedforwardInput([InputPiece(0.0, 1.0, "plateau", 1.0, 1.0), InputPiece(1.0, 2.0, "plateau", 2.0, 2.0)])
    rep = synth.verify_smoothness(u)
    assert not rep.passed
    assert rep.checks[0].location == 1.0


def test_single_piece_is_vacuously_smooth():
    u = FeedforwardInput([InputPiece(0.0, 1.0, "plateau", 3.0, 3.0)])
    rep = synth.verify_smoothness(u)
    assert rep.passed and "vacuous" in rep.checks[0].detail


def test_plateau_bound_holds_on_even_intervals(eq47_window_synthesis):
    syn = eq47_window_synthesis
    c = syn.constants
    eps = syn.structure.effective_eps()
    for i, ((a, b), s) in enumerate(zip(syn.structure.even_intervals(), syn.structure.signs)):
        ts = np.linspace(a, b, 201)
        assert np.all(syn.input.evaluate(ts) * s * syn.structure.m <= -(c.c + eps[i]))


def test_sign_compatibility_on_odd_intervals(eq47, eq47_window_synthesis):
    syn = eq47_window_synthesis
    for seg in syn.structure.odd_segments():
        ts = np.linspace(seg.start, seg.end, 401)
        us = syn.input.evaluate(ts)
        rmin, rmax = eq47.envelope_rmin(ts), eq47.envelope_rmax(ts)
        assert np.all(np.where(us < 0, us * rmin, us * rmax) <= 1e-12)


def test_blend_pieces_stay_between_endpoints(eq47_window_synthesis):
    for p in eq47_window_synthesis.input.pieces:
        if p.kind != "blend":
            continue
        ts = np.linspace(p.start, p.end, 301)
        vals = np.array([p.evaluate(t) for t in ts])
        lo, hi = min(p.v0, p.v1), max(p.v0, p.v1)
        assert np.all((vals >= lo) & (vals <= hi))
        assert np.all(np.diff(vals) * np.sign(p.v1 - p.v0) >= 0)


# -- gain ---------------------------------------------------------------------


def test_eq47_gain_values(eq47_window_synthesis):
    g = eq47_window_synthesis.gain
    # knots carry the 1e-10 root tolerance
    assert g(P56) == pytest.approx(1.0, abs=1e-9)
    assert g(P76) == pytest.approx(ZETA_EQ47, rel=1e-8)
    assert g(P116) == pytest.approx(1.0, abs=1e-9)
    # window opens with a partial odd interval: exponential from 1 at t = 0
    assert g(0.0) == 1.0
    assert g(P6) == pytest.approx(ZETA_EDGE_EQ47, rel=1e-8)


def test_gain_sandwich(eq47_periodic_synthesis):
    syn = eq47_periodic_synthesis
    ts = np.linspace(0.0, 4 * math.pi, 20001)
    g = syn.gain.evaluate(ts)
    lower = math.exp(-syn.constants.rate * syn.constants.L)
    assert g.min() >= lower - 1e-12
    assert g.max() <= 1.0 + 1e-12
    assert syn.gain.lower_bound == pytest.approx(lower)


def test_gain_slope_bounded_by_inverse_min_length(eq47_window_synthesis):
    syn = eq47_window_synthesis
    for p in syn.gain.pieces:
        if p.kind == "affine":
            assert p.slope <= 1.0 / syn.constants.k + 1e-12


# -- periodization --------------------------------------------------------------


def test_periodic_input_values(eq47_periodic_synthesis):
    u = eq47_periodic_synthesis.input
    T = 2 * math.pi
    assert u.period == pytest.approx(T)
    assert u(P6) == pytest.approx(-C_ODD_EQ47, rel=1e-8)
    assert u(P6 + T) == pytest.approx(u(P6), rel=1e-14)
    # the knot itself is only known to the bisection tolerance
    for order in (1, 2):
        assert u.derivative(P6 + 1e-9, order) == 0.0
        assert u.derivative(P6 + T + 1e-9, order) == 0.0
    ts = np.linspace(0, T, 97)
    np.testing.assert_allclose(u.evaluate(ts), u.evaluate(ts + 3 * T), rtol=1e-12, atol=1e-12)
    g = eq47_periodic_synthesis.gain
    np.testing.assert_allclose(g.evaluate(ts), g.evaluate(ts + T), rtol=1e-12)


def test_periodize_constant_input():
    u = FeedforwardInput([InputPiece(0.0, 2.0, "plateau", 1.5, 1.5)])
    g = GainFunction([synth.GainPiece(0.0, 2.0, "affine", anchor=0.0, slope=0.0, offset=1.0)], 1.0, 0.5)
    pu, pg = synth.periodize(u, g, 2.0)
    assert pu(17.3) == 1.5 and pg(17.3) == 1.0


def test_periodize_rejects_seam_inside_blend():
    u = FeedforwardInput([InputPiece(0.0, 1.0, "blend", 0.0, 1.0), InputPiece(1.0, 2.0, "plateau", 1.0, 1.0)])
    g = GainFunction([synth.GainPiece(0.0, 2.0, "affine", anchor=0.0, slope=0.0, offset=1.0)], 1.0, 0.5)
    with pytest.raises(PeriodizationError):
        synth.periodize(u, g, 2.0)
    with pytest.raises(PeriodizationError):
        synth.periodize(FeedforwardInput([InputPiece(1.0, 2.0, "plateau", 1.0, 1.0)]), g, 2.0)


def test_non_periodic_input_rejects_out_of_domain(eq47_window_synthesis):
    with pytest.raises(InvalidInputError):
        eq47_window_synthesis.input(7.0)


# -- serialization ------------------------------------------------------------


def test_json_round_trip(eq47_periodic_synthesis):
    u, g = eq47_periodic_synthesis.input, eq47_periodic_synthesis.gain
    u2 = FeedforwardInput.from_dict(json.loads(json.dumps(u.to_dict())))
    g2 = GainFunction.from_dict(json.loads(json.dumps(g.to_dict())))
    assert u2 == u and g2 == g
    assert u.to_dict()["schemaVersion"] == 1


def test_from_dict_checks_schema(eq47_periodic_synthesis):
    d = eq47_periodic_synthesis.input.to_dict()
    d["schemaVersion"] = 2
    with pytest.raises(Exception):
        FeedforwardInput.from_dict(d)
