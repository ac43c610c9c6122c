import math
import time

import numpy as np
import pytest

from ffcontract import intervals as iv
from ffcontract.errors import AssumptionViolated, InvalidInputError, StructuralError

from .conftest import EQ47_KNOTS
from .helpers import envelope_system


def test_eq47_knots(eq47):
    s = iv.find_knots(eq47, (0.0, 2 * math.pi), 1.0)
    np.testing.assert_allclose(s.knots, EQ47_KNOTS, atol=1e-9, rtol=0)
    assert s.signs == (iv.POSITIVE, iv.NEGATIVE)
    assert s.M == 2.0
    assert s.min_even_length == pytest.approx(2 * math.pi / 3, abs=2e-9)
    assert s.max_odd_length == pytest.approx(math.pi / 3, abs=2e-9)
    assert s.eps_max_per_even == (2.0, 2.0)


def test_eq47_knots_runtime(eq47):
    start = time.perf_counter()
    iv.find_knots(eq47, (0.0, 2 * math.pi), 1.0)
    assert time.perf_counter() - start < 0.1


def test_eq48_and_eq49_have_no_definite_interval(eq48, eq49):
    with pytest.raises(AssumptionViolated, match="semidefinite") as info:
        iv.find_knots(eq48, (0.0, 10.0), 1.0)
    assert info.value.condition == "R-definite"
    with pytest.raises(AssumptionViolated, match="vanishes"):
        iv.find_knots(eq49, (0.0, 10.0), 1.0)


def test_globally_definite_gives_single_interval():
    sys = envelope_system(lambda t: 2.0 + 0.0 * np.asarray(t, dtype=float))
    s = iv.find_knots(sys, (0.0, 10.0), 1.0)
    assert s.knots == (0.0, 10.0)
    assert s.odd_segments() == []
    assert s.max_odd_length == 0.0


def test_bad_arguments(eq47):
    with pytest.raises(InvalidInputError):
        iv.find_knots(eq47, (1.0, 1.0), 1.0)
    with pytest.raises(InvalidInputError):
        iv.find_knots(eq47, (0.0, 1.0), 0.0)


def test_short_intervals_are_discarded_with_warning():
    # rmin reaches m only in a sliver around t = 5
    five = lambda t: 5.0 + 0.0 * np.asarray(t, dtype=float)
    sliver = lambda t: 1.0 + 1e-3 - np.abs(np.asarray(t, dtype=float) - 5.0)
    with pytest.raises(AssumptionViolated):
        iv.find_knots(envelope_system(sliver, five), (0.0, 10.0), 1.0, grid_step=0.01)
    # keep a proper interval as well, so the sliver only produces a warning
    both = lambda t: np.maximum(sliver(t), 2.0 - np.abs(np.asarray(t, dtype=float) - 1.0))
    s = iv.find_knots(envelope_system(both, five), (0.0, 10.0), 1.0, grid_step=0.01)
    np.testing.assert_allclose(s.knots, [0.0, 2.0], atol=1e-9)
    assert any("discarded" in w for w in s.warnings)


def test_eq47_transition_is_degenerate_at_pi(eq47):
    s = iv.find_knots(eq47, (0.0, 2 * math.pi), 1.0)
    segs = s.odd_segments()
    interior = [g for g in segs if g.edge is None]
    assert len(interior) == 1
    tr = iv.locate_transitions(s, eq47, interior[0].index)
    assert tr.case == 1 and tr.degenerate
    assert tr.T1 == tr.T2 == pytest.approx(math.pi, abs=1e-9)


def test_transition_case_two_when_definiteness_persists():
    sys = envelope_system(lambda t: 1.2 + 0.6 * np.cos(np.asarray(t, dtype=float)))
    s = iv.find_knots(sys, (0.0, 2 * math.pi), 1.0)
    assert s.signs == (iv.POSITIVE, iv.POSITIVE)
    (seg,) = [g for g in s.odd_segments() if g.edge is None]
    tr = iv.locate_transitions(s, sys, seg.index)
    assert tr.case == 2 and tr.T1 is None and tr.T2 is None


def test_transition_of_cosine_envelope():
    m = math.sin(0.2)
    sys = envelope_system(lambda t: np.cos(np.asarray(t, dtype=float)))
    s = iv.find_knots(sys, (0.0, math.pi), m)
    np.testing.assert_allclose(s.knots, [0.0, math.pi / 2 - 0.2, math.pi / 2 + 0.2, math.pi], atol=1e-9)
    tr = iv.locate_transitions(s, sys, s.odd_segments()[0].index)
    assert tr.T1 == pytest.approx(math.pi / 2, abs=1e-9)
    assert tr.T2 == pytest.approx(math.pi / 2, abs=1e-9)


def test_transition_inconsistent_envelopes_raise():
    # labels flip across the odd interval although the envelopes never vanish
    s = iv.IntervalStructure(
        window=(0.0, 10.0), knots=(0.0, 2.0, 8.0, 10.0), signs=(iv.POSITIVE, iv.NEGATIVE), m=1.0, M=2.0,
        min_even_length=2.0, max_odd_length=6.0, eps_max_per_even=(2.0, 2.0), grid_step=0.01,
    )
    sys_no_zero = envelope_system(lambda t: 0.5 + 0.0 * np.asarray(t), lambda t: 0.5 + 0.0 * np.asarray(t))
    with pytest.raises(StructuralError):
        iv.locate_transitions(s, sys_no_zero, 0)


def test_validation_passes_on_eq47(eq47):
    s = iv.find_knots(eq47, (0.0, 2 * math.pi), 1.0)
    rep = iv.validate_assumption(s, eq47)
    assert rep.passed
    definite = [c for c in rep.checks if c.condition == "R-definite"]
    assert len(definite) == 2
    for c in definite:
        assert abs(c.worst_margin) < 1e-9
    assert any("not checked" in n for n in rep.notes)


def test_validation_flags_long_odd_gap():
    sys = envelope_system(lambda t: 2.0 + 0.0 * np.asarray(t, dtype=float))
    s = iv.IntervalStructure(
        window=(0.0, 12.0), knots=(0.0, 1.0, 11.0, 12.0), signs=(iv.POSITIVE, iv.POSITIVE), m=1.0, M=2.0,
        min_even_length=1.0, max_odd_length=math.pi / 3, eps_max_per_even=(2.0, 2.0), grid_step=0.01,
    )
    rep = iv.validate_assumption(s, sys)
    assert not rep.passed
    assert rep.first_failure.condition == "max-odd-length"
    assert rep.first_failure.worst_margin == pytest.approx(10 - math.pi / 3)


def test_validation_vacuous_without_odd_set():
    sys = envelope_system(lambda t: 2.0 + 0.0 * np.asarray(t, dtype=float))
    s = iv.find_knots(sys, (0.0, 10.0), 1.0)
    rep = iv.validate_assumption(s, sys)
    assert rep.passed
    odd = [c for c in rep.checks if c.condition == "max-odd-length"]
    assert odd[0].passed and "vacuous" in odd[0].detail


def test_structure_invariants_enforced():
    with pytest.raises(StructuralError):
        iv.IntervalStructure((0, 1), (0.0, 0.5, 0.4, 1.0), (1, 1), 1.0, 0.0, 0.1, 0.1, (0.0, 0.0), 0.01)
    with pytest.raises(StructuralError):
        iv.IntervalStructure((0, 1), (0.0, 0.5), (1, 1), 1.0, 0.0, 0.1, 0.1, (0.0,), 0.01)


def test_structure_round_trip(eq47):
    s = iv.find_knots(eq47, (0.0, 2 * math.pi), 1.0)
    d = s.to_dict()
    assert d["schemaVersion"] == 1
    assert iv.IntervalStructure.from_dict(d) == s


def test_knots_strictly_increasing_and_alternating(eq47):
    s = iv.find_knots(eq47, (0.0, 20.0), 0.7)
    assert all(b > a for a, b in zip(s.knots, s.knots[1:]))
    assert len(s.knots) == 2 * len(s.signs)
    assert all(x != y for x, y in zip(s.signs, s.signs[1:]))


def test_grid_refinement_keeps_intervals(eq47):
    coarse = iv.find_knots(eq47, (0.0, 20.0), 1.0, grid_step=0.05)
    fine = iv.find_knots(eq47, (0.0, 20.0), 1.0, grid_step=0.025)
    for (a, b) in coarse.even_intervals():
        if b - a > 4 * 0.05:
            assert any(abs(a - c) < 1e-8 and abs(b - d) < 1e-8 for c, d in fine.even_intervals())


def test_periodic_knots_repeat(eq47):
    T = 2 * math.pi
    one = iv.find_knots(eq47, (0.0, T), 1.0)
    two = iv.find_knots(eq47, (0.0, 2 * T), 1.0)
    np.testing.assert_allclose(two.knots[:4], one.knots, atol=1e-9)
    np.testing.assert_allclose(two.knots[4:], np.array(one.knots) + T, atol=1e-9)


def test_bisect_root_either_bracket_order():
    f = lambda t: t - 0.3
    assert iv.bisect_root(f, 0.0, 1.0, 1e-12) == pytest.approx(0.3, abs=1e-12)
    assert iv.bisect_root(f, 1.0, 0.0, 1e-12) == pytest.approx(0.3, abs=1e-12)
