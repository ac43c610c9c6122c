"""
Detection of the alternating interval structure needed for synthesis.

Over an analysis window the time axis is split into *even* intervals, on
which ``R(t, x)`` is uniformly definite with margin ``m`` (``R >= m I`` or
``R <= -m I`` for every state), and the *odd* gaps between them. Everything
is computed from the system's envelope functions on a uniform grid, with
bisection refinement of every crossing.
"""
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import AssumptionViolated, EvaluationError, InvalidInputError, StructuralError

DEFAULT_GRID_INTERVALS = 4096
DEFAULT_ROOT_TOL = 1e-10
ENVELOPE_TOL = 1e-8

POSITIVE = 1
NEGATIVE = -1


@dataclass(frozen=True)
class OddSegment:
    """An odd interval, or a partial one cut by the window edge."""

    index: int
    start: float
    end: float
    left: Optional[int]  # label of the even interval on the left, None at the window start
    right: Optional[int]
    left_even: Optional[int] = None
    right_even: Optional[int] = None

    @property
    def length(self):
        return self.end - self.start

    @property
    def edge(self):
        if self.left is None:
            return "lead"
        if self.right is None:
            return "trail"
        return None


@dataclass(frozen=True)
class IntervalStructure:
    window: tuple
    knots: tuple
    signs: tuple
    m: float
    M: float
    min_even_length: float
    max_odd_length: float
    eps_max_per_even: tuple
    grid_step: float
    cyclic: bool = False
    heuristic: bool = False
    warnings: tuple = ()

    def __post_init__(self):
        if len(self.knots) != 2 * len(self.signs):
            raise StructuralError("knots must come in (start, end) pairs, one per sign label")
        if any(b <= a for a, b in zip(self.knots, self.knots[1:])):
            raise StructuralError("knots must be strictly increasing")
        if len(self.eps_max_per_even) != len(self.signs):
            raise StructuralError("one epsilon maximum per even interval is required")

    @property
    def n_even(self):
        return len(self.signs)

    def even_intervals(self):
        return [(self.knots[2 * i], self.knots[2 * i + 1]) for i in range(self.n_even)]

    def even_lengths(self):
        lengths = [b - a for a, b in self.even_intervals()]
        if self.cyclic and len(lengths) > 1:
            merged = lengths[0] + lengths[-1]
            lengths = [merged] + lengths[1:-1] + [merged]
        return lengths

    def odd_segments(self):
        """Odd intervals in time order, including partial ones at the window edges."""
        t0, t1 = self.window
        segs = []
        if self.knots[0] > t0:
            segs.append((t0, self.knots[0], None, self.signs[0], None, 0))
        for i in range(self.n_even - 1):
            segs.append(
                (self.knots[2 * i + 1], self.knots[2 * i + 2], self.signs[i], self.signs[i + 1], i, i + 1)
            )
        if self.knots[-1] < t1:
            last = self.n_even - 1
            segs.append((self.knots[-1], t1, self.signs[-1], None, last, None))
        return [
            OddSegment(j, a, b, left, right, le, re)
            for j, (a, b, left, right, le, re) in enumerate(segs)
        ]

    def effective_eps(self):
        """Per-even epsilon maxima; in cyclic mode the two window halves share one value."""
        eps = list(self.eps_max_per_even)
        if self.cyclic and len(eps) > 1:
            merged = max(eps[0], eps[-1])
            eps[0] = eps[-1] = merged
        return eps

    def label_at(self, t):
        """Sign label of the even interval containing ``t``, or 0."""
        for (a, b), s in zip(self.even_intervals(), self.signs):
            if a <= t <= b:
                return s
        return 0

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        d["knots"] = list(self.knots)
        d["signs"] = list(self.signs)
        d["eps_max_per_even"] = list(self.eps_max_per_even)
        d["warnings"] = list(self.warnings)
        d["schemaVersion"] = 1
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("schemaVersion", None)
        d["window"] = tuple(d["window"])
        d["knots"] = tuple(d["knots"])
        d["signs"] = tuple(int(s) for s in d["signs"])
        d["eps_max_per_even"] = tuple(d["eps_max_per_even"])
        d["warnings"] = tuple(d.get("warnings", ()))
        return cls(**d)


@dataclass(frozen=True)
class TransitionTimes:
    odd_index: int
    T1: Optional[float]
    T2: Optional[float]
    case: int  # 1: R loses definiteness inside the gap; 2: sign-definite throughout
    degenerate: bool = False


@dataclass
class CheckEntry:
    name: str
    passed: bool
    worst_margin: float
    location: Optional[float] = None
    condition: str = ""
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self):
        for c in self.checks:
            if not c.passed:
                return c
        return None

    def to_dict(self):
        return {
            "schemaVersion": 1,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "notes": list(self.notes),
        }


def on_grid(fn, ts):
    """Evaluate a scalar function of time on an array, vectorized when possible."""
    try:
        v = np.asarray(fn(ts), dtype=float)
        if v.shape == ts.shape:
            out = v
        elif v.ndim == 0:
            out = np.full(ts.shape, float(v))
        else:
            raise ValueError
    except (TypeError, ValueError):
        out = np.array([float(fn(float(s))) for s in ts])
    if not np.all(np.isfinite(out)):
        bad = ts[~np.isfinite(out)][0]
        raise EvaluationError(f"envelope is not finite at t={bad}", t=float(bad))
    return out


def bisect_root(fn, lo, hi, tol):
    """
    Locate the sign change of ``fn`` between ``lo`` and ``hi``.

    ``fn(lo)`` and ``fn(hi)`` must lie on opposite sides of zero, where
    zero itself counts with the ``hi`` side. The bracket may be given in
    either order.
    """
    flo = float(fn(lo)) >= 0.0
    if (float(fn(hi)) >= 0.0) == flo:
        raise InvalidInputError("bisection bracket does not contain a sign change")
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        if (float(fn(mid)) >= 0.0) == flo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _runs(mask):
    """Inclusive index ranges of consecutive True entries."""
    runs = []
    i, n = 0, len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def _grid(window, grid_step):
    t0, t1 = window
    n = max(2, int(math.ceil((t1 - t0) / grid_step - 1e-9)))
    return np.linspace(t0, t1, n + 1)


def _max_over(fn, ts, a, b):
    inside = ts[(ts >= a) & (ts <= b)]
    pts = np.concatenate([inside, [a, b]])
    return float(np.max(on_grid(fn, pts)))


def _definiteness_diagnosis(rmin, rmax):
    lo, hi = float(np.min(rmin)), float(np.max(rmax))
    if max(abs(lo), abs(hi)) <= ENVELOPE_TOL:
        return "R vanishes identically: the input does not enter the Jacobian"
    if lo >= -ENVELOPE_TOL:
        return f"R is only positive semidefinite (smallest eigenvalue reaches {lo:.3g})"
    if hi <= ENVELOPE_TOL:
        return f"R is only negative semidefinite (largest eigenvalue reaches {hi:.3g})"
    return "R is indefinite or not definite enough anywhere in the window"


def find_knots(sys, window, m, grid_step=None, root_tol=DEFAULT_ROOT_TOL, cyclic=False):
    """
    Build the interval structure of ``sys`` over ``window`` for margin ``m``.

    Parameters
    ----------
    sys : SystemModel
    window : (float, float)
        Analysis horizon.
    m : float
        Required definiteness margin of ``R`` on even intervals.
    grid_step : float, optional
        Scan resolution; defaults to the window length / 4096.
    root_tol : float
        Bisection tolerance for every knot.
    cyclic : bool
        Treat the window as one period whose two ends lie inside the same
        even interval (used for periodic synthesis).

    Raises
    ------
    AssumptionViolated
        When no even interval exists inside the window.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0:
        raise InvalidInputError("window must have positive length")
    if not m > 0:
        raise InvalidInputError("m must be positive")
    if grid_step is None:
        grid_step = (t1 - t0) / DEFAULT_GRID_INTERVALS
    if not grid_step > 0:
        raise InvalidInputError("grid step must be positive")
    ts = _grid((t0, t1), grid_step)
    step = ts[1] - ts[0]

    rmin = on_grid(sys.envelope_rmin, ts)
    rmax = on_grid(sys.envelope_rmax, ts)
    pos_fn = lambda t: sys.envelope_rmin(t) - m
    neg_fn = lambda t: -m - sys.envelope_rmax(t)

    intervals = []
    warnings = []
    for label, values, fn in ((POSITIVE, rmin - m, pos_fn), (NEGATIVE, -m - rmax, neg_fn)):
        for i, j in _runs(values >= 0.0):
            a = t0 if i == 0 else bisect_root(fn, ts[i - 1], ts[i], root_tol)
            b = t1 if j == len(ts) - 1 else bisect_root(fn, ts[j + 1], ts[j], root_tol)
            if i == 0:
                a = t0
            if j == len(ts) - 1:
                b = t1
            if b - a < 2 * step:
                warnings.append(f"discarded short interval [{a:.6g}, {b:.6g}] (label {label:+d})")
                continue
            intervals.append((a, b, label))
    if not intervals:
        raise AssumptionViolated(
            f"no interval with R >= {m} I or R <= -{m} I found in [{t0}, {t1}]; "
            + _definiteness_diagnosis(rmin, rmax),
            condition="R-definite",
        )
    intervals.sort()
    knots = tuple(float(v) for a, b, _ in intervals for v in (a, b))
    signs = tuple(s for _, _, s in intervals)

    if cyclic:
        if knots[0] != t0 or knots[-1] != t1 or signs[0] != signs[-1] or len(signs) < 2:
            raise StructuralError(
                "cyclic structure needs both window ends inside one even interval; "
                "shift the window so it starts inside a definite interval"
            )

    eps = tuple(max(0.0, _max_over(sys.envelope_amax, ts, a, b)) for a, b, _ in intervals)

    proto = IntervalStructure(
        window=(t0, t1),
        knots=knots,
        signs=signs,
        m=float(m),
        M=0.0,
        min_even_length=1.0,
        max_odd_length=0.0,
        eps_max_per_even=eps,
        grid_step=float(step),
        cyclic=cyclic,
        heuristic=bool(getattr(sys, "heuristic_envelopes", False)),
        warnings=tuple(warnings),
    )
    odd = proto.odd_segments()
    M = max([_max_over(sys.envelope_amax, ts, s.start, s.end) for s in odd], default=0.0)
    L = max([s.length for s in odd], default=0.0)
    k = min(proto.even_lengths())
    return IntervalStructure(
        window=(t0, t1),
        knots=knots,
        signs=signs,
        m=float(m),
        M=max(0.0, M),
        min_even_length=float(k),
        max_odd_length=float(L),
        eps_max_per_even=eps,
        grid_step=float(step),
        cyclic=cyclic,
        heuristic=proto.heuristic,
        warnings=tuple(warnings),
    )


def _lost_fn(sys, label):
    """Non-negative once R is no longer definite in the direction of ``label``."""
    if label == POSITIVE:
        return lambda t: -sys.envelope_rmin(t)
    return sys.envelope_rmax


def locate_transitions(structure, sys, odd_index, root_tol=DEFAULT_ROOT_TOL):
    """
    Transition times inside one odd segment.

    ``T1`` is the first time after the left even interval where ``R`` stops
    being definite in that interval's direction, ``T2`` the last such time
    before the right even interval. At a window edge the missing side is
    replaced by the segment end. Case 2 (no loss of definiteness) is
    returned with ``T1 = T2 = None``.
    """
    segs = structure.odd_segments()
    if not 0 <= odd_index < len(segs):
        raise InvalidInputError(f"odd index {odd_index} out of range (have {len(segs)})")
    seg = segs[odd_index]
    a, b = seg.start, seg.end
    n = max(64, int(math.ceil((b - a) / structure.grid_step)))
    ts = np.linspace(a, b, n + 1)

    T1 = T2 = None
    if seg.left is not None:
        lost = _lost_fn(sys, seg.left)
        hits = np.nonzero(on_grid(lost, ts) >= 0.0)[0]
        if len(hits):
            i = hits[0]
            T1 = a if i == 0 else bisect_root(lost, ts[i - 1], ts[i], root_tol)
    if seg.right is not None:
        lost = _lost_fn(sys, seg.right)
        hits = np.nonzero(on_grid(lost, ts) >= 0.0)[0]
        if len(hits):
            j = hits[-1]
            T2 = b if j == len(ts) - 1 else bisect_root(lost, ts[j + 1], ts[j], root_tol)

    if seg.left is None:
        if T2 is None:
            return TransitionTimes(odd_index, None, None, case=2)
        T2 = a if T2 - a <= 2 * root_tol else T2
        return TransitionTimes(odd_index, float(a), float(T2), case=1, degenerate=T2 == a)
    if seg.right is None:
        if T1 is None:
            return TransitionTimes(odd_index, None, None, case=2)
        T1 = b if b - T1 <= 2 * root_tol else T1
        return TransitionTimes(odd_index, float(T1), float(b), case=1, degenerate=T1 == b)
    if T1 is None and T2 is None:
        if seg.left != seg.right:
            raise StructuralError(
                f"odd interval [{a:.6g}, {b:.6g}] joins opposite labels without R crossing zero; "
                "the envelopes are inconsistent"
            )
        return TransitionTimes(odd_index, None, None, case=2)
    elif T1 is None or T2 is None:
        raise StructuralError(f"only one transition found in odd interval [{a:.6g}, {b:.6g}]")

    degenerate = False
    if abs(T2 - T1) <= 2 * root_tol:
        T1 = T2 = 0.5 * (T1 + T2)
        degenerate = True
    elif T2 < T1:
        raise StructuralError(f"transition times out of order in [{a:.6g}, {b:.6g}]")
    return TransitionTimes(odd_index, float(T1), float(T2), case=1, degenerate=degenerate)


def validate_assumption(structure, sys=None, refine=10, tol=ENVELOPE_TOL):
    """
    Re-check every property of ``structure`` on a finer grid.

    Envelope checks need ``sys``; without it only the length conditions are
    checked. Margins are violations: a check passes when its worst margin
    is at most ``tol`` (envelope checks) or 0 (length checks).
    """
    report = ValidationReport()
    t0, t1 = structure.window
    report.notes.append(
        f"finite window [{t0:.6g}, {t1:.6g}]: unboundedness of the knot sequence is not checked"
    )
    if structure.heuristic:
        report.notes.append("envelopes are sampled estimates (heuristic), not certified bounds")

    ts = _grid(structure.window, structure.grid_step / refine)
    if sys is not None:
        eps = structure.effective_eps()
        for i, ((a, b), s) in enumerate(zip(structure.even_intervals(), structure.signs)):
            sel = (ts >= a) & (ts <= b)
            pts = np.concatenate([ts[sel], [a, b]])
            lo = on_grid(sys.envelope_rmin, pts)
            hi = on_grid(sys.envelope_rmax, pts)
            viol = structure.m - lo if s == POSITIVE else hi + structure.m
            j = int(np.argmax(viol))
            report.checks.append(
                CheckEntry(
                    name=f"R definite on even interval {i}",
                    passed=bool(viol[j] <= tol),
                    worst_margin=float(viol[j]),
                    location=float(pts[j]),
                    condition="R-definite",
                )
            )
            am = on_grid(sys.envelope_amax, pts)
            j = int(np.argmax(am))
            report.checks.append(
                CheckEntry(
                    name=f"A bounded by eps max on even interval {i}",
                    passed=bool(am[j] - eps[i] <= tol),
                    worst_margin=float(am[j] - eps[i]),
                    location=float(pts[j]),
                    condition="A-bound-even",
                )
            )
        odd = structure.odd_segments()
        if odd:
            mask = np.zeros(ts.shape, dtype=bool)
            for sgm in odd:
                mask |= (ts >= sgm.start) & (ts <= sgm.end)
            pts = np.concatenate([ts[mask]] + [[sgm.start, sgm.end] for sgm in odd])
            am = on_grid(sys.envelope_amax, pts)
            j = int(np.argmax(am))
            report.checks.append(
                CheckEntry(
                    name="A bounded by M on odd intervals",
                    passed=bool(am[j] - structure.M <= tol),
                    worst_margin=float(am[j] - structure.M),
                    location=float(pts[j]),
                    condition="A-bound-odd",
                )
            )
        else:
            report.checks.append(
                CheckEntry("A bounded by M on odd intervals", True, 0.0, None, "A-bound-odd", "vacuous: no odd interval")
            )

    lengths = structure.even_lengths()
    j = int(np.argmin(lengths))
    report.checks.append(
        CheckEntry(
            name="minimum even length",
            passed=bool(lengths[j] >= structure.min_even_length),
            worst_margin=float(structure.min_even_length - lengths[j]),
            location=float(structure.knots[2 * j]),
            condition="min-even-length",
        )
    )
    odd = structure.odd_segments()
    if odd:
        longest = max(odd, key=lambda s: s.length)
        report.checks.append(
            CheckEntry(
                name="maximum odd length",
                passed=bool(longest.length <= structure.max_odd_length),
                worst_margin=float(longest.length - structure.max_odd_length),
                location=float(longest.start),
                condition="max-odd-length",
            )
        )
    else:
        report.checks.append(
            CheckEntry("maximum odd length", True, 0.0, None, "max-odd-length", "vacuous: no odd interval")
        )
    return report
