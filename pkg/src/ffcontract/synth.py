"""
Feedforward input synthesis.

Given an :class:`~ffcontract.intervals.IntervalStructure`, the input is
assembled from three kinds of polynomial pieces:

* ``plateau`` - constant of large magnitude on every even interval, with
  sign opposite to the label of ``R`` there;
* ``blend`` - quintic smoothstep transition between two values; value,
  first and second derivative match the neighbours exactly;
* ``zero`` - the input vanishes while ``R`` has no definite sign.

The companion :class:`GainFunction` ``g(t)`` scales the quadratic
certificate ``V = g(t) |dx|^2``: it decays exponentially across odd
intervals and recovers linearly to 1 across even ones.
"""
import bisect
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import intervals as iv
from .errors import InvalidInputError, PeriodizationError, StructuralError, SynthesisInfeasible

SCHEMA_VERSION = 1
DEFAULT_MARGIN = 1.05
MAX_EXPONENT = 700.0


def smoothstep(s):
    """
    ``6 s^5 - 15 s^4 + 10 s^3``: 0 at 0, 1 at 1, flat to second order at
    both ends. Clipped to [0, 1] so rounding cannot overshoot near ``s = 1``.
    """
    return np.clip(s * s * s * (s * (6.0 * s - 15.0) + 10.0), 0.0, 1.0)


def smoothstep_d1(s):
    return 30.0 * s * s * (s - 1.0) * (s - 1.0)


def smoothstep_d2(s):
    return 60.0 * s * (2.0 * s - 1.0) * (s - 1.0)


@dataclass(frozen=True)
class SynthesisConstants:
    alpha: float
    c: float
    c_odd: tuple
    margin: float
    m: float
    M: float
    k: float
    L: float

    @property
    def rate(self):
        """Exponential rate ``M + alpha`` of the gain on odd intervals."""
        return self.M + self.alpha

    def ies_constants(self):
        """Overshoot and rate implied by the certificate: ``(e^{(M+a)L/2}, a/2)``."""
        return math.exp(0.5 * self.rate * self.L), 0.5 * self.alpha


def choose_constants(structure, alpha, margin=DEFAULT_MARGIN):
    """
    Pick ``c`` and one amplitude constant per odd segment.

    ``c = margin * (alpha + e^{(M+alpha)L} / k)`` (just ``margin * alpha``
    without odd segments) and each odd segment gets
    ``margin * max((c + eps_left) / m^2, (c + eps_right) / m^2)`` over the
    neighbours that exist inside the window.
    """
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    if not margin > 1:
        raise InvalidInputError("margin must exceed 1")
    odd = structure.odd_segments()
    m, M, k, L = structure.m, structure.M, structure.min_even_length, structure.max_odd_length
    if odd:
        exponent = (M + alpha) * L
        if exponent > MAX_EXPONENT:
            raise SynthesisInfeasible(
                f"e^{{(M+alpha)L}} overflows (exponent {exponent:.1f}); "
                "use a smaller alpha or a structure with shorter odd intervals"
            )
        c = margin * (alpha + math.exp(exponent) / k)
    else:
        c = margin * alpha
    eps = structure.effective_eps()
    c_odd = []
    for seg in odd:
        nb = [eps[i] for i in (seg.left_even, seg.right_even) if i is not None]
        c_odd.append(margin * max((c + e) / (m * m) for e in nb))
    if not all(math.isfinite(v) for v in [c] + c_odd):
        raise SynthesisInfeasible("synthesis constants are not finite")
    return SynthesisConstants(
        alpha=float(alpha), c=float(c), c_odd=tuple(float(v) for v in c_odd),
        margin=float(margin), m=float(m), M=float(M), k=float(k), L=float(L),
    )


# ---------------------------------------------------------------------------
# piecewise functions


@dataclass(frozen=True)
class InputPiece:
    start: float
    end: float
    kind: str  # "plateau", "blend" or "zero"
    v0: float = 0.0
    v1: float = 0.0

    def evaluate(self, t, order=0):
        if self.kind == "zero":
            return 0.0
        if self.kind == "plateau":
            return self.v0 if order == 0 else 0.0
        h = self.end - self.start
        s = (t - self.start) / h
        if order == 0:
            w = smoothstep(s)
            return self.v0 * (1.0 - w) + self.v1 * w
        if order == 1:
            return (self.v1 - self.v0) * smoothstep_d1(s) / h
        return (self.v1 - self.v0) * smoothstep_d2(s) / (h * h)


class _Piecewise:
    """Shared lookup and wrap-around logic for piece lists."""

    pieces: tuple
    period: Optional[float]

    def _init_lookup(self):
        if not self.pieces:
            raise InvalidInputError("at least one piece is required")
        for p, q in zip(self.pieces, self.pieces[1:]):
            if abs(p.end - q.start) > 1e-12 * max(1.0, abs(p.end)):
                raise StructuralError(f"pieces are not contiguous at t={p.end}")
        self._starts = [p.start for p in self.pieces]

    @property
    def domain(self):
        return self.pieces[0].start, self.pieces[-1].end

    def _wrap(self, t):
        t0, t1 = self.domain
        if self.period is not None:
            if t0 <= t <= t1:
                return t
            return t0 + (t - t0) % self.period
        span = t1 - t0
        if t < t0 - 1e-9 * max(1.0, span) or t > t1 + 1e-9 * max(1.0, span):
            raise InvalidInputError(f"t={t} is outside the domain [{t0}, {t1}]")
        return min(max(t, t0), t1)

    def _piece(self, t):
        i = bisect.bisect_right(self._starts, t) - 1
        return self.pieces[min(max(i, 0), len(self.pieces) - 1)]

    def breakpoints(self, t0, t1):
        """Piece junctions inside ``(t0, t1)``, unrolled over periods if periodic."""
        junctions = [p.start for p in self.pieces[1:]]
        if self.period is None:
            return [s for s in junctions if t0 < s < t1]
        d0 = self.domain[0]
        out = []
        base = [d0] + junctions
        n0 = math.floor((t0 - d0) / self.period) - 1
        n1 = math.ceil((t1 - d0) / self.period) + 1
        for n in range(n0, n1 + 1):
            for s in base:
                v = s + n * self.period
                if t0 < v < t1:
                    out.append(v)
        return sorted(set(out))


class FeedforwardInput(_Piecewise):
    """Piecewise C^2 input ``u(t)``, optionally repeated with a period."""

    def __init__(self, pieces, period=None):
        self.pieces = tuple(pieces)
        self.period = None if period is None else float(period)
        self._init_lookup()

    def __call__(self, t):
        t = self._wrap(t)
        return self._piece(t).evaluate(t, 0)

    def derivative(self, t, order=1):
        t = self._wrap(t)
        return self._piece(t).evaluate(t, order)

    def evaluate(self, ts, order=0):
        return np.array([self._piece(self._wrap(t)).evaluate(self._wrap(t), order) for t in np.ravel(ts)])

    def __eq__(self, other):
        return isinstance(other, FeedforwardInput) and self.pieces == other.pieces and self.period == other.period

    def __repr__(self):
        return f"FeedforwardInput({len(self.pieces)} pieces, domain={self.domain}, period={self.period})"

    def to_dict(self):
        return {
            "schemaVersion": SCHEMA_VERSION,
            "type": "feedforwardInput",
            "period": self.period,
            "pieces": [asdict(p) for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, d):
        _check_schema(d, "feedforwardInput")
        return cls([InputPiece(**p) for p in d["pieces"]], period=d.get("period"))


@dataclass(frozen=True)
class GainPiece:
    start: float
    end: float
    kind: str  # "exp" or "affine"
    anchor: float
    rate: float = 0.0  # exp: e^{-rate (t - anchor)}
    slope: float = 0.0  # affine: slope (t - anchor) + offset
    offset: float = 1.0

    def evaluate(self, t):
        if self.kind == "exp":
            return math.exp(-self.rate * (t - self.anchor))
        return self.slope * (t - self.anchor) + self.offset


class GainFunction(_Piecewise):
    """Continuous piecewise exponential / affine gain of the certificate."""

    def __init__(self, pieces, rate, lower_bound, period=None):
        self.pieces = tuple(pieces)
        self.rate = float(rate)
        self.lower_bound = float(lower_bound)
        self.period = None if period is None else float(period)
        self._init_lookup()

    def __call__(self, t):
        t = self._wrap(t)
        return self._piece(t).evaluate(t)

    def evaluate(self, ts):
        return np.array([self(t) for t in np.ravel(ts)])

    def __eq__(self, other):
        return (
            isinstance(other, GainFunction)
            and self.pieces == other.pieces
            and self.rate == other.rate
            and self.lower_bound == other.lower_bound
            and self.period == other.period
        )

    def __repr__(self):
        return f"GainFunction({len(self.pieces)} pieces, domain={self.domain}, period={self.period})"

    def to_dict(self):
        return {
            "schemaVersion": SCHEMA_VERSION,
            "type": "gainFunction",
            "rate": self.rate,
            "lowerBound": self.lower_bound,
            "period": self.period,
            "pieces": [asdict(p) for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, d):
        _check_schema(d, "gainFunction")
        return cls(
            [GainPiece(**p) for p in d["pieces"]],
            rate=d["rate"],
            lower_bound=d["lowerBound"],
            period=d.get("period"),
        )


def _check_schema(d, kind):
    if d.get("schemaVersion") != SCHEMA_VERSION:
        raise InvalidInputError(f"unsupported schemaVersion {d.get('schemaVersion')!r}")
    if d.get("type") != kind:
        raise InvalidInputError(f"expected a {kind} document, got {d.get('type')!r}")


# ---------------------------------------------------------------------------
# construction


def plateau_values(structure, constants):
    """Signed plateau value on each even interval."""
    odd = structure.odd_segments()
    m = structure.m
    eps = structure.effective_eps()
    amps = []
    for i in range(structure.n_even):
        touching = {i}
        if structure.cyclic and i in (0, structure.n_even - 1):
            # both window ends belong to the same interval
            touching = {0, structure.n_even - 1}
        adj = [constants.c_odd[s.index] for s in odd if {s.left_even, s.right_even} & touching]
        if not adj:
            adj = [constants.margin * (constants.c + eps[i]) / (m * m)]
        amps.append(max(adj) * m)
    return [-s * a for s, a in zip(structure.signs, amps)]


def build_input(structure, constants, transitions):
    """
    Assemble the C^2 input over the structure's window.

    ``transitions`` holds one :class:`~ffcontract.intervals.TransitionTimes`
    per odd segment (same order as ``structure.odd_segments()``).
    """
    odd = structure.odd_segments()
    if len(transitions) != len(odd):
        raise StructuralError(f"need {len(odd)} transition records, got {len(transitions)}")
    if len(constants.c_odd) != len(odd):
        raise StructuralError("constants do not match the structure")
    values = plateau_values(structure, constants)
    pieces = []
    for i, (a, b) in enumerate(structure.even_intervals()):
        pieces.append(InputPiece(a, b, "plateau", values[i], values[i]))
    for seg, tr in zip(odd, transitions):
        if tr.odd_index != seg.index:
            raise StructuralError("transition records are out of order")
        left = None if seg.left_even is None else values[seg.left_even]
        right = None if seg.right_even is None else values[seg.right_even]
        a, b = seg.start, seg.end
        if tr.case == 2:
            if left is None:
                pieces.append(InputPiece(a, b, "plateau", right, right))
            elif right is None or left == right:
                pieces.append(InputPiece(a, b, "plateau", left, left))
            else:
                if left * right <= 0:
                    raise StructuralError("sign-definite odd interval between opposite plateaus")
                pieces.append(InputPiece(a, b, "blend", left, right))
            continue
        if tr.T1 is None or tr.T2 is None:
            raise StructuralError(f"transition times missing for odd segment {seg.index}")
        T1, T2 = tr.T1, tr.T2
        if left is not None:
            if not T1 > a:
                raise StructuralError(f"no room for the left blend in odd segment {seg.index}")
            pieces.append(InputPiece(a, T1, "blend", left, 0.0))
        elif T1 > a:
            pieces.append(InputPiece(a, T1, "zero"))
        if T2 > T1:
            pieces.append(InputPiece(T1, T2, "zero"))
        if right is not None:
            if not b > T2:
                raise StructuralError(f"no room for the right blend in odd segment {seg.index}")
            pieces.append(InputPiece(T2, b, "blend", 0.0, right))
        elif b > T2:
            pieces.append(InputPiece(T2, b, "zero"))
    pieces.sort(key=lambda p: p.start)
    return FeedforwardInput(pieces)


def build_gain(structure, constants):
    """Gain ``g(t)`` of the certificate over the structure's window."""
    rate = constants.rate
    t0, t1 = structure.window
    odd = structure.odd_segments()
    evens = structure.even_intervals()
    lengths = structure.even_lengths()
    pieces = []
    for seg in odd:
        pieces.append(GainPiece(seg.start, seg.end, "exp", anchor=seg.start, rate=rate))
    for i, (a, b) in enumerate(evens):
        prev = [s for s in odd if s.right_even == i]
        if prev:
            zeta = math.exp(-rate * prev[0].length)
            xi = (1.0 - zeta) / lengths[i]
            pieces.append(GainPiece(a, b, "affine", anchor=a, slope=xi, offset=zeta))
        elif structure.cyclic and i == 0 and len(evens) > 1:
            last = [s for s in odd if s.right_even == len(evens) - 1]
            zeta = math.exp(-rate * last[0].length) if last else 1.0
            xi = (1.0 - zeta) / lengths[0]
            anchor = evens[-1][0] - (t1 - t0)
            pieces.append(GainPiece(a, b, "affine", anchor=anchor, slope=xi, offset=zeta))
        else:
            pieces.append(GainPiece(a, b, "affine", anchor=a, slope=0.0, offset=1.0))
    pieces.sort(key=lambda p: p.start)
    lower = math.exp(-rate * constants.L)
    return GainFunction(pieces, rate=rate, lower_bound=lower)


def periodize(u, gain, T, tol=1e-12):
    """
    Repeat ``u`` and ``gain`` with period ``T``.

    Both domains must span exactly one period, ``u`` must start and end on
    constant pieces with equal values (so the seam is C^2), and the gain
    must be continuous across the seam.
    """
    for name, f in (("input", u), ("gain", gain)):
        a, b = f.domain
        if abs((b - a) - T) > 1e-9 * max(1.0, T):
            raise PeriodizationError(f"{name} domain [{a}, {b}] does not span one period {T}")
    first, last = u.pieces[0], u.pieces[-1]
    if first.kind == "blend" or last.kind == "blend":
        raise PeriodizationError("the seam falls inside a blend; re-align the window to start inside a plateau")
    a, b = u.domain
    for order in (0, 1, 2):
        d = abs(first.evaluate(a, order) - last.evaluate(b, order))
        if d > tol:
            raise PeriodizationError(f"input seam mismatch {d:.3e} in derivative order {order}")
    ga, gb = gain.domain
    d = abs(gain.pieces[0].evaluate(ga) - gain.pieces[-1].evaluate(gb))
    if d > tol:
        raise PeriodizationError(f"gain seam mismatch {d:.3e}; re-align the window")
    return FeedforwardInput(u.pieces, period=T), GainFunction(gain.pieces, gain.rate, gain.lower_bound, period=T)


# ---------------------------------------------------------------------------
# checks


def verify_smoothness(u, junction_tol=1e-12, structure=None, constants=None, sys=None, grid_points=20001):
    """
    Junction continuity of ``u`` up to second order, plus pointwise sign and
    magnitude constraints when ``structure``/``constants``/``sys`` are given.
    """
    report = iv.ValidationReport()
    worst, where = 0.0, None
    pairs = list(zip(u.pieces, u.pieces[1:]))
    if u.period is not None:
        pairs.append((u.pieces[-1], u.pieces[0]))
    for p, q in pairs:
        for order in (0, 1, 2):
            d = abs(p.evaluate(p.end, order) - q.evaluate(q.start, order))
            if where is None or d > worst:
                worst, where = d, p.end
    report.checks.append(
        iv.CheckEntry(
            name="C2 junctions",
            passed=bool(worst <= junction_tol),
            worst_margin=float(worst),
            location=None if where is None else float(where),
            condition="smoothness",
            detail=f"{len(pairs)} junctions" if pairs else "vacuous: single piece",
        )
    )
    if structure is None or constants is None:
        return report
    t0, t1 = structure.window
    ts = np.linspace(t0, t1, grid_points)
    us = u.evaluate(ts)
    eps = structure.effective_eps()
    worst, where = -np.inf, None
    for i, ((a, b), s) in enumerate(zip(structure.even_intervals(), structure.signs)):
        sel = (ts >= a) & (ts <= b)
        pts = np.concatenate([ts[sel], [a, b]])
        vals = u.evaluate(pts) * s * structure.m + constants.c + eps[i]
        j = int(np.argmax(vals))
        if vals[j] > worst:
            worst, where = float(vals[j]), float(pts[j])
    report.checks.append(
        iv.CheckEntry("plateau magnitude", bool(worst <= 0.0), worst, where, "plateau-bound")
    )
    if sys is not None:
        mask = np.zeros(ts.shape, dtype=bool)
        for seg in structure.odd_segments():
            mask |= (ts >= seg.start) & (ts <= seg.end)
        if mask.any():
            tt, uu = ts[mask], us[mask]
            rmin = iv.on_grid(sys.envelope_rmin, tt)
            rmax = iv.on_grid(sys.envelope_rmax, tt)
            viol = np.where(uu < 0, uu * rmin, np.where(uu > 0, uu * rmax, 0.0))
            j = int(np.argmax(viol))
            report.checks.append(
                iv.CheckEntry("u R <= 0 on odd intervals", bool(viol[j] <= junction_tol),
                              float(viol[j]), float(tt[j]), "sign-compatibility")
            )
    return report


def verify_gain(gain, structure, constants, grid_points=20001, tol=1e-9):
    """
    Sandwich bounds and discrete upper-Dini decrease conditions of ``gain``.

    On odd intervals consecutive samples must satisfy
    ``g(t2) / g(t1) <= e^{-(M+alpha)(t2-t1)} (1 + tol)``; on even ones the
    difference quotient must stay below ``1/k + tol``.
    """
    report = iv.ValidationReport()
    t0, t1 = structure.window
    ts = np.linspace(t0, t1, grid_points)
    gs = gain.evaluate(ts)
    lo = math.exp(-constants.rate * constants.L)
    report.checks.append(iv.CheckEntry(
        "gain lower bound", bool(gs.min() >= lo - 1e-12), float(lo - gs.min()),
        float(ts[int(np.argmin(gs))]), "sandwich"))
    report.checks.append(iv.CheckEntry(
        "gain upper bound", bool(gs.max() <= 1.0 + 1e-12), float(gs.max() - 1.0),
        float(ts[int(np.argmax(gs))]), "sandwich"))
    worst_odd, worst_even = -np.inf, -np.inf
    for seg in structure.odd_segments():
        pts = np.concatenate([[seg.start], ts[(ts > seg.start) & (ts < seg.end)], [seg.end]])
        g = gain.evaluate(pts)
        excess = np.log(g[1:] / g[:-1]) + constants.rate * np.diff(pts) - math.log1p(tol)
        worst_odd = max(worst_odd, float(excess.max()))
    for a, b in structure.even_intervals():
        pts = np.concatenate([[a], ts[(ts > a) & (ts < b)], [b]])
        g = gain.evaluate(pts)
        excess = np.diff(g) / np.diff(pts) - 1.0 / constants.k - tol
        worst_even = max(worst_even, float(excess.max()))
    report.checks.append(iv.CheckEntry("gain decay on odd intervals", bool(worst_odd <= 0), worst_odd, None, "dini-odd"))
    report.checks.append(iv.CheckEntry("gain slope on even intervals", bool(worst_even <= 0), worst_even, None, "dini-even"))
    return report


# ---------------------------------------------------------------------------
# pipelines


@dataclass
class Synthesis:
    structure: object
    constants: SynthesisConstants
    transitions: list
    input: FeedforwardInput
    gain: GainFunction
    smoothness: object = None
    gain_report: object = None
    notes: list = field(default_factory=list)


def synthesize(sys, window, m, alpha, margin=DEFAULT_MARGIN, grid_step=None, root_tol=iv.DEFAULT_ROOT_TOL):
    """Run the whole construction over a finite window."""
    structure = iv.find_knots(sys, window, m, grid_step=grid_step, root_tol=root_tol)
    return _synthesize_structure(sys, structure, alpha, margin, root_tol)


def _synthesize_structure(sys, structure, alpha, margin, root_tol):
    constants = choose_constants(structure, alpha, margin)
    transitions = [iv.locate_transitions(structure, sys, s.index, root_tol) for s in structure.odd_segments()]
    u = build_input(structure, constants, transitions)
    gain = build_gain(structure, constants)
    out = Synthesis(structure, constants, transitions, u, gain)
    out.smoothness = verify_smoothness(u, structure=structure, constants=constants, sys=sys)
    out.gain_report = verify_gain(gain, structure, constants)
    return out


def synthesize_periodic(sys, m, alpha, margin=DEFAULT_MARGIN, period=None, root_tol=iv.DEFAULT_ROOT_TOL):
    """
    Periodic input for a periodic system.

    The window is shifted so that it starts in the middle of the first
    definite interval found over ``[0, T]``; the structure is then built
    cyclically and the result periodized.
    """
    T = sys.period if period is None else float(period)
    if T is None:
        raise InvalidInputError("system has no period")
    probe = iv.find_knots(sys, (0.0, T), m, root_tol=root_tol)
    a, b = probe.even_intervals()[0]
    shift = 0.5 * (a + b)
    structure = iv.find_knots(sys, (shift, shift + T), m, root_tol=root_tol, cyclic=True)
    out = _synthesize_structure(sys, structure, alpha, margin, root_tol)
    out.input, out.gain = periodize(out.input, out.gain, T)
    out.smoothness = verify_smoothness(out.input, structure=structure, constants=out.constants, sys=sys)
    out.notes.append(f"periodic with T={T:.17g}; window shifted to start at t={shift:.17g}")
    return out
