"""
Empirical certification: decay certificate, contraction and incremental
exponential stability bounds, decay-rate fits and convergence to a
periodic orbit.

Bounds of the form ``d(t) <= k exp(-lam (t - t0)) d(t0)`` are checked
for every sample used as ``t0`` at once: in log space the worst anchor for
a given ``t`` is the running minimum of ``log d + lam t``, so each check
is linear in the number of samples.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import sim
from .errors import InsufficientData, InvalidInputError

DEFAULT_SLACK = 1e-6
DISTANCE_FLOOR = 1e-12
EARLY_CONVERGED = 1e-13
SCHEMA_VERSION = 1


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float
    location: Optional[float] = None
    detail: str = ""

    def to_dict(self):
        d = asdict(self)
        d["worstMargin"] = _jsonable(d.pop("worst_margin"))
        d["location"] = _jsonable(d["location"])
        return d


@dataclass
class DecayFit:
    lambda_hat: float
    overshoot_hat: float
    r_squared: float
    window: tuple
    zeros_excluded: int = 0

    def to_dict(self):
        return {
            "lambdaHat": self.lambda_hat,
            "overshootHat": self.overshoot_hat,
            "rSquared": self.r_squared,
            "windowUsed": list(self.window),
            "zerosExcluded": self.zeros_excluded,
        }


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)
    decay_fits: dict = field(default_factory=dict)
    constants_used: dict = field(default_factory=dict)
    scope: str = "window"
    sampling: str = ""

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {
            "schemaVersion": SCHEMA_VERSION,
            "passed": self.passed,
            "certificationScope": self.scope,
            "sampling": self.sampling,
            "constantsUsed": {k: _jsonable(v) for k, v in self.constants_used.items()},
            "checks": [c.to_dict() for c in self.checks],
            "decayFits": {k: v.to_dict() for k, v in self.decay_fits.items()},
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def to_text(self):
        lines = [f"verification ({self.scope}): {'PASS' if self.passed else 'FAIL'}"]
        if self.sampling:
            lines.append(f"  sampling: {self.sampling}")
        if self.constants_used:
            consts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.constants_used.items())
            lines.append(f"  constants: {consts}")
        for c in self.checks:
            where = "" if c.location is None else f" at t={c.location:.6g}"
            lines.append(
                f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: worst margin {c.worst_margin:.3e}{where}"
                + (f" ({c.detail})" if c.detail else "")
            )
        for name, fit in self.decay_fits.items():
            lines.append(
                f"  fit {name}: lambda={fit.lambda_hat:.6g}, k={fit.overshoot_hat:.6g}, R^2={fit.r_squared:.4f}"
            )
        return "\n".join(lines)


def _jsonable(v):
    if v is None:
        return None
    v = float(v)
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else "-inf" if v < 0 else "nan"


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, (int, float)) else str(v)


def check_certificate(trace, alpha, tol=DEFAULT_SLACK):
    """
    Check ``V(t2) <= V(t1) exp(-alpha (t2 - t1)) (1 + tol)`` on every step.

    The margin of a step is its log-ratio excess; the check passes iff the
    worst margin is not positive. Steps that start and end at ``V = 0``
    count as satisfied.
    """
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    v = np.asarray(trace.values, dtype=float)
    t = np.asarray(trace.times, dtype=float)
    if v.size < 2:
        raise InvalidInputError("trace needs at least two samples")
    v1, v2 = v[:-1], v[1:]
    dt = np.diff(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.log(v2) - np.log(v1) + alpha * dt - math.log1p(tol)
    excess = np.where((v1 == 0) & (v2 == 0), -np.inf, excess)
    excess = np.where((v1 == 0) & (v2 > 0), np.inf, excess)
    i = int(np.argmax(excess))
    worst = float(excess[i])
    return CheckResult("certificate", worst <= 0, worst, float(t[i + 1]), f"alpha={alpha}, tol={tol}")


def bound_margin(times, values, overshoot, rate, tol=DEFAULT_SLACK, floor=0.0):
    """
    Worst log excess of ``values(t) / (k exp(-rate (t - t0)) values(t0))``
    over all sample pairs ``t0 <= t``.

    Samples with ``values(t) <= floor`` are taken as satisfied; anchors are
    raised to ``floor``. Returns ``(margin, t)``.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore"):
        a = np.log(np.maximum(d, floor)) + rate * t
    anchor = np.minimum.accumulate(a)
    with np.errstate(invalid="ignore"):
        excess = a - anchor - math.log(overshoot) - math.log1p(tol)
    excess = np.where((d <= floor) | ~np.isfinite(excess), -np.inf, excess)
    i = int(np.argmax(excess))
    return float(excess[i]), float(t[i])


def _combine(name, results, detail):
    if not results:
        return CheckResult(name, True, -math.inf, None, detail + "; no samples")
    worst, where = max(results, key=lambda r: r[0])
    return CheckResult(name, worst <= 0, worst, where if math.isfinite(worst) else None, detail)


def check_contraction(trajectories, overshoot, rate, tol=DEFAULT_SLACK):
    """
    Check ``|dx(t)| <= k |dx(t0)| exp(-rate (t - t0))`` for every sample
    pair of every trajectory.
    """
    res = [bound_margin(tr.times, tr.displacement_norms(), overshoot, rate, tol) for tr in trajectories]
    return _combine("contraction", res, f"k={overshoot:.6g}, lambda={rate:.6g}, every sample as t0")


def _pair_distances(pair):
    if hasattr(pair, "distances"):
        return pair.times, pair.distances()
    a, b = pair
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise InvalidInputError("pair members must share their time grid")
    return a.times, np.linalg.norm(a.states - b.states, axis=1)


def check_ies(pairs, overshoot, rate, tol=DEFAULT_SLACK, floor=DISTANCE_FLOOR):
    """
    Check ``|x1(t) - x2(t)| <= k exp(-rate (t - t0)) |x1(t0) - x2(t0)|``.

    ``pairs`` holds :class:`sim.PairTrajectory` objects or tuples of two
    trajectories on a shared grid.
    """
    res = [bound_margin(*_pair_distances(p), overshoot, rate, tol, floor) for p in pairs]
    return _combine("IES", res, f"k={overshoot:.6g}, lambda={rate:.6g}, floor={floor:g}, every sample as t0")


def fit_decay(times, values, skip=0.0):
    """
    Least-squares exponential fit ``value ~ k value(t0) exp(-lambda (t - t0))``.

    Parameters
    ----------
    times, values : array_like
    skip : float
        Length of the initial transient left out of the fit.

    Returns
    -------
    DecayFit
        ``overshoot_hat`` compares the fitted line at the first retained
        time with the observed value there and is clipped below at 1.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = t >= t[0] + skip
    t, v = t[keep], v[keep]
    positive = v > 0
    zeros = int(np.count_nonzero(~positive))
    t, v = t[positive], v[positive]
    if t.size < 3:
        raise InsufficientData("need at least three positive samples")
    y = np.log(v)
    tc = t - t[0]
    slope, intercept = np.polyfit(tc, y, 1)
    fitted = slope * tc + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    overshoot = max(1.0, math.exp(intercept - y[0]))
    return DecayFit(float(-slope), overshoot, r2, (float(t[0]), float(t[-1])), zeros)


def check_periodic_convergence(source, period, ratio_bound, early=EARLY_CONVERGED):
    """
    Geometric contraction of the period map.

    Parameters
    ----------
    source : Trajectory or sim.PeriodSamples
        A trajectory on a grid containing ``t0 + nT`` for at least four
        periods, or per-period samples from :func:`sim.period_samples`.
        Grid distances below ``early`` are treated as converged and not
        tested; per-period samples are tested down to zero.
    period : float
    ratio_bound : float
        Required bound on ``d_{n+1} / d_n``, below 1.

    Returns
    -------
    (CheckResult, ndarray)
        The result and the extrapolated periodic point.
    """
    if not 0 < ratio_bound < 1:
        raise InvalidInputError("ratio_bound must lie in (0, 1)")
    T = float(period)
    if isinstance(source, sim.PeriodSamples):
        states, d, t0 = source.states, source.distances, source.t0
    else:
        times = source.times
        t0 = times[0]
        n_per = int(math.floor((times[-1] - t0) / T + 1e-9))
        if n_per < 4:
            raise InvalidInputError("trajectory must span at least four periods")
        idx = []
        for n in range(n_per + 1):
            j = int(np.argmin(np.abs(times - (t0 + n * T))))
            if abs(times[j] - (t0 + n * T)) > 1e-9 * max(1.0, T):
                raise InvalidInputError("time grid is not commensurate with the period")
            idx.append(j)
        states = source.states[idx]
        d = np.linalg.norm(np.diff(states, axis=0), axis=1)
    if d.size < 3:
        raise InvalidInputError("need at least three period-to-period distances")

    # per-period samples resolve tiny distances; grid samples carry noise
    floor = 0.0 if isinstance(source, sim.PeriodSamples) else early
    worst, where = -math.inf, None
    for n in range(1, d.size):
        if d[n] < floor or (floor == 0.0 and d[n] == 0.0):
            continue
        if d[n - 1] == 0:
            margin = math.inf
        else:
            margin = math.log(d[n] / d[n - 1]) - math.log(ratio_bound)
        if margin > worst:
            worst, where = margin, t0 + (n + 1) * T
    converged = bool(np.all(d[1:] < early))
    passed = worst <= 0
    detail = f"ratio bound {ratio_bound:.6g} over {d.size} periods"
    if converged:
        detail += "; converged below the floor"
    # geometric tail estimate of the fixed point of the period map
    last = states[-1]
    if d.size >= 2 and d[-2] > 0 and d[-1] < d[-2]:
        r = d[-1] / d[-2]
        last = states[-1] + r / (1.0 - r) * (states[-1] - states[-2])
    return CheckResult("periodic convergence", passed, worst, where, detail), last


def random_pairs(count, box, seed=0):
    """Draw ``count`` pairs of points uniformly in ``box``."""
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    return [(rng.uniform(lo, hi), rng.uniform(lo, hi)) for _ in range(count)]


def ies_with_predicted_constants(
    sys, u, constants, span, pairs=None, trials=20, box=None, seed=0, structure=None, tol=DEFAULT_SLACK,
    rtol=sim.DEFAULT_RTOL, atol=sim.DEFAULT_ATOL, samples=sim.DEFAULT_SAMPLES,
):
    """
    IES check on random pairs with the constants predicted by the
    certificate, ``k = exp((M + alpha) L / 2)`` and ``lambda = alpha / 2``.

    ``constants`` is a :class:`synth.SynthesisConstants` or an explicit
    ``(k, lambda)`` tuple. No refitting takes place.
    """
    if hasattr(constants, "ies_constants"):
        k, lam = constants.ies_constants()
    else:
        k, lam = constants
    if pairs is None:
        if box is None:
            box = sys.state_box
        if box is None:
            raise InvalidInputError("a sampling box is needed for random pairs")
        pairs = random_pairs(trials, box, seed)
    grid = sim.output_grid(span, samples)
    runs = [sim.integrate_pair(sys, u, a, b, span, rtol, atol, grid, structure) for a, b in pairs]
    res = check_ies(runs, k, lam, tol)
    res.name = "IES with predicted constants"
    res.detail += f"; {len(runs)} pairs"
    return res
