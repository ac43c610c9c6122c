"""
Simulation of the controlled system together with its variational
equation, trajectory ensembles, Lyapunov traces and the straight-line
path integral that bounds distances by integrated displacements.
"""
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import integrator
from .errors import FFContractError, InvalidInputError
from .sysmodel import make_rhs

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
DEFAULT_SAMPLES = 1001
DEFAULT_S_GRID = 64

DX0_POLICIES = ("unitBasisCycle", "fixedVector", "none")


def as_input(u):
    """Turn a number or callable into a callable ``u(t)``."""
    if callable(u):
        return u
    try:
        value = float(u)
    except (TypeError, ValueError):
        raise InvalidInputError("input must be a number or a callable u(t)") from None
    if not np.isfinite(value):
        raise InvalidInputError("constant input must be finite")

    def const(t):
        return value

    const.value = value
    return const


@dataclass
class Trajectory:
    """
    Sampled solution of the augmented system.

    ``displacements`` is ``None`` when only the base state was integrated.
    """

    times: np.ndarray
    states: np.ndarray
    displacements: Optional[np.ndarray]
    input_values: np.ndarray
    stats: integrator.StepStats = field(default_factory=integrator.StepStats)
    status: str = "ok"
    error: Optional[str] = None

    @property
    def dimension(self):
        return self.states.shape[1]

    @property
    def final_state(self):
        return self.states[-1]

    def displacement_norms(self):
        if self.displacements is None:
            raise InvalidInputError("trajectory has no displacements")
        return np.linalg.norm(self.displacements, axis=1)


@dataclass
class LyapunovTrace:
    times: np.ndarray
    values: np.ndarray
    gain_values: np.ndarray
    ratios: np.ndarray
    hit_zero: bool = False


def output_grid(span, samples=DEFAULT_SAMPLES):
    t0, t1 = float(span[0]), float(span[1])
    if not t1 > t0:
        raise InvalidInputError("span must be nonempty")
    return np.linspace(t0, t1, int(samples))


def integrate(
    sys,
    u,
    x0,
    dx0=None,
    span=(0.0, 1.0),
    rtol=DEFAULT_RTOL,
    atol=DEFAULT_ATOL,
    grid=None,
    structure=None,
    max_step=None,
):
    """
    Integrate ``x' = f + u G`` and, if ``dx0`` is given, its variational
    equation on the same steps.

    Parameters
    ----------
    sys : SystemModel
    u : callable or float
        Time-only input. Objects with a ``breakpoints(t0, t1)`` method have
        their junctions hit exactly by the step control.
    x0, dx0 : array_like
    span : (float, float)
    rtol, atol : float
    grid : array_like, optional
        Output times; defaults to ``DEFAULT_SAMPLES`` uniform samples.
    structure : IntervalStructure, optional
        Caps the step at one eighth of the longest odd segment.
    max_step : float, optional
        Explicit cap, overriding the structure-based one.

    Returns
    -------
    Trajectory
    """
    if not (rtol > 0 and atol > 0):
        raise InvalidInputError("tolerances must be positive")
    n = sys.dimension
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n or not np.all(np.isfinite(x0)):
        raise InvalidInputError(f"x0 must be a finite vector of length {n}")
    with_dx = dx0 is not None
    if with_dx:
        dx0 = np.asarray(dx0, dtype=float).reshape(-1)
        if dx0.size != n or not np.all(np.isfinite(dx0)):
            raise InvalidInputError(f"dx0 must be a finite vector of length {n}")
    t0, t1 = float(span[0]), float(span[1])
    ts = output_grid((t0, t1)) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise InvalidInputError("output grid must be strictly increasing")

    u_fn = as_input(u)
    breaks = u_fn.breakpoints(t0, t1) if hasattr(u_fn, "breakpoints") else ()
    if max_step is None and structure is not None and structure.max_odd_length > 0:
        max_step = structure.max_odd_length / 8.0

    rhs = make_rhs(sys, u_fn, with_displacement=with_dx)
    y0 = np.concatenate([x0, dx0]) if with_dx else x0
    sol = integrator.solve(
        rhs,
        (t0, t1),
        y0,
        t_eval=ts,
        rtol=rtol,
        atol=atol,
        max_step=max_step,
        breakpoints=breaks,
        block=slice(n, 2 * n) if with_dx else None,
    )
    u_vals = np.array([u_fn(t) for t in ts], dtype=float)
    return Trajectory(
        times=sol.t,
        states=sol.y[:, :n].copy(),
        displacements=sol.y[:, n:].copy() if with_dx else None,
        input_values=u_vals,
        stats=sol.stats,
    )


@dataclass
class PairTrajectory:
    """
    Two solutions integrated jointly as ``(x_a, e = x_b - x_a)``.

    Carrying the difference as its own state keeps its relative accuracy
    even when the two solutions are far closer than the integration
    tolerance on ``x`` itself.
    """

    times: np.ndarray
    first: np.ndarray
    difference: np.ndarray
    stats: integrator.StepStats = field(default_factory=integrator.StepStats)

    @property
    def second(self):
        return self.first + self.difference

    def distances(self):
        return np.linalg.norm(self.difference, axis=1)


def integrate_pair(
    sys, u, xa, xb, span=(0.0, 1.0), rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, grid=None, structure=None, max_step=None
):
    """Integrate the solutions from ``xa`` and ``xb`` on shared steps."""
    n = sys.dimension
    xa = np.asarray(xa, dtype=float).reshape(-1)
    xb = np.asarray(xb, dtype=float).reshape(-1)
    if xa.size != n or xb.size != n:
        raise InvalidInputError(f"initial conditions must have length {n}")
    t0, t1 = float(span[0]), float(span[1])
    ts = output_grid((t0, t1)) if grid is None else np.asarray(grid, dtype=float)
    u_fn = as_input(u)
    breaks = u_fn.breakpoints(t0, t1) if hasattr(u_fn, "breakpoints") else ()
    if max_step is None and structure is not None and structure.max_odd_length > 0:
        max_step = structure.max_odd_length / 8.0
    base = make_rhs(sys, u_fn, with_displacement=False)

    def rhs(t, y):
        fa = base(t, y[:n])
        return np.concatenate([fa, base(t, y[:n] + y[n:]) - fa])

    sol = integrator.solve(
        rhs, (t0, t1), np.concatenate([xa, xb - xa]), t_eval=ts, rtol=rtol, atol=atol,
        max_step=max_step, breakpoints=breaks, block=slice(n, 2 * n),
    )
    return PairTrajectory(sol.t, sol.y[:, :n].copy(), sol.y[:, n:].copy(), sol.stats)


@dataclass
class PeriodSamples:
    """
    States ``x(t0 + nT)`` and distances ``d_n = |x(t0+(n+1)T) - x(t0+nT)|``.
    """

    t0: float
    period: float
    states: np.ndarray
    distances: np.ndarray


def period_samples(sys, u, x0, t0, period, periods, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, structure=None):
    """
    Sample a solution once per period with accurate successive distances.

    Valid only when the system and the input are both ``period``-periodic:
    then ``t -> x(t + T)`` is itself a solution, so ``d_n`` is the distance
    at ``t0 + nT`` between the solutions from ``x(t0)`` and ``x(t0 + T)``,
    which :func:`integrate_pair` resolves below the state tolerance.
    """
    T = float(period)
    if periods < 2:
        raise InvalidInputError("need at least two periods")
    if sys.period is None or abs(sys.period - T) > 1e-12 * T:
        raise InvalidInputError("system is not periodic with this period")
    if getattr(u, "period", T) is None or abs(getattr(u, "period", T) - T) > 1e-12 * T:
        raise InvalidInputError("input is not periodic with this period")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    first = integrate(sys, u, x0, None, (t0, t0 + T), rtol, atol, [t0, t0 + T], structure)
    grid = t0 + T * np.arange(periods)
    pair = integrate_pair(sys, u, x0, first.states[-1], (t0, grid[-1]), rtol, atol, grid, structure)
    states = np.vstack([pair.first, pair.second[-1:]])
    return PeriodSamples(float(t0), T, states, pair.distances())


def _dx0_for(policy, index, n, fixed):
    if policy == "none":
        return None
    if policy == "fixedVector":
        if fixed is None:
            raise InvalidInputError("fixedVector policy needs a displacement vector")
        return np.asarray(fixed, dtype=float)
    if policy == "unitBasisCycle":
        e = np.zeros(n)
        e[index % n] = 1.0
        return e
    raise InvalidInputError(f"unknown dx0 policy {policy!r}; use one of {DX0_POLICIES}")


def ensemble(
    sys,
    u,
    initial_conditions,
    dx0_policy="unitBasisCycle",
    dx0=None,
    span=(0.0, 1.0),
    rtol=DEFAULT_RTOL,
    atol=DEFAULT_ATOL,
    grid=None,
    structure=None,
    workers=None,
):
    """
    Integrate one trajectory per initial condition on a shared grid.

    Members that fail are returned with ``status`` set to ``"failed"`` and
    the error message attached, instead of aborting the whole run.
    """
    ics = [np.asarray(x, dtype=float).reshape(-1) for x in initial_conditions]
    if not ics:
        raise InvalidInputError("at least one initial condition is required")
    n = sys.dimension
    ts = output_grid(span) if grid is None else np.asarray(grid, dtype=float)
    # validate the policy before any work
    _dx0_for(dx0_policy, 0, n, dx0)

    def run(i):
        try:
            return integrate(
                sys, u, ics[i], _dx0_for(dx0_policy, i, n, dx0), span, rtol, atol, ts, structure
            )
        except FFContractError as exc:
            empty = np.full((ts.size, n), np.nan)
            return Trajectory(ts, empty, None, np.full(ts.size, np.nan), status="failed", error=str(exc))

    if workers and workers > 1 and len(ics) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(len(ics))))
    return [run(i) for i in range(len(ics))]


def lyapunov_trace(traj, gain):
    """
    ``V(t) = g(t) |dx(t)|^2`` along a trajectory and its step ratios.

    Ratios whose denominator is zero are reported as exact zeros and the
    ``hit_zero`` flag is raised.
    """
    if traj.displacements is None:
        raise InvalidInputError("trajectory has no displacements")
    if hasattr(gain, "evaluate"):
        g = np.asarray(gain.evaluate(traj.times), dtype=float)
    elif callable(gain):
        g = np.array([gain(t) for t in traj.times], dtype=float)
    else:
        g = np.full(traj.times.size, float(gain))
    sq = np.sum(traj.displacements**2, axis=1)
    values = g * sq
    prev, nxt = values[:-1], values[1:]
    zero = prev == 0.0
    ratios = np.zeros_like(prev)
    np.divide(nxt, prev, out=ratios, where=~zero)
    return LyapunovTrace(traj.times.copy(), values, g, ratios, bool(np.any(zero)))


@dataclass
class PathIntegralResult:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    rhs_fine: Optional[np.ndarray] = None

    @property
    def relative_change(self):
        if self.rhs_fine is None:
            return None
        scale = np.maximum(np.abs(self.rhs_fine), 1e-300)
        return np.abs(self.rhs - self.rhs_fine) / scale


def _path_rhs(sys, u, x0, x1, t0, times, size, rtol, atol):
    s = np.linspace(0.0, 1.0, size)
    d = x0 - x1
    grid = np.concatenate([[t0], times])
    sq = np.empty((size, times.size))
    ends = []
    for i, si in enumerate(s):
        tr = integrate(sys, u, si * x0 + (1.0 - si) * x1, d, (t0, times[-1]), rtol, atol, grid)
        sq[i] = np.sum(tr.displacements[1:] ** 2, axis=1)
        ends.append(tr.states[1:])
    h = s[1] - s[0]
    integral = h * (np.sum(sq, axis=0) - 0.5 * (sq[0] + sq[-1]))
    # s = 1 starts at x0, s = 0 at x1
    return integral, ends[-1], ends[0]


def path_integral_check(
    sys,
    u,
    x0,
    x1,
    t0,
    t,
    s_grid=DEFAULT_S_GRID,
    rtol=DEFAULT_RTOL,
    atol=DEFAULT_ATOL,
    richardson=True,
):
    """
    Compare ``|phi(t, x0) - phi(t, x1)|^2`` with the integral of the squared
    displacement along the straight path ``theta(s) = s x0 + (1 - s) x1``.

    Parameters
    ----------
    t : float or sequence of float
        Output times after ``t0``; all are served by one integration per
        path sample.
    s_grid : int
        Number of path samples (trapezoid nodes), at least 2.
    richardson : bool
        Also evaluate the integral on a doubled grid and report it in
        ``rhs_fine``.
    """
    if int(s_grid) < 2:
        raise InvalidInputError("s_grid must be at least 2")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times <= t0) or np.any(np.diff(times) <= 0):
        raise InvalidInputError("times must be increasing and after t0")
    if np.array_equal(x0, x1):
        zeros = np.zeros(times.size)
        return PathIntegralResult(times, zeros, zeros.copy(), zeros.copy() if richardson else None)
    rhs, end0, end1 = _path_rhs(sys, u, x0, x1, t0, times, int(s_grid), rtol, atol)
    lhs = np.sum((end0 - end1) ** 2, axis=1)
    fine = None
    if richardson:
        fine = _path_rhs(sys, u, x0, x1, t0, times, 2 * int(s_grid), rtol, atol)[0]
    return PathIntegralResult(times, lhs, rhs, fine)


def write_csv(path, traj, gain=None):
    """
    Write ``t, x1..xn, dx1..dxn, u[, V]`` with 17 significant digits.

    The ``dx`` columns are omitted when the trajectory has none; ``V`` is
    present only when a gain is supplied.
    """
    n = traj.dimension
    header = ["t"] + [f"x{i + 1}" for i in range(n)]
    cols = [traj.times[:, None], traj.states]
    if traj.displacements is not None:
        header += [f"dx{i + 1}" for i in range(n)]
        cols.append(traj.displacements)
    header.append("u")
    cols.append(traj.input_values[:, None])
    if gain is not None:
        header.append("V")
        cols.append(lyapunov_trace(traj, gain).values[:, None])
    table = np.hstack(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([format(v, ".17g") for v in row])
