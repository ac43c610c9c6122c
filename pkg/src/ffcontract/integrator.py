"""
Dormand-Prince 5(4) integrator with PI step-size control and the
classical fourth-order continuous extension for dense output.

The error norm is the max norm of the embedded estimate divided by
``rtol * |y_i| + atol``. An optional ``block`` slice marks components that
obey a linear homogeneous equation (variational displacements): their
absolute tolerance is scaled by the current block magnitude so that
relative accuracy survives exponential decay.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, IntegrationFailure, InvalidInputError

# Butcher tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between the 5th and embedded 4th order weights
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
# dense output
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
BETA = 0.04
EXPO = 0.2 - 0.75 * BETA


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0
    max_error: float = 0.0


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    stats: StepStats


def _dense(y0, y1, h, k1, k3, k4, k5, k6, k7):
    ydiff = y1 - y0
    bspl = h * k1 - ydiff
    return (
        y0,
        ydiff,
        bspl,
        ydiff - h * k7 - bspl,
        h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7),
    )


def _interp(coef, theta):
    r1, r2, r3, r4, r5 = coef
    t1 = 1.0 - theta
    return r1 + theta * (r2 + t1 * (r3 + theta * (r4 + t1 * r5)))


def solve(
    rhs,
    t_span,
    y0,
    t_eval=None,
    rtol=1e-8,
    atol=1e-10,
    first_step=None,
    max_step=None,
    breakpoints=(),
    block=None,
    max_steps=1_000_000,
):
    """
    Integrate ``y' = rhs(t, y)`` over ``t_span`` (forward only).

    Parameters
    ----------
    rhs : callable
        ``rhs(t, y) -> ndarray``.
    t_span : (float, float)
    y0 : array_like
    t_eval : array_like, optional
        Sorted output times inside ``t_span``; defaults to the accepted step
        times.
    rtol, atol : float
    first_step, max_step : float, optional
        Defaults are ``span / 1000`` and the full span.
    breakpoints : sequence of float
        Times the integrator must land on exactly (non-smooth points of the
        right-hand side).
    block : slice, optional
        Components whose absolute tolerance scales with their own size.

    Raises
    ------
    IntegrationFailure
        When the step size underflows.
    DivergenceError
        When the solution stops being finite.
    """
    t0, tf = float(t_span[0]), float(t_span[1])
    if not tf > t0:
        raise InvalidInputError("t_span must be increasing")
    if not (rtol > 0 and atol > 0):
        raise InvalidInputError("tolerances must be positive")
    span = tf - t0
    h = span / 1000.0 if first_step is None else float(first_step)
    hmax = span if max_step is None else float(max_step)
    h = min(h, hmax)
    y = np.array(y0, dtype=float)
    stops = sorted(b for b in set(float(b) for b in breakpoints) if t0 < b < tf) + [tf]

    if t_eval is None:
        out_t, out_y = [t0], [y.copy()]
        dense_out = False
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.size and (t_eval[0] < t0 - 1e-12 * max(1.0, abs(t0)) or t_eval[-1] > tf + 1e-12 * max(1.0, abs(tf))):
            raise InvalidInputError("t_eval must lie inside t_span")
        if np.any(np.diff(t_eval) < 0):
            raise InvalidInputError("t_eval must be sorted")
        out_y = np.empty((t_eval.size, y.size))
        dense_out = True
        j_out = 0
        while j_out < t_eval.size and t_eval[j_out] <= t0:
            out_y[j_out] = y
            j_out += 1

    stats = StepStats()
    t = t0
    k1 = np.asarray(rhs(t, y), dtype=float)
    stats.evaluations += 1
    facold = 1e-4
    reject = False
    stop_i = 0

    while t < tf:
        if stats.accepted + stats.rejected >= max_steps:
            raise IntegrationFailure(f"step budget exhausted at t={t}", last_time=t)
        while stops[stop_i] <= t:
            stop_i += 1
        target = stops[stop_i]
        if h >= target - t or target - t - h < 1e-10 * h:
            h = target - t
            landing = True
        else:
            landing = False
        if h < 16.0 * np.finfo(float).eps * max(1.0, abs(t)):
            raise IntegrationFailure(f"step size underflow at t={t}", last_time=t)

        k2 = rhs(t + C2 * h, y + h * (A21 * k1))
        k3 = rhs(t + C3 * h, y + h * (A31 * k1 + A32 * k2))
        k4 = rhs(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = rhs(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        tn = target if landing else t + h
        # stages at a breakpoint see the left-hand limit of the rhs
        at_break = landing and target < tf
        ts = np.nextafter(tn, t) if at_break else tn
        k6 = rhs(ts, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        yn = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
        k7 = rhs(ts, yn)
        stats.evaluations += 6

        if not np.all(np.isfinite(yn)):
            if h > 1e-6 * span:
                h *= 0.1
                stats.rejected += 1
                reject = True
                continue
            raise DivergenceError(f"solution is not finite after t={t}", last_time=t)

        err_vec = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(yn))
        if block is not None:
            mag = max(float(np.max(np.abs(y[block]), initial=0.0)), float(np.max(np.abs(yn[block]), initial=0.0)))
            if mag > 0.0:
                sc[block] = atol * mag + rtol * np.maximum(np.abs(y[block]), np.abs(yn[block]))
        err = float(np.max(np.abs(err_vec) / sc)) if err_vec.size else 0.0

        fac11 = err ** EXPO if err > 0 else 0.0
        if err <= 1.0:
            fac = fac11 / facold ** BETA
            fac = min(1.0 / FAC_MIN, max(1.0 / FAC_MAX, fac / SAFETY))
            hnew = h / fac if fac > 0 else h * FAC_MAX
            facold = max(err, 1e-4)
            stats.accepted += 1
            stats.max_error = max(stats.max_error, err)
            if dense_out:
                coef = None
                while j_out < t_eval.size and t_eval[j_out] <= tn:
                    if coef is None:
                        coef = _dense(y, yn, h, k1, k3, k4, k5, k6, k7)
                    theta = (t_eval[j_out] - t) / h
                    out_y[j_out] = yn if t_eval[j_out] == tn else _interp(coef, theta)
                    j_out += 1
            t, y, k1 = tn, yn, k7
            if at_break:
                k1 = np.asarray(rhs(t, y), dtype=float)
                stats.evaluations += 1
            if not dense_out:
                out_t.append(t)
                out_y.append(y.copy())
            if reject:
                hnew = min(hnew, h)
            reject = False
            h = min(hnew, hmax)
        else:
            h = h / min(1.0 / FAC_MIN, fac11 / SAFETY)
            stats.rejected += 1
            reject = True

    if dense_out:
        while j_out < t_eval.size:
            out_y[j_out] = y
            j_out += 1
        return Solution(t_eval.copy(), out_y, stats)
    return Solution(np.array(out_t), np.array(out_y), stats)
