"""
Affine-in-control time-varying systems ``x' = f(t, x) + u(t) G(t, x)``.

A :class:`SystemModel` bundles the vector fields, their state Jacobians and
three *envelope* functions of time that bound the eigenvalues of the
symmetric parts ``A = J_f^T + J_f`` and ``R = J_G^T + J_G`` uniformly over
the state space. The envelopes are supplied with the model (analytically
for the built-in examples) because a bound over all of R^n cannot be
computed mechanically; :func:`sampled_envelopes` provides a sampled
stand-in that is flagged as heuristic.
"""
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable, Optional

import numpy as np

from . import smallmat
from .errors import ConfigurationError, EvaluationError, InvalidInputError
from .expr import compile_expr, compile_time_fn


@dataclass(frozen=True)
class SystemModel:
    dimension: int
    drift: Callable
    control_dir: Callable
    drift_jacobian: Callable
    control_jacobian: Callable
    envelope_rmin: Callable
    envelope_rmax: Callable
    envelope_amax: Callable
    period: Optional[float] = None
    state_box: Optional[tuple] = None
    name: str = "custom"
    heuristic_envelopes: bool = False
    description: str = ""

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise InvalidInputError("dimension must be a positive integer")
        if self.period is not None and not self.period > 0:
            raise InvalidInputError("period must be positive when given")


@dataclass(frozen=True)
class AugmentedState:
    """State ``x`` together with a displacement ``dx`` of the same size."""

    base: np.ndarray
    displacement: np.ndarray = field(default=None)

    def __post_init__(self):
        base = np.atleast_1d(np.asarray(self.base, dtype=float))
        disp = self.displacement
        disp = np.zeros_like(base) if disp is None else np.atleast_1d(np.asarray(disp, dtype=float))
        if base.shape != disp.shape:
            raise InvalidInputError("state and displacement dimensions differ")
        if not (np.all(np.isfinite(base)) and np.all(np.isfinite(disp))):
            raise InvalidInputError("augmented state must be finite")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "displacement", disp)


def _state(sys, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (sys.dimension,):
        raise InvalidInputError(f"state must have length {sys.dimension}, got shape {x.shape}")
    return x


def _finite_matrix(value, what, t, x):
    value = np.atleast_2d(np.asarray(value, dtype=float))
    if not np.all(np.isfinite(value)):
        raise EvaluationError(f"{what} is not finite at t={t}, x={x}", t=t, x=x)
    return value


def eval_A(sys, t, x):
    """Symmetric part ``J_f^T + J_f`` of the drift Jacobian at ``(t, x)``."""
    x = _state(sys, x)
    return smallmat.sym_part(_finite_matrix(sys.drift_jacobian(t, x), "drift Jacobian", t, x))


def eval_R(sys, t, x):
    """Symmetric part ``J_G^T + J_G`` of the control-direction Jacobian."""
    x = _state(sys, x)
    return smallmat.sym_part(
        _finite_matrix(sys.control_jacobian(t, x), "control Jacobian", t, x)
    )


def augmented_rhs(sys, u, t, s):
    """
    Right-hand side of the system and of its variational equation.

    Returns an :class:`AugmentedState` holding ``f + u G`` and
    ``(J_f + u J_G) dx``.
    """
    x = _state(sys, s.base)
    dx = s.displacement
    base = np.asarray(sys.drift(t, x), dtype=float) + u * np.asarray(sys.control_dir(t, x), dtype=float)
    J = np.asarray(sys.drift_jacobian(t, x), dtype=float) + u * np.asarray(
        sys.control_jacobian(t, x), dtype=float
    )
    disp = np.atleast_2d(J) @ dx
    if not (np.all(np.isfinite(base)) and np.all(np.isfinite(disp))):
        raise EvaluationError(f"non-finite right-hand side at t={t}", t=t, x=x)
    return AugmentedState(base, disp)


def make_rhs(sys, input_fn, with_displacement=True):
    """
    Flat right-hand side ``rhs(t, y)`` for the integrator.

    ``y`` stacks ``x`` and, when ``with_displacement`` is set, ``dx``.
    """
    n = sys.dimension
    f, G, Jf, JG = sys.drift, sys.control_dir, sys.drift_jacobian, sys.control_jacobian

    if not with_displacement:
        def rhs(t, y):
            u = input_fn(t)
            return np.asarray(f(t, y), dtype=float) + u * np.asarray(G(t, y), dtype=float)

        return rhs

    def rhs(t, y):
        x = y[:n]
        u = input_fn(t)
        out = np.empty(2 * n)
        out[:n] = f(t, x) + u * G(t, x)
        J = Jf(t, x) + u * JG(t, x)
        out[n:] = np.dot(J, y[n:])
        return out

    return rhs


def check_jacobian_consistency(sys, t, x, h=1e-5):
    """
    Worst entrywise deviation between supplied Jacobians and central
    finite differences of ``drift`` and ``control_dir``.

    Deviations are divided by ``max(1, |finite difference|)``.
    """
    if not h > 0:
        raise InvalidInputError("step must be positive")
    x = _state(sys, x)
    n = sys.dimension
    worst = 0.0
    for field_fn, jac_fn in ((sys.drift, sys.drift_jacobian), (sys.control_dir, sys.control_jacobian)):
        fd = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            fd[:, j] = (
                np.asarray(field_fn(t, x + e), dtype=float) - np.asarray(field_fn(t, x - e), dtype=float)
            ) / (2.0 * h)
        J = np.atleast_2d(np.asarray(jac_fn(t, x), dtype=float))
        dev = np.abs(J - fd) / np.maximum(1.0, np.abs(fd))
        worst = max(worst, float(np.max(dev)))
    return worst


# ---------------------------------------------------------------------------
# envelope helpers


def _const(value):
    def fn(t):
        return value + 0.0 * np.asarray(t, dtype=float)

    return fn


def sampled_envelopes(dimension, drift_jacobian, control_jacobian, state_box, points_per_axis=21):
    """
    Envelope functions estimated by sampling a grid over ``state_box``.

    The result bounds the eigenvalues only at the sampled states, so models
    built with it carry ``heuristic_envelopes=True``.
    """
    if state_box is None or len(state_box) != dimension:
        raise ConfigurationError("sampled envelopes need a state box with one range per coordinate")
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in state_box]
    grid = [np.array(p) for p in product(*axes)]

    def extremes(t):
        rmin, rmax, amax = np.inf, -np.inf, -np.inf
        for x in grid:
            wR = smallmat.eig_sym(smallmat.sym_part(control_jacobian(t, x)))
            wA = smallmat.eig_sym(smallmat.sym_part(drift_jacobian(t, x)))
            rmin = min(rmin, wR[0])
            rmax = max(rmax, wR[-1])
            amax = max(amax, wA[-1])
        return rmin, rmax, amax

    def pick(i):
        def fn(t):
            if np.ndim(t) == 0:
                return extremes(float(t))[i]
            return np.array([extremes(float(s))[i] for s in np.ravel(t)]).reshape(np.shape(t))

        return fn

    return pick(0), pick(1), pick(2)


def check_envelopes(sys, times, points_per_axis=100):
    """
    Sampled slack of the envelope inequalities.

    Returns a dict with the worst values of ``lambda_min(R) - rmin``,
    ``rmax - lambda_max(R)`` and ``amax - lambda_max(A)``; all should be
    non-negative. Needs ``sys.state_box``.
    """
    if sys.state_box is None:
        raise ConfigurationError("system has no state box to sample")
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in sys.state_box]
    if sys.dimension > 2:
        axes = [np.linspace(lo, hi, 5) for lo, hi in sys.state_box]
    worst = {"rmin": np.inf, "rmax": np.inf, "amax": np.inf}
    for t in times:
        lo, hi, am = sys.envelope_rmin(t), sys.envelope_rmax(t), sys.envelope_amax(t)
        for p in product(*axes):
            x = np.array(p)
            wR = smallmat.eig_sym(eval_R(sys, t, x))
            wA = smallmat.eig_sym(eval_A(sys, t, x))
            worst["rmin"] = min(worst["rmin"], wR[0] - lo)
            worst["rmax"] = min(worst["rmax"], hi - wR[-1])
            worst["amax"] = min(worst["amax"], am - wA[-1])
    return worst


def check_periodicity(sys, times, states):
    """Largest ``|f(t+T,x) - f(t,x)| + |G(t+T,x) - G(t,x)|`` over the samples."""
    if sys.period is None:
        raise ConfigurationError("system has no period")
    T = sys.period
    worst = 0.0
    for t in times:
        for x in states:
            x = _state(sys, x)
            df = np.max(np.abs(np.asarray(sys.drift(t + T, x)) - np.asarray(sys.drift(t, x))))
            dg = np.max(np.abs(np.asarray(sys.control_dir(t + T, x)) - np.asarray(sys.control_dir(t, x))))
            worst = max(worst, float(df + dg))
    return worst


# ---------------------------------------------------------------------------
# built-in examples


def _forcing(forcing):
    """Resolve the additive forcing of eq47 into ``(g(t), periodic?)``."""
    if forcing is None or forcing == "zero":
        return (lambda t: 0.0), True
    if forcing in ("tCosT", "tcost", "t*cos(t)"):
        return (lambda t: t * np.cos(t)), False
    if isinstance(forcing, str):
        return compile_time_fn(forcing), False
    if callable(forcing):
        return forcing, False
    raise ConfigurationError(f"unsupported forcing {forcing!r}")


def _eq47(forcing=None, forcing_period=None):
    g, periodic = _forcing(forcing)
    sin = np.sin
    one = np.ones((1, 1))

    def drift(t, x):
        return x + g(t)

    def control_dir(t, x):
        return sin(t) * x

    def drift_jacobian(t, x):
        return one

    def control_jacobian(t, x):
        return np.array([[sin(t)]])

    period = 2 * np.pi if periodic else None
    if forcing_period is not None:
        # custom forcing declared periodic: the model is periodic only if the
        # forcing period is commensurate with 2*pi; callers take responsibility.
        period = float(forcing_period)
    return SystemModel(
        dimension=1,
        drift=drift,
        control_dir=control_dir,
        drift_jacobian=drift_jacobian,
        control_jacobian=control_jacobian,
        envelope_rmin=lambda t: 2.0 * np.sin(t),
        envelope_rmax=lambda t: 2.0 * np.sin(t),
        envelope_amax=_const(2.0),
        period=period,
        state_box=((-10.0, 10.0),),
        name="eq47",
        description="x' = x + u(t) sin(t) x + g(t)",
    )


def _eq48():
    JG = np.array([[1.0, 0.0], [0.0, 0.0]])

    def drift(t, x):
        z, y = x
        return np.array([z - z ** 3 / 3.0 - y, -y + z])

    def control_dir(t, x):
        return np.array([x[0], 0.0])

    def drift_jacobian(t, x):
        z = x[0]
        return np.array([[1.0 - z * z, -1.0], [1.0, -1.0]])

    def control_jacobian(t, x):
        return JG

    return SystemModel(
        dimension=2,
        drift=drift,
        control_dir=control_dir,
        drift_jacobian=drift_jacobian,
        control_jacobian=control_jacobian,
        envelope_rmin=_const(0.0),
        envelope_rmax=_const(2.0),
        envelope_amax=_const(2.0),
        period=None,
        state_box=((-3.0, 3.0), (-3.0, 3.0)),
        name="eq48",
        description="z' = z - z^3/3 - y + u(t) z,  y' = -y + z",
    )


def _eq49():
    zero = np.zeros((1, 1))
    ones = np.ones(1)

    def drift(t, x):
        return x - x ** 3 / 3.0

    def control_dir(t, x):
        return ones

    def drift_jacobian(t, x):
        return np.array([[1.0 - x[0] * x[0]]])

    def control_jacobian(t, x):
        return zero

    return SystemModel(
        dimension=1,
        drift=drift,
        control_dir=control_dir,
        drift_jacobian=drift_jacobian,
        control_jacobian=control_jacobian,
        envelope_rmin=_const(0.0),
        envelope_rmax=_const(0.0),
        envelope_amax=_const(2.0),
        period=None,
        state_box=((-4.0, 4.0),),
        name="eq49",
        description="x' = x - x^3/3 + u(t)",
    )


BUILTINS = ("eq47", "eq48", "eq49")


def builtin(name, forcing=None, forcing_period=None):
    """
    One of the three example systems.

    ``forcing`` applies to ``eq47`` only: ``None``/``"zero"``, ``"tCosT"``,
    an expression string in ``t`` or a callable ``g(t)``.
    """
    if name == "eq47":
        return _eq47(forcing, forcing_period)
    if forcing not in (None, "zero"):
        raise ConfigurationError(f"forcing is only defined for eq47, not {name}")
    if name == "eq48":
        return _eq48()
    if name == "eq49":
        return _eq49()
    raise ConfigurationError(f"unknown built-in system {name!r}; choose from {', '.join(BUILTINS)}")


def from_expressions(
    dimension,
    drift,
    control,
    drift_jacobian,
    control_jacobian,
    envelopes=None,
    period=None,
    state_box=None,
    name="custom",
):
    """
    Build a model from expression strings.

    ``drift`` and ``control`` are lists of ``dimension`` expressions,
    the Jacobians nested lists of shape (n, n). ``envelopes`` is a dict with
    expressions of ``t`` for ``rmin``, ``rmax`` and ``amax``; when omitted
    the envelopes are sampled over ``state_box`` and flagged heuristic.
    """
    n = int(dimension)

    def vector(exprs, what):
        if len(exprs) != n:
            raise ConfigurationError(f"{what} needs {n} expressions")
        fns = [compile_expr(e, n) for e in exprs]
        return lambda t, x: np.array([float(f(t, x)) for f in fns])

    def matrix(rows, what):
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ConfigurationError(f"{what} must be {n}x{n}")
        fns = [[compile_expr(e, n) for e in r] for r in rows]
        return lambda t, x: np.array([[float(f(t, x)) for f in r] for r in fns])

    f = vector(drift, "drift")
    G = vector(control, "control direction")
    Jf = matrix(drift_jacobian, "drift Jacobian")
    JG = matrix(control_jacobian, "control Jacobian")
    box = None if state_box is None else tuple((float(lo), float(hi)) for lo, hi in state_box)
    if envelopes:
        try:
            rmin, rmax, amax = (compile_time_fn(envelopes[k]) for k in ("rmin", "rmax", "amax"))
        except KeyError as exc:
            raise ConfigurationError(f"envelope {exc.args[0]!r} missing") from None
        heuristic = False
    else:
        rmin, rmax, amax = sampled_envelopes(n, Jf, JG, box)
        heuristic = True
    return SystemModel(
        dimension=n,
        drift=f,
        control_dir=G,
        drift_jacobian=Jf,
        control_jacobian=JG,
        envelope_rmin=rmin,
        envelope_rmax=rmax,
        envelope_amax=amax,
        period=None if period is None else float(period),
        state_box=box,
        name=name,
        heuristic_envelopes=heuristic,
    )


def with_envelopes(sys, rmin=None, rmax=None, amax=None):
    """Copy of ``sys`` with some envelope functions replaced."""
    changes = {}
    if rmin is not None:
        changes["envelope_rmin"] = rmin
    if rmax is not None:
        changes["envelope_rmax"] = rmax
    if amax is not None:
        changes["envelope_amax"] = amax
    return replace(sys, **changes)
