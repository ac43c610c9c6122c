"""Small systems defined only through their envelopes, for structural tests."""
import numpy as np

from ffcontract.sysmodel import SystemModel


def envelope_system(rmin, rmax=None, amax=2.0, period=None):
    rmax = rmin if rmax is None else rmax
    amax_fn = amax if callable(amax) else (lambda t, v=float(amax): v + 0.0 * np.asarray(t, dtype=float))
    zero = np.zeros((1, 1))
    return SystemModel(
        dimension=1,
        drift=lambda t, x: np.zeros(1),
        control_dir=lambda t, x: np.zeros(1),
        drift_jacobian=lambda t, x: zero,
        control_jacobian=lambda t, x: zero,
        envelope_rmin=rmin,
        envelope_rmax=rmax,
        envelope_amax=amax_fn,
        period=period,
        name="envelopes",
    )


# one (criterion, passed, detail) entry per acceptance criterion, echoed in
# the terminal summary
ACCEPTANCE = []


def record(number, title, passed, detail):
    ACCEPTANCE.append((number, title, bool(passed), detail))
    print(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
