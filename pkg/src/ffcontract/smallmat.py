"""
Small dense symmetric matrix helpers.

Everything here works on plain ``numpy`` arrays of shape ``(n, n)``; the
matrices met in practice are tiny (n <= 16), so clarity wins over speed.
"""
import numpy as np

from .errors import InvalidInputError, NumericFailure

DEFAULT_TOL = 1e-12
MAX_SWEEPS = 30
ASYMMETRY_TOL = 1e-12


def as_square(J):
    """Return ``J`` as a finite float array of shape (n, n)."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if J.ndim != 2 or J.shape[0] != J.shape[1] or J.shape[0] < 1:
        raise InvalidInputError(f"expected a square matrix, got shape {J.shape}")
    if not np.all(np.isfinite(J)):
        raise InvalidInputError("matrix has non-finite entries")
    return J


def as_symmetric(S, tol=ASYMMETRY_TOL):
    """
    Validate and symmetrize ``S``.

    Entries may differ from their transposes by rounding noise only
    (``tol`` scaled by the largest magnitude, floored at 1); the returned
    matrix is the exact average ``(S + S.T) / 2``.
    """
    S = as_square(S)
    scale = max(1.0, float(np.max(np.abs(S))))
    asym = float(np.max(np.abs(S - S.T)))
    if asym >= tol * scale:
        raise InvalidInputError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (S + S.T)


def sym_part(J):
    """Return ``J.T + J`` (no 1/2 factor). The result is exactly symmetric."""
    J = as_square(J)
    return J.T + J


def eig_sym(S, tol=DEFAULT_TOL, max_sweeps=MAX_SWEEPS, vectors=False):
    """
    Eigenvalues of a symmetric matrix by the cyclic Jacobi method.

    Parameters
    ----------
    S : array_like, shape (n, n)
        Symmetric matrix.
    tol : float
        Sweeps stop once every off-diagonal magnitude is below
        ``tol * ||S||_F``.
    max_sweeps : int
        Budget of full sweeps before giving up.
    vectors : bool
        Also return the orthogonal matrix of eigenvectors (columns).

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    V : ndarray, optional
        Matching eigenvectors, only when ``vectors`` is true.
    """
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    a = as_symmetric(S).copy()
    n = a.shape[0]
    v = np.eye(n)
    fro = float(np.linalg.norm(a))
    thresh = tol * fro

    def off_max():
        if n == 1:
            return 0.0
        return float(np.max(np.abs(a[~np.eye(n, dtype=bool)])))

    sweeps = 0
    while off_max() >= thresh and fro > 0.0:
        if sweeps >= max_sweeps:
            raise NumericFailure(
                f"Jacobi iteration did not converge in {max_sweeps} sweeps",
                residual=off_max(),
            )
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < thresh * 1e-3:
                    continue
                # rotation angle chosen to annihilate a[p, q]
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot
        sweeps += 1

    w = np.diag(a).copy()
    order = np.argsort(w)
    if vectors:
        return w[order], v[:, order]
    return w[order]


def lambda_min(S, tol=DEFAULT_TOL):
    return float(eig_sym(S, tol)[0])


def lambda_max(S, tol=DEFAULT_TOL):
    return float(eig_sym(S, tol)[-1])


def definiteness_shift(S, m):
    """``lambda_min(S) - m``; non-negative exactly when ``S >= m I``."""
    if not np.isfinite(m):
        raise InvalidInputError("shift must be finite")
    return lambda_min(S) - float(m)
