"""Semi-analytic propagation by superoperator eigendecomposition.

The generator is diagonalized once per stage; evolution at any time is then
a weighted sum of eigenmodes, exact in time. Dual (left) vectors project the
initial condition onto the eigenbasis. A direct adaptive integrator provides
an independent evolution path used as an oracle and as a fallback when the
decomposition is ill-conditioned (non-Hermitian generators need not be
diagonalizable).

Eigenpairs are sorted by decay rate, slowest first, so an optional rate
cutoff keeps a prefix of the spectrum: modes that decay faster than the
cutoff contribute transients that die within the stage and may be dropped,
with a computable error bound.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NumericalError

DEFECT_THRESHOLD = 1e-6
DEFAULT_GRID_DT = 0.05  # ps
DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class EigenPropagator:
    """Full eigensystem of one superoperator, sorted slowest-decaying first.

    ``kept_count`` marks the prefix used for propagation; the tail is
    retained so the dropped-mode error bound stays computable.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    dual_vectors: np.ndarray
    kept_count: int
    biorthonormality_residual: float
    defective: bool


def diagonalize(v, v_cut=None):
    """Eigendecompose a superoperator and build its dual basis.

    Parameters
    ----------
    v : ndarray
        Superoperator of dimension (3 N_c)^2.
    v_cut : float, optional
        Decay-rate cutoff in 1/ps; eigenpairs with -Re(eigenvalue) <= v_cut
        are kept. None keeps everything (evolution exact up to conditioning).

    Notes
    -----
    Duals come from inverting the right-eigenvector matrix, which enforces
    biorthonormality directly; its residual doubles as the defectiveness
    probe. A defective decomposition keeps all pairs and is flagged so
    callers can fall back to direct integration.
    """
    eigenvalues, right = np.linalg.eig(v)
    order = np.argsort(-eigenvalues.real)
    eigenvalues = eigenvalues[order]
    right = right[:, order]
    defective = False
    try:
        dual = np.linalg.inv(right)
        gram = dual @ right
        residual = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    except np.linalg.LinAlgError:
        dual = np.linalg.pinv(right)
        residual = np.inf
    if residual > DEFECT_THRESHOLD:
        defective = True
    kept = eigenvalues.size
    if v_cut is not None and not defective:
        kept = int(np.searchsorted(-eigenvalues.real, v_cut, side="right"))
        kept = max(kept, 1)
    return EigenPropagator(
        eigenvalues=eigenvalues,
        right_vectors=right,
        dual_vectors=dual,
        kept_count=kept,
        biorthonormality_residual=residual,
        defective=defective,
    )


def propagate(rho0, ep, t):
    """Evolve rho0 to time t (ps) over the kept eigenmodes."""
    if t < 0:
        raise ValueError(f"propagation time must be nonnegative, got {t}")
    dim = rho0.shape[0]
    k = ep.kept_count
    c = ep.dual_vectors[:k] @ rho0.reshape(-1, order="F")
    weights = c * np.exp(ep.eigenvalues[:k] * t)
    vec = ep.right_vectors[:, :k] @ weights
    return vec.reshape(dim, dim, order="F")


def integrate_direct(rho0, v, t_end, tol=DEFAULT_TOL, grid_dt=DEFAULT_GRID_DT):
    """Adaptive direct integration of dvec(rho)/dt = V vec(rho).

    Returns (times, states) sampled on a uniform grid of spacing grid_dt.
    Serves as the independent oracle for :func:`propagate` and as the
    fallback path for defective decompositions.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    dim = rho0.shape[0]
    times = np.arange(0.0, t_end + grid_dt / 2, grid_dt)
    if times[-1] > t_end:
        times[-1] = t_end
    sol = solve_ivp(
        lambda _, y: v @ y, (0.0, t_end), rho0.reshape(-1, order="F"),
        method="DOP853", rtol=tol, atol=tol * 1e-3, t_eval=times)
    if not sol.success:
        raise NumericalError(f"direct integration failed: {sol.message}")
    states = [sol.y[:, k].reshape(dim, dim, order="F") for k in range(sol.y.shape[1])]
    return sol.t, states


def truncation_error_estimate(ep, rho0, window):
    """Upper bound on the dropped-mode contribution over a time window.

    The dropped tail contributes sum |c_k| e^{Re(v_k) t} in Frobenius norm
    (right vectors are unit-norm); with every Re(v_k) < 0 the bound is
    largest at the window start, so it is evaluated there.
    """
    t_start, _ = window
    if ep.kept_count >= ep.eigenvalues.size:
        return 0.0
    c = ep.dual_vectors[ep.kept_count:] @ rho0.reshape(-1, order="F")
    decay = np.exp(ep.eigenvalues[ep.kept_count:].real * t_start)
    return float(np.sum(np.abs(c) * decay))
