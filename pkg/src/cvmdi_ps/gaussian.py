"""Minimal Gaussian-state toolbox in shot-noise units.

States are described by a mean vector and a covariance matrix (CM) with
the quadrature ordering (q1, p1, q2, p2, ...) and vacuum variance
normalized to 1.  All operations are pure functions: they return new
``GaussianState`` objects and never mutate their inputs, so values can be
shared freely across parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GaussianState",
    "NumericalDegeneracyError",
    "tmsv_state",
    "vacuum_state",
    "coherent_state",
    "beam_splitter",
    "condition_homodyne",
    "partial_trace",
    "symplectic_form",
    "symplectic_eigenvalues",
    "symplectic_eigenvalues_batch",
    "gaussian_entropy",
    "entropy_from_nu",
    "pure_overlap_same_cm",
    "binary_entropy",
]

_SYM_TOL = 1e-12
_PHYS_TOL = 1e-9
_PINV_FLOOR = 1e-14
_CHOL_JITTER = 1e-12


class NumericalDegeneracyError(ArithmeticError):
    """A conditioning or inversion step hit a numerically singular block."""


@dataclass(frozen=True)
class GaussianState:
    """An n-mode Gaussian state: mean vector and covariance matrix.

    Attributes
    ----------
    mean : ndarray, shape (2n,)
        Quadrature mean vector, ordering (q1, p1, q2, p2, ...), SNU.
    cm : ndarray, shape (2n, 2n)
        Covariance matrix, vacuum variance = 1.  Symmetrized on
        construction; must be physical (symplectic eigenvalues >= 1 up
        to a small tolerance).
    """

    mean: np.ndarray
    cm: np.ndarray
    n_modes: int = field(init=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cm = np.asarray(self.cm, dtype=float).copy()
        if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
            raise ValueError("cm must be a square matrix")
        if cm.shape[0] % 2 or cm.shape[0] == 0:
            raise ValueError("cm must be 2n x 2n with n >= 1")
        if mean.shape != (cm.shape[0],):
            raise ValueError(
                f"mean length {mean.shape[0]} does not match cm size {cm.shape[0]}"
            )
        asym = np.max(np.abs(cm - cm.T)) if cm.size else 0.0
        if asym > _SYM_TOL:
            raise ValueError(f"cm is not symmetric (max asymmetry {asym:.3e})")
        cm = 0.5 * (cm + cm.T)
        n = cm.shape[0] // 2
        nu_min = np.min(symplectic_eigenvalues(cm, clamp=False))
        if nu_min < 1.0 - _PHYS_TOL:
            raise ValueError(f"cm is unphysical: min symplectic eigenvalue {nu_min}")
        mean.setflags(write=False)
        cm.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cm", cm)
        object.__setattr__(self, "n_modes", n)

    def mode_block(self, mode: int) -> np.ndarray:
        """2x2 CM block of a single mode."""
        s = slice(2 * mode, 2 * mode + 2)
        return self.cm[s, s]

    def mode_mean(self, mode: int) -> np.ndarray:
        return self.mean[2 * mode : 2 * mode + 2]


def vacuum_state(n_modes: int = 1) -> GaussianState:
    """n uncorrelated vacuum modes."""
    return GaussianState(np.zeros(2 * n_modes), np.eye(2 * n_modes))


def coherent_state(mean_q: float, mean_p: float = 0.0) -> GaussianState:
    """Single-mode coherent state with the given quadrature means (SNU)."""
    return GaussianState(np.array([mean_q, mean_p]), np.eye(2))


def tmsv_state(mu: float) -> GaussianState:
    """Two-mode squeezed vacuum with quadrature variance ``mu`` per mode.

    The CM has diagonal blocks mu*I and off-diagonal blocks
    sqrt(mu^2 - 1) * diag(1, -1); the mean is zero.
    """
    if mu < 1.0:
        raise ValueError(f"TMSV variance must be >= 1, got {mu}")
    c = np.sqrt(mu * mu - 1.0)
    z = np.diag([c, -c])
    cm = np.block([[mu * np.eye(2), z], [z, mu * np.eye(2)]])
    return GaussianState(np.zeros(4), cm)


def _bs_symplectic(n_modes: int, i: int, j: int, transmissivity: float) -> np.ndarray:
    t = np.sqrt(transmissivity)
    r = np.sqrt(1.0 - transmissivity)
    s = np.eye(2 * n_modes)
    ii, jj = slice(2 * i, 2 * i + 2), slice(2 * j, 2 * j + 2)
    s[ii, ii] = t * np.eye(2)
    s[ii, jj] = r * np.eye(2)
    s[jj, ii] = -r * np.eye(2)
    s[jj, jj] = t * np.eye(2)
    return s


def beam_splitter(state: GaussianState, i: int, j: int, transmissivity: float) -> GaussianState:
    """Mix modes i and j on a beam splitter of the given transmissivity.

    Applies the block symplectic [[sqrt(T) I, sqrt(1-T) I],
    [-sqrt(1-T) I, sqrt(T) I]] to modes (i, j) of the mean and CM; mode i
    carries the transmitted output.
    """
    n = state.n_modes
    if i == j:
        raise ValueError("beam splitter needs two distinct modes")
    for m in (i, j):
        if not 0 <= m < n:
            raise ValueError(f"mode index {m} out of range for {n}-mode state")
    if not 0.0 <= transmissivity <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {transmissivity}")
    s = _bs_symplectic(n, i, j, transmissivity)
    return GaussianState(s @ state.mean, s @ state.cm @ s.T)


def condition_homodyne(
    state: GaussianState, mode: int, quad: str, outcome: float
) -> tuple[GaussianState, float]:
    """Condition on a homodyne measurement of one quadrature of one mode.

    Returns the post-measurement state on the remaining modes (Schur
    complement with a pseudo-inverted projected block) and the Gaussian
    probability density of observing ``outcome``.
    """
    n = state.n_modes
    if not 0 <= mode < n:
        raise ValueError(f"mode index {mode} out of range for {n}-mode state")
    if quad not in ("q", "p"):
        raise ValueError(f"quad must be 'q' or 'p', got {quad!r}")
    k = 2 * mode + (0 if quad == "q" else 1)

    var = state.cm[k, k]
    if var <= 0.0:
        raise NumericalDegeneracyError(
            f"measured quadrature variance {var} is not positive"
        )
    keep = np.array([idx for idx in range(2 * n) if idx not in (2 * mode, 2 * mode + 1)])
    cross = state.cm[np.ix_(keep, [k])]  # column vector of covariances
    inv = 1.0 / max(var, _PINV_FLOOR)

    cm_new = state.cm[np.ix_(keep, keep)] - inv * (cross @ cross.T)
    shift = outcome - state.mean[k]
    mean_new = state.mean[keep] + inv * shift * cross[:, 0]
    density = np.exp(-0.5 * shift * shift / var) / np.sqrt(2.0 * np.pi * var)
    return GaussianState(mean_new, cm_new), float(density)


def partial_trace(state: GaussianState, keep: list[int]) -> GaussianState:
    """Restrict the state to the listed modes, in the order given."""
    if len(keep) == 0:
        raise ValueError("keep list must not be empty")
    if len(set(keep)) != len(keep):
        raise ValueError(f"keep list has duplicates: {keep}")
    for m in keep:
        if not 0 <= m < state.n_modes:
            raise ValueError(f"mode index {m} out of range for {state.n_modes}-mode state")
    idx = np.concatenate([[2 * m, 2 * m + 1] for m in keep])
    return GaussianState(state.mean[idx], state.cm[np.ix_(idx, idx)])


def symplectic_form(n_modes: int) -> np.ndarray:
    """Standard symplectic form for the (q1, p1, q2, p2, ...) ordering."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(cm: np.ndarray, clamp: bool = True) -> np.ndarray:
    """Symplectic eigenvalues of a 2n x 2n covariance matrix, ascending.

    Computed as the absolute eigenvalues of i*Omega*V, deduplicated to n
    values.  With ``clamp`` they are floored at 1 (physical CMs can fall
    marginally below from round-off).
    """
    cm = np.asarray(cm, dtype=float)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] % 2:
        raise ValueError("cm must be a square 2n x 2n matrix")
    if np.max(np.abs(cm - cm.T)) > 1e-10:
        raise ValueError("cm must be symmetric")
    n = cm.shape[0] // 2
    ev = np.linalg.eigvals(symplectic_form(n) @ cm)
    # eigenvalues come in pairs (+i nu, -i nu); average each pair
    nu = np.sort(np.abs(ev)).reshape(n, 2).mean(axis=1)
    if clamp:
        nu = np.maximum(nu, 1.0)
    return nu


def symplectic_eigenvalues_batch(cms: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues for a stack of CMs, shape (..., 2n, 2n) -> (..., n)."""
    cms = np.asarray(cms, dtype=float)
    n = cms.shape[-1] // 2
    omega = symplectic_form(n)
    ev = np.linalg.eigvals(omega @ cms)
    nu = np.sort(np.abs(ev), axis=-1).reshape(cms.shape[:-2] + (n, 2)).mean(axis=-1)
    return np.maximum(nu, 1.0)


def entropy_from_nu(nu: np.ndarray) -> np.ndarray:
    """Bosonic entropy h(nu) in bits, elementwise; h(nu <= 1) = 0."""
    nu = np.asarray(nu, dtype=float)
    safe = np.maximum(nu, 1.0 + 1e-15)
    up, dn = (safe + 1.0) / 2.0, (safe - 1.0) / 2.0
    h = up * np.log2(up) - dn * np.log2(dn)
    return np.where(nu <= 1.0 + 1e-12, 0.0, h)


def gaussian_entropy(cm: np.ndarray) -> float:
    """Von Neumann entropy (bits) of the Gaussian state with this CM."""
    return float(np.sum(entropy_from_nu(symplectic_eigenvalues(cm))))


def _solve_spd(cm: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve cm @ x = rhs by Cholesky, retrying once with diagonal jitter."""
    try:
        chol = np.linalg.cholesky(cm)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(cm + _CHOL_JITTER * np.eye(cm.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalDegeneracyError("covariance matrix is numerically singular") from exc
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, y)


def pure_overlap_same_cm(mean1: np.ndarray, mean2: np.ndarray, cm: np.ndarray) -> float:
    """Overlap of two equal-CM Gaussian states: exp(-1/4 d^T V^-1 d)."""
    d = np.asarray(mean1, dtype=float) - np.asarray(mean2, dtype=float)
    cm = np.asarray(cm, dtype=float)
    if d.shape[0] != cm.shape[0]:
        raise ValueError("mean length does not match cm size")
    return float(np.exp(-0.25 * d @ _solve_spd(cm, d)))


def binary_entropy(p) -> np.ndarray | float:
    """Binary entropy H2(p) in bits, with 0 log 0 = 0.

    Accepts scalars or arrays; values within 1e-12 of [0, 1] are clamped,
    anything further out raises.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
        raise ValueError(f"probability outside [0, 1]: {p}")
    arr = np.clip(arr, 0.0, 1.0)
    safe = np.clip(arr, 1e-300, 1.0)
    safe1 = np.clip(1.0 - arr, 1e-300, 1.0)
    h = -(arr * np.log2(safe) + (1.0 - arr) * np.log2(safe1))
    return h if isinstance(p, np.ndarray) else float(h)
