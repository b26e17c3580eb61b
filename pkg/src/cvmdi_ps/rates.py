"""Single-point information quantities and the secret-fraction integrand.

The mutual information, Eve's information (Holevo bound for complete and
restricted collective attacks, fidelity bound for individual attacks) and
the single-point rate are evaluated pointwise on the post-selection
coordinates.  All heavy functions broadcast over arrays; the integration
module feeds them whole grids at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .gaussian import (
    binary_entropy,
    entropy_from_nu,
    gaussian_entropy,
    pure_overlap_same_cm,
    symplectic_eigenvalues_batch,
)
from .probabilities import (
    SIGNS,
    CondSignProbs,
    PSPoint,
    cond_sign_probs_complete,
    cond_sign_probs_restricted,
    p_kappa_given_gamma_restricted,
)
from .protocol import DerivedNoise, ProtocolParams, eve_state_restricted

__all__ = [
    "OverlapCoeffs",
    "RateBreakdown",
    "PointField",
    "InternalConsistencyError",
    "overlap_coeffs",
    "eve_total_matrix",
    "mixture_cm_inflation",
    "restricted_eve_model",
    "point_field",
    "single_point_mutual_info",
    "single_point_holevo_complete",
    "single_point_holevo_restricted",
    "single_point_iae_individual",
    "single_point_rate",
]

_EIG_CLAMP = 1e-10


class InternalConsistencyError(RuntimeError):
    """A quantity violated an internal invariant (trace, normalization)."""


@dataclass(frozen=True)
class OverlapCoeffs:
    """Overlaps of Eve's conditional states and the basis coefficients.

    ``ov_a`` (``ov_b``) is the overlap between Eve's states for the two
    values of Alice's (Bob's) sign; ``c0sq``/``c1sq`` and ``cpsq``/``cmsq``
    are the squared magnitudes of the corresponding two-dimensional
    expansion coefficients, (1 +/- overlap)/2.
    """

    ov_a: np.ndarray | float
    ov_b: np.ndarray | float
    c0sq: np.ndarray | float
    c1sq: np.ndarray | float
    cpsq: np.ndarray | float
    cmsq: np.ndarray | float


@dataclass(frozen=True)
class RateBreakdown:
    """Mutual information, Eve's information, and the single-point rate."""

    i_ab: float
    eve_info: float
    rate: float


def overlap_coeffs(point: PSPoint, dn: DerivedNoise) -> OverlapCoeffs:
    """Closed-form overlaps A, B and the derived coefficient squares.

    A = exp[-A^2/2 (1 - eta tau_a / upsilon)] and likewise for B.  The
    exponents are non-positive for any physical parameters; a positive
    exponent signals an unphysical upsilon and raises.
    """
    fac_a = 1.0 - dn.eta * dn.tau_a / dn.upsilon
    fac_b = 1.0 - dn.eta * dn.tau_b / dn.upsilon
    if fac_a < -1e-12 or fac_b < -1e-12:
        raise InternalConsistencyError(
            f"overlap exponent positive (upsilon={dn.upsilon}): unphysical state"
        )
    amp_a = np.asarray(point.amp_a, dtype=float)
    amp_b = np.asarray(point.amp_b, dtype=float)
    ov_a = np.exp(-0.5 * amp_a**2 * max(fac_a, 0.0))
    ov_b = np.exp(-0.5 * amp_b**2 * max(fac_b, 0.0))
    return OverlapCoeffs(
        ov_a=ov_a,
        ov_b=ov_b,
        c0sq=0.5 * (1.0 + ov_a),
        c1sq=0.5 * (1.0 - ov_a),
        cpsq=0.5 * (1.0 + ov_b),
        cmsq=0.5 * (1.0 - ov_b),
    )


def _assemble_eve_total(coeffs: OverlapCoeffs, joint: np.ndarray) -> np.ndarray:
    """Eve's total state in the product basis, shape (..., 4, 4).

    Built as sum_{kappa,bsign} p(kappa,bsign|...) K(kappa) x B(bsign)
    with K, B the rank-1 projectors of the two-dimensional expansions;
    the off-diagonal entries carry the sign sums of the joint
    probabilities.  Basis order: {Phi0 Phi+, Phi0 Phi-, Phi1 Phi+, Phi1 Phi-}.
    """
    c0 = np.sqrt(coeffs.c0sq)
    c1 = np.sqrt(coeffs.c1sq)
    cp = np.sqrt(coeffs.cpsq)
    cm = np.sqrt(coeffs.cmsq)

    # sign sums over the joint: indices [ik, ib] with 0 <-> +
    l_pmpm = joint[0, 0] - joint[0, 1] + joint[1, 0] - joint[1, 1]
    l_ppmm = joint[0, 0] + joint[0, 1] - joint[1, 0] - joint[1, 1]
    l_pmmp = joint[0, 0] - joint[0, 1] - joint[1, 0] + joint[1, 1]

    shape = np.broadcast_shapes(
        np.shape(c0), np.shape(cp), joint.shape[2:]
    )
    rho = np.empty(shape + (4, 4))
    rho[..., 0, 0] = c0 * c0 * cp * cp
    rho[..., 1, 1] = c0 * c0 * cm * cm
    rho[..., 2, 2] = c1 * c1 * cp * cp
    rho[..., 3, 3] = c1 * c1 * cm * cm
    rho[..., 0, 1] = c0 * c0 * cp * cm * l_pmpm
    rho[..., 0, 2] = c0 * c1 * cp * cp * l_ppmm
    rho[..., 0, 3] = c0 * c1 * cp * cm * l_pmmp
    rho[..., 1, 2] = c0 * c1 * cp * cm * l_pmmp
    rho[..., 1, 3] = c0 * c1 * cm * cm * l_ppmm
    rho[..., 2, 3] = c1 * c1 * cp * cm * l_pmpm
    for i in range(4):
        for j in range(i):
            rho[..., i, j] = rho[..., j, i]
    return rho


def eve_total_matrix(coeffs: OverlapCoeffs, joint_sign_probs: np.ndarray) -> np.ndarray:
    """Eve's total 4x4 density matrix for one point.

    ``joint_sign_probs`` is the (2, 2) array of p(kappa, bsign | A, B,
    gamma) with index 0 <-> sign +.  Raises if the probabilities do not
    sum to 1 or the assembled matrix is not PSD within tolerance.
    """
    joint = np.asarray(joint_sign_probs, dtype=float)
    if joint.shape != (2, 2):
        raise ValueError("joint_sign_probs must have shape (2, 2)")
    if abs(float(joint.sum()) - 1.0) > 1e-9:
        raise InternalConsistencyError(f"sign probabilities sum to {joint.sum()}")
    rho = _assemble_eve_total(coeffs, joint.reshape(2, 2))
    if abs(float(np.trace(rho)) - 1.0) > 1e-9:
        raise InternalConsistencyError(f"trace {np.trace(rho)} deviates from 1")
    if np.min(np.linalg.eigvalsh(rho)) < -_EIG_CLAMP:
        raise InternalConsistencyError("total matrix has a negative eigenvalue")
    return rho


def _entropy_from_eigs(lams: np.ndarray) -> np.ndarray:
    """Shannon entropy in bits over the last axis, clamping to [0, 1]."""
    lams = np.clip(lams, 0.0, 1.0)
    lams = lams / np.sum(lams, axis=-1, keepdims=True)
    safe = np.clip(lams, 1e-300, 1.0)
    return -np.sum(lams * np.log2(safe), axis=-1)


def _conditional_pair_entropy(p_plus: np.ndarray, cpsq, cmsq) -> np.ndarray:
    """Entropy of Eve's conditional state for one value of kappa.

    Closed-form eigenvalues (1 +/- sqrt(1 - 16 p+ p- |c-|^2 |c+|^2)) / 2.
    """
    radicand = np.clip(1.0 - 16.0 * p_plus * (1.0 - p_plus) * cpsq * cmsq, 0.0, 1.0)
    root = np.sqrt(radicand)
    lam1 = 0.5 * (1.0 + root)
    lam2 = 0.5 * (1.0 - root)
    return _entropy_from_eigs(np.stack([lam1, lam2], axis=-1))


def holevo_complete_from_probs(probs: CondSignProbs, coeffs: OverlapCoeffs) -> np.ndarray:
    """Single-point Holevo bound for the complete scenario, vectorized."""
    rho = _assemble_eve_total(coeffs, probs.joint)
    total_entropy = _entropy_from_eigs(np.linalg.eigvalsh(rho))
    cond = 0.0
    for ik in range(2):
        s_k = _conditional_pair_entropy(
            probs.bsign_given_kappa[ik, 0], coeffs.cpsq, coeffs.cmsq
        )
        cond = cond + probs.kappa_marginal[ik] * s_k
    return total_entropy - cond


def single_point_holevo_complete(point: PSPoint, dn: DerivedNoise, params: ProtocolParams) -> float:
    """Holevo bound at one point, complete collective eavesdropping."""
    if params.is_restricted:
        raise ValueError("complete-scenario Holevo requires the complete scenario")
    if params.detector_model == "trusted":
        raise ValueError(
            "complete-scenario Holevo assumes Eve controls the detector noise; "
            "use the untrusted or absorbed detector model"
        )
    probs = cond_sign_probs_complete(point, dn)
    coeffs = overlap_coeffs(point, dn)
    return float(holevo_complete_from_probs(probs, coeffs))


def mixture_cm_inflation(
    cm: np.ndarray, mean_plus: np.ndarray, mean_minus: np.ndarray, p_plus: float
) -> np.ndarray:
    """CM of an equal-CM two-component Gaussian mixture.

    V' = V + p(+) p(-) (x+ - x-)(x+ - x-)^T.
    """
    if not 0.0 <= p_plus <= 1.0:
        raise ValueError(f"p_plus must lie in [0, 1], got {p_plus}")
    d = np.asarray(mean_plus, dtype=float) - np.asarray(mean_minus, dtype=float)
    cm = np.asarray(cm, dtype=float)
    if d.shape[0] != cm.shape[0]:
        raise ValueError("mean length does not match cm size")
    return cm + p_plus * (1.0 - p_plus) * np.outer(d, d)


@dataclass(frozen=True)
class RestrictedEveModel:
    """Toolbox-derived constants of Eve's restricted-scenario states.

    The conditional CM is independent of the point, and the mean
    difference between the kappa = +/- states is linear in Alice's
    amplitude, so a single state construction fixes everything the rate
    needs: ``dmean`` is the mean difference at unit amplitude,
    ``cond_entropy`` the entropy of the conditional CM, and
    ``overlap_quad`` the quadratic form d^T V^-1 d at unit amplitude.
    """

    cm: np.ndarray
    dmean: np.ndarray
    cond_entropy: float
    overlap_quad: float


@lru_cache(maxsize=16)
def restricted_eve_model(params: ProtocolParams) -> RestrictedEveModel:
    plus = eve_state_restricted(params, 1, 1.0, 0.0)
    minus = eve_state_restricted(params, -1, 1.0, 0.0)
    if np.max(np.abs(plus.cm - minus.cm)) > 1e-10:
        raise InternalConsistencyError("restricted Eve CM depends on kappa")
    dmean = plus.mean - minus.mean
    quad = -4.0 * np.log(pure_overlap_same_cm(plus.mean, minus.mean, plus.cm))
    return RestrictedEveModel(
        cm=plus.cm,
        dmean=dmean,
        cond_entropy=gaussian_entropy(plus.cm),
        overlap_quad=quad,
    )


def _mixture_total_entropy(model: RestrictedEveModel, scale: np.ndarray) -> np.ndarray:
    """Entropy of V + scale * d d^T via batched symplectic eigenvalues."""
    outer = np.einsum("i,j->ij", model.dmean, model.dmean)
    cms = model.cm + np.asarray(scale)[..., None, None] * outer
    return entropy_from_nu(symplectic_eigenvalues_batch(cms)).sum(axis=-1)


@lru_cache(maxsize=32)
def _entropy_spline(params: ProtocolParams, u_hi: float, n_knots: int = 1025):
    """Cubic spline of the inflated-CM entropy over u = sqrt(scale).

    The mixture CM is a one-parameter family, so the entropy of the
    rank-one update only ever depends on the scalar scale; interpolating
    it removes an eigensolve from every grid point.  Knots are uniform in
    u, where the entropy is smooth with vanishing slope at 0.
    """
    from scipy.interpolate import CubicSpline

    model = restricted_eve_model(params)
    u = np.linspace(0.0, u_hi, n_knots)
    return CubicSpline(u, _mixture_total_entropy(model, u * u))


def holevo_restricted_field(
    amp_a, gamma, dn: DerivedNoise, params: ProtocolParams, exact: bool = False
) -> np.ndarray:
    """Restricted-collective Holevo bound, vectorized over (amp_a, gamma).

    Total-state entropy uses the Gaussian upper bound on the two-component
    mixture CM; the difference is clamped at 0 (numerical noise near
    amp_a -> 0 can push it marginally negative).  By default the entropy
    of the rank-one CM family comes from a cached spline in sqrt(scale)
    (accurate to ~1e-10); ``exact`` forces per-point eigensolves.
    """
    model = restricted_eve_model(params)
    amp_a = np.asarray(amp_a, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    p_plus = p_kappa_given_gamma_restricted(amp_a, gamma, 1, dn)
    shape = np.broadcast_shapes(amp_a.shape, gamma.shape)
    scale = np.broadcast_to(p_plus * (1.0 - p_plus) * amp_a**2, shape)
    if exact or scale.size <= 8:
        total_entropy = _mixture_total_entropy(model, scale)
    else:
        u = np.sqrt(scale)
        # quantized range keeps the cached knot grid call-order independent
        u_hi = 2.0 ** math.ceil(math.log2(max(float(u.max()), 1.0)))
        total_entropy = _entropy_spline(params, u_hi)(u)
    return np.maximum(total_entropy - model.cond_entropy, 0.0)


def iae_individual_field(amp_a, gamma, dn: DerivedNoise, params: ProtocolParams) -> np.ndarray:
    """Individual-attack information, vectorized (gamma enters only via shape).

    The overlap of Eve's two conditional states is F = exp(-A^2 q / 4)
    with q the unit-amplitude quadratic form; Eve's error probability is
    bounded below by (1 - sqrt(1 - F)) / 2.
    """
    model = restricted_eve_model(params)
    amp_a = np.asarray(amp_a, dtype=float)
    fid = np.exp(-0.25 * amp_a**2 * model.overlap_quad)
    if np.any(fid > 1.0 + 1e-10) or np.any(fid < -1e-10):
        raise InternalConsistencyError("overlap outside [0, 1]")
    f_minus = 0.5 * (1.0 - np.sqrt(np.clip(1.0 - fid, 0.0, 1.0)))
    iae = 1.0 - binary_entropy(f_minus)
    return np.broadcast_to(iae, np.broadcast_shapes(amp_a.shape, np.shape(gamma))).copy()


def single_point_holevo_restricted(
    amp_a: float, gamma: float, dn: DerivedNoise, params: ProtocolParams
) -> float:
    if not params.is_restricted:
        raise ValueError("restricted Holevo requires a restricted scenario")
    return float(holevo_restricted_field(amp_a, gamma, dn, params))


def single_point_iae_individual(
    amp_a: float, gamma: float, dn: DerivedNoise, params: ProtocolParams
) -> float:
    if not params.is_restricted:
        raise ValueError("individual-attack information requires a restricted scenario")
    return float(iae_individual_field(amp_a, gamma, dn, params))


def mutual_info_from_probs(probs: CondSignProbs) -> np.ndarray:
    """Single-point mutual information from the sign probabilities."""
    h_prior = binary_entropy(probs.kappa_marginal[0])
    h_cond = 0.0
    for ib in range(2):
        h_cond = h_cond + probs.bsign_marginal[ib] * binary_entropy(
            probs.kappa_given_bsign[0, ib]
        )
    return h_prior - h_cond


def single_point_mutual_info(point: PSPoint, dn: DerivedNoise, params: ProtocolParams) -> float:
    """Mutual information between the reconciled signs at one point."""
    if params.is_restricted:
        probs = cond_sign_probs_restricted(point, dn)
    else:
        probs = cond_sign_probs_complete(point, dn)
    return float(mutual_info_from_probs(probs))


def eve_info_field(amp_a, amp_b, gamma, dn: DerivedNoise, params: ProtocolParams):
    """Eve's information per point for the configured scenario, vectorized."""
    if params.scenario == "complete_collective":
        if params.detector_model == "trusted":
            raise ValueError(
                "complete-scenario Holevo assumes Eve controls the detector noise; "
                "use the untrusted or absorbed detector model"
            )
        point = PSPoint(amp_a, amp_b, gamma)
        probs = cond_sign_probs_complete(point, dn)
        coeffs = overlap_coeffs(point, dn)
        return holevo_complete_from_probs(probs, coeffs)
    if params.scenario == "restricted_collective":
        return holevo_restricted_field(amp_a, gamma, dn, params)
    return iae_individual_field(amp_a, gamma, dn, params)


class PointField(NamedTuple):
    """Vectorized integrand pieces on a broadcast set of points.

    ``kernel`` is the sign-summed conditional density of the broadcast
    variables (the joint post-selection density divided by the magnitude
    priors), so the quadrature can fold the priors into its axis weights.
    """

    i_ab: np.ndarray
    eve_info: np.ndarray
    kernel: np.ndarray


def point_field(amp_a, amp_b, gamma, dn: DerivedNoise, params: ProtocolParams) -> PointField:
    """Mutual information, Eve information and density kernel, one pass."""
    point = PSPoint(amp_a, amp_b, gamma)
    if params.scenario == "complete_collective":
        if params.detector_model == "trusted":
            raise ValueError(
                "complete-scenario Holevo assumes Eve controls the detector noise; "
                "use the untrusted or absorbed detector model"
            )
        probs = cond_sign_probs_complete(point, dn)
        i_ab = mutual_info_from_probs(probs)
        eve = holevo_complete_from_probs(probs, overlap_coeffs(point, dn))
        kernel = np.exp(probs.log_norm) / np.sqrt(2.0 * np.pi * dn.upsilon)
    else:
        probs = cond_sign_probs_restricted(point, dn)
        i_ab = mutual_info_from_probs(probs)
        if params.scenario == "restricted_collective":
            eve = holevo_restricted_field(amp_a, gamma, dn, params)
        else:
            eve = iae_individual_field(amp_a, gamma, dn, params)
        norm = 2.0 * np.pi * np.sqrt(dn.upsilon_tilde * dn.v_b)
        kernel = np.exp(probs.log_norm) / norm
    return PointField(i_ab=i_ab, eve_info=eve, kernel=kernel)


def single_point_rate(point: PSPoint, dn: DerivedNoise, params: ProtocolParams) -> RateBreakdown:
    """Single-point rate beta * I_AB - (Eve's information) at one point."""
    i_ab = single_point_mutual_info(point, dn, params)
    if params.scenario == "complete_collective":
        eve = single_point_holevo_complete(point, dn, params)
    elif params.scenario == "restricted_collective":
        eve = single_point_holevo_restricted(
            float(np.asarray(point.amp_a)), float(np.asarray(point.gamma)), dn, params
        )
    else:
        eve = single_point_iae_individual(
            float(np.asarray(point.amp_a)), float(np.asarray(point.gamma)), dn, params
        )
    return RateBreakdown(i_ab=i_ab, eve_info=eve, rate=params.beta_rec * i_ab - eve)
