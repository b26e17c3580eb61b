"""Closed-form probabilities of the post-selection variables.

Every function broadcasts over numpy arrays, so the same code serves the
single-point API and the quadrature/Monte-Carlo grids.  Sign conditionals
use the logistic closed forms evaluated with a stable sigmoid; joint sign
probabilities come from direct Bayes normalization over the constituent
Gaussian likelihoods in the log domain, which makes every marginalization
identity hold to machine precision.

Sign indexing convention used throughout: axis index 0 <-> sign +1 and
index 1 <-> sign -1 (Alice's bit 0 encodes kappa = +).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .protocol import DerivedNoise, ProtocolParams

__all__ = [
    "SIGNS",
    "PSPoint",
    "SignPair",
    "CondSignProbs",
    "gaussian_prior_density",
    "gamma_mean_complete",
    "gamma_mean_restricted",
    "bb_mean_restricted",
    "p_gamma_complete",
    "p_gamma_restricted",
    "p_bb_given_kag",
    "p_kappa_given_bsign_complete",
    "p_bsign_given_kappa_complete",
    "p_kappa_given_gamma_restricted",
    "p_kappa_given_bsign_restricted",
    "p_bsign_given_kappa_restricted",
    "cond_sign_probs_complete",
    "cond_sign_probs_restricted",
    "joint_ps_density",
]

SIGNS = (1, -1)


@dataclass(frozen=True)
class PSPoint:
    """One post-selection coordinate (or an array of them), SNU.

    ``amp_a`` and ``amp_b`` are the broadcast magnitudes of Alice's and
    Bob's q-values; ``gamma`` is the relay q-outcome.
    """

    amp_a: np.ndarray | float
    amp_b: np.ndarray | float
    gamma: np.ndarray | float

    def __post_init__(self):
        if np.any(np.asarray(self.amp_a) < 0.0) or np.any(np.asarray(self.amp_b) < 0.0):
            raise ValueError("amplitudes must be >= 0")


@dataclass(frozen=True)
class SignPair:
    """Alice's sign kappa and Bob's sign, each +1 or -1."""

    kappa: int
    bsign: int

    def __post_init__(self):
        if self.kappa not in SIGNS or self.bsign not in SIGNS:
            raise ValueError("signs must be +1 or -1")


def gaussian_prior_density(x, sigma):
    """Zero-mean Gaussian density with *variance* sigma."""
    if np.any(np.asarray(sigma) <= 0.0):
        raise ValueError(f"variance must be positive, got {sigma}")
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x / sigma) / np.sqrt(2.0 * np.pi * sigma)


def _norm_pdf(x, mean, var):
    d = np.asarray(x, dtype=float) - mean
    return np.exp(-0.5 * d * d / var) / np.sqrt(2.0 * np.pi * var)


def gamma_mean_complete(kappa, amp_a, bsign, amp_b, dn: DerivedNoise):
    """Conditional mean of gamma given both signs and magnitudes."""
    return -(kappa * dn.coupling_a * amp_a - bsign * dn.coupling_b * amp_b)


def gamma_mean_restricted(kappa, amp_a, dn: DerivedNoise):
    return -kappa * dn.coupling_a * amp_a


def bb_mean_restricted(kappa, amp_a, gamma, dn: DerivedNoise):
    """Conditional mean of Bob's broadcast value given (kappa, A, gamma)."""
    return dn.bb_mean_coeff * (gamma + kappa * dn.coupling_a * amp_a) / dn.upsilon_tilde


def p_gamma_complete(point: PSPoint, signs: SignPair, dn: DerivedNoise):
    """Density of the relay outcome gamma, complete scenario."""
    mean = gamma_mean_complete(signs.kappa, point.amp_a, signs.bsign, point.amp_b, dn)
    return _norm_pdf(point.gamma, mean, dn.upsilon)


def p_gamma_restricted(amp_a, gamma, kappa, dn: DerivedNoise):
    """Density of the relay outcome gamma, restricted scenario."""
    return _norm_pdf(gamma, gamma_mean_restricted(kappa, amp_a, dn), dn.upsilon_tilde)


def p_bb_given_kag(point: PSPoint, kappa, bsign, dn: DerivedNoise):
    """Density of Bob's broadcast value bsign*amp_b given (kappa, A, gamma)."""
    mean = bb_mean_restricted(kappa, point.amp_a, point.gamma, dn)
    return _norm_pdf(bsign * point.amp_b, mean, dn.v_b)


def p_kappa_given_bsign_complete(point: PSPoint, kappa, bsign, dn: DerivedNoise):
    """p(kappa | bsign, A, B, gamma), complete scenario (logistic form)."""
    a = dn.coupling_a * point.amp_a
    b = dn.coupling_b * point.amp_b
    return expit(-2.0 * kappa * a * (point.gamma - bsign * b) / dn.upsilon)


def p_bsign_given_kappa_complete(point: PSPoint, kappa, bsign, dn: DerivedNoise):
    """p(bsign | kappa, A, B, gamma), complete scenario (logistic form)."""
    a = dn.coupling_a * point.amp_a
    b = dn.coupling_b * point.amp_b
    return expit(2.0 * bsign * b * (point.gamma + kappa * a) / dn.upsilon)


def p_kappa_given_gamma_restricted(amp_a, gamma, kappa, dn: DerivedNoise):
    """p(kappa | A, gamma) in the restricted scenario (no Bob data)."""
    a = dn.coupling_a * np.asarray(amp_a, dtype=float)
    return expit(-2.0 * kappa * a * np.asarray(gamma) / dn.upsilon_tilde)


def p_bsign_given_kappa_restricted(point: PSPoint, kappa, bsign, dn: DerivedNoise):
    """p(bsign | kappa, A, B, gamma), restricted scenario (logistic form)."""
    a = dn.coupling_a * point.amp_a
    z = point.gamma + kappa * a
    return expit(2.0 * bsign * point.amp_b * z * dn.delta_coeff / dn.upsilon_tilde_prime)


def p_kappa_given_bsign_restricted(point: PSPoint, kappa, bsign, dn: DerivedNoise):
    """p(kappa | bsign, A, B, gamma), restricted scenario (logistic form)."""
    a = dn.coupling_a * point.amp_a
    gamma_prime = dn.gamma_prime_factor * point.gamma
    z = gamma_prime - bsign * point.amp_b * dn.delta_coeff
    return expit(-2.0 * kappa * a * z / dn.upsilon_tilde_prime)


@dataclass(frozen=True)
class CondSignProbs:
    """All sign probabilities at a point, indexed with 0 <-> +1, 1 <-> -1.

    ``joint[ik, ib]`` is p(kappa, bsign | A, B, gamma); the marginals and
    the two families of conditionals follow the same index convention,
    with ``kappa_given_bsign[ik, ib]`` = p(kappa | bsign, ...) and
    ``bsign_given_kappa[ik, ib]`` = p(bsign | kappa, ...).
    ``log_norm`` is the log of the summed unnormalized likelihoods (the
    Bayes normalizer, up to the Gaussian prefactors), reused by the joint
    post-selection density.
    """

    joint: np.ndarray
    kappa_marginal: np.ndarray
    bsign_marginal: np.ndarray
    kappa_given_bsign: np.ndarray
    bsign_given_kappa: np.ndarray
    log_norm: np.ndarray


def _normalize_joint(loglik: np.ndarray):
    """Direct Bayes over a (2, 2, ...) log-likelihood array."""
    flat = loglik.reshape((4,) + loglik.shape[2:])
    log_norm = logsumexp(flat, axis=0)
    joint = np.exp(flat - log_norm).reshape(loglik.shape)
    kappa_marginal = joint.sum(axis=1)
    bsign_marginal = joint.sum(axis=0)
    return joint, kappa_marginal, bsign_marginal, log_norm


def cond_sign_probs_complete(point: PSPoint, dn: DerivedNoise) -> CondSignProbs:
    """Joint, marginal and conditional sign probabilities, complete scenario."""
    gamma = np.asarray(point.gamma, dtype=float)
    shape = np.broadcast_shapes(
        np.shape(point.amp_a), np.shape(point.amp_b), np.shape(gamma)
    )
    loglik = np.empty((2, 2) + shape)
    for ik, kappa in enumerate(SIGNS):
        for ib, bsign in enumerate(SIGNS):
            mean = gamma_mean_complete(kappa, point.amp_a, bsign, point.amp_b, dn)
            d = gamma - mean
            loglik[ik, ib] = -0.5 * d * d / dn.upsilon
    joint, kappa_marginal, bsign_marginal, log_norm = _normalize_joint(loglik)

    kgb = np.empty_like(joint)
    bgk = np.empty_like(joint)
    for ik, kappa in enumerate(SIGNS):
        for ib, bsign in enumerate(SIGNS):
            kgb[ik, ib] = p_kappa_given_bsign_complete(point, kappa, bsign, dn)
            bgk[ik, ib] = p_bsign_given_kappa_complete(point, kappa, bsign, dn)
    return CondSignProbs(joint, kappa_marginal, bsign_marginal, kgb, bgk, log_norm)


def cond_sign_probs_restricted(point: PSPoint, dn: DerivedNoise) -> CondSignProbs:
    """Joint, marginal and conditional sign probabilities, restricted scenario."""
    gamma = np.asarray(point.gamma, dtype=float)
    shape = np.broadcast_shapes(
        np.shape(point.amp_a), np.shape(point.amp_b), np.shape(gamma)
    )
    loglik = np.empty((2, 2) + shape)
    for ik, kappa in enumerate(SIGNS):
        mean_g = gamma_mean_restricted(kappa, point.amp_a, dn)
        dg = gamma - mean_g
        log_pg = -0.5 * dg * dg / dn.upsilon_tilde
        mean_b = bb_mean_restricted(kappa, point.amp_a, gamma, dn)
        for ib, bsign in enumerate(SIGNS):
            db = bsign * point.amp_b - mean_b
            loglik[ik, ib] = log_pg - 0.5 * db * db / dn.v_b
    joint, kappa_marginal, bsign_marginal, log_norm = _normalize_joint(loglik)

    kgb = np.empty_like(joint)
    bgk = np.empty_like(joint)
    for ik, kappa in enumerate(SIGNS):
        for ib, bsign in enumerate(SIGNS):
            kgb[ik, ib] = p_kappa_given_bsign_restricted(point, kappa, bsign, dn)
            bgk[ik, ib] = p_bsign_given_kappa_restricted(point, kappa, bsign, dn)
    return CondSignProbs(joint, kappa_marginal, bsign_marginal, kgb, bgk, log_norm)


def gamma_kernel_complete(point: PSPoint, dn: DerivedNoise):
    """Sum over signs of p(gamma | kappa, bsign, A, B)."""
    total = 0.0
    for kappa in SIGNS:
        for bsign in SIGNS:
            total = total + p_gamma_complete(point, SignPair(kappa, bsign), dn)
    return total


def gamma_kernel_restricted(point: PSPoint, dn: DerivedNoise):
    """Sum over signs of p(bsign*B | kappa, A, gamma) p(gamma | kappa, A)."""
    total = 0.0
    for kappa in SIGNS:
        pg = p_gamma_restricted(point.amp_a, point.gamma, kappa, dn)
        for bsign in SIGNS:
            total = total + p_bb_given_kag(point, kappa, bsign, dn) * pg
    return total


def joint_ps_density(point: PSPoint, dn: DerivedNoise, params: ProtocolParams):
    """Total density p(A, B, gamma) of the post-selection variables.

    The sign/magnitude factorization of the Gaussian priors makes
    p(kappa, A) = p(A; sigma) for either sign, so the sign sums inside the
    kernels reproduce the folded normalization.
    """
    prior_a = gaussian_prior_density(point.amp_a, params.sigma_a)
    if params.is_restricted:
        return prior_a * gamma_kernel_restricted(point, dn)
    prior_b = gaussian_prior_density(point.amp_b, params.sigma_b)
    return prior_a * prior_b * gamma_kernel_complete(point, dn)
