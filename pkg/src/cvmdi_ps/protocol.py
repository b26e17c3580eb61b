"""Protocol parameterization and Gaussian state construction.

Channel, detector, modulation and reconciliation parameters live in
``ProtocolParams``.  ``derived_noise`` turns them into the handful of
scalars (relay outcome variances, Bob-side conditional moments) that the
closed-form probability formulas consume.  The remaining functions build
the full multimode Gaussian state of one protocol use and condition it on
the relay measurement, which is the ground truth the closed forms are
tested against.

Mode ordering conventions (fixed; all traces index against these):

* complete scenario:   (A, B, E1, e1, E2, e2[, D1, d1, D2, d2])
* restricted scenario: (A, b, B, E1, e1, E2, e2[, D1, d1, D2, d2])

where A/B are the signal modes sent to the relay, b is Bob's retained
TMSV mode, (E1, e1) and (E2, e2) are the eavesdropper TMSVs on the two
links, and (D1, d1), (D2, d2) are the detector-noise TMSVs.  Detector
modes are present for the trusted/untrusted models unless they are exactly
inert (eta = 1 and S = 1); the absorbed model never carries them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .gaussian import (
    GaussianState,
    beam_splitter,
    coherent_state,
    condition_homodyne,
    partial_trace,
    tmsv_state,
)

__all__ = [
    "SCENARIOS",
    "DETECTOR_MODELS",
    "ProtocolParams",
    "OmegaPair",
    "DerivedNoise",
    "tau_from_db",
    "tau_from_km",
    "omega_from_epsilon",
    "derived_noise",
    "derived_for",
    "build_pre_relay_state",
    "apply_relay",
    "relay_and_condition",
    "RelayOutcome",
    "eve_state_complete",
    "eve_state_restricted",
    "bob_heterodyne_moments",
    "relay_outcome_variances",
]

SCENARIOS = ("complete_collective", "restricted_individual", "restricted_collective")
DETECTOR_MODELS = ("trusted", "untrusted", "absorbed")

LOSS_DB_PER_KM = 0.2


@dataclass(frozen=True)
class ProtocolParams:
    """All channel, detector, modulation and reconciliation parameters.

    Variances are in shot-noise units.  ``mu`` is Bob's TMSV variance and
    only matters for the restricted scenarios; it must still be > 1 so the
    derived quantities stay well defined.
    """

    tau_a: float = 1.0
    tau_b: float = 1.0
    eps_a: float = 0.0
    eps_b: float = 0.0
    eta: float = 1.0
    s_det: float = 1.0
    detector_model: str = "untrusted"
    sigma_a: float = 2.0
    sigma_b: float = 2.0
    mu: float = 2.0
    beta_rec: float = 1.0
    beta_mode: str = "pointwise"
    scenario: str = "complete_collective"

    def __post_init__(self):
        def require(cond, msg):
            if not cond:
                raise ValueError(msg)

        require(0.0 < self.tau_a <= 1.0, f"tau_a must lie in (0, 1], got {self.tau_a}")
        require(0.0 < self.tau_b <= 1.0, f"tau_b must lie in (0, 1], got {self.tau_b}")
        require(self.eps_a >= 0.0, f"eps_a must be >= 0, got {self.eps_a}")
        require(self.eps_b >= 0.0, f"eps_b must be >= 0, got {self.eps_b}")
        require(0.0 < self.eta <= 1.0, f"eta must lie in (0, 1], got {self.eta}")
        require(self.s_det >= 1.0, f"s_det must be >= 1, got {self.s_det}")
        require(
            self.detector_model in DETECTOR_MODELS,
            f"detector_model must be one of {DETECTOR_MODELS}, got {self.detector_model!r}",
        )
        require(
            self.detector_model != "absorbed" or self.s_det == 1.0,
            "absorbed detector model is only valid with s_det = 1",
        )
        require(self.sigma_a >= 0.0, f"sigma_a must be >= 0, got {self.sigma_a}")
        require(self.sigma_b >= 0.0, f"sigma_b must be >= 0, got {self.sigma_b}")
        require(self.mu > 1.0, f"mu must be > 1, got {self.mu}")
        require(0.0 < self.beta_rec <= 1.0, f"beta_rec must lie in (0, 1], got {self.beta_rec}")
        require(
            self.beta_mode in ("pointwise", "global"),
            f"beta_mode must be 'pointwise' or 'global', got {self.beta_mode!r}",
        )
        require(
            self.scenario in SCENARIOS,
            f"scenario must be one of {SCENARIOS}, got {self.scenario!r}",
        )

    @property
    def is_restricted(self) -> bool:
        return self.scenario != "complete_collective"

    def effective_channel(self) -> tuple[float, float, float, float]:
        """(tau_a, tau_b, eta, s_det) after detector-model rewriting.

        The absorbed model folds the detector efficiency into the link
        transmissivities (tau -> eta*tau, eta -> 1); the other models pass
        the raw values through.
        """
        if self.detector_model == "absorbed":
            return self.eta * self.tau_a, self.eta * self.tau_b, 1.0, 1.0
        return self.tau_a, self.tau_b, self.eta, self.s_det

    def with_total_distance(self, total_km: float) -> "ProtocolParams":
        """Symmetric configuration at the given total Alice-Bob distance."""
        tau = tau_from_km(total_km / 2.0)
        return replace(self, tau_a=tau, tau_b=tau)

    def with_link_distances(self, alice_km: float, bob_km: float) -> "ProtocolParams":
        return replace(self, tau_a=tau_from_km(alice_km), tau_b=tau_from_km(bob_km))


class OmegaPair(NamedTuple):
    """Thermal variances of the two entangling-cloner TMSVs (SNU)."""

    omega_a: float
    omega_b: float


@dataclass(frozen=True)
class DerivedNoise:
    """Scalars derived from the protocol parameters.

    ``upsilon`` is the relay outcome variance in the complete scenario,
    ``upsilon_tilde`` its restricted-scenario counterpart and
    ``upsilon_tilde_prime`` the conditional variance appearing in the
    restricted sign probabilities (numerically equal to ``upsilon``; kept
    as its own field).  ``v_b`` and ``bb_mean_coeff`` give Bob's
    heterodyne-outcome distribution conditioned on the relay outcome,
    ``delta_coeff`` the coupling of that outcome into the sign
    probabilities, and ``gamma_prime_factor`` the relay-outcome rescaling
    in the reverse conditional (identically 1 after Bayes consistency is
    enforced).  The effective channel values and the thermal variances the
    scalars were computed from are carried along for downstream formulas.
    """

    upsilon: float
    upsilon_tilde: float
    upsilon_tilde_prime: float
    delta_coeff: float
    v_b: float
    xi: float
    gamma_prime_factor: float
    mu: float
    eta: float
    tau_a: float
    tau_b: float
    s_det: float
    omega_a: float
    omega_b: float

    @property
    def coupling_a(self) -> float:
        """sqrt(eta * tau_a / 2): weight of Alice's amplitude in gamma."""
        return math.sqrt(0.5 * self.eta * self.tau_a)

    @property
    def coupling_b(self) -> float:
        """sqrt(eta * tau_b / 2): weight of Bob's amplitude in gamma."""
        return math.sqrt(0.5 * self.eta * self.tau_b)

    @property
    def bb_mean_coeff(self) -> float:
        """sqrt((mu^2 - 1) eta tau_b / 2): slope of Bob's conditional mean."""
        return math.sqrt((self.mu**2 - 1.0) * 0.5 * self.eta * self.tau_b)


def tau_from_db(loss_db: float) -> float:
    """Transmissivity of a link with the given loss: 10^(-dB/10)."""
    if loss_db < 0.0:
        raise ValueError(f"loss must be >= 0 dB, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def tau_from_km(length_km: float) -> float:
    """Transmissivity of standard fiber at 0.2 dB/km."""
    if length_km < 0.0:
        raise ValueError(f"length must be >= 0 km, got {length_km}")
    return tau_from_db(LOSS_DB_PER_KM * length_km)


def omega_from_epsilon(params: ProtocolParams) -> OmegaPair:
    """Thermal variances reproducing the per-link excess noise.

    Each link acts as a point-to-point channel with
    omega = 1 + eps * (eta*tau/2) / (1 - eta*tau/2).
    """

    def one(eps, tau):
        x = 0.5 * params.eta * tau
        if x >= 1.0:
            raise ValueError("eta*tau/2 must be < 1")
        return 1.0 + eps * x / (1.0 - x)

    return OmegaPair(one(params.eps_a, params.tau_a), one(params.eps_b, params.tau_b))


def derived_noise(params: ProtocolParams, omegas: OmegaPair) -> DerivedNoise:
    """Compute the derived noise scalars for the given thermal variances.

    The restricted-scenario conditional moments use the Bayes-consistent
    forms: the denominator of Bob's conditional mean and of ``v_b`` is the
    restricted outcome variance, and ``delta_coeff`` carries
    sqrt(eta*tau_b/2) so the sign conditionals reproduce the direct-Bayes
    values (verified against the state-propagation chain in the tests).
    """
    tau_a, tau_b, eta, s = params.effective_channel()
    wa, wb = omegas
    mu = params.mu

    upsilon = (1.0 - eta) * s + 0.5 * eta * (
        tau_a + tau_b + (1.0 - tau_a) * wa + (1.0 - tau_b) * wb
    )
    upsilon_tilde = upsilon + 0.5 * eta * tau_b * (mu - 1.0)
    upsilon_tilde_prime = (1.0 - eta) * s + 0.5 * eta * (
        tau_a + tau_b + wa * (1.0 - tau_a) + wb * (1.0 - tau_b)
    )
    delta_coeff = math.sqrt(0.5 * eta * tau_b) * math.sqrt((mu - 1.0) / (mu + 1.0))
    gamma_prime_factor = (upsilon_tilde_prime + 0.5 * eta * tau_b * (mu - 1.0)) / upsilon_tilde
    v_b = (mu + 1.0) * (1.0 - (mu - 1.0) / upsilon_tilde * 0.5 * eta * tau_b)
    xi = math.sqrt((mu + 1.0) / (mu - 1.0))

    return DerivedNoise(
        upsilon=upsilon,
        upsilon_tilde=upsilon_tilde,
        upsilon_tilde_prime=upsilon_tilde_prime,
        delta_coeff=delta_coeff,
        v_b=v_b,
        xi=xi,
        gamma_prime_factor=gamma_prime_factor,
        mu=mu,
        eta=eta,
        tau_a=tau_a,
        tau_b=tau_b,
        s_det=s,
        omega_a=wa,
        omega_b=wb,
    )


def derived_for(params: ProtocolParams) -> DerivedNoise:
    """Derived noise with thermal variances taken from the excess noise."""
    return derived_noise(params, omega_from_epsilon(params))


class ModeLayout(NamedTuple):
    alice: int
    bob_sent: int
    bob_kept: int | None
    eve: tuple[int, ...]
    detector: tuple[int, ...]


def _mode_layout(params: ProtocolParams, n_modes: int) -> ModeLayout:
    restricted = params.is_restricted
    base = 3 if restricted else 2
    has_det = n_modes == base + 8
    if n_modes not in (base + 4, base + 8):
        raise ValueError(f"unexpected mode count {n_modes} for scenario {params.scenario}")
    eve = tuple(range(base, base + 4))
    det = tuple(range(base + 4, base + 8)) if has_det else ()
    if restricted:
        return ModeLayout(alice=0, bob_sent=2, bob_kept=1, eve=eve, detector=det)
    return ModeLayout(alice=0, bob_sent=1, bob_kept=None, eve=eve, detector=det)


def _needs_detector_modes(params: ProtocolParams) -> bool:
    if params.detector_model == "absorbed":
        return False
    # with eta = 1 and S = 1 the detector TMSVs are inert vacua
    return not (params.eta == 1.0 and params.s_det == 1.0)


def _direct_sum(states: list[GaussianState]) -> GaussianState:
    dim = sum(2 * s.n_modes for s in states)
    cm = np.zeros((dim, dim))
    mean = np.zeros(dim)
    pos = 0
    for s in states:
        d = 2 * s.n_modes
        cm[pos : pos + d, pos : pos + d] = s.cm
        mean[pos : pos + d] = s.mean
        pos += d
    return GaussianState(mean, cm)


def build_pre_relay_state(
    params: ProtocolParams,
    kappa: int,
    amp_a: float,
    bsign: int = 1,
    amp_b: float = 0.0,
) -> GaussianState:
    """State of all modes after the links, before the relay beam splitter.

    Alice's mode carries a coherent state with q-mean kappa*amp_a.  In the
    complete scenario Bob's mode is a coherent state with q-mean
    bsign*amp_b; in the restricted scenarios Bob holds a TMSV of variance
    mu and (bsign, amp_b) are ignored.  Both links then pass through the
    entangling-cloner beam splitters.
    """
    if kappa not in (1, -1) or bsign not in (1, -1):
        raise ValueError("signs must be +1 or -1")
    if amp_a < 0.0 or amp_b < 0.0:
        raise ValueError("amplitudes must be >= 0")
    tau_a, tau_b, eta, s = params.effective_channel()
    omegas = omega_from_epsilon(params)

    parts = [coherent_state(kappa * amp_a)]
    if params.is_restricted:
        parts.append(tmsv_state(params.mu))  # modes (b, B)
    else:
        parts.append(coherent_state(bsign * amp_b))
    parts.append(tmsv_state(omegas.omega_a))
    parts.append(tmsv_state(omegas.omega_b))
    if _needs_detector_modes(params):
        parts.append(tmsv_state(s))
        parts.append(tmsv_state(s))
    state = _direct_sum(parts)

    layout = _mode_layout(params, state.n_modes)
    state = beam_splitter(state, layout.alice, layout.eve[0], tau_a)
    state = beam_splitter(state, layout.bob_sent, layout.eve[2], tau_b)
    return state


def apply_relay(state: GaussianState, params: ProtocolParams) -> GaussianState:
    """Balanced relay beam splitter plus the detector beam splitters.

    After this step the Alice slot holds the p-measured output and the
    Bob-sent slot holds the q-measured output.
    """
    layout = _mode_layout(params, state.n_modes)
    _, _, eta, _ = params.effective_channel()
    state = beam_splitter(state, layout.alice, layout.bob_sent, 0.5)
    if layout.detector:
        state = beam_splitter(state, layout.alice, layout.detector[0], eta)
        state = beam_splitter(state, layout.bob_sent, layout.detector[2], eta)
    return state


class RelayOutcome(NamedTuple):
    state: GaussianState
    density_q: float
    density_p: float


def relay_and_condition(
    state: GaussianState,
    params: ProtocolParams,
    gamma_q: float,
    gamma_p: float = 0.0,
) -> RelayOutcome:
    """Relay measurement: interfere, detect, and condition on the outcomes.

    Returns the residual state (Eve's modes, plus Bob's retained mode in
    the restricted scenarios, plus detector outputs when untrusted) and
    the probability densities of the two homodyne outcomes; ``density_q``
    is the unconditional marginal, ``density_p`` is conditioned on it (the
    two coincide because the quadrature outcomes are independent).
    """
    layout = _mode_layout(params, state.n_modes)
    out = apply_relay(state, params)
    # Bob-sent slot has the higher index; measure it first so the Alice
    # slot index is unaffected by the mode removal.
    out, density_q = condition_homodyne(out, layout.bob_sent, "q", gamma_q)
    out, density_p = condition_homodyne(out, layout.alice, "p", gamma_p)
    if layout.detector and params.detector_model == "trusted":
        n = out.n_modes
        out = partial_trace(out, list(range(n - 4)))
    return RelayOutcome(out, density_q, density_p)


def eve_state_complete(
    params: ProtocolParams,
    kappa: int,
    bsign: int,
    amp_a: float,
    amp_b: float,
    gamma: float,
) -> GaussianState:
    """Eve's conditional state in the complete scenario.

    The p-quadrature outcome is pinned to 0: the conditional CM is
    outcome-independent and the p-sector mean shift is common to all sign
    values, so none of the derived information quantities depend on it.
    """
    if params.is_restricted:
        raise ValueError("eve_state_complete requires the complete scenario")
    pre = build_pre_relay_state(params, kappa, amp_a, bsign, amp_b)
    return relay_and_condition(pre, params, gamma).state


def eve_state_restricted(
    params: ProtocolParams, kappa: int, amp_a: float, gamma: float
) -> GaussianState:
    """Eve's conditional state in the restricted scenarios (mode b traced out)."""
    if not params.is_restricted:
        raise ValueError("eve_state_restricted requires a restricted scenario")
    pre = build_pre_relay_state(params, kappa, amp_a)
    residual = relay_and_condition(pre, params, gamma).state
    return partial_trace(residual, list(range(1, residual.n_modes)))


def bob_heterodyne_moments(
    params: ProtocolParams, kappa: int, amp_a: float, gamma: float
) -> tuple[float, float]:
    """Mean and variance of the q-part of Bob's heterodyne outcome.

    Toolbox ground truth for the closed-form conditional moments of
    Bob's broadcast value: heterodyning adds one shot-noise unit to the
    conditional variance of the retained mode.
    """
    if not params.is_restricted:
        raise ValueError("Bob heterodynes only in the restricted scenarios")
    pre = build_pre_relay_state(params, kappa, amp_a)
    residual = relay_and_condition(pre, params, gamma).state
    return float(residual.mean[0]), float(residual.cm[0, 0] + 1.0)


def relay_outcome_variances(params: ProtocolParams) -> tuple[float, float]:
    """Toolbox variances of (gamma_q, gamma_p) before conditioning."""
    pre = build_pre_relay_state(params, 1, 0.0, 1, 0.0)
    out = apply_relay(pre, params)
    layout = _mode_layout(params, out.n_modes)
    var_q = out.cm[2 * layout.bob_sent, 2 * layout.bob_sent]
    var_p = out.cm[2 * layout.alice + 1, 2 * layout.alice + 1]
    return float(var_q), float(var_p)
