"""Quadrature and Monte Carlo estimation of the post-selected key rate.

The rate integrals run over the (A, B, gamma) volume.  The integrand is
even in gamma (negating the relay outcome and both signs is a symmetry of
the protocol), so everything is evaluated on the positive-gamma half with
doubled weights.

The smooth integrals (raw rate, mutual-information and Eve-information
components) use a tensor Gauss-Legendre rule on a box truncated at
``cutoff_sigmas`` marginal standard deviations.  The post-selected rate
integrand max(rate, 0) has a kink on the boundary of the positive-rate
region; a plain tensor rule stalls near one-percent accuracy there, so
the post-selected integral instead locates the positive-rate gamma
intervals per (A, B) node (coarse sign scan, then bisection of each sign
change) and applies a Gauss-Legendre panel inside each interval, where
the integrand is smooth.

Grid evaluation is chunked along the A axis with a fixed,
order-preserving reduction, which keeps results bit-identical for any
worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .probabilities import (
    bb_mean_restricted,
    gamma_mean_complete,
    gamma_mean_restricted,
    gaussian_prior_density,
)
from .protocol import DerivedNoise, ProtocolParams, derived_for
from .rates import point_field

__all__ = [
    "GridSpec",
    "RateEstimate",
    "RateReport",
    "rate_report",
    "raw_rate",
    "ps_rate",
    "ps_rate_montecarlo",
    "raw_rate_montecarlo",
    "convergence_check",
]

_MC_CHUNK = 1 << 16
# single-point rates below this threshold are treated as zero when the
# positive-rate region is located; bounds the neglected mass by the same
# amount and keeps float jitter in dead regions out of the sign scan
_EPS_PS = 1e-11
_N_CROSS = 4  # sign changes tracked per (A, B) node on the half-axis
_BISECT_ITERS = 15


@dataclass(frozen=True)
class GridSpec:
    """Node counts and box cutoff for the rate integrals.

    ``n_g`` is the gamma-axis budget of the smooth rule; the
    post-selection pass derives its scan and panel node counts from it.
    """

    n_a: int = 48
    n_b: int = 48
    n_g: int = 96
    cutoff_sigmas: float = 6.0

    def __post_init__(self):
        for name in ("n_a", "n_b", "n_g"):
            if getattr(self, name) < 8:
                raise ValueError(f"{name} must be >= 8, got {getattr(self, name)}")
        if self.cutoff_sigmas < 4.0:
            raise ValueError(f"cutoff_sigmas must be >= 4, got {self.cutoff_sigmas}")

    def refined(self, factor: float = 1.5) -> "GridSpec":
        return replace(
            self,
            n_a=math.ceil(self.n_a * factor),
            n_b=math.ceil(self.n_b * factor),
            n_g=math.ceil(self.n_g * factor),
        )


@dataclass(frozen=True)
class RateEstimate:
    """A rate value in bits per protocol use with its uncertainty.

    ``std_err`` is 0 for deterministic quadrature; ``ps_mass`` is the
    probability weight of the region where the single-point rate is
    positive.
    """

    value: float
    std_err: float
    n_evals: int
    ps_mass: float


@dataclass(frozen=True)
class RateReport:
    """All quadrature integrals over one grid."""

    raw: float
    ps: float
    ps_mass: float
    mi_integral: float
    eve_integral: float
    n_evals: int


def _legendre_nodes(n: int, lo: float, hi: float):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _magnitude_axis(n: int, sigma: float, cutoff: float):
    """Nodes and prior-folded weights for a folded-Gaussian magnitude axis."""
    if sigma == 0.0:
        return np.array([0.0]), np.array([1.0])
    nodes, w = _legendre_nodes(n, 0.0, cutoff * math.sqrt(sigma))
    return nodes, w * gaussian_prior_density(nodes, sigma)


def _axes(params: ProtocolParams, dn: DerivedNoise, grid: GridSpec):
    """(A, B) axes with prior-folded weights and the gamma half-width.

    The gamma box covers ``cutoff_sigmas`` standard deviations of the
    exact marginal distribution of the relay outcome.
    """
    cut = grid.cutoff_sigmas
    a_nodes, a_weights = _magnitude_axis(grid.n_a, params.sigma_a, cut)
    if params.is_restricted:
        b_nodes, b_weights = _legendre_nodes(grid.n_b, 0.0, cut * math.sqrt(params.mu + 1.0))
        var_gamma = dn.upsilon_tilde + dn.coupling_a**2 * params.sigma_a
    else:
        b_nodes, b_weights = _magnitude_axis(grid.n_b, params.sigma_b, cut)
        var_gamma = (
            dn.upsilon
            + dn.coupling_a**2 * params.sigma_a
            + dn.coupling_b**2 * params.sigma_b
        )
    return (a_nodes, a_weights), (b_nodes, b_weights), cut * math.sqrt(var_gamma)


def _region_value(field, params: ProtocolParams):
    """(region function, rate value) per the reconciliation model."""
    reconciled = params.beta_rec * field.i_ab - field.eve_info
    if params.beta_mode == "global":
        return field.i_ab - field.eve_info, reconciled
    return reconciled, reconciled


def _chunks(n: int):
    return [slice(i, i + 1) for i in range(n)]


def _map_chunks(func, n: int, threads: int):
    chunks = _chunks(n)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, chunks))
    return [func(sl) for sl in chunks]


def _smooth_pass(params, dn, a_axis, b_axis, g_half, n_g, threads):
    """Tensor rule for the kink-free integrals: raw, MI, Eve components."""
    a_nodes, a_w = a_axis
    b_nodes, b_w = b_axis
    if n_g % 2 == 0:
        nodes, w = _legendre_nodes(n_g, -g_half, g_half)
        keep = nodes > 0.0
        g_nodes, g_w = nodes[keep], 2.0 * w[keep]
    else:
        g_nodes, g_w = _legendre_nodes(n_g, -g_half, g_half)

    def chunk_sums(sl):
        field = point_field(
            a_nodes[sl][:, None, None], b_nodes[None, :, None], g_nodes[None, None, :],
            dn, params,
        )
        _, value = _region_value(field, params)
        w = (a_w[sl][:, None, None] * b_w[None, :, None] * g_w[None, None, :])
        w = w * np.broadcast_to(field.kernel, value.shape)
        return (
            float(np.sum(w * value)),
            float(np.sum(w * np.broadcast_to(field.i_ab, value.shape))),
            float(np.sum(w * np.broadcast_to(field.eve_info, value.shape))),
        )

    parts = _map_chunks(chunk_sums, len(a_nodes), threads)
    sums = [0.0, 0.0, 0.0]
    for part in parts:  # fixed reduction order
        for k, v in enumerate(part):
            sums[k] += v
    return tuple(sums)


def _ps_pass(params, dn, a_axis, b_axis, g_half, grid: GridSpec, threads):
    """Positive-region pass: panelized gamma integration inside the lobes."""
    a_nodes, a_w = a_axis
    b_nodes, b_w = b_axis
    n_scan = max(24, grid.n_g // 2)
    n_panel = max(8, grid.n_g // 8)
    scan = np.linspace(0.0, g_half, n_scan)
    panel_x, panel_w = np.polynomial.legendre.leggauss(n_panel)

    def region_at(a_sl, gamma):
        field = point_field(
            a_nodes[a_sl][:, None, None], b_nodes[None, :, None], gamma, dn, params
        )
        region, value = _region_value(field, params)
        return np.broadcast_to(region, value.shape), field

    def chunk_sums(sl):
        m = sl.stop - sl.start
        nb = len(b_nodes)
        region_s, _ = region_at(sl, scan[None, None, :])
        pos = region_s > _EPS_PS
        flips = pos[..., 1:] != pos[..., :-1]
        ncross = np.minimum(flips.sum(axis=-1), _N_CROSS)
        # stable argsort floats crossing segment indices to the front
        seg = np.argsort(~flips, axis=-1, kind="stable")[..., :_N_CROSS]
        valid = np.arange(_N_CROSS)[None, None, :] < ncross[..., None]
        lo = np.where(valid, scan[seg], 0.0)
        hi = np.where(valid, scan[np.minimum(seg + 1, n_scan - 1)], 0.0)
        left_pos = np.take_along_axis(pos, seg, axis=-1)
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            region_m, _ = region_at(sl, mid)
            go_right = (region_m > _EPS_PS) == left_pos
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
        cross = np.where(valid, 0.5 * (lo + hi), 0.0)

        # edge list: 0 when the region contains gamma = 0, the bisected
        # crossings in order, and the box edge when the region is open
        pos0 = pos[..., 0]
        edges = np.zeros((m, nb, _N_CROSS + 2))
        base = pos0.astype(int)
        for k in range(_N_CROSS):
            slot = (base + k)[..., None]
            current = np.take_along_axis(edges, slot, axis=-1)
            value = np.where(valid[..., k], cross[..., k], current[..., 0])
            np.put_along_axis(edges, slot, value[..., None], axis=-1)
        open_end = pos0 ^ (ncross % 2 == 1)
        slot = (base + ncross)[..., None]
        current = np.take_along_axis(edges, slot, axis=-1)
        np.put_along_axis(
            edges, slot, np.where(open_end, g_half, current[..., 0])[..., None], axis=-1
        )

        n_slots = (_N_CROSS + 2) // 2
        lo_t = edges[..., 0::2][..., :n_slots]
        hi_t = edges[..., 1::2][..., :n_slots]
        width = hi_t - lo_t
        gamma_nodes = (
            lo_t[..., :, None] + 0.5 * width[..., :, None] * (panel_x + 1.0)
        ).reshape(m, nb, n_slots * n_panel)
        _, field = region_at(sl, gamma_nodes)
        _, value = _region_value(field, params)
        kernel = np.broadcast_to(field.kernel, value.shape)
        w_gamma = (0.5 * width[..., :, None] * panel_w).reshape(m, nb, n_slots * n_panel)
        w = 2.0 * a_w[sl][:, None, None] * b_w[None, :, None] * w_gamma  # gamma mirror
        return float(np.sum(w * kernel * value)), float(np.sum(w * kernel))

    parts = _map_chunks(chunk_sums, len(a_nodes), threads)
    ps_sum = mass_sum = 0.0
    for ps_i, mass_i in parts:  # fixed reduction order
        ps_sum += ps_i
        mass_sum += mass_i
    return ps_sum, mass_sum


def rate_report(params: ProtocolParams, grid: GridSpec = GridSpec(), threads: int = 1) -> RateReport:
    """Raw and post-selected rates plus their components."""
    dn = derived_for(params)
    a_axis, b_axis, g_half = _axes(params, dn, grid)
    raw, mi, eve = _smooth_pass(params, dn, a_axis, b_axis, g_half, grid.n_g, threads)
    ps, mass = _ps_pass(params, dn, a_axis, b_axis, g_half, grid, threads)
    return RateReport(
        raw=raw,
        ps=ps,
        ps_mass=mass,
        mi_integral=mi,
        eve_integral=eve,
        n_evals=grid.n_a * grid.n_b * grid.n_g,
    )


def raw_rate(params: ProtocolParams, grid: GridSpec = GridSpec(), threads: int = 1) -> RateEstimate:
    """Asymptotic rate without post-selection: integral of p * rate."""
    rep = rate_report(params, grid, threads)
    return RateEstimate(value=rep.raw, std_err=0.0, n_evals=rep.n_evals, ps_mass=rep.ps_mass)


def ps_rate(params: ProtocolParams, grid: GridSpec = GridSpec(), threads: int = 1) -> RateEstimate:
    """Post-selected rate: integral of p * max(rate, 0)."""
    dn = derived_for(params)
    a_axis, b_axis, g_half = _axes(params, dn, grid)
    ps, mass = _ps_pass(params, dn, a_axis, b_axis, g_half, grid, threads)
    return RateEstimate(
        value=ps, std_err=0.0, n_evals=grid.n_a * grid.n_b * grid.n_g, ps_mass=mass
    )


def _sample_chunk(params: ProtocolParams, dn: DerivedNoise, seed: int, idx: int, m: int):
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(idx)], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    q_a = rng.normal(0.0, math.sqrt(params.sigma_a), m)
    kappa = np.where(q_a >= 0.0, 1.0, -1.0)
    amp_a = np.abs(q_a)
    if params.is_restricted:
        gamma = rng.normal(gamma_mean_restricted(kappa, amp_a, dn), math.sqrt(dn.upsilon_tilde))
        x = rng.normal(bb_mean_restricted(kappa, amp_a, gamma, dn), math.sqrt(dn.v_b))
        amp_b = np.abs(x)
    else:
        q_b = rng.normal(0.0, math.sqrt(params.sigma_b), m)
        bsign = np.where(q_b >= 0.0, 1.0, -1.0)
        amp_b = np.abs(q_b)
        gamma = rng.normal(
            gamma_mean_complete(kappa, amp_a, bsign, amp_b, dn), math.sqrt(dn.upsilon)
        )
    return amp_a, amp_b, np.abs(gamma)  # the integrand is even in gamma


def _montecarlo(
    params: ProtocolParams, n_samples: int, seed: int, post_select: bool, threads: int
) -> RateEstimate:
    if n_samples < 10_000:
        raise ValueError(f"n_samples must be >= 10^4, got {n_samples}")
    dn = derived_for(params)
    n_chunks = math.ceil(n_samples / _MC_CHUNK)

    def chunk_sums(idx: int):
        m = min(_MC_CHUNK, n_samples - idx * _MC_CHUNK)
        amp_a, amp_b, gamma = _sample_chunk(params, dn, seed, idx, m)
        field = point_field(amp_a, amp_b, gamma, dn, params)
        region, value = _region_value(field, params)
        inside = region > _EPS_PS
        vals = np.where(inside, value, 0.0) if post_select else value
        return float(vals.sum()), float((vals * vals).sum()), float(np.count_nonzero(inside))

    indices = range(n_chunks)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk_sums, indices))
    else:
        parts = [chunk_sums(i) for i in indices]

    s = s2 = hits = 0.0
    for si, s2i, hi in parts:
        s += si
        s2 += s2i
        hits += hi
    n = float(n_samples)
    mean = s / n
    var = max(s2 - s * s / n, 0.0) / (n - 1.0)
    return RateEstimate(
        value=mean,
        std_err=math.sqrt(var / n),
        n_evals=n_samples,
        ps_mass=hits / n,
    )


def ps_rate_montecarlo(
    params: ProtocolParams, n_samples: int, seed: int, threads: int = 1
) -> RateEstimate:
    """Monte Carlo estimate of the post-selected rate.

    Samples the protocol variables from their priors and conditionals and
    averages max(rate, 0).  Fully deterministic for a given seed: samples
    are drawn in fixed-size chunks from counter-based streams keyed by
    (seed, chunk index), so the worker count never changes the result.
    """
    return _montecarlo(params, n_samples, seed, post_select=True, threads=threads)


def raw_rate_montecarlo(
    params: ProtocolParams, n_samples: int, seed: int, threads: int = 1
) -> RateEstimate:
    """Monte Carlo estimate of the rate without post-selection."""
    return _montecarlo(params, n_samples, seed, post_select=False, threads=threads)


def convergence_check(
    params: ProtocolParams, grid: GridSpec = GridSpec(), threads: int = 1
) -> float:
    """Relative change of the post-selected rate under 1.5x grid refinement."""
    base = ps_rate(params, grid, threads).value
    fine = ps_rate(params, grid.refined(), threads).value
    return abs(fine - base) / max(base, 1e-12)
