"""Matched-local-oscillator quadratures, squeezing ratios, optimal angle
search and sampling-error estimation."""

from __future__ import annotations

import numpy as np

from .stats import EnsembleStats


def default_theta_grid(n_theta: int = 64) -> np.ndarray:
    """Uniform local-oscillator angles on [0, pi); the squeezing ellipse is
    pi-periodic."""
    return np.pi * np.arange(n_theta) / n_theta


def matched_lo(pulse_phi: np.ndarray, d_tau: float) -> np.ndarray:
    """Local oscillator proportional to the input envelope, discretely
    normalized so sum |f|^2 d_tau = 1."""
    energy = (np.abs(pulse_phi) ** 2).sum() * d_tau
    if energy <= 0:
        raise ValueError("matched_lo requires a nonzero pulse")
    return np.asarray(pulse_phi, dtype=complex) / np.sqrt(energy)


def quadrature(phi: np.ndarray, phi_bar: np.ndarray, f_lo: np.ndarray,
               d_tau: float, thetas: np.ndarray) -> np.ndarray:
    """Homodyne samples M_theta = sum d_tau (f phi e^{i t} + f* phibar
    e^{-i t}) for each angle; phi_bar is phi+ (PPR) or phi* (TWA).

    phi may be (n_tau,) or (batch, n_tau); result is (..., n_theta) complex
    (imaginary part is a doubled-variable residue for the PPR).
    """
    phi = np.atleast_2d(phi)
    phi_bar = np.atleast_2d(phi_bar)
    if phi.shape[-1] != f_lo.shape[-1] or phi_bar.shape != phi.shape:
        raise ValueError("quadrature: grid mismatch between field and LO")
    a = (phi * f_lo).sum(axis=-1) * d_tau
    b = (phi_bar * f_lo.conj()).sum(axis=-1) * d_tau
    return quadrature_from_pair(a, b, thetas)


def quadrature_from_pair(a: np.ndarray, b: np.ndarray,
                         thetas: np.ndarray) -> np.ndarray:
    """M_theta from the precomputed overlaps a = d_tau sum f phi and
    b = d_tau sum f* phibar."""
    ph = np.exp(1j * thetas)
    return np.multiply.outer(a, ph) + np.multiply.outer(b, ph.conj())


def squeezing_ratio(stats: EnsembleStats, method: str):
    """S and its standard error per (z-slice, theta).

    PPR: S = 1 + Var_{+P}[M] with the variance in normal order, i.e. the
    real part of the complex second moment (Var Re M - Var Im M).
    TWA: S = Var[M] (symmetric order, no correction).
    The error is the larger of the fourth-moment formula and the 32-way
    sub-batch spread.
    """
    if np.any(stats.quad_re.count < 2):
        raise ValueError("squeezing_ratio needs >= 2 undiverged samples")
    if method == "ppr":
        s = 1.0 + stats.normal_ordered_variance()
        se_moment = np.sqrt(stats.quad_re.variance_se() ** 2
                            + stats.quad_im.variance_se() ** 2)
        se_sub = stats.subbatch_variance_se(normal_order=True)
    elif method == "twa":
        s = stats.symmetric_variance()
        se_moment = stats.quad_re.variance_se()
        se_sub = stats.subbatch_variance_se(normal_order=False)
    else:
        raise ValueError(f"unknown method {method!r}")
    se = np.where(np.isfinite(se_sub), np.maximum(se_moment, se_sub),
                  se_moment)
    return s, se


def optimal_angle(s_of_theta: np.ndarray, thetas: np.ndarray):
    """Grid argmin with 3-point parabolic refinement (periodic in pi).

    Ties break toward smaller theta.  Returns (theta_star, s_min).
    """
    s = np.asarray(s_of_theta, dtype=float)
    n = s.size
    if n != thetas.size or n == 0:
        raise ValueError("optimal_angle: full theta grid required")
    k = int(np.argmin(s))
    if n < 3 or np.allclose(s, s[0]):
        return float(thetas[0] if np.allclose(s, s[0]) else thetas[k]), \
            float(s[k])
    sm, s0, sp = s[(k - 1) % n], s[k], s[(k + 1) % n]
    denom = sm - 2.0 * s0 + sp
    if denom <= 0:
        return float(thetas[k]), float(s0)
    shift = 0.5 * (sm - sp) / denom
    step = np.pi / n
    theta = (thetas[k] + shift * step) % np.pi
    s_min = s0 - 0.25 * (sm - sp) * shift
    return float(theta), float(s_min)


def sampling_error(samples: np.ndarray, n_subbatches: int = 32):
    """Standard error of the variance of a 1-D sample set: fourth-moment
    formula cross-checked by sub-batching, returning the larger.

    With fewer than 16 samples the sub-batch route is disabled and the
    result is flagged (second return value False)."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("sampling_error needs >= 2 samples")
    var = x.var(ddof=1)
    mu4 = ((x - x.mean()) ** 4).mean()
    inner = mu4 - (n - 3.0) / (n - 1.0) * var ** 2
    se_moment = np.sqrt(max(inner, 0.0) / n)
    if n < 16:
        return se_moment, False
    k = min(n_subbatches, n // 2)
    parts = np.array_split(x, k)
    sub_vars = np.array([p.var(ddof=1) for p in parts])
    se_sub = sub_vars.std(ddof=1) / np.sqrt(k)
    return max(se_moment, se_sub), True


def method_deviation(stats_a: EnsembleStats, method_a: str,
                     stats_b: EnsembleStats, method_b: str,
                     thetas: np.ndarray):
    """Per-slice gap between two methods' minimum squeezing ratios.

    Both ensembles must share the recording grid.  Returns (dev, se):
    dev[i] = |S_min_a(z_i) - S_min_b(z_i)| and se[i] the quadrature sum
    of the two standard errors at their respective grid minima.
    """
    s_a, se_a = squeezing_ratio(stats_a, method_a)
    s_b, se_b = squeezing_ratio(stats_b, method_b)
    if s_a.shape != s_b.shape:
        raise ValueError("method_deviation: mismatched recording grids")
    n_slices = s_a.shape[0]
    dev = np.empty(n_slices)
    se = np.empty(n_slices)
    for i in range(n_slices):
        _, m_a = optimal_angle(s_a[i], thetas)
        _, m_b = optimal_angle(s_b[i], thetas)
        k_a = int(np.argmin(s_a[i]))
        k_b = int(np.argmin(s_b[i]))
        dev[i] = abs(m_a - m_b)
        se[i] = np.hypot(se_a[i, k_a], se_b[i, k_b])
    return dev, se


def mean_flux(stats: EnsembleStats):
    """Ensemble photon-number expectation and its standard error per z.

    Ordering corrections are applied per trajectory by the method kernels,
    so PPR and TWA flux samples are directly comparable here.
    """
    return stats.flux.mean[:, 0], stats.flux.mean_se()[:, 0]
