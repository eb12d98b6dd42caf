"""Streaming central-moment accumulators, mergeable across workers.

Accumulators carry count, mean and the 2nd..4th central moment sums per
grid point (z-slice x observable).  Batches are reduced with numpy first
and folded in with Pebay's pairwise update formulas, so merging is
associative and commutative up to floating-point reassociation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _batch_moments(x: np.ndarray):
    """count, mean, M2, M3, M4 of `x` along axis 0."""
    n = x.shape[0]
    mean = x.mean(axis=0)
    d = x - mean
    return (n, mean, (d ** 2).sum(axis=0), (d ** 3).sum(axis=0),
            (d ** 4).sum(axis=0))


def _merge(na, ma, m2a, m3a, m4a, nb, mb, m2b, m3b, m4b):
    n = na + nb
    if np.all(n == 0):
        return na, ma, m2a, m3a, m4a
    na = np.asarray(na, dtype=float)
    nb = np.asarray(nb, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = mb - ma
        mean = np.where(n > 0, ma + d * nb / np.maximum(n, 1), 0.0)
        nanb = na * nb
        m2 = m2a + m2b + d ** 2 * nanb / np.maximum(n, 1)
        m3 = (m3a + m3b + d ** 3 * nanb * (na - nb) / np.maximum(n, 1) ** 2
              + 3.0 * d * (na * m2b - nb * m2a) / np.maximum(n, 1))
        m4 = (m4a + m4b
              + d ** 4 * nanb * (na ** 2 - nanb + nb ** 2)
              / np.maximum(n, 1) ** 3
              + 6.0 * d ** 2 * (na ** 2 * m2b + nb ** 2 * m2a)
              / np.maximum(n, 1) ** 2
              + 4.0 * d * (na * m3b - nb * m3a) / np.maximum(n, 1))
    return n, mean, m2, m3, m4


@dataclass
class MomentGrid:
    """Streaming moments on a (n_rows, n_cols) grid with per-row counts.

    Rows are z-slices; columns are observables (e.g. local-oscillator
    angles).  Counts are per row because diverged trajectories stop
    contributing mid-run.
    """

    n_rows: int
    n_cols: int
    count: np.ndarray = field(init=False)
    mean: np.ndarray = field(init=False)
    m2: np.ndarray = field(init=False)
    m3: np.ndarray = field(init=False)
    m4: np.ndarray = field(init=False)

    def __post_init__(self):
        self.count = np.zeros(self.n_rows)
        shape = (self.n_rows, self.n_cols)
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)
        self.m3 = np.zeros(shape)
        self.m4 = np.zeros(shape)

    def add_row_batch(self, row: int, samples: np.ndarray) -> None:
        """Fold a batch of samples, shape (n_samples, n_cols), into `row`."""
        if samples.shape[0] == 0:
            return
        nb, mb, m2b, m3b, m4b = _batch_moments(samples)
        (self.count[row], self.mean[row], self.m2[row], self.m3[row],
         self.m4[row]) = _merge(self.count[row], self.mean[row],
                                self.m2[row], self.m3[row], self.m4[row],
                                nb, mb, m2b, m3b, m4b)

    def merge(self, other: "MomentGrid") -> None:
        na = self.count[:, None]
        nb = other.count[:, None]
        n, mean, m2, m3, m4 = _merge(na, self.mean, self.m2, self.m3, self.m4,
                                     nb, other.mean, other.m2, other.m3,
                                     other.m4)
        self.count = n[:, 0]
        self.mean, self.m2, self.m3, self.m4 = mean, m2, m3, m4

    def variance(self) -> np.ndarray:
        n = np.maximum(self.count, 2)[:, None]
        return self.m2 / (n - 1.0)

    def variance_se(self) -> np.ndarray:
        """Standard error of the sample variance from the 4th moment:
        Var(s^2) = (mu4 - (n-3)/(n-1) sigma^4) / n."""
        n = np.maximum(self.count, 4)[:, None]
        mu4 = self.m4 / n
        var = self.m2 / (n - 1.0)
        inner = mu4 - (n - 3.0) / (n - 1.0) * var ** 2
        return np.sqrt(np.maximum(inner, 0.0) / n)

    def mean_se(self) -> np.ndarray:
        n = np.maximum(self.count, 2)[:, None]
        return np.sqrt(self.variance() / n)


@dataclass
class EnsembleStats:
    """Per-(z-slice, angle) quadrature moments plus flux moments for one
    trajectory ensemble, with 32-way sub-batch accumulators for the
    independent sampling-error cross-check."""

    n_slices: int
    n_theta: int
    n_subbatches: int = 32
    quad_re: MomentGrid = field(init=False)
    quad_im: MomentGrid = field(init=False)
    flux: MomentGrid = field(init=False)
    sub_re: list = field(init=False)
    sub_im: list = field(init=False)
    n_total: int = 0
    n_diverged: int = 0
    wall_seconds: float = 0.0

    def __post_init__(self):
        self.quad_re = MomentGrid(self.n_slices, self.n_theta)
        self.quad_im = MomentGrid(self.n_slices, self.n_theta)
        self.flux = MomentGrid(self.n_slices, 1)
        self.sub_re = [MomentGrid(self.n_slices, self.n_theta)
                       for _ in range(self.n_subbatches)]
        self.sub_im = [MomentGrid(self.n_slices, self.n_theta)
                       for _ in range(self.n_subbatches)]

    def add_slice(self, row: int, m_complex: np.ndarray, flux: np.ndarray,
                  subbatch: int) -> None:
        """Record one z-slice of per-trajectory quadrature samples
        (n_alive, n_theta) complex and flux values (n_alive,)."""
        re = np.ascontiguousarray(m_complex.real)
        im = np.ascontiguousarray(m_complex.imag)
        self.quad_re.add_row_batch(row, re)
        self.quad_im.add_row_batch(row, im)
        self.flux.add_row_batch(row, flux[:, None])
        k = subbatch % self.n_subbatches
        self.sub_re[k].add_row_batch(row, re)
        self.sub_im[k].add_row_batch(row, im)

    def merge(self, other: "EnsembleStats") -> None:
        self.quad_re.merge(other.quad_re)
        self.quad_im.merge(other.quad_im)
        self.flux.merge(other.flux)
        for mine, theirs in zip(self.sub_re, other.sub_re):
            mine.merge(theirs)
        for mine, theirs in zip(self.sub_im, other.sub_im):
            mine.merge(theirs)
        self.n_total += other.n_total
        self.n_diverged += other.n_diverged
        self.wall_seconds = max(self.wall_seconds, other.wall_seconds)

    # -- derived quantities ------------------------------------------------

    def normal_ordered_variance(self) -> np.ndarray:
        """Re[<M^2> - <M>^2] of the complex quadrature samples, the
        normal-ordered variance estimator: Var(Re M) - Var(Im M)."""
        return self.quad_re.variance() - self.quad_im.variance()

    def symmetric_variance(self) -> np.ndarray:
        """Plain variance of the (real) samples; Im is zero for TWA."""
        return self.quad_re.variance()

    def subbatch_variance_se(self, normal_order: bool) -> np.ndarray:
        """Spread of per-sub-batch variance estimates / sqrt(k)."""
        vals = []
        for sre, sim in zip(self.sub_re, self.sub_im):
            if np.all(sre.count < 2):
                continue
            v = sre.variance()
            if normal_order:
                v = v - sim.variance()
            vals.append(v)
        if len(vals) < 2:
            return np.full((self.n_slices, self.n_theta), np.nan)
        arr = np.stack(vals)
        return arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])

    def divergence_fraction(self) -> float:
        return self.n_diverged / max(self.n_total, 1)
