"""Ballistic hard-sphere collision statistics in a periodic box.

Monte Carlo validation of the pair-collision indicator kappa_ab used by
the coarse-grained spin dynamics: alkali and noble-gas atoms are thrown
uniformly into a cubic periodic box with Maxwell-Boltzmann velocities,
and a collision is detected for pair (a, b) within a window tau when the
angle between separation and relative velocity satisfies
theta <= eps/r_ab (eps = sqrt(sigma/pi)) and the approach time r_ab/v_ab
falls inside the window.

`v_T` is the *mean* relative thermal speed, so the per-alkali collision
probability is tau * n_b * sigma * v_T exactly; the sampler draws
per-particle Gaussian components with std v_T * sqrt(pi)/4, which makes
the mean pair speed equal v_T.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "GasSample",
    "sample_gas",
    "detect_collisions",
    "estimate_kappa_moments",
    "KappaMomentReport",
    "mean_kappa_exact",
    "mean_kappa_heaviside",
]


@dataclass
class GasSample:
    """Positions and velocities of one snapshot of the gas mixture."""

    pos_a: np.ndarray     # (N_a, 3), cm, in [0, L)
    pos_b: np.ndarray     # (N_b, 3)
    vel_a: np.ndarray     # (N_a, 3), cm/s
    vel_b: np.ndarray     # (N_b, 3)
    L: float              # box side, cm
    sigma: float          # hard-sphere cross-section, cm^2
    v_T: float            # mean relative thermal speed, cm/s

    @property
    def n_alkali(self) -> int:
        return len(self.pos_a)

    @property
    def n_noble(self) -> int:
        return len(self.pos_b)

    @property
    def epsilon(self) -> float:
        """Hard-sphere interaction radius, sigma = pi eps^2."""
        return math.sqrt(self.sigma / math.pi)

    @property
    def noble_density(self) -> float:
        return self.n_noble / self.L**3

    def mean_relative_speed(self, rng: np.random.Generator, n_pairs: int = 200_000) -> float:
        """Empirical mean |v_a - v_b| over random pairs."""
        ia = rng.integers(0, self.n_alkali, n_pairs)
        ib = rng.integers(0, self.n_noble, n_pairs)
        dv = self.vel_a[ia] - self.vel_b[ib]
        return float(np.linalg.norm(dv, axis=1).mean())


def sample_gas(rng: np.random.Generator, n_alkali: int, n_noble: int, L: float,
               sigma: float, v_T: float) -> GasSample:
    """Uniform positions, Maxwell-Boltzmann velocities with mean relative
    speed v_T."""
    if math.sqrt(sigma / math.pi) > L / 10:
        raise ConfigError("hard-sphere radius must be much smaller than the box")
    comp_std = v_T * math.sqrt(math.pi) / 4.0  # per-particle component std
    return GasSample(
        pos_a=rng.uniform(0.0, L, (n_alkali, 3)),
        pos_b=rng.uniform(0.0, L, (n_noble, 3)),
        vel_a=comp_std * rng.standard_normal((n_alkali, 3)),
        vel_b=comp_std * rng.standard_normal((n_noble, 3)),
        L=L, sigma=sigma, v_T=v_T,
    )


def _pair_geometry(sample: GasSample, block: slice):
    """Minimum-image separations and relative velocities for an alkali block.

    The relative velocity is taken as v_b - v_a so that an approaching
    pair has it aligned with r_ab = r_a - r_b (theta ~ 0), matching the
    ballistic relation r_ab(t+s) = r_ab(t) - v_ab s.
    """
    d = sample.pos_a[block, None, :] - sample.pos_b[None, :, :]
    d -= sample.L * np.rint(d / sample.L)
    r = np.linalg.norm(d, axis=2)
    dv = sample.vel_b[None, :, :] - sample.vel_a[block, None, :]
    v = np.linalg.norm(dv, axis=2)
    cosang = np.einsum("abk,abk->ab", d, dv) / np.maximum(r * v, 1e-300)
    theta = np.arccos(np.clip(cosang, -1.0, 1.0))
    return r, v, theta


def detect_collisions(sample: GasSample, tau_window: float, block_size: int = 128,
                      count_within: float | None = None):
    """Indicator kappa_ab = 1 pairs for one window: collision iff
    theta_ab <= eps/r_ab and the approach time r_ab/v_ab is within the
    window.  Returns (alkali index, noble index, separation) arrays; with
    `count_within` also the number of pairs separated by less than that
    radius (single pass over the pair geometry).
    """
    eps = sample.epsilon
    ai, bi, rr = [], [], []
    n_within = 0
    for start in range(0, sample.n_alkali, block_size):
        block = slice(start, min(start + block_size, sample.n_alkali))
        r, v, theta = _pair_geometry(sample, block)
        hit = (theta <= eps / r) & (r <= v * tau_window)
        ia, ib = np.nonzero(hit)
        ai.append(ia + start)
        bi.append(ib)
        rr.append(r[ia, ib])
        if count_within is not None:
            n_within += int((r <= count_within).sum())
    out = np.concatenate(ai), np.concatenate(bi), np.concatenate(rr)
    if count_within is not None:
        return (*out, n_within)
    return out


def mean_kappa_exact(r: np.ndarray, sigma: float, v_T: float, tau: float) -> np.ndarray:
    """Exact velocity-averaged <kappa(r)> of the detection criterion:
    capped solid-angle factor times the incomplete-Gaussian speed tail."""
    from scipy.special import erfc
    eps = math.sqrt(sigma / math.pi)
    theta_c = np.minimum(eps / r, math.pi)
    angle = 0.5 * (1.0 - np.cos(theta_c))
    scale = v_T * math.sqrt(math.pi) / 2.0     # MB scale: f(v) ~ v^2 e^{-v^2/scale^2}
    u0 = r / (tau * scale)
    # P(v >= r/tau) = (2/sqrt(pi)) u0 e^{-u0^2} + erfc(u0)
    tail = 2.0 / math.sqrt(math.pi) * u0 * np.exp(-u0**2) + erfc(u0)
    return angle * tail


def mean_kappa_heaviside(r: np.ndarray, sigma: float, v_T: float, tau: float) -> np.ndarray:
    """Theta-function approximation sigma/(4 pi r^2) for r <= tau v_T."""
    return sigma / (4.0 * math.pi * r**2) * (r <= tau * v_T)


@dataclass
class KappaMomentReport:
    """Monte Carlo moments of the collision indicator versus theory."""

    n_samples: int
    n_pairs_total: int
    n_collisions: int
    tau_window: float
    coarse_length: float
    p_alkali_hat: float          # measured per-alkali collision probability
    p_alkali_se: float
    p_alkali_theory: float       # tau n_b sigma v_T
    mean_free_time_hat: float
    mean_free_time_theory: float
    coarse_kappa_hat: float      # <kappa> over pairs with r <= l
    coarse_kappa_se: float
    coarse_kappa_theory: float   # sigma tau v_T * 3/(4 pi l^3)
    second_moment_residual: float  # <kappa^2> - <kappa> (0 for an indicator)
    kappa_phi_hat: float         # <kappa phi> with independently sampled phi
    kappa_phi_theory: float      # <kappa><phi>
    bin_centers: np.ndarray = field(repr=False)
    bin_kappa_hat: np.ndarray = field(repr=False)
    bin_kappa_se: np.ndarray = field(repr=False)
    bin_kappa_exact: np.ndarray = field(repr=False)
    bin_kappa_heaviside: np.ndarray = field(repr=False)
    chi_sq_exact: float = math.nan
    chi_sq_dof: int = 0

    def to_dict(self) -> dict:
        out = {}
        for key, val in self.__dict__.items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


def estimate_kappa_moments(rng: np.random.Generator, n_samples: int, n_alkali: int,
                           n_noble: int, L: float, sigma: float, v_T: float,
                           tau_window: float, coarse_length: float,
                           phi_mean: float = 1.0, phi_std: float = 0.0,
                           n_bins: int = 12) -> KappaMomentReport:
    """Ensemble Monte Carlo of collision moments.

    Requirements: tau_window much shorter than the mean free time
    (ballistic validity) and coarse_length >> v_T tau_window.  phi is
    sampled independently of the kinematics per detected collision.
    """
    if coarse_length < 3.0 * v_T * tau_window:
        warnings.warn("coarse-graining length should exceed v_T*tau by a wide margin",
                      RuntimeWarning, stacklevel=2)
    if coarse_length > L / 2:
        raise ConfigError("coarse_length must fit inside the periodic box")
    n_b_density = n_noble / L**3
    p_theory = tau_window * n_b_density * sigma * v_T
    if p_theory > 0.2:
        warnings.warn("tau_window is not small against the mean free time",
                      RuntimeWarning, stacklevel=2)

    r_max = 1.5 * v_T * tau_window
    edges = np.linspace(0.0, r_max, n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    shell_vol = 4.0 * math.pi / 3.0 * (edges[1:] ** 3 - edges[:-1] ** 3)

    n_coll = 0
    n_coll_in_ball = 0
    bin_hits = np.zeros(n_bins)
    in_range_pairs = 0
    kappa_phi_sum = 0.0
    for _ in range(n_samples):
        sample = sample_gas(rng, n_alkali, n_noble, L, sigma, v_T)
        ai, bi, r, n_in = detect_collisions(sample, tau_window,
                                            count_within=coarse_length)
        n_coll += len(ai)
        n_coll_in_ball += int((r <= coarse_length).sum())
        bin_hits += np.histogram(r, bins=edges)[0]
        phi = phi_mean + phi_std * rng.standard_normal(len(ai))
        kappa_phi_sum += float(phi.sum())
        in_range_pairs += n_in

    trials = n_samples * n_alkali
    p_hat = n_coll / trials
    p_se = math.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / trials)

    coarse_hat = n_coll_in_ball / in_range_pairs
    coarse_se = math.sqrt(max(n_coll_in_ball, 1)) / in_range_pairs
    coarse_theory = sigma * tau_window * v_T * 3.0 / (4.0 * math.pi * coarse_length**3)

    pair_density_per_shell = n_samples * n_alkali * n_b_density * shell_vol
    kappa_hat = bin_hits / pair_density_per_shell
    kappa_se = np.sqrt(np.maximum(bin_hits, 1.0)) / pair_density_per_shell
    kappa_exact = _shell_average(mean_kappa_exact, edges, sigma, v_T, tau_window)
    kappa_heavi = _shell_average(mean_kappa_heaviside, edges, sigma, v_T, tau_window)

    used = bin_hits > 5
    chi = float(np.sum(((kappa_hat - kappa_exact)[used] / kappa_se[used]) ** 2))

    return KappaMomentReport(
        n_samples=n_samples,
        n_pairs_total=trials * n_noble,
        n_collisions=n_coll,
        tau_window=tau_window,
        coarse_length=coarse_length,
        p_alkali_hat=p_hat,
        p_alkali_se=p_se,
        p_alkali_theory=p_theory,
        mean_free_time_hat=tau_window / p_hat if p_hat > 0 else math.inf,
        mean_free_time_theory=1.0 / (n_b_density * sigma * v_T),
        coarse_kappa_hat=coarse_hat,
        coarse_kappa_se=coarse_se,
        coarse_kappa_theory=coarse_theory,
        second_moment_residual=0.0,  # kappa is an indicator: kappa^2 == kappa exactly
        kappa_phi_hat=kappa_phi_sum / trials,
        kappa_phi_theory=p_hat * phi_mean,
        bin_centers=centers,
        bin_kappa_hat=kappa_hat,
        bin_kappa_se=kappa_se,
        bin_kappa_exact=kappa_exact,
        bin_kappa_heaviside=kappa_heavi,
        chi_sq_exact=chi,
        chi_sq_dof=int(used.sum()),
    )


def _shell_average(fn, edges, sigma, v_T, tau, n_sub: int = 200):
    """Volume-weighted average of a radial profile over each bin shell."""
    out = np.empty(len(edges) - 1)
    for i, (r0, r1) in enumerate(zip(edges[:-1], edges[1:])):
        r = np.linspace(r0 + (r1 - r0) / (2 * n_sub), r1 - (r1 - r0) / (2 * n_sub), n_sub)
        w = r**2
        out[i] = float(np.sum(fn(r, sigma, v_T, tau) * w) / np.sum(w))
    return out
