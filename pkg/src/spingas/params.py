"""Physical configuration and derived rate coefficients.

All quantities are CGS: densities in cm^-3, cross-sections in cm^2,
velocities in cm/s, diffusion coefficients in cm^2/s, lengths in cm,
magnetic fields in G, rates and angular frequencies in s^-1 (rad/s).

The two spin species are labelled `a` (alkali-metal, electron spin slowed
by hyperfine coupling) and `b` (noble-gas, nuclear spin 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError, DegenerateGyromagneticError

__all__ = [
    "PhysicalConfig",
    "DerivedRates",
    "FieldSchedule",
    "slowing_down_factor",
    "derive_rates",
    "compensation_field",
    "incoherent_occupation",
    "vacuum_background_probability",
    "zeta_from_enhancement",
    "potassium_helium_config",
]

# Literature defaults for the potassium / helium-3 pair.
G_ELECTRON = 1.7608e7   # bare electron-spin gyromagnetic ratio, rad s^-1 G^-1
G_HELIUM3 = 2.0378e4    # helium-3 nuclear gyromagnetic ratio, rad s^-1 G^-1

_SERIES_THRESHOLD = 1e-3


def slowing_down_factor(nuclear_spin: float, p_a: float) -> float:
    """Hyperfine slowing-down factor q(I, p) of the alkali electron spin.

    q interpolates between (2I+1)^2/3 + 2/3 at vanishing polarization and
    2I+1 at full polarization; for I = 3/2 it runs from 6 down to 4.
    Evaluated by a p^4 series below p = 1e-3 to avoid 0/0.

    Raises:
        ConfigError: if p_a is outside (0, 1] or 2I is not a non-negative
            integer.
    """
    _check_spin(nuclear_spin)
    if not 0.0 < p_a <= 1.0:
        raise ConfigError(f"polarization must be in (0, 1], got {p_a}")
    n = int(round(2 * nuclear_spin)) + 1  # = 2I+1
    if n == 1:  # I = 0: bare electron, no hyperfine slowing
        return 1.0
    if p_a < _SERIES_THRESHOLD:
        return _slowing_down_series(n, p_a)
    up = (1.0 + p_a) ** n
    dn = (1.0 - p_a) ** n
    return (n / p_a) * (up + dn) / (up - dn) - 1.0 / p_a**2 + 1.0


def _slowing_down_series(n: int, p: float) -> float:
    # q = q0 + q2 p^2 + q4 p^4 + O(p^6), binomial expansion of the closed form
    c = [math.comb(n, k) if k <= n else 0 for k in range(8)]
    t3, t5, t7 = c[3] / n, c[5] / n, c[7] / n
    q0 = 1.0 + c[2] - t3
    q2 = c[4] - c[2] * t3 + t3**2 - t5
    q4 = c[6] - c[4] * t3 + c[2] * (t3**2 - t5) - t3**3 + 2 * t3 * t5 - t7
    return q0 + q2 * p * p + q4 * p**4


def incoherent_occupation(p: float) -> float:
    """Mean incoherent excitation number per spatial mode, (1-p)/(2p)."""
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"polarization must be in (0, 1], got {p}")
    return (1.0 - p) / (2.0 * p)


def vacuum_background_probability(p: float) -> float:
    """Probability of a stray collective excitation in an unexcited
    ensemble of polarization p: 2p(1-p)/(1+p)^2."""
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"polarization must be in (0, 1], got {p}")
    return 2.0 * p * (1.0 - p) / (1.0 + p) ** 2


def zeta_from_enhancement(kappa_0: float, g_e: float, g_n: float,
                          mu_B: float, mu_n: float, q: float) -> float:
    """Interaction strength from the contact-enhancement factor kappa_0.

    zeta = 8 pi kappa_0 g_e g_n mu_B mu_n / (3 q hbar), CGS units
    (mu in erg/G, hbar in erg*s) giving cm^3 s^-1.
    """
    hbar = 1.0545718e-27  # erg s
    return 8.0 * math.pi * kappa_0 * g_e * g_n * mu_B * mu_n / (3.0 * q * hbar)


def _check_spin(nuclear_spin: float) -> None:
    twice = 2 * nuclear_spin
    if nuclear_spin < 0 or abs(twice - round(twice)) > 1e-12:
        raise ConfigError(f"nuclear spin must be a non-negative half-integer, got {nuclear_spin}")


@dataclass(frozen=True)
class PhysicalConfig:
    """Raw physical inputs for one alkali / noble-gas mixture.

    `phi_sq` (second moment of the collision angle) may be given directly
    or via `phi_std` (then phi_sq = phi_mean^2 + phi_std^2).  The optional
    `v_sigma_phi`, `k_se` and `gamma` entries override the values that
    would otherwise be derived from (sigma, v_T, phi moments); they exist
    because tabulated rate coefficients are usually known more precisely
    than the underlying collision moments.
    """

    nuclear_spin: float          # alkali nuclear spin I (half-integer)
    n_a: float                   # alkali density, cm^-3
    n_b: float                   # noble-gas density, cm^-3
    p_a: float                   # alkali polarization, (0, 1]
    p_b: float                   # noble-gas polarization, (0, 1]
    sigma: float                 # spin-exchange hard-sphere cross-section, cm^2
    v_T: float                   # relative thermal velocity, cm/s
    phi_mean: float              # mean collision precession angle, rad
    phi_sq: float | None = None  # second moment <phi^2>, rad^2
    phi_std: float | None = None # alternative: std of phi, rad
    g_a: float = G_ELECTRON      # bare electron gyromagnetic ratio, rad/s/G
    g_b: float = G_HELIUM3       # noble-gas nuclear gyromagnetic ratio, rad/s/G
    sigma_sr: float = 0.0        # spin-rotation cross-section, cm^2
    sigma_sd: float = 0.0        # alkali-alkali spin-destruction cross-section, cm^2
    v_a: float = 0.0             # alkali mean velocity, cm/s
    D_a: float = 0.0             # alkali diffusion coefficient, cm^2/s
    D_b: float = 0.0             # noble-gas diffusion coefficient, cm^2/s
    R: float = 1.0               # spherical cell radius, cm
    T_b_inverse: float = 0.0     # alkali-free noble-gas relaxation rate, s^-1
    B: float = 0.0               # static field along z, G
    v_sigma_phi: float | None = None  # direct <sigma v phi>, cm^3/s
    k_se: float | None = None         # direct spin-exchange rate coefficient, cm^3/s
    gamma: float | None = None        # direct total alkali relaxation, s^-1
    n_bar_a: float | None = None      # uniform-mode alkali occupation override

    def __post_init__(self):
        _check_spin(self.nuclear_spin)
        for name in ("n_a", "n_b", "sigma", "v_T", "R"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("sigma_sr", "sigma_sd", "v_a", "D_a", "D_b", "T_b_inverse"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("p_a", "p_b"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1]")
        if not 0.0 < self.phi_mean < 1.0:
            raise ConfigError("phi_mean must satisfy 0 < <phi> << 1")
        if self.phi_sq is not None and self.phi_std is not None:
            raise ConfigError("give phi_sq or phi_std, not both")
        if self.phi_sq is not None and self.phi_sq < self.phi_mean**2 * (1 - 1e-12):
            raise ConfigError("phi_sq must be >= phi_mean^2")
        for name in ("v_sigma_phi", "k_se", "n_bar_a"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.gamma is not None and self.gamma < 0:
            raise ConfigError("gamma must be non-negative")

    @property
    def phi_second_moment(self) -> float:
        """<phi^2> in rad^2, from phi_sq or phi_std (phi_std=0 if neither)."""
        if self.phi_sq is not None:
            return self.phi_sq
        std = self.phi_std if self.phi_std is not None else 0.0
        return self.phi_mean**2 + std**2

    def with_overrides(self, **kwargs) -> "PhysicalConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class DerivedRates:
    """Every rate-level coefficient used by the dynamical modules.

    omega_a/omega_b/Delta are evaluated at the configuration field B; use
    the *_at(B) methods for time-dependent fields.  `gamma` is the total
    alkali relaxation including the leading diffusion term (or the config
    override); `gamma_a` is the collisional part alone.
    """

    q: float          # slowing-down factor
    zeta: float       # <sigma v phi>/q, cm^3/s
    k_se: float       # spin-exchange rate coefficient, cm^3/s
    J: float          # coherent coupling rate, s^-1
    Delta_c: float    # collisional shift of the frequency mismatch, rad/s
    omega_a: float    # alkali precession frequency at cfg.B, rad/s
    omega_b: float    # noble-gas precession frequency at cfg.B, rad/s
    Delta: float      # omega_a - omega_b at cfg.B, rad/s
    gamma_a: float    # collisional alkali relaxation, s^-1
    gamma: float      # total alkali relaxation (incl. diffusion), s^-1
    gamma_b: float    # noble-gas relaxation, s^-1
    gamma_ex: float   # spin-exchange part of alkali relaxation, n_b k_se/q
    B_comp: float     # compensation field, G (nan if degenerate)
    eta: float        # k_se/(sigma_sr v), nan if sigma_sr = 0
    n_bar_a: float    # uniform-mode alkali thermal occupation
    n_bar_b: float    # noble-gas thermal occupation, (1-p_b)/(2 p_b)
    tau: float        # mean time between collisions of one alkali, s
    shift_a: float    # zeta p_b n_b / 2, rad/s
    shift_b: float    # zeta q p_a n_a / 2, rad/s
    # config echoes needed by downstream builders
    n_a: float
    n_b: float
    p_a: float
    p_b: float
    g_a: float
    g_b: float

    def omega_a_at(self, B: float) -> float:
        return self.g_a * B / self.q - self.shift_a

    def omega_b_at(self, B: float) -> float:
        return self.g_b * B - self.shift_b

    def delta_at(self, B: float) -> float:
        """Frequency mismatch Delta(B) = omega_a(B) - omega_b(B)."""
        return (self.g_a / self.q - self.g_b) * B + self.Delta_c


def derive_rates(cfg: PhysicalConfig) -> DerivedRates:
    """Populate every derived coefficient from a PhysicalConfig."""
    q = slowing_down_factor(cfg.nuclear_spin, cfg.p_a)
    v_sigma_phi = cfg.v_sigma_phi
    if v_sigma_phi is None:
        v_sigma_phi = cfg.sigma * cfg.v_T * cfg.phi_mean
    zeta = v_sigma_phi / q
    k_se = cfg.k_se
    if k_se is None:
        k_se = 0.25 * cfg.sigma * cfg.v_T * cfg.phi_second_moment

    J = 0.5 * zeta * math.sqrt(q * cfg.p_a * cfg.p_b * cfg.n_a * cfg.n_b)
    Delta_c = 0.5 * zeta * (q * cfg.p_a * cfg.n_a - cfg.p_b * cfg.n_b)
    shift_a = 0.5 * zeta * cfg.p_b * cfg.n_b
    shift_b = 0.5 * zeta * q * cfg.p_a * cfg.n_a

    gamma_a = cfg.n_b * (cfg.sigma_sr * cfg.v_T + k_se) + 0.5 * cfg.n_a * cfg.sigma_sd * cfg.v_a
    gamma = cfg.gamma
    if gamma is None:
        gamma = gamma_a + cfg.D_a * math.pi**2 / cfg.R**2
    gamma_b = k_se * cfg.n_a + cfg.T_b_inverse
    gamma_ex = cfg.n_b * k_se / q
    eta = k_se / (cfg.sigma_sr * cfg.v_T) if cfg.sigma_sr > 0 else math.nan

    slope = cfg.g_a / q - cfg.g_b
    B_comp = -Delta_c / slope if slope != 0.0 else math.nan

    omega_a = cfg.g_a * cfg.B / q - shift_a
    omega_b = cfg.g_b * cfg.B - shift_b

    n_bar_a = cfg.n_bar_a
    if n_bar_a is None:
        n_bar_a = incoherent_occupation(cfg.p_a)

    return DerivedRates(
        q=q, zeta=zeta, k_se=k_se, J=J, Delta_c=Delta_c,
        omega_a=omega_a, omega_b=omega_b, Delta=omega_a - omega_b,
        gamma_a=gamma_a, gamma=gamma, gamma_b=gamma_b, gamma_ex=gamma_ex,
        B_comp=B_comp, eta=eta,
        n_bar_a=n_bar_a, n_bar_b=incoherent_occupation(cfg.p_b),
        tau=1.0 / (cfg.n_b * cfg.sigma * cfg.v_T),
        shift_a=shift_a, shift_b=shift_b,
        n_a=cfg.n_a, n_b=cfg.n_b, p_a=cfg.p_a, p_b=cfg.p_b,
        g_a=cfg.g_a, g_b=cfg.g_b,
    )


def compensation_field(rates: DerivedRates, cfg: PhysicalConfig) -> float:
    """Field solving Delta(B) = 0: B = -Delta_c / (g_a/q - g_b).

    Raises:
        DegenerateGyromagneticError: if g_a/q == g_b.
    """
    slope = cfg.g_a / rates.q - cfg.g_b
    if slope == 0.0 or not math.isfinite(slope):
        raise DegenerateGyromagneticError("g_a/q equals g_b; Delta(B) cannot be tuned to zero")
    return -rates.Delta_c / slope


@dataclass(frozen=True)
class FieldSchedule:
    """Piecewise-constant magnetic field B(t) along z.

    `segments` is an ordered tuple of (t_start [s], B [G]); the first
    segment must start at t = 0 and start times must strictly increase.
    """

    segments: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("schedule needs at least one segment")
        if self.segments[0][0] != 0.0:
            raise ConfigError("first schedule segment must start at t = 0")
        starts = [t for t, _ in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("schedule start times must strictly increase")

    @classmethod
    def constant(cls, B: float) -> "FieldSchedule":
        return cls(((0.0, B),))

    def field_at(self, t: float) -> float:
        B = self.segments[0][1]
        for t0, Bseg in self.segments:
            if t >= t0:
                B = Bseg
            else:
                break
        return B

    def spans(self, t_end: float):
        """Yield (t0, t1, B) covering [0, t_end], honoring boundaries exactly."""
        if t_end <= 0:
            raise ConfigError("t_end must be positive")
        pts = [t for t, _ in self.segments if t < t_end] + [t_end]
        for (t0, B), t1 in zip(self.segments, pts[1:]):
            if t0 >= t_end:
                break
            yield t0, t1, B


def potassium_helium_config(**overrides) -> PhysicalConfig:
    """Baseline potassium-39 / helium-3 mixture at 215-220 C.

    Densities 3e14 / 2e20 cm^-3, p_a = 0.95, p_b = 0.75.  sigma and v_T
    are chosen so that sigma*v_T*phi_mean = 2e-14 cm^3/s; k_se and gamma
    are pinned to their tabulated values (5.5e-20 cm^3/s, 17.5 s^-1)
    which are known more precisely than the underlying moments.  sigma_sr
    reproduces eta = 0.34.
    """
    v_T = 1.7857e5
    sigma = 8.0e-15
    base = dict(
        nuclear_spin=1.5,
        n_a=3.0e14,
        n_b=2.0e20,
        p_a=0.95,
        p_b=0.75,
        sigma=sigma,
        v_T=v_T,
        phi_mean=1.4e-5,
        phi_sq=2.0e-10,
        v_sigma_phi=2.0e-14,
        k_se=5.5e-20,
        gamma=17.5,
        sigma_sr=5.5e-20 / (0.34 * v_T),
        sigma_sd=1.0e-18,
        v_a=5.1e4,
        D_a=0.08,
        D_b=0.19,
        R=2.54,
        T_b_inverse=0.0,
        B=0.0,
        n_bar_a=0.05,
    )
    base.update(overrides)
    return PhysicalConfig(**base)
