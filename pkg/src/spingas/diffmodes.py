"""Spherically symmetric diffusion-mode basis and multimode dynamics.

Alkali spins relax at the cell wall (Dirichlet by default, optional Robin
extrapolation length), giving modes ~ sin(k r)/r with k = m*pi/R.  Noble-gas
spins do not relax at the wall (Neumann), giving j0(k r) with kR a root of
tan x = x; the uniform mode (k = 0) has zero diffusion decay.  The mode
overlap matrix c_mn couples the two families at rate J*c_mn, and fast
high-order modes can be adiabatically eliminated into stable-mode couplings
epsilon plus extra noise.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm
from scipy.optimize import brentq

from .bosonic import DriftDiffusion, GaussianModeState, spin_exchange_noise
from .errors import ConfigError
from .params import DerivedRates, incoherent_occupation

__all__ = [
    "ModeBasis",
    "ReservoirCorrection",
    "noble_wavenumbers",
    "build_mode_basis",
    "mode_basis_from_rates",
    "build_multimode_system",
    "initial_multimode_state",
    "eliminate_reservoir",
    "build_eliminated_system",
    "transfer_amplitude",
    "fock_transfer_probabilities",
]


def noble_wavenumbers(n_modes: int, R: float) -> np.ndarray:
    """First wavenumbers of the Neumann (no wall relaxation) radial modes.

    k[0] = 0 is the uniform mode; k[n]*R for n >= 1 are the positive roots
    of tan x = x, one per interval (n*pi, (n+1)*pi).
    """
    ks = [0.0]
    for n in range(1, n_modes):
        # g(x) = sin x - x cos x has opposite signs at n*pi and (n+1)*pi
        a, b = n * math.pi, (n + 1) * math.pi
        x = brentq(lambda x: math.sin(x) - x * math.cos(x), a, b, xtol=1e-14)
        ks.append(x / R)
    return np.array(ks)


def _alkali_wavenumbers(n_modes: int, R: float, robin_length: float) -> np.ndarray:
    """Alkali radial wavenumbers for Dirichlet (robin_length = 0) or Robin
    walls, A(R) + L_e A'(R) = 0."""
    if robin_length == 0.0:
        return np.arange(1, n_modes + 1) * math.pi / R
    L_e = robin_length

    def g(x):
        return (R - L_e) * math.sin(x) + L_e * x * math.cos(x)

    # one root per ((m-1) pi, m pi): g alternates sign at the multiples
    ks = []
    for m in range(1, n_modes + 1):
        x = brentq(g, (m - 1) * math.pi + 1e-12, m * math.pi, xtol=1e-14)
        ks.append(x / R)
    return np.array(ks)


@dataclass(frozen=True)
class ModeBasis:
    """Radial mode families of both species with decay rates and overlaps.

    c[m, n] = integral A_m(r) B_n(r) d^3r over the sphere; rows are alkali
    modes (lowest first), columns noble-gas modes (uniform mode first).
    """

    R: float
    D_a: float
    D_b: float
    gamma_a: float            # space-independent alkali relaxation, s^-1
    gamma_b: float            # space-independent noble relaxation, s^-1
    k_a: np.ndarray           # alkali radial wavenumbers, cm^-1
    k_b: np.ndarray           # noble radial wavenumbers, cm^-1 (k_b[0] = 0)
    c: np.ndarray             # overlap matrix, (n_alkali, n_noble)
    boundary: str = "dirichlet"
    robin_length: float = 0.0

    @property
    def n_alkali(self) -> int:
        return len(self.k_a)

    @property
    def n_noble(self) -> int:
        return len(self.k_b)

    @property
    def gamma_am(self) -> np.ndarray:
        return self.gamma_a + self.D_a * self.k_a**2

    @property
    def gamma_bn(self) -> np.ndarray:
        return self.gamma_b + self.D_b * self.k_b**2

    def isometry_residual(self) -> float:
        """max |c c^T - 1| over the alkali-mode block (0 for exact isometry)."""
        g = self.c @ self.c.T
        return float(np.abs(g - np.eye(self.n_alkali)).max())

    def to_json(self, **dump_kwargs) -> str:
        return json.dumps({
            "R_cm": self.R, "D_a_cm2_per_s": self.D_a, "D_b_cm2_per_s": self.D_b,
            "gamma_a_per_s": self.gamma_a, "gamma_b_per_s": self.gamma_b,
            "boundary": self.boundary, "robin_length_cm": self.robin_length,
            "k_a_per_cm": self.k_a.tolist(), "k_b_per_cm": self.k_b.tolist(),
            "gamma_am_per_s": self.gamma_am.tolist(),
            "gamma_bn_per_s": self.gamma_bn.tolist(),
            "overlap": self.c.tolist(),
        }, **dump_kwargs)


def _alkali_norm(k: float, R: float) -> float:
    # integral of sin^2(kr) dr over [0, R]
    integral = R / 2.0 - math.sin(2 * k * R) / (4.0 * k)
    return 1.0 / math.sqrt(4.0 * math.pi * integral)


def _noble_norm(k: float, R: float) -> float:
    if k == 0.0:
        V = 4.0 * math.pi * R**3 / 3.0
        return 1.0 / math.sqrt(V)
    integral = R / 2.0 - math.sin(2 * k * R) / (4.0 * k)
    return k / math.sqrt(4.0 * math.pi * integral)


def build_mode_basis(R: float, D_a: float, D_b: float, gamma_a: float, gamma_b: float,
                     n_modes: int, alkali_boundary: str = "dirichlet",
                     robin_length: float = 0.0, n_noble_modes: int | None = None,
                     quad_abs_tol: float = 1e-10) -> ModeBasis:
    """Construct the spherically symmetric mode basis with overlaps.

    Overlap integrals are evaluated by adaptive radial quadrature to
    `quad_abs_tol` absolute accuracy.  `n_noble_modes` defaults to
    `n_modes`; the isometry of the overlap matrix improves as the noble
    count grows past the alkali count.
    """
    if n_modes < 1:
        raise ConfigError("need at least one mode per species")
    if alkali_boundary not in ("dirichlet", "robin"):
        raise ConfigError("alkali_boundary must be 'dirichlet' or 'robin'")
    if alkali_boundary == "dirichlet":
        robin_length = 0.0
    n_noble = n_noble_modes if n_noble_modes is not None else n_modes

    k_a = _alkali_wavenumbers(n_modes, R, robin_length)
    k_b = noble_wavenumbers(n_noble, R)
    norm_a = np.array([_alkali_norm(k, R) for k in k_a])
    norm_b = np.array([_noble_norm(k, R) for k in k_b])

    c = np.empty((n_modes, n_noble))
    for m, (ka, na) in enumerate(zip(k_a, norm_a)):
        for n, (kb, nb) in enumerate(zip(k_b, norm_b)):
            if kb == 0.0:
                # A_m * B_0 * 4 pi r^2 with B_0 constant
                def f(r, ka=ka):
                    return r * math.sin(ka * r)
                pref = 4.0 * math.pi * na * nb
            else:
                def f(r, ka=ka, kb=kb):
                    return math.sin(ka * r) * math.sin(kb * r)
                pref = 4.0 * math.pi * na * nb / kb
            cycles = int((ka + kb) * R / math.pi) + 4
            val, err = quad(f, 0.0, R, epsabs=quad_abs_tol / max(pref, 1e-300),
                            epsrel=1e-12, limit=50 + 10 * cycles)
            if err * pref > 10 * quad_abs_tol:
                raise ConfigError(
                    f"overlap quadrature did not converge for modes ({m}, {n})")
            c[m, n] = pref * val

    return ModeBasis(R=R, D_a=D_a, D_b=D_b, gamma_a=gamma_a, gamma_b=gamma_b,
                     k_a=k_a, k_b=k_b, c=c,
                     boundary=alkali_boundary, robin_length=robin_length)


def mode_basis_from_rates(rates: DerivedRates, D_a: float, D_b: float, R: float,
                          n_modes: int, **kwargs) -> ModeBasis:
    """Basis whose lowest alkali mode reproduces the total rate `gamma`.

    The space-independent alkali rate is gamma - D_a pi^2/R^2, so
    gamma_a1 = gamma exactly whether or not gamma was overridden.
    """
    gamma_a_base = rates.gamma - D_a * math.pi**2 / R**2
    if gamma_a_base < 0:
        raise ConfigError("gamma is smaller than the leading diffusion rate")
    return build_mode_basis(R, D_a, D_b, gamma_a_base, rates.gamma_b, n_modes, **kwargs)


def build_multimode_system(basis: ModeBasis, rates: DerivedRates, B: float,
                           p_a: float, p_b: float) -> DriftDiffusion:
    """Drift/diffusion over all basis modes at field B.

    Alkali modes carry (i*Delta - gamma_am) on the diagonal, noble modes
    -gamma_bn (noble decay and noise are kept at multimode level); the
    off-diagonal coupling is -iJ c_mn.  Noise per alkali mode: the
    spin-exchange channel plus thermal rest at (1-p_a)/(2 p_a); per noble
    mode: thermal at (1-p_b)/(2 p_b), restoring commutators under the
    diffusion-induced decay.
    """
    na, nb = basis.n_alkali, basis.n_noble
    n = na + nb
    delta = rates.delta_at(B)
    J = rates.J
    A = np.zeros((n, n), dtype=complex)
    g_am = basis.gamma_am
    g_bn = basis.gamma_bn
    A[:na, :na] = np.diag(1j * delta - g_am)
    A[na:, na:] = np.diag(-g_bn.astype(complex))
    A[:na, na:] = -1j * J * basis.c
    A[na:, :na] = -1j * J * basis.c.T

    c_n = np.zeros(n)
    c_a = np.zeros(n)
    nbar_b = incoherent_occupation(p_b)
    for m in range(na):
        # lowest mode thermalizes at the configured occupation, higher
        # modes at the spin-temperature value (1-p)/(2p)
        nbar_m = rates.n_bar_a if m == 0 else incoherent_occupation(p_a)
        g_ex = min(rates.gamma_ex, g_am[m])
        g_rest = g_am[m] - g_ex
        se_n, se_a = spin_exchange_noise(g_ex, p_a, p_b)
        c_n[m] = se_n + 2.0 * g_rest * nbar_m
        c_a[m] = se_a + 2.0 * g_rest * (nbar_m + 1.0)
    c_n[na:] = 2.0 * g_bn * nbar_b
    c_a[na:] = 2.0 * g_bn * (nbar_b + 1.0)

    labels = tuple(f"a{m}" for m in range(na)) + tuple(f"b{n_}" for n_ in range(nb))
    return DriftDiffusion(A=A, noise_normal=c_n, noise_antinormal=c_a, labels=labels)


def uniform_alkali_vector(basis: ModeBasis) -> np.ndarray:
    """Eigenmode decomposition of the spatially uniform alkali profile.

    The uniform profile is the shape of the noble uniform mode, so its
    (normalized) coefficients over the alkali modes are c[:, 0].  It
    couples to the uniform noble mode at the full rate J by the isometry
    of the overlap matrix.
    """
    u = basis.c[:, 0].copy()
    return u / np.linalg.norm(u)


def initial_multimode_state(basis: ModeBasis, rates: DerivedRates,
                            squeeze_db_a: float = 0.0,
                            displace_a: complex = 0.0,
                            uniform_profile: bool = True) -> GaussianModeState:
    """Thermally seeded multimode state with an optionally excited uniform mode.

    Every eigenmode is seeded with the spin-temperature occupation
    (1-p)/(2p) of its species.  The spatially uniform alkali mode (the
    c[:, 0] superposition when `uniform_profile`, else the lowest
    eigenmode) carries the configured n_bar_a, plus optional squeezing
    (dB) and displacement.
    """
    n_a, n_b = basis.n_alkali, basis.n_noble
    nbars = np.concatenate([
        np.full(n_a, incoherent_occupation(rates.p_a)),
        np.full(n_b, incoherent_occupation(rates.p_b)),
    ])
    state = GaussianModeState.from_occupations(nbars)

    if uniform_profile:
        u = uniform_alkali_vector(basis)
    else:
        u = np.zeros(n_a)
        u[0] = 1.0
    full = np.zeros(n_a + n_b)
    full[:n_a] = u
    xu = np.zeros(2 * (n_a + n_b))
    pu = np.zeros_like(xu)
    xu[0::2] = full
    pu[1::2] = full

    extra = rates.n_bar_a - incoherent_occupation(rates.p_a)
    state.cov += extra * (np.outer(xu, xu) + np.outer(pu, pu))
    if squeeze_db_a:
        sx = 10.0 ** (-squeeze_db_a / 20.0)   # amplitude scale
        sp = 10.0 ** (squeeze_db_a / 20.0)
        M = np.eye(len(xu)) + (sx - 1.0) * np.outer(xu, xu) + (sp - 1.0) * np.outer(pu, pu)
        state.cov = M @ state.cov @ M.T
    if displace_a:
        state.means[:n_a] += u * displace_a
    state.validate()
    return state


@dataclass(frozen=True)
class ReservoirCorrection:
    """Adiabatic-elimination output for a stable/reservoir mode split.

    epsilon_a couples stable alkali modes through eliminated noble
    reservoir modes (and vice versa for epsilon_b); the noise arrays are
    the white-noise variances added to the stable modes.  `bound` is the
    asymptotic magnitude bound J/(pi^2 * gamma_diffusion(r0)).
    """

    n_stable: int
    r0: int
    r1: int
    epsilon_a: np.ndarray      # (S, S) complex
    epsilon_b: np.ndarray      # (S, S) complex
    extra_noise_normal_a: np.ndarray
    extra_noise_antinormal_a: np.ndarray
    extra_noise_normal_b: np.ndarray
    extra_noise_antinormal_b: np.ndarray
    bound_a: float
    bound_b: float


def eliminate_reservoir(basis: ModeBasis, rates: DerivedRates, delta: float,
                        r0: int, r1: int | None = None,
                        strong_factor: float = 10.0) -> ReservoirCorrection:
    """Eliminate reservoir modes r0..r1 (inclusive) into stable-mode terms.

    Stable modes are indices < r0 of each family.  The partial sums over
    the retained reservoir modes are completed by the asymptotic tail
    J/(pi^2 gamma(r1)).  Warns when the least reservoir decay is not much
    faster than J.
    """
    if r0 < 1:
        raise ConfigError("need at least one stable mode")
    if r1 is None:
        r1 = min(basis.n_alkali, basis.n_noble) - 1
    if r1 == r0 - 1:
        # empty reservoir set: no correction at all
        S = r0
        zeros = np.zeros((S, S), dtype=complex)
        z = np.zeros(S)
        return ReservoirCorrection(
            n_stable=S, r0=r0, r1=r1, epsilon_a=zeros, epsilon_b=zeros.copy(),
            extra_noise_normal_a=z, extra_noise_antinormal_a=z.copy(),
            extra_noise_normal_b=z.copy(), extra_noise_antinormal_b=z.copy(),
            bound_a=math.inf, bound_b=math.inf)
    if r1 < r0 or r1 >= basis.n_alkali or r1 >= basis.n_noble:
        raise ConfigError("reservoir range r0..r1 must fit in the basis")
    J = rates.J
    g_am = basis.gamma_am
    g_bn = basis.gamma_bn
    if min(g_am[r0], g_bn[r0]) < strong_factor * J:
        warnings.warn(
            f"reservoir split is not strongly damped: gamma(r0)={min(g_am[r0], g_bn[r0]):.3g}"
            f" vs J={J:.3g}", RuntimeWarning, stacklevel=2)

    S = r0
    res = slice(r0, r1 + 1)
    c_sr = basis.c[:S, res]               # stable alkali x reservoir noble
    c_rs = basis.c[res, :S]               # reservoir alkali x stable noble

    denom_b = g_bn[res] + 1j * delta
    eps_a = (c_sr / denom_b) @ c_sr.conj().T * J
    tail_b = J / (math.pi**2 * g_bn[r1])
    eps_a = eps_a + tail_b

    denom_a = g_am[res] - 1j * delta
    eps_b = (c_rs.conj().T / denom_a[None, :]) @ c_rs * J
    tail_a = J / (math.pi**2 * g_am[r1])
    eps_b = eps_b + tail_a

    # white-noise variances induced by the eliminated modes: decay
    # kappa_s = J^2 sum |c|^2 g/(g^2+delta^2) at the reservoir occupation
    nbar_a = incoherent_occupation(rates.p_a)
    nbar_b = incoherent_occupation(rates.p_b)
    kappa_a = J**2 * (np.abs(c_sr)**2 * (g_bn[res] / (g_bn[res]**2 + delta**2))).sum(axis=1)
    kappa_b = J**2 * (np.abs(c_rs.T)**2 * (g_am[res] / (g_am[res]**2 + delta**2))).sum(axis=1)

    g_diff_b = basis.D_b * (math.pi * r0 / basis.R)**2
    g_diff_a = basis.D_a * (math.pi * r0 / basis.R)**2
    return ReservoirCorrection(
        n_stable=S, r0=r0, r1=r1,
        epsilon_a=eps_a, epsilon_b=eps_b,
        extra_noise_normal_a=2.0 * kappa_a * nbar_b,
        extra_noise_antinormal_a=2.0 * kappa_a * (nbar_b + 1.0),
        extra_noise_normal_b=2.0 * kappa_b * nbar_a,
        extra_noise_antinormal_b=2.0 * kappa_b * (nbar_a + 1.0),
        bound_a=J / (math.pi**2 * g_diff_b) if g_diff_b > 0 else math.inf,
        bound_b=J / (math.pi**2 * g_diff_a) if g_diff_a > 0 else math.inf,
    )


def build_eliminated_system(basis: ModeBasis, rates: DerivedRates, B: float,
                            p_a: float, p_b: float,
                            corr: ReservoirCorrection) -> DriftDiffusion:
    """Stable-mode drift/diffusion including the elimination corrections."""
    S = corr.n_stable
    sub = ModeBasis(R=basis.R, D_a=basis.D_a, D_b=basis.D_b,
                    gamma_a=basis.gamma_a, gamma_b=basis.gamma_b,
                    k_a=basis.k_a[:S], k_b=basis.k_b[:S], c=basis.c[:S, :S],
                    boundary=basis.boundary, robin_length=basis.robin_length)
    dd = build_multimode_system(sub, rates, B, p_a, p_b)
    J = rates.J
    A = dd.A.copy()
    A[:S, :S] += -J * corr.epsilon_a
    A[S:, S:] += -J * corr.epsilon_b.conj()
    c_n = dd.noise_normal.copy()
    c_a = dd.noise_antinormal.copy()
    c_n[:S] += corr.extra_noise_normal_a
    c_a[:S] += corr.extra_noise_antinormal_a
    c_n[S:] += corr.extra_noise_normal_b
    c_a[S:] += corr.extra_noise_antinormal_b
    return DriftDiffusion(A=A, noise_normal=c_n, noise_antinormal=c_a, labels=dd.labels)


def transfer_amplitude(dd: DriftDiffusion, t: float, source: int, target: int) -> complex:
    """Element of the mean-field transfer matrix expm(A t)[target, source]."""
    return complex(expm(dd.A * t)[target, source])


def fock_transfer_probabilities(eta: float, n_added: float, n_in: int,
                                env_truncation: int = 40) -> np.ndarray:
    """P(n_out = k) for a Fock input |n_in> through a thermal-loss channel.

    The channel transmits the amplitude with probability eta and adds
    `n_added` thermal quanta; it is realized as a beam splitter of
    transmissivity eta mixing the signal with a thermal environment mode
    of occupation n_added/(1-eta).  Each total-quanta sector is mixed by
    the exact beam-splitter block, so the result is exact up to the
    environment truncation.  The returned array covers
    k = 0..n_in+env_truncation.
    """
    if not 0.0 <= eta <= 1.0:
        raise ConfigError("eta must be in [0, 1]")
    out = np.zeros(n_in + env_truncation + 1)
    if eta == 1.0 or n_added <= 0:
        theta = math.acos(math.sqrt(eta))
        block = _beam_splitter_block(n_in, theta)
        out[: n_in + 1] = np.abs(block[:, n_in]) ** 2
        return out
    nbar_env = n_added / (1.0 - eta)
    theta = math.acos(math.sqrt(eta))
    weights = (nbar_env / (1.0 + nbar_env)) ** np.arange(env_truncation + 1) \
        / (1.0 + nbar_env)
    for n_e, w in enumerate(weights):
        if w < 1e-15:
            break
        total = n_in + n_e
        block = _beam_splitter_block(total, theta)
        # input column: signal occupation n_in within the total-N sector
        out[: total + 1] += w * np.abs(block[:, n_in]) ** 2
    return out


def _beam_splitter_block(total: int, theta: float) -> np.ndarray:
    """Unitary of exp(theta (a^dag b - a b^dag)) on the total-quanta sector,
    indexed by the signal occupation j = 0..total."""
    j = np.arange(total)
    # generator matrix elements <j+1, N-j-1| a^dag b |j, N-j> = sqrt((j+1)(N-j))
    up = np.sqrt((j + 1) * (total - j))
    gen = np.zeros((total + 1, total + 1))
    gen[j + 1, j] = up
    gen[j, j + 1] = -up
    return expm(theta * gen)
