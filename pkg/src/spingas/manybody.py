"""Stochastic many-spin simulation of pairwise exchange collisions.

The quantum state of N_a alkali-like (electron, spin-1/2) and N_b
noble-gas (nuclear, spin-1/2) spins is evolved exactly inside the single-
or two-excitation subspace.  Each time step (duration tau, the mean time
between collisions of one alkali atom) pairs every alkali spin with a
distinct random noble-gas spin and applies the pair collision unitary
with a random precession angle phi ~ N(phi_mean, phi_std).

Two collision matrices are available:

* "exact": exp(-i phi s.k) restricted to the excitation sector.  Relative
  to the all-down pair phase, a singly excited pair evolves with diagonal
  e^{i phi/2} cos(phi/2) and swap amplitude -i e^{i phi/2} sin(phi/2);
  unitary to machine precision.
* "truncated": the second-order scattering matrix (diagonal
  1 - e^{i phi/2}(1 - cos(phi/2)), swap +i e^{i phi/2} sin(phi/2)),
  unitary only to O(phi^2); it drops the fluctuating collisional-shift
  phase, so its exchange resonance sits at field phase 0 rather than
  phi_mean/2.

A per-step magnetic phase e^{-i b_z_phase} multiplies every amplitude
carrying an alkali excitation; b_z_phase = phi_mean/2 compensates the
mean collisional shift of the exact matrix (resonance, Delta = 0).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .errors import ConfigError, InvariantViolation

__all__ = [
    "CollisionRound",
    "ManyBodyState",
    "draw_round",
    "step",
    "run_single_excitation",
    "run_two_excitation",
    "estimate_exchange_amplitudes",
    "scan_field_phase",
    "exchange_rate",
    "fit_exchange_frequency",
    "fit_envelope_decay",
    "SingleExcitationSeries",
    "TwoExcitationSeries",
    "ExchangeEstimate",
]

_NORM_TOL = 1e-8


def exchange_rate(n_alkali: int, n_noble: int, phi_mean: float) -> float:
    """Collective half-frequency J in units of 1/tau: the populations
    oscillate at 2J = sqrt(N_a/N_b) * phi_mean / tau."""
    return 0.5 * phi_mean * math.sqrt(n_alkali / n_noble)


@dataclass
class CollisionRound:
    """One step's pairing (alkali index -> noble site) and sampled angles.

    The pairing is injective: no noble spin collides with two alkali
    spins in the same step.
    """

    partners: np.ndarray   # (N_a,) distinct noble indices in [0, N_b)
    phi: np.ndarray        # (N_a,) collision angles, rad

    def validate(self, n_noble: int) -> None:
        if len(np.unique(self.partners)) != len(self.partners):
            raise ConfigError("pairing must be injective into the noble sites")
        if self.partners.min() < 0 or self.partners.max() >= n_noble:
            raise ConfigError("partner index out of range")


def draw_round(rng: np.random.Generator, n_alkali: int, n_noble: int,
               phi_mean: float, phi_std: float, clamp: bool = True) -> CollisionRound:
    """Sample a pairing (uniform, without replacement) and Gaussian angles.

    With `clamp` the angles are floored at zero (physical collisions
    always precess forward); disable for strict reproduction of the
    plain-Gaussian statistics.
    """
    partners = rng.choice(n_noble, size=n_alkali, replace=False)
    phi = phi_mean + phi_std * rng.standard_normal(n_alkali)
    if clamp:
        np.clip(phi, 0.0, None, out=phi)
    return CollisionRound(partners=partners, phi=phi)


@dataclass
class ManyBodyState:
    """Amplitudes over an excitation-number-conserving basis.

    sector 1: amplitudes[i] on site i (alkali sites first, then noble).
    sector 2: a symmetric (N, N) matrix with zero diagonal; entry [i, j]
    is the amplitude of the unordered pair {i, j}, and the norm is
    sum_{i<j} |C_ij|^2 = ||C||_F^2 / 2.
    """

    n_alkali: int
    n_noble: int
    sector: int
    amplitudes: np.ndarray
    step_index: int = 0

    @property
    def n_sites(self) -> int:
        return self.n_alkali + self.n_noble

    @classmethod
    def single_excitation(cls, n_alkali: int, n_noble: int,
                          kind: str = "symmetric") -> "ManyBodyState":
        """Initial |1>_a |0>_b (symmetric) or a localized single spin up."""
        c = np.zeros(n_alkali + n_noble, dtype=np.complex128)
        if kind == "symmetric":
            c[:n_alkali] = 1.0 / math.sqrt(n_alkali)
        elif kind == "localized":
            c[0] = 1.0
        else:
            raise ConfigError("kind must be 'symmetric' or 'localized'")
        return cls(n_alkali, n_noble, 1, c)

    @classmethod
    def two_excitation(cls, n_alkali: int, n_noble: int) -> "ManyBodyState":
        """Initial |1>_a |1>_b: one symmetric excitation in each ensemble."""
        n = n_alkali + n_noble
        C = np.zeros((n, n), dtype=np.complex128)
        amp = 1.0 / math.sqrt(n_alkali * n_noble)
        C[:n_alkali, n_alkali:] = amp
        C[n_alkali:, :n_alkali] = amp
        return cls(n_alkali, n_noble, 2, C)

    def norm_sq(self) -> float:
        if self.sector == 1:
            return float(np.sum(np.abs(self.amplitudes) ** 2))
        return 0.5 * float(np.sum(np.abs(self.amplitudes) ** 2))

    # --- sector-1 observables -------------------------------------------
    def fidelity_10(self) -> float:
        """|<1_a 0_b | psi>|^2."""
        s = self.amplitudes[: self.n_alkali].sum()
        return float(abs(s) ** 2) / self.n_alkali

    def fidelity_01(self) -> float:
        """|<0_a 1_b | psi>|^2."""
        s = self.amplitudes[self.n_alkali:].sum()
        return float(abs(s) ** 2) / self.n_noble

    def symmetric_noble_amplitude(self) -> complex:
        """<0_a 1_b | psi>."""
        return complex(self.amplitudes[self.n_alkali:].sum() / math.sqrt(self.n_noble))

    # --- sector-2 observables -------------------------------------------
    def p_coincidence(self) -> float:
        """|<1_a 1_b | psi>|^2."""
        na = self.n_alkali
        s = self.amplitudes[:na, na:].sum()
        return float(abs(s) ** 2) / (na * self.n_noble)

    def p_bunch_alkali(self) -> float:
        """|<2_a 0_b | psi>|^2."""
        na = self.n_alkali
        s = self.amplitudes[:na, :na].sum()
        return float(abs(s) ** 2) / (2.0 * na * (na - 1))

    def p_bunch_noble(self) -> float:
        """|<0_a 2_b | psi>|^2."""
        na, nb = self.n_alkali, self.n_noble
        s = self.amplitudes[na:, na:].sum()
        return float(abs(s) ** 2) / (2.0 * nb * (nb - 1))


def _pair_coefficients(phi: np.ndarray, matrix: str):
    """Per-pair (diagonal, swap) amplitudes relative to the vacuum phase."""
    half = 0.5 * phi
    e = np.exp(1j * half)
    if matrix == "exact":
        diag = e * np.cos(half)
        swap = -1j * e * np.sin(half)
    elif matrix == "truncated":
        diag = 1.0 - e * (1.0 - np.cos(half))
        swap = 1j * e * np.sin(half)
    else:
        raise ConfigError("matrix must be 'exact' or 'truncated'")
    return diag, swap


def _apply_round_single(c, n_alkali, partners, phi, field_factor, matrix):
    diag, swap = _pair_coefficients(phi, matrix)
    idx = n_alkali + partners
    ca = c[:n_alkali].copy()   # copy: the slice view is overwritten below
    cb = c[idx]
    c[:n_alkali] = field_factor * (diag * ca + swap * cb)
    c[idx] = diag * cb + swap * ca


def _apply_round_double(C, n_alkali, partners, phi, field_factor, matrix):
    diag, swap = _pair_coefficients(phi, matrix)
    for a, (b_off, d, s) in enumerate(zip(partners, diag, swap)):
        b = n_alkali + b_off
        row_a = C[a].copy()
        row_b = C[b].copy()
        keep = row_a[b]            # both excitations inside the pair: unchanged
        new_a = d * row_a + s * row_b
        new_b = d * row_b + s * row_a
        new_a[a] = 0.0
        new_a[b] = keep
        new_b[b] = 0.0
        new_b[a] = keep
        C[a] = new_a
        C[:, a] = new_a
        C[b] = new_b
        C[:, b] = new_b
    if field_factor != 1.0:
        C[:n_alkali, :] *= field_factor
        C[:, :n_alkali] *= field_factor


def step(state: ManyBodyState, collision_round: CollisionRound, b_z_phase: float,
         matrix: str = "exact") -> ManyBodyState:
    """Apply one collision round plus the magnetic phase; returns a new state.

    Aborts if the exact-unitary norm drifts beyond 1e-8 (an implementation
    fault, not physics); the truncated matrix is exempt since it is
    unitary only to O(phi^2).
    """
    collision_round.validate(state.n_noble)
    amps = state.amplitudes.copy()
    fac = np.exp(-1j * b_z_phase)
    if state.sector == 1:
        _apply_round_single(amps, state.n_alkali, collision_round.partners,
                            collision_round.phi, fac, matrix)
    else:
        _apply_round_double(amps, state.n_alkali, collision_round.partners,
                            collision_round.phi, fac, matrix)
    out = ManyBodyState(state.n_alkali, state.n_noble, state.sector, amps,
                        state.step_index + 1)
    if matrix == "exact":
        drift = abs(out.norm_sq() - state.norm_sq())
        if drift > _NORM_TOL:
            raise InvariantViolation(f"norm drifted by {drift:.3e} in one step")
    return out


@dataclass
class SingleExcitationSeries:
    steps: np.ndarray      # (n,) step index (time in units of tau)
    f10: np.ndarray
    f01: np.ndarray
    final_norm: float


@dataclass
class TwoExcitationSeries:
    steps: np.ndarray
    p_coincidence: np.ndarray
    p_bunch_a: np.ndarray
    p_bunch_b: np.ndarray
    final_norm: float


def _default_record(steps: int) -> int:
    return max(1, steps // 4096)


def run_single_excitation(n_alkali: int, n_noble: int, phi_mean: float, phi_std: float,
                          steps: int, seed: int, initial: str = "symmetric",
                          b_z_phase: float | None = None, matrix: str = "exact",
                          clamp: bool = True,
                          record_every: int | None = None) -> SingleExcitationSeries:
    """Evolve one single-excitation trajectory, recording the exchange
    fidelities F_10 and F_01.

    b_z_phase defaults to phi_mean/2 (resonance for the exact matrix).
    Deterministic per seed: the same seed gives a bit-identical series.
    """
    if record_every is None:
        record_every = _default_record(steps)
    if matrix not in ("exact", "truncated"):
        raise ConfigError("matrix must be 'exact' or 'truncated'")
    rng = np.random.default_rng(seed)
    state = ManyBodyState.single_excitation(n_alkali, n_noble, initial)
    c = state.amplitudes
    fac = np.exp(-1j * (phi_mean / 2.0 if b_z_phase is None else b_z_phase))

    rec_steps, rec_f10, rec_f01 = [0], [state.fidelity_10()], [state.fidelity_01()]
    sqrt_na, sqrt_nb = math.sqrt(n_alkali), math.sqrt(n_noble)
    for n in range(1, steps + 1):
        rnd = draw_round(rng, n_alkali, n_noble, phi_mean, phi_std, clamp)
        _apply_round_single(c, n_alkali, rnd.partners, rnd.phi, fac, matrix)
        if n % record_every == 0 or n == steps:
            rec_steps.append(n)
            rec_f10.append(abs(c[:n_alkali].sum() / sqrt_na) ** 2)
            rec_f01.append(abs(c[n_alkali:].sum() / sqrt_nb) ** 2)

    norm = float(np.sum(np.abs(c) ** 2))
    if matrix == "exact" and abs(norm - 1.0) > 1e-6:
        raise InvariantViolation(f"norm drifted to {norm!r} over {steps} steps")
    return SingleExcitationSeries(np.array(rec_steps), np.array(rec_f10),
                                  np.array(rec_f01), norm)


def run_two_excitation(n_alkali: int, n_noble: int, phi_mean: float, phi_std: float,
                       steps: int, seed: int, b_z_phase: float | None = None,
                       matrix: str = "exact", clamp: bool = True,
                       record_every: int | None = None) -> TwoExcitationSeries:
    """Evolve |1>_a |1>_b, recording coincidence and bunching probabilities."""
    if record_every is None:
        record_every = _default_record(steps)
    rng = np.random.default_rng(seed)
    state = ManyBodyState.two_excitation(n_alkali, n_noble)
    C = state.amplitudes
    fac = np.exp(-1j * (phi_mean / 2.0 if b_z_phase is None else b_z_phase))

    rec = [(0, state.p_coincidence(), state.p_bunch_alkali(), state.p_bunch_noble())]
    na = n_alkali
    nb = n_noble
    for n in range(1, steps + 1):
        rnd = draw_round(rng, n_alkali, n_noble, phi_mean, phi_std, clamp)
        _apply_round_double(C, n_alkali, rnd.partners, rnd.phi, fac, matrix)
        if n % record_every == 0 or n == steps:
            s_ab = C[:na, na:].sum()
            s_aa = C[:na, :na].sum()
            s_bb = C[na:, na:].sum()
            rec.append((n,
                        abs(s_ab) ** 2 / (na * nb),
                        abs(s_aa) ** 2 / (2.0 * na * (na - 1)),
                        abs(s_bb) ** 2 / (2.0 * nb * (nb - 1))))

    norm = 0.5 * float(np.sum(np.abs(C) ** 2))
    if matrix == "exact" and abs(norm - 1.0) > 1e-6:
        raise InvariantViolation(f"norm drifted to {norm!r} over {steps} steps")
    arr = np.array(rec)
    return TwoExcitationSeries(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3], norm)


@dataclass
class ExchangeEstimate:
    """Short-time deterministic/stochastic decomposition across seeds."""

    steps: np.ndarray            # sample times, units of tau
    mean_amplitude: np.ndarray   # |seed-averaged <0_a 1_b| psi>|
    residual: np.ndarray         # seed-averaged off-symmetric weight
    coupling_rate: float         # fitted J, per tau
    residual_rate: float         # fitted d/dt of the off-symmetric weight, per tau
    n_seeds: int


def estimate_exchange_amplitudes(n_alkali: int, n_noble: int, phi_mean: float,
                                 phi_std: float, steps: int, seeds: int,
                                 seed0: int = 0, record_every: int | None = None,
                                 matrix: str = "exact", clamp: bool = False,
                                 deterministic_pairing: bool = False) -> ExchangeEstimate:
    """Estimate the deterministic slope J and the stochastic residual rate.

    Averages the symmetric noble amplitude over seeds (its modulus grows
    as J*t) and the mean off-symmetric weight 1 - F10 - F01 (growing as
    the stochastic variance eps^2).  Valid in the linear regime
    steps << 1/(J tau).  With `deterministic_pairing` the same pairing is
    reused every step, isolating angle randomness.
    """
    if steps * exchange_rate(n_alkali, n_noble, phi_mean) > 0.2:
        warnings.warn("window exceeds the linear regime t << 1/J", RuntimeWarning,
                      stacklevel=2)
    if seeds < 100:
        warnings.warn("insufficient statistics: fewer than 100 seeds", RuntimeWarning,
                      stacklevel=2)
    if record_every is None:
        record_every = max(1, steps // 16)
    n_rec = steps // record_every
    rec_steps = record_every * np.arange(1, n_rec + 1)
    amp_acc = np.zeros(n_rec, dtype=complex)
    resid_acc = np.zeros(n_rec)
    sqrt_na, sqrt_nb = math.sqrt(n_alkali), math.sqrt(n_noble)
    fac = np.exp(-1j * phi_mean / 2.0)

    for s in range(seeds):
        rng = np.random.default_rng(seed0 + s)
        c = ManyBodyState.single_excitation(n_alkali, n_noble).amplitudes
        fixed = draw_round(rng, n_alkali, n_noble, phi_mean, phi_std, clamp) \
            if deterministic_pairing else None
        k = 0
        for n in range(1, steps + 1):
            rnd = fixed if fixed is not None else draw_round(
                rng, n_alkali, n_noble, phi_mean, phi_std, clamp)
            _apply_round_single(c, n_alkali, rnd.partners, rnd.phi, fac, matrix)
            if n % record_every == 0 and k < n_rec:
                amp_acc[k] += c[n_alkali:].sum() / sqrt_nb
                resid_acc[k] += 1.0 - abs(c[:n_alkali].sum() / sqrt_na) ** 2 \
                    - abs(c[n_alkali:].sum() / sqrt_nb) ** 2
                k += 1

    mean_amp = np.abs(amp_acc / seeds)
    resid = resid_acc / seeds
    t = rec_steps.astype(float)
    j_fit = float(np.dot(t, mean_amp) / np.dot(t, t))
    r_fit = float(np.dot(t, resid) / np.dot(t, t))
    return ExchangeEstimate(rec_steps, mean_amp, resid, j_fit, r_fit, seeds)


def scan_field_phase(n_alkali: int, n_noble: int, phi_mean: float, phi_std: float,
                     phases, steps: int, seed: int = 0,
                     matrix: str = "exact") -> tuple[np.ndarray, float]:
    """Exchange contrast (max F_01) for each candidate magnetic phase.

    Returns the contrast array and the best phase.  The exact pairing
    statistics shift the resonance slightly from the nominal phi_mean/2,
    so acceptance-critical runs can calibrate with this helper.
    """
    phases = np.asarray(phases, dtype=float)
    contrast = np.empty(len(phases))
    for i, ph in enumerate(phases):
        series = run_single_excitation(n_alkali, n_noble, phi_mean, phi_std,
                                       steps, seed, b_z_phase=ph, matrix=matrix)
        contrast[i] = series.f01.max()
    return contrast, float(phases[contrast.argmax()])


def fit_exchange_frequency(steps: np.ndarray, f01: np.ndarray,
                           two_j_guess: float) -> tuple[float, float]:
    """Fit F_01(t) = A sin^2(J t) e^{-g t}; returns (2J per tau, contrast A)."""

    def model(t, amp, two_j, g):
        return amp * np.sin(0.5 * two_j * t) ** 2 * np.exp(-g * t)

    p0 = (max(f01.max(), 1e-6), two_j_guess, 1e-12)
    popt, _ = curve_fit(model, steps.astype(float), f01, p0=p0,
                        bounds=([0.0, 0.1 * two_j_guess, 0.0],
                                [1.5, 10.0 * two_j_guess, np.inf]),
                        maxfev=20000)
    return float(popt[1]), float(popt[0])


def fit_envelope_decay(steps: np.ndarray, values: np.ndarray) -> float:
    """Exponential decay rate (per tau) of a positive envelope by a log fit."""
    mask = values > 0
    slope = np.polyfit(steps[mask].astype(float), np.log(values[mask]), 1)[0]
    return float(-slope)
