"""Mean-field Bloch dynamics of the two coupled mean spin vectors.

State variables are the per-atom mean spins <f> (alkali, slowed) and <k>
(noble gas).  The equations of motion combine mutual precession at n*zeta,
incoherent spin transfer at n*k_se, Zeeman precession at the slowed Larmor
frequencies, and transverse relaxation (the longitudinal components are
held by pumping and are not relaxed here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError
from .params import DerivedRates, FieldSchedule

__all__ = ["BlochState", "BlochTrajectory", "bloch_rhs", "integrate",
           "tilted_state", "mode_populations"]

_Z = np.array([0.0, 0.0, 1.0])


@dataclass
class BlochState:
    """Mean spin vectors at time t: f = <f_hat> (alkali), k = <k_hat>."""

    f: np.ndarray
    k: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.k = np.asarray(self.k, dtype=float)
        if self.f.shape != (3,) or self.k.shape != (3,):
            raise ValueError("f and k must be 3-vectors")


@dataclass
class BlochTrajectory:
    """Time series of a Bloch integration; arrays indexed by sample."""

    t: np.ndarray        # (n,)
    f: np.ndarray        # (n, 3)
    k: np.ndarray        # (n, 3)

    @property
    def f_perp_sq(self) -> np.ndarray:
        return self.f[:, 0] ** 2 + self.f[:, 1] ** 2

    @property
    def k_perp_sq(self) -> np.ndarray:
        return self.k[:, 0] ** 2 + self.k[:, 1] ** 2


def bloch_rhs(state: BlochState, rates: DerivedRates, B: float):
    """Right-hand side (df/dt, dk/dt) of the coupled Bloch equations at field B."""
    f, k = state.f, state.k
    r = rates
    omega_a = r.g_a * B / r.q   # slowed alkali Larmor frequency
    omega_b = r.g_b * B
    df = (r.n_b * r.zeta * np.cross(k, f)
          + r.n_b * r.k_se * (r.q * k - f)
          + omega_a * np.cross(_Z, f))
    dk = (r.n_a * r.zeta * np.cross(f, k)
          + r.n_a * r.k_se * (f / r.q - k)
          + omega_b * np.cross(_Z, k))
    # transverse relaxation only; gamma is the total alkali rate
    df[0] -= r.gamma * f[0]
    df[1] -= r.gamma * f[1]
    dk[0] -= r.gamma_b * k[0]
    dk[1] -= r.gamma_b * k[1]
    return df, dk


def integrate(initial: BlochState, rates: DerivedRates, schedule: FieldSchedule,
              t_end: float, dt: float, record_every: int = 1) -> BlochTrajectory:
    """Fixed-step RK4 trajectory over [0, t_end] under a field schedule.

    dt is clamped to 0.01 * min(1/J, 1/|Delta(B)|, 1/gamma) per segment;
    segment boundaries are honored exactly.  Raises IntegrationError on
    step-size underflow (more than ~1e9 steps).
    """
    f = initial.f.astype(float).copy()
    k = initial.k.astype(float).copy()
    ts, fs, ks = [initial.t], [f.copy()], [k.copy()]

    t_now = 0.0
    total_steps = 0
    for t0, t1, B in schedule.spans(t_end):
        limits = [rates.J, abs(rates.delta_at(B)), rates.gamma, rates.gamma_b]
        fastest = max(limits)
        dt_seg = dt
        if fastest > 0:
            dt_seg = min(dt_seg, 0.01 / fastest)
        n = max(1, math.ceil((t1 - t0) / dt_seg))
        if n > 1e9:
            raise IntegrationError("step-size underflow: segment needs more than 1e9 steps")
        h = (t1 - t0) / n
        state = BlochState(f, k, t_now)
        for i in range(n):
            state.f, state.k = f, k
            k1f, k1k = bloch_rhs(state, rates, B)
            state.f, state.k = f + 0.5 * h * k1f, k + 0.5 * h * k1k
            k2f, k2k = bloch_rhs(state, rates, B)
            state.f, state.k = f + 0.5 * h * k2f, k + 0.5 * h * k2k
            k3f, k3k = bloch_rhs(state, rates, B)
            state.f, state.k = f + h * k3f, k + h * k3k
            k4f, k4k = bloch_rhs(state, rates, B)
            f = f + (h / 6.0) * (k1f + 2 * k2f + 2 * k3f + k4f)
            k = k + (h / 6.0) * (k1k + 2 * k2k + 2 * k3k + k4k)
            t_now = t0 + (i + 1) * h
            total_steps += 1
            if total_steps % record_every == 0 or i == n - 1:
                ts.append(t_now)
                fs.append(f.copy())
                ks.append(k.copy())

    return BlochTrajectory(np.array(ts), np.array(fs), np.array(ks))


def tilted_state(rates: DerivedRates, n_excitations_a: float, volume: float,
                 phase: float = 0.0) -> BlochState:
    """Polarized state with a small transverse alkali tilt.

    The tilt is sized so that the bosonic-mode population <a^dag a> equals
    `n_excitations_a` under <a> = sqrt(N_a/(q p_a)) <f^->, with
    N_a = n_a * volume.  The noble spin starts fully longitudinal.
    """
    N_a = rates.n_a * volume
    amp = math.sqrt(n_excitations_a * rates.q * rates.p_a / N_a)
    f = np.array([amp * math.cos(phase), -amp * math.sin(phase),
                  -rates.q * rates.p_a / 2.0])
    k = np.array([0.0, 0.0, -rates.p_b / 2.0])
    return BlochState(f, k, 0.0)


def mode_populations(traj: BlochTrajectory, rates: DerivedRates, volume: float):
    """Bosonic-mode populations (<a^dag a>, <b^dag b>) along a trajectory.

    Uses the coherent-state correspondence <a> = sqrt(N_a/(q p_a)) <f^->
    and <b> = sqrt(N_b/p_b) <k^->.
    """
    N_a = rates.n_a * volume
    N_b = rates.n_b * volume
    n_exc_a = N_a * traj.f_perp_sq / (rates.q * rates.p_a)
    n_exc_b = N_b * traj.k_perp_sq / rates.p_b
    return n_exc_a, n_exc_b
