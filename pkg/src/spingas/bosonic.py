"""Quantum propagation of the collective bosonic modes.

Two propagators over the same drift/diffusion description:

* Gaussian: complex means + real quadrature covariance (X = (a+a^dag)/sqrt2,
  P = (a-a^dag)/(i sqrt2), vacuum variance 1/2).  Evolution per constant-field
  segment is exact (matrix exponential / Van Loan integral of the Lyapunov
  equation), so `dt` only sets the output sampling.
* Fock: truncated density matrix under the equivalent Lindblad master
  equation, integrated by fixed-step RK4.

The two-mode system has drift A = [[i*Delta - gamma, -iJ], [-iJ, 0]] in the
noble-gas rotating frame; noble-gas decay and noise are omitted at two-mode
level.  Collisional noise enters the alkali mode through a spin-exchange
channel with normally/anti-normally ordered variances
(2 -+ (p_a+p_b))/(4 p_a) * 2*gamma_ex and a thermal channel of rate
gamma - gamma_ex at occupation n_bar_a.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, IntegrationError, InvariantViolation
from .params import DerivedRates, FieldSchedule

__all__ = [
    "DriftDiffusion",
    "GaussianModeState",
    "FockDensityState",
    "build_two_mode",
    "spin_exchange_noise",
    "propagate_gaussian",
    "propagate_fock",
    "squeezing_db",
    "quadrature_drift",
]

VACUUM_VAR = 0.5


@dataclass(frozen=True)
class DriftDiffusion:
    """Linear drift and per-mode noise of a set of coupled bosonic modes.

    A is the complex drift matrix (d<v>/dt = A <v> for v the vector of
    annihilation operators).  noise_normal / noise_antinormal hold the
    per-mode normally and anti-normally ordered noise variances
    <F^dag F> and <F F^dag> (delta-correlated, phase symmetric), from
    which the quadrature diffusion matrix D follows.
    """

    A: np.ndarray
    noise_normal: np.ndarray
    noise_antinormal: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "noise_normal", np.asarray(self.noise_normal, dtype=float))
        object.__setattr__(self, "noise_antinormal", np.asarray(self.noise_antinormal, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ConfigError("A must be square")
        if self.noise_normal.shape != (n,) or self.noise_antinormal.shape != (n,):
            raise ConfigError("noise vectors must have one entry per mode")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"m{i}" for i in range(n)))

    @property
    def n_modes(self) -> int:
        return self.A.shape[0]

    @property
    def D(self) -> np.ndarray:
        """Quadrature diffusion matrix, (x0,p0,x1,p1,...) ordering."""
        d = np.zeros(2 * self.n_modes)
        per_mode = 0.5 * (self.noise_normal + self.noise_antinormal)
        d[0::2] = per_mode
        d[1::2] = per_mode
        return np.diag(d)

    @property
    def decay(self) -> np.ndarray:
        """Per-mode amplitude decay rates, -Re(diag A)."""
        return -np.real(np.diag(self.A))

    @property
    def thermal_occupation(self) -> np.ndarray:
        """Effective thermal occupation per mode, <F^dag F>/(2 Gamma)."""
        gam = self.decay
        out = np.zeros_like(gam)
        mask = gam > 0
        out[mask] = self.noise_normal[mask] / (2.0 * gam[mask])
        return out


def quadrature_drift(A: np.ndarray) -> np.ndarray:
    """Real quadrature-space form of a complex (passive) drift matrix.

    Each entry alpha + i*beta maps to the 2x2 block [[alpha, -beta],
    [beta, alpha]] acting on (x, p).
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    out = np.zeros((2 * n, 2 * n))
    out[0::2, 0::2] = A.real
    out[1::2, 1::2] = A.real
    out[0::2, 1::2] = -A.imag
    out[1::2, 0::2] = A.imag
    return out


def spin_exchange_noise(gamma_ex: float, p_a: float, p_b: float) -> tuple[float, float]:
    """(normally, anti-normally) ordered variances of the spin-exchange
    noise channel: (2 -+ (p_a+p_b))/(4 p_a) * 2*gamma_ex.

    Vacuum (0, 2*gamma_ex) at full polarization.
    """
    c_n = (2.0 - p_a - p_b) / (4.0 * p_a) * 2.0 * gamma_ex
    c_a = (2.0 + p_a + p_b) / (4.0 * p_a) * 2.0 * gamma_ex
    return c_n, c_a


def build_two_mode(rates: DerivedRates, B: float, p_a: float, p_b: float) -> DriftDiffusion:
    """Two-mode drift/diffusion at field B.

    Spin-exchange noise carries the polarization-dependent variance
    factors; the remaining relaxation gamma - gamma_ex is thermal at
    occupation n_bar_a.  At p_a = p_b = 1 the total noise is exactly
    vacuum (normally ordered part zero).
    """
    delta = rates.delta_at(B)
    J = rates.J
    gam = rates.gamma
    A = np.array([[1j * delta - gam, -1j * J], [-1j * J, 0.0]], dtype=complex)

    g_ex = min(rates.gamma_ex, gam)  # exchange channel cannot exceed the total
    g_rest = gam - g_ex
    se_normal, se_antinormal = spin_exchange_noise(g_ex, p_a, p_b)
    nbar = rates.n_bar_a
    c_n = se_normal + 2.0 * g_rest * nbar
    c_a = se_antinormal + 2.0 * g_rest * (nbar + 1.0)
    return DriftDiffusion(
        A=A,
        noise_normal=np.array([c_n, 0.0]),
        noise_antinormal=np.array([c_a, 0.0]),
        labels=("a", "b"),
    )


# ---------------------------------------------------------------------------
# Gaussian states
# ---------------------------------------------------------------------------

@dataclass
class GaussianModeState:
    """Gaussian state: complex mode means and quadrature covariance."""

    means: np.ndarray        # (n,) complex <a_m>
    cov: np.ndarray          # (2n, 2n) real, (x0,p0,x1,p1,...) ordering
    t: float = 0.0

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=complex)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.means.shape[0]
        if self.cov.shape != (2 * n, 2 * n):
            raise ConfigError("covariance must be 2n x 2n")

    @classmethod
    def vacuum(cls, n_modes: int) -> "GaussianModeState":
        return cls(np.zeros(n_modes, dtype=complex),
                   VACUUM_VAR * np.eye(2 * n_modes))

    @classmethod
    def from_occupations(cls, nbars: Sequence[float]) -> "GaussianModeState":
        """Product of thermal states with the given occupations."""
        nbars = np.asarray(nbars, dtype=float)
        diag = np.repeat(nbars + VACUUM_VAR, 2)
        return cls(np.zeros(len(nbars), dtype=complex), np.diag(diag))

    @property
    def n_modes(self) -> int:
        return self.means.shape[0]

    def copy(self) -> "GaussianModeState":
        return GaussianModeState(self.means.copy(), self.cov.copy(), self.t)

    def displace(self, mode: int, alpha: complex) -> "GaussianModeState":
        out = self.copy()
        out.means[mode] += alpha
        return out

    def squeeze(self, mode: int, db: float) -> "GaussianModeState":
        """Scale the X variance by 10^(-db/10) and P by 10^(+db/10)."""
        out = self.copy()
        sx, sp = 10.0 ** (-db / 10.0), 10.0 ** (db / 10.0)
        ix, ip = 2 * mode, 2 * mode + 1
        scale = np.ones(2 * self.n_modes)
        scale[ix], scale[ip] = math.sqrt(sx), math.sqrt(sp)
        out.cov = out.cov * np.outer(scale, scale)
        return out

    def quad_variance(self, mode: int, quad: str = "x") -> float:
        i = 2 * mode + (0 if quad == "x" else 1)
        return float(self.cov[i, i])

    def population(self, mode: int) -> float:
        """<a^dag a> including the mean displacement."""
        ix, ip = 2 * mode, 2 * mode + 1
        return float(self.cov[ix, ix] + self.cov[ip, ip] - 1.0) / 2.0 \
            + abs(self.means[mode]) ** 2

    def validate(self, tol: float = 1e-9) -> None:
        """Check symmetry and the uncertainty relation cov + i Omega/2 >= 0."""
        if not np.allclose(self.cov, self.cov.T, atol=1e-12):
            raise InvariantViolation("covariance matrix is not symmetric")
        n = self.n_modes
        omega = np.zeros((2 * n, 2 * n))
        for m in range(n):
            omega[2 * m, 2 * m + 1] = 1.0
            omega[2 * m + 1, 2 * m] = -1.0
        eigs = np.linalg.eigvalsh(self.cov + 0.5j * omega)
        if eigs.min() < -tol:
            raise InvariantViolation(
                f"uncertainty relation violated: min eigenvalue {eigs.min():.3e}")


def squeezing_db(state: GaussianModeState, mode: int, quad: str = "x") -> float:
    """Noise reduction below vacuum of one quadrature, in dB."""
    return -10.0 * math.log10(state.quad_variance(mode, quad) / VACUUM_VAR)


def _segment_systems(system, schedule: FieldSchedule | None, t_end: float):
    """Resolve (t0, t1, DriftDiffusion) spans from a system spec."""
    if schedule is None:
        if callable(system):
            raise ConfigError("a field schedule is required with a system builder")
        return [(0.0, t_end, system)]
    if callable(system):
        return [(t0, t1, system(B)) for t0, t1, B in schedule.spans(t_end)]
    if len(schedule.segments) > 1:
        raise ConfigError("multi-segment schedule needs a system builder B -> DriftDiffusion")
    return [(t0, t1, system) for t0, t1, _ in schedule.spans(t_end)]


def propagate_gaussian(state: GaussianModeState, system, schedule: FieldSchedule | None,
                       t_end: float, dt: float,
                       validate: bool = True) -> list[GaussianModeState]:
    """Exact Gaussian evolution, sampled every dt within each field segment.

    `system` is a DriftDiffusion (constant field) or a builder B -> DriftDiffusion
    used with `schedule`.  Means follow d<v>/dt = A<v>; the covariance obeys
    the Lyapunov equation dS/dt = Abar S + S Abar^T + D, both integrated by
    per-segment matrix exponentials (Van Loan construction).
    """
    if validate:
        state.validate()
    out = [state.copy()]
    means = state.means.copy()
    cov = state.cov.copy()
    t_now = state.t

    for t0, t1, dd in _segment_systems(system, schedule, t_end):
        n_steps = max(1, round((t1 - t0) / dt))
        h = (t1 - t0) / n_steps
        Ec = expm(dd.A * h)
        Abar = quadrature_drift(dd.A)
        n2 = Abar.shape[0]
        block = np.zeros((2 * n2, 2 * n2))
        block[:n2, :n2] = Abar
        block[:n2, n2:] = dd.D
        block[n2:, n2:] = -Abar.T
        eb = expm(block * h)
        E = eb[:n2, :n2]
        Q = eb[:n2, n2:] @ E.T
        Q = 0.5 * (Q + Q.T)
        for i in range(n_steps):
            means = Ec @ means
            cov = E @ cov @ E.T + Q
            cov = 0.5 * (cov + cov.T)
            t_now = t0 + (i + 1) * h
            out.append(GaussianModeState(means.copy(), cov.copy(), t_now))

    if validate:
        out[-1].validate()
    return out


# ---------------------------------------------------------------------------
# Fock states
# ---------------------------------------------------------------------------

def _destroy(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1)


def _mode_ops(n_modes: int, n_max: int) -> list[np.ndarray]:
    dim = n_max + 1
    eye = np.eye(dim)
    ops = []
    for m in range(n_modes):
        factors = [eye] * n_modes
        factors[m] = _destroy(dim)
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append(op)
    return ops


@dataclass
class FockDensityState:
    """Density matrix over a product of Fock spaces truncated at n_max."""

    rho: np.ndarray
    n_max: int
    n_modes: int
    t: float = 0.0
    labels: tuple[str, ...] = ()

    @classmethod
    def from_fock(cls, ns: Sequence[int], n_max: int) -> "FockDensityState":
        if max(ns) > n_max:
            raise ConfigError("initial Fock occupation exceeds n_max")
        dim = n_max + 1
        idx = 0
        for n in ns:
            idx = idx * dim + n
        total = dim ** len(ns)
        rho = np.zeros((total, total), dtype=complex)
        rho[idx, idx] = 1.0
        return cls(rho, n_max, len(ns))

    @classmethod
    def from_coherent(cls, alphas: Sequence[complex], n_max: int) -> "FockDensityState":
        dim = n_max + 1
        psi = None
        for alpha in alphas:
            ns = np.arange(dim)
            amp = np.exp(-abs(alpha) ** 2 / 2.0) * alpha ** ns \
                / np.sqrt([math.factorial(int(n)) for n in ns])
            psi = amp if psi is None else np.kron(psi, amp)
        rho = np.outer(psi, psi.conj())
        rho /= np.trace(rho).real  # renormalize the truncation tail
        return cls(rho.astype(complex), n_max, len(alphas))

    @property
    def dim(self) -> int:
        return self.n_max + 1

    def copy(self) -> "FockDensityState":
        return FockDensityState(self.rho.copy(), self.n_max, self.n_modes, self.t, self.labels)

    def populations(self, mode: int) -> np.ndarray:
        """Marginal P(n_mode = k) for k = 0..n_max."""
        shape = (self.dim,) * self.n_modes
        diag = np.real(np.diag(self.rho)).reshape(shape)
        axes = tuple(i for i in range(self.n_modes) if i != mode)
        return diag.sum(axis=axes)

    def mean_occupation(self, mode: int) -> float:
        return float(np.dot(self.populations(mode), np.arange(self.dim)))

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.rho @ op))

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))

    def validate(self, trace_tol: float = 1e-8, eig_tol: float = 1e-9) -> None:
        tr = np.trace(self.rho)
        if abs(tr - 1.0) > trace_tol:
            raise InvariantViolation(f"trace deviates from 1 by {abs(tr - 1):.3e}")
        if not np.allclose(self.rho, self.rho.conj().T, atol=1e-10):
            raise InvariantViolation("density matrix is not Hermitian")
        eigs = np.linalg.eigvalsh(self.rho)
        if eigs.min() < -eig_tol:
            raise InvariantViolation(f"negative eigenvalue {eigs.min():.3e}")


def _lindblad_terms(dd: DriftDiffusion, n_max: int):
    """Hamiltonian and collapse operators equivalent to a DriftDiffusion.

    The modal Hamiltonian matrix is h = i(A + Gamma) with Gamma the
    diagonal decay part, so the drift sign convention of A is preserved
    exactly.  Each decaying mode gets loss at 2*Gamma*(1+n_eff) and gain
    at 2*Gamma*n_eff with n_eff read off the noise vectors.
    """
    n = dd.n_modes
    gam = dd.decay
    h = 1j * (dd.A + np.diag(gam))
    if not np.allclose(h, h.conj().T, atol=1e-10):
        raise ConfigError("drift matrix is not of Hamiltonian-plus-decay form")
    ops = _mode_ops(n, n_max)
    H = np.zeros_like(ops[0])
    for j in range(n):
        for k in range(n):
            if h[j, k] != 0:
                H = H + h[j, k] * (ops[j].conj().T @ ops[k])
    collapse = []
    nbar = dd.thermal_occupation
    for m in range(n):
        if gam[m] > 0:
            collapse.append((2.0 * gam[m] * (1.0 + nbar[m]), ops[m]))
            if nbar[m] > 0:
                collapse.append((2.0 * gam[m] * nbar[m], ops[m].conj().T))
    return H, collapse


def propagate_fock(state: FockDensityState, system, schedule: FieldSchedule | None,
                   t_end: float, dt: float, record_every: int = 1,
                   leak_tol: float = 1e-6) -> list[FockDensityState]:
    """RK4 master-equation evolution of a truncated Fock density matrix.

    Warns when the total population of any mode's top Fock level exceeds
    `leak_tol` (truncation leak).  Trace is renormalization-free; RK4
    preserves it to integrator accuracy.
    """
    if state.n_modes > 3:
        raise ConfigError("Fock propagation is limited to 3 modes")
    rho = state.rho.copy()
    out = [state.copy()]
    t_now = state.t
    step_count = 0

    for t0, t1, dd in _segment_systems(system, schedule, t_end):
        H, collapse = _lindblad_terms(dd, state.n_max)
        pre = [(g, L, L.conj().T, L.conj().T @ L) for g, L in collapse]

        def rhs(r):
            drho = -1j * (H @ r - r @ H)
            for g, L, Ld, LdL in pre:
                drho += g * (L @ r @ Ld - 0.5 * (LdL @ r + r @ LdL))
            return drho

        n_steps = max(1, math.ceil((t1 - t0) / dt))
        h = (t1 - t0) / n_steps
        for i in range(n_steps):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * h * k1)
            k3 = rhs(rho + 0.5 * h * k2)
            k4 = rhs(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t_now = t0 + (i + 1) * h
            step_count += 1
            if step_count % record_every == 0 or i == n_steps - 1:
                snap = FockDensityState(rho.copy(), state.n_max, state.n_modes,
                                        t_now, state.labels)
                out.append(snap)

    top = max(out[-1].populations(m)[-1] for m in range(state.n_modes))
    if top > leak_tol:
        warnings.warn(
            f"truncation leak: top Fock level population {top:.2e} exceeds {leak_tol:.1e}",
            RuntimeWarning, stacklevel=2)
    return out
