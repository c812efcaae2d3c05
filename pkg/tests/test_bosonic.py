import cmath
import math

import numpy as np
import pytest

from spingas import FieldSchedule, derive_rates, potassium_helium_config
from spingas import bosonic
from spingas.errors import ConfigError, InvariantViolation


def loss_channel_eta(J, gamma, t):
    """|T_ba(t)|^2 for A = [[-g, -iJ], [-iJ, 0]] from the eigenvalue closed
    form (independent of the propagators)."""
    disc = cmath.sqrt(gamma * gamma - 4 * J * J)
    lp = (-gamma + disc) / 2
    lm = (-gamma - disc) / 2
    T_ba = -1j * J * (cmath.exp(lp * t) - cmath.exp(lm * t)) / (lp - lm)
    return abs(T_ba) ** 2


def rates_with(gamma_factor=None, **overrides):
    cfg = potassium_helium_config(**overrides)
    r = derive_rates(cfg)
    if gamma_factor is not None:
        cfg = cfg.with_overrides(gamma=gamma_factor * r.J)
        r = derive_rates(cfg)
    return cfg, r


class TestBuildTwoMode:
    def test_full_polarization_noise_is_vacuum(self):
        _, r = rates_with(p_a=1.0, p_b=1.0, n_bar_a=0.0)
        c_n, c_a = bosonic.spin_exchange_noise(r.gamma_ex, 1.0, 1.0)
        assert c_n == 0.0
        assert c_a == pytest.approx(2 * r.gamma_ex, rel=1e-12)
        dd = bosonic.build_two_mode(r, r.B_comp, 1.0, 1.0)
        # total noise is vacuum for the total decay once the thermal part is off
        assert dd.noise_normal[0] == 0.0
        assert dd.noise_antinormal[0] == pytest.approx(2 * r.gamma, rel=1e-12)
        assert dd.thermal_occupation[0] == 0.0

    def test_no_decay_is_pure_beam_splitter(self, clean_rates):
        dd = bosonic.build_two_mode(clean_rates, clean_rates.B_comp, 1.0, 1.0)
        assert np.allclose(dd.D, 0.0)
        assert np.allclose(dd.A + dd.A.conj().T, 0.0)

    def test_imperfect_polarization_factors(self):
        # (2 -+ (p_a+p_b))/(4 p_a) at p_a = p_b = 0.9
        c_n, c_a = bosonic.spin_exchange_noise(1.0, 0.9, 0.9)
        assert c_n == pytest.approx(0.0556 * 2, rel=1e-2)
        assert c_a == pytest.approx(1.0556 * 2, rel=1e-3)

    def test_drift_entries(self, kh3_rates):
        B = 0.02
        dd = bosonic.build_two_mode(kh3_rates, B, kh3_rates.p_a, kh3_rates.p_b)
        assert dd.A[0, 0] == pytest.approx(1j * kh3_rates.delta_at(B) - kh3_rates.gamma)
        assert dd.A[0, 1] == pytest.approx(-1j * kh3_rates.J)
        assert dd.A[1, 0] == pytest.approx(-1j * kh3_rates.J)
        assert dd.A[1, 1] == 0.0


class TestGaussianPropagation:
    def test_vacuum_is_fixed_point(self, kh3_rates):
        r = kh3_rates
        cfg, r1 = rates_with(p_a=1.0, p_b=1.0, n_bar_a=0.0)
        dd = bosonic.build_two_mode(r1, r1.B_comp, 1.0, 1.0)
        state = bosonic.GaussianModeState.vacuum(2)
        series = bosonic.propagate_gaussian(state, dd, None, 3.0 / r1.gamma,
                                            0.1 / r1.gamma)
        dev = max(np.abs(s.cov - 0.5 * np.eye(4)).max() for s in series)
        assert dev < 1e-9
        assert max(abs(s.means).max() for s in series) == 0.0

    def test_strong_coupling_envelope_and_oscillation(self):
        # J = 57 gamma at resonance: population envelope e^{-gamma t} within
        # 3 percent over five periods, cos^2(Jt) oscillation
        cfg, r = rates_with(gamma_factor=1 / 57.0, p_a=1.0, p_b=1.0, n_bar_a=0.0)
        dd = bosonic.build_two_mode(r, r.B_comp, 1.0, 1.0)
        state = bosonic.GaussianModeState.vacuum(2).displace(0, math.sqrt(1000))
        t_end = 5 * math.pi / r.J
        series = bosonic.propagate_gaussian(state, dd, None, t_end, t_end / 2000)
        t = np.array([s.t for s in series])
        total = np.array([s.population(0) + s.population(1) for s in series])
        assert np.all(np.abs(total / (1000 * np.exp(-r.gamma * t)) - 1.0) < 0.03)
        pop_b = np.array([s.population(1) for s in series])
        peaks = [i for i in range(1, len(t) - 1)
                 if pop_b[i] >= pop_b[i - 1] and pop_b[i] >= pop_b[i + 1]
                 and pop_b[i] > 100]
        assert len(peaks) >= 5

    def test_squeezing_transfer_at_swap(self, clean_rates):
        r = clean_rates
        dd = bosonic.build_two_mode(r, r.B_comp, 1.0, 1.0)
        state = bosonic.GaussianModeState.vacuum(2).squeeze(0, 7.0)
        t_swap = math.pi / (2 * r.J)
        series = bosonic.propagate_gaussian(state, dd, None, t_swap, t_swap / 128)
        out = series[-1]
        assert bosonic.squeezing_db(out, 1, "p") == pytest.approx(7.0, abs=0.01)
        assert out.quad_variance(1, "p") == pytest.approx(10 ** -0.7 / 2, rel=1e-6)

    def test_storage_freezes_noble_population(self, kh3_rates):
        cfg, r = rates_with(p_a=1.0, p_b=1.0, n_bar_a=0.0)
        t_swap = math.pi / (2 * r.J)
        sched = FieldSchedule(((0.0, r.B_comp), (t_swap, 0.18)))
        state = bosonic.GaussianModeState.vacuum(2).displace(0, math.sqrt(1000))
        build = lambda B: bosonic.build_two_mode(r, B, 1.0, 1.0)
        series = bosonic.propagate_gaussian(state, build, sched, 3 * t_swap,
                                            t_swap / 200)
        post = [s.population(1) for s in series if s.t >= t_swap]
        # residual (J/Delta)^2 coupling bounds the wiggle well below 1e-3
        assert (max(post) - min(post)) / max(post) < 1e-3

    def test_uncertainty_validation_catches_bogus_cov(self):
        state = bosonic.GaussianModeState.vacuum(1)
        state.cov = np.diag([0.1, 0.1])   # below the uncertainty bound
        with pytest.raises(InvariantViolation):
            state.validate()

    def test_multisegment_needs_builder(self, kh3_rates):
        dd = bosonic.build_two_mode(kh3_rates, 0.0, 0.95, 0.75)
        sched = FieldSchedule(((0.0, 0.0), (1.0, 0.1)))
        with pytest.raises(ConfigError):
            bosonic.propagate_gaussian(bosonic.GaussianModeState.vacuum(2), dd,
                                       sched, 2.0, 0.1)


class TestSqueezingDb:
    def test_vacuum_is_zero(self):
        assert bosonic.squeezing_db(bosonic.GaussianModeState.vacuum(1), 0, "x") == 0.0

    def test_definition(self):
        state = bosonic.GaussianModeState.vacuum(1)
        state.cov[0, 0] = 10 ** -0.7 * 0.5
        assert bosonic.squeezing_db(state, 0, "x") == pytest.approx(7.0, rel=1e-12)


class TestFockPropagation:
    def test_full_swap_of_two_quanta(self, clean_rates):
        r = clean_rates
        dd = bosonic.build_two_mode(r, r.B_comp, 1.0, 1.0)
        state = bosonic.FockDensityState.from_fock([2, 0], n_max=4)
        t_swap = math.pi / (2 * r.J)
        series = bosonic.propagate_fock(state, dd, None, t_swap, t_swap / 800,
                                        record_every=800)
        assert series[-1].populations(1)[2] == pytest.approx(1.0, abs=1e-6)

    def test_decaying_rabi_formula(self):
        # P(n_b = 1)(t) ~ e^{-gamma t} sin^2(J t) for J >> gamma
        cfg, r = rates_with(gamma_factor=0.02, p_a=1.0, p_b=1.0, n_bar_a=0.0)
        dd = bosonic.build_two_mode(r, r.B_comp, 1.0, 1.0)
        state = bosonic.FockDensityState.from_fock([1, 0], n_max=3)
        t_end = math.pi / r.J
        series = bosonic.propagate_fock(state, dd, None, t_end, t_end / 3000,
                                        record_every=100)
        for s in series:
            expected = math.exp(-r.gamma * s.t) * math.sin(r.J * s.t) ** 2
            assert s.populations(1)[1] == pytest.approx(expected, abs=0.01)

    @pytest.mark.parametrize("gamma_factor", [0.01, 0.1, 1.0])
    def test_loss_channel_oracle(self, gamma_factor):
        cfg, r = rates_with(gamma_factor=gamma_factor, p_a=1.0, p_b=1.0, n_bar_a=0.0)
        dd = bosonic.build_two_mode(r, r.B_comp, 1.0, 1.0)
        t_probe = 0.6 * math.pi / (2 * r.J)
        eta = loss_channel_eta(r.J, r.gamma, t_probe)
        for n0 in (1, 2):
            state = bosonic.FockDensityState.from_fock([n0, 0], n_max=4)
            series = bosonic.propagate_fock(state, dd, None, t_probe,
                                            t_probe / 4000, record_every=4000)
            pops = series[-1].populations(1)
            for k in range(n0 + 1):
                expected = math.comb(n0, k) * eta**k * (1 - eta) ** (n0 - k)
                assert pops[k] == pytest.approx(expected, abs=1e-4)

    def test_gaussian_fock_agreement_on_coherent_input(self):
        cfg, r = rates_with(gamma_factor=0.1, p_a=1.0, p_b=1.0, n_bar_a=0.0)
        dd = bosonic.build_two_mode(r, r.B_comp, 1.0, 1.0)
        alpha = 0.6
        t_end = 1.2 / r.J
        fock = bosonic.FockDensityState.from_coherent([alpha, 0], n_max=8)
        f_series = bosonic.propagate_fock(fock, dd, None, t_end, t_end / 4000,
                                          record_every=4000)
        gauss = bosonic.GaussianModeState.vacuum(2).displace(0, alpha)
        g_series = bosonic.propagate_gaussian(gauss, dd, None, t_end, t_end / 8)
        a_op, b_op = bosonic._mode_ops(2, 8)
        f, g = f_series[-1], g_series[-1]
        assert abs(f.expect(a_op) - g.means[0]) < 1e-6
        assert abs(f.expect(b_op) - g.means[1]) < 1e-6
        for op, mode in ((a_op, 0), (b_op, 1)):
            n_f = f.expect(op.conj().T @ op).real
            assert abs(n_f - g.population(mode)) < 1e-6

    def test_trace_purity_and_validation(self, kh3_rates):
        r = kh3_rates
        dd = bosonic.build_two_mode(r, r.B_comp, r.p_a, r.p_b)
        state = bosonic.FockDensityState.from_fock([1, 0], n_max=4)
        series = bosonic.propagate_fock(state, dd, None, 1.0 / r.J,
                                        0.5e-3 / r.J, record_every=500)
        for s in series:
            assert abs(np.trace(s.rho) - 1.0) < 1e-8
            assert s.purity() <= 1.0 + 1e-8
            s.validate()

    def test_truncation_leak_warning(self, clean_rates):
        r = clean_rates
        dd = bosonic.build_two_mode(r, r.B_comp, 1.0, 1.0)
        state = bosonic.FockDensityState.from_fock([2, 2], n_max=3)
        with pytest.warns(RuntimeWarning, match="truncation leak"):
            bosonic.propagate_fock(state, dd, None, 0.5 / r.J, 1e-3 / r.J,
                                   record_every=500)


class TestDetunedDecoupling:
    def test_max_transfer_matches_two_mode_formula(self):
        # Delta = 10 J: exact maximum 4J^2/(Delta^2+4J^2), +10 percent slack
        cfg, r = rates_with(gamma_factor=1 / 60.0, p_a=1.0, p_b=1.0, n_bar_a=0.0)
        slope = cfg.g_a / r.q - cfg.g_b
        B = r.B_comp + 10 * r.J / slope
        dd = bosonic.build_two_mode(r, B, 1.0, 1.0)
        state = bosonic.GaussianModeState.vacuum(2).displace(0, math.sqrt(1000))
        t_end = 2.0 / r.J
        series = bosonic.propagate_gaussian(state, dd, None, t_end, t_end / 4000)
        max_b = max(s.population(1) for s in series)
        bound = 4 * r.J**2 / ((10 * r.J) ** 2 + 4 * r.J**2) * 1000
        assert max_b <= 1.1 * bound
        assert max_b >= 0.9 * bound
