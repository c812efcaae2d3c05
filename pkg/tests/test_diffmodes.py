import json
import math

import numpy as np
import pytest

from spingas import FieldSchedule, derive_rates, potassium_helium_config
from spingas import bosonic, diffmodes as dm
from spingas.errors import ConfigError

# first positive roots of tan x = x (noble-gas Neumann condition)
TAN_ROOTS = (4.493409457909064, 7.725251836937707, 10.904121659428899)


def brute_force_overlap(basis, m, n, n_points=1_000_000):
    """Trapezoid quadrature of the overlap integral at 1e6 points."""
    R = basis.R
    r = np.linspace(1e-9, R, n_points)
    ka = basis.k_a[m]
    na = 1.0 / math.sqrt(4 * math.pi * (R / 2 - math.sin(2 * ka * R) / (4 * ka)))
    A = na * np.sin(ka * r) / r
    kb = basis.k_b[n]
    if kb == 0.0:
        B = np.full_like(r, 1.0 / math.sqrt(4 * math.pi * R**3 / 3))
    else:
        integ = R / 2 - math.sin(2 * kb * R) / (4 * kb)
        B = kb / math.sqrt(4 * math.pi * integ) * np.sin(kb * r) / (kb * r)
    return float(np.trapezoid(A * B * 4 * math.pi * r**2, r))


@pytest.fixture(scope="module")
def small_basis():
    return dm.build_mode_basis(R=2.0, D_a=0.1, D_b=0.25, gamma_a=3.0,
                               gamma_b=0.0, n_modes=8, n_noble_modes=24)


class TestModeBasis:
    def test_noble_wavenumbers_match_tan_roots(self):
        k = dm.noble_wavenumbers(4, R=2.0)
        assert k[0] == 0.0
        for i, root in enumerate(TAN_ROOTS):
            assert k[i + 1] * 2.0 == pytest.approx(root, abs=1e-12)

    def test_uniform_noble_mode_has_zero_diffusion_decay(self, small_basis):
        assert small_basis.gamma_bn[0] == small_basis.gamma_b

    def test_lowest_alkali_decay(self, small_basis):
        expected = 3.0 + 0.1 * math.pi**2 / 4.0
        assert small_basis.gamma_am[0] == pytest.approx(expected, rel=1e-12)

    def test_decay_rates_strictly_increase(self, small_basis):
        assert np.all(np.diff(small_basis.gamma_am) > 0)
        assert np.all(np.diff(small_basis.gamma_bn) > 0)

    def test_uniform_overlap_closed_form(self, small_basis):
        # c_m0 = sqrt(6) (-1)^(m+1) / (m pi)
        for m in range(small_basis.n_alkali):
            expected = math.sqrt(6) * (-1) ** m / ((m + 1) * math.pi)
            assert small_basis.c[m, 0] == pytest.approx(expected, abs=1e-10)

    def test_overlaps_match_brute_force_quadrature(self, small_basis):
        for m, n in ((0, 0), (0, 1), (2, 3), (5, 7)):
            oracle = brute_force_overlap(small_basis, m, n)
            assert small_basis.c[m, n] == pytest.approx(oracle, abs=2e-8)

    def test_isometry_residual_decreases_with_noble_count(self):
        res = []
        for n_noble in (12, 24, 48):
            b = dm.build_mode_basis(R=2.0, D_a=0.1, D_b=0.25, gamma_a=3.0,
                                    gamma_b=0.0, n_modes=4, n_noble_modes=n_noble)
            res.append(b.isometry_residual())
        assert res[0] > res[1] > res[2]

    def test_robin_boundary_shifts_wavenumbers(self):
        dirichlet = dm.build_mode_basis(R=2.0, D_a=0.1, D_b=0.25, gamma_a=1.0,
                                        gamma_b=0.0, n_modes=3)
        robin = dm.build_mode_basis(R=2.0, D_a=0.1, D_b=0.25, gamma_a=1.0,
                                    gamma_b=0.0, n_modes=3,
                                    alkali_boundary="robin", robin_length=0.4)
        assert np.allclose(dirichlet.k_a, np.arange(1, 4) * math.pi / 2.0)
        assert np.all(robin.k_a < dirichlet.k_a)  # partial relaxation: slower modes

    def test_json_dump_roundtrip(self, small_basis):
        doc = json.loads(small_basis.to_json())
        assert doc["boundary"] == "dirichlet"
        assert np.allclose(doc["overlap"], small_basis.c)

    def test_gamma_consistency_with_rates(self, kh3_config, kh3_rates):
        basis = dm.mode_basis_from_rates(kh3_rates, kh3_config.D_a, kh3_config.D_b,
                                         kh3_config.R, 4)
        assert basis.gamma_am[0] == pytest.approx(kh3_rates.gamma, rel=1e-12)


class TestMultimodeSystem:
    def test_single_mode_reduces_to_two_mode(self, kh3_rates):
        r = kh3_rates
        sub = dm.ModeBasis(R=2.54, D_a=0.0, D_b=0.0, gamma_a=r.gamma, gamma_b=0.0,
                           k_a=np.array([0.0]), k_b=np.array([0.0]),
                           c=np.array([[1.0]]))
        dd_m = dm.build_multimode_system(sub, r, r.B_comp, r.p_a, r.p_b)
        dd_2 = bosonic.build_two_mode(r, r.B_comp, r.p_a, r.p_b)
        assert np.allclose(dd_m.A, dd_2.A)
        assert np.allclose(dd_m.noise_normal, dd_2.noise_normal)
        assert np.allclose(dd_m.noise_antinormal, dd_2.noise_antinormal)

    def test_uncoupled_modes_decay_independently(self, small_basis):
        cfg = potassium_helium_config(v_sigma_phi=0.0, p_a=1.0, p_b=1.0,
                                      n_bar_a=0.0)
        r = derive_rates(cfg)   # J = 0
        assert r.J == 0.0
        dd = dm.build_multimode_system(small_basis, r, 0.0, 1.0, 1.0)
        n = small_basis.n_alkali
        state = bosonic.GaussianModeState.vacuum(dd.n_modes)
        state = state.displace(0, 2.0).displace(n, 1.5)
        t_end = 0.2 / small_basis.gamma_am[0]
        series = bosonic.propagate_gaussian(state, dd, None, t_end, t_end / 16,
                                            validate=False)
        final = series[-1]
        g_a0 = small_basis.gamma_am[0]
        g_b0 = small_basis.gamma_bn[0]
        assert final.population(0) == pytest.approx(
            4.0 * math.exp(-2 * g_a0 * t_end), rel=1e-6)
        assert final.population(n) == pytest.approx(
            2.25 * math.exp(-2 * g_b0 * t_end), rel=1e-6)

    def test_uniform_profile_couples_at_full_rate(self, kh3_config, kh3_rates):
        # the uniform alkali superposition drives the uniform noble mode at J
        basis = dm.mode_basis_from_rates(kh3_rates, kh3_config.D_a, kh3_config.D_b,
                                         kh3_config.R, 24)
        dd = dm.build_multimode_system(basis, kh3_rates, kh3_rates.B_comp,
                                       kh3_rates.p_a, kh3_rates.p_b)
        u = dm.uniform_alkali_vector(basis)
        na = basis.n_alkali
        coupling = dd.A[na, :na] @ u   # d<b0>/dt from a uniform displacement
        # exactly -iJ ||c[:,0]||, approaching -iJ as the truncation norm -> 1
        assert abs(coupling + 1j * kh3_rates.J * np.linalg.norm(basis.c[:, 0])) < 1e-9
        assert abs(coupling) == pytest.approx(kh3_rates.J, rel=0.02)


@pytest.fixture(scope="module")
def strong_setup():
    # synthetic strong-coupling split: large diffusion so the high modes
    # decay much faster than J
    cfg = potassium_helium_config(D_a=2000.0, D_b=2500.0, R=2.0)
    r = derive_rates(cfg)
    basis = dm.build_mode_basis(R=2.0, D_a=2000.0, D_b=2500.0,
                                gamma_a=r.gamma, gamma_b=r.gamma_b,
                                n_modes=24, n_noble_modes=24)
    return r, basis


class TestReservoirElimination:

    def test_empty_reservoir_gives_zero(self, strong_setup):
        r, basis = strong_setup
        corr = dm.eliminate_reservoir(basis, r, 0.0, r0=3, r1=2)
        assert np.allclose(corr.epsilon_a, 0.0)
        assert np.allclose(corr.epsilon_b, 0.0)

    def test_epsilon_respects_asymptotic_bound_below_split(self, strong_setup):
        # the J/(pi^2 gamma_r0) bound is asymptotic: it holds for stable
        # modes well below the split, while the element adjacent to the
        # reservoir boundary exceeds it by a fixed factor ~4 (overlap with
        # its neighbor mode is O(2/pi), not O(1/x^2))
        r, basis = strong_setup
        corr = dm.eliminate_reservoir(basis, r, 0.0, r0=6, r1=22)
        low = np.abs(corr.epsilon_a[:3, :3]).max()
        assert low < corr.bound_a
        assert np.abs(corr.epsilon_b[:3, :3]).max() < corr.bound_b
        adjacent = abs(corr.epsilon_a[-1, -1])
        assert adjacent == pytest.approx(4.0 * corr.bound_a, rel=0.5)

    def test_eliminated_model_tracks_full_model(self, strong_setup):
        r, basis = strong_setup
        corr = dm.eliminate_reservoir(basis, r, 0.0, r0=3, r1=23)
        dd_full = dm.build_multimode_system(basis, r, r.B_comp, r.p_a, r.p_b)
        dd_red = dm.build_eliminated_system(basis, r, r.B_comp, r.p_a, r.p_b, corr)
        na = basis.n_alkali
        u_full = np.zeros(dd_full.n_modes, dtype=complex)
        u_full[0] = 1.0
        u_red = np.zeros(dd_red.n_modes, dtype=complex)
        u_red[0] = 1.0
        from scipy.linalg import expm
        t_end = 0.5 * math.pi / r.J
        devs = []
        for frac in (0.25, 0.5, 1.0):
            t = frac * t_end
            full_b0 = (expm(dd_full.A * t) @ u_full)[na]
            red_b0 = (expm(dd_red.A * t) @ u_red)[corr.n_stable]
            devs.append(abs(full_b0 - red_b0))
        # trajectories agree within the epsilon-bound scale
        assert max(devs) < 5 * corr.bound_a

    def test_split_shift_changes_less_than_bound(self, strong_setup):
        r, basis = strong_setup
        from scipy.linalg import expm
        t = 0.25 * math.pi / r.J
        vals = []
        for r0 in (3, 4):
            corr = dm.eliminate_reservoir(basis, r, 0.0, r0=r0, r1=23)
            dd = dm.build_eliminated_system(basis, r, r.B_comp, r.p_a, r.p_b, corr)
            u = np.zeros(dd.n_modes, dtype=complex)
            u[0] = 1.0
            vals.append((expm(dd.A * t) @ u)[corr.n_stable])
        bound = dm.eliminate_reservoir(basis, r, 0.0, r0=3, r1=23).bound_a
        assert abs(vals[0] - vals[1]) < bound

    def test_weak_split_warns(self, kh3_config, kh3_rates):
        basis = dm.mode_basis_from_rates(kh3_rates, kh3_config.D_a, kh3_config.D_b,
                                         kh3_config.R, 12)
        with pytest.warns(RuntimeWarning, match="not strongly damped"):
            dm.eliminate_reservoir(basis, kh3_rates, 0.0, r0=4, r1=11)


class TestFockTransferChannel:
    def test_unit_transmissivity_is_identity(self):
        p = dm.fock_transfer_probabilities(1.0, 0.0, 2)
        assert np.allclose(p[:3], [0, 0, 1])
        assert np.allclose(p[3:], 0.0)

    def test_pure_loss_is_binomial(self):
        eta = 0.7
        p = dm.fock_transfer_probabilities(eta, 0.0, 2)
        expected = [(1 - eta) ** 2, 2 * eta * (1 - eta), eta**2]
        assert np.allclose(p[:3], expected, atol=1e-12)
        assert np.allclose(p[3:], 0.0)

    def test_thermal_channel_mean_is_exact(self):
        eta, n_add = 0.8, 0.3
        p = dm.fock_transfer_probabilities(eta, n_add, 2, env_truncation=80)
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        mean = float(np.dot(p, np.arange(len(p))))
        assert mean == pytest.approx(eta * 2 + n_add, rel=1e-6)

    def test_rejects_bad_eta(self):
        with pytest.raises(ConfigError):
            dm.fock_transfer_probabilities(1.2, 0.0, 1)
