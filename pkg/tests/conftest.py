import pytest

from spingas import derive_rates, potassium_helium_config


@pytest.fixture(scope="session")
def kh3_config():
    return potassium_helium_config()


@pytest.fixture(scope="session")
def kh3_rates(kh3_config):
    return derive_rates(kh3_config)


@pytest.fixture(scope="session")
def clean_config():
    """K-3He geometry with every relaxation channel switched off."""
    return potassium_helium_config(
        p_a=1.0, p_b=1.0, n_bar_a=0.0, gamma=0.0, k_se=0.0,
        sigma_sr=0.0, sigma_sd=0.0, D_a=0.0, D_b=0.0, T_b_inverse=0.0)


@pytest.fixture(scope="session")
def clean_rates(clean_config):
    return derive_rates(clean_config)
