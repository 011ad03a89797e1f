import pytest

from dobkit import DobConfig, MeasurementKind, OuterGains, PlantParams


@pytest.fixture
def locus_gains():
    """Outer gains used for the root-locus studies."""
    return OuterGains(K_p=5000.0, K_d=25.0)


@pytest.fixture
def regulation_gains():
    """Outer gains used for the regulation experiments."""
    return OuterGains(K_p=4000.0, K_d=200.0)


def make_cfg(kind, alpha=1.0, g_dob=500.0, Ts=1e-3, g_v=None, J_m=0.003, K_t=0.25):
    kind = MeasurementKind(kind)
    if kind is MeasurementKind.POSITION and g_v is None:
        g_v = 1000.0
    return DobConfig(
        kind=kind,
        plant=PlantParams.from_alpha(alpha, J_m=J_m, K_t=K_t),
        g_dob=g_dob,
        Ts=Ts,
        g_v=g_v,
    )
