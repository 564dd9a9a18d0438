import numpy as np
import pytest

from uavpower.analytic import DroneParams
from uavpower.synthetic import make_dataset, write_dataset

# Three parameter sets with frozen expected values. The expected numbers were
# computed once with 50-digit mpmath directly from the printed model formulas
# (induced velocity via mpmath.findroot) and pasted here.
PARAM_SETS = {
    "P1": dict(
        params=dict(m_body=1.5, m_battery=0.5, m_payload=1.0, eta=0.5, lift_to_drag=3.0, avionics_power=10.0,
                    g=9.81, rho=1.225, n_rotors=4, rotor_area=0.0856, drag_coeffs=(1.49, 1.0, 2.2),
                    ref_areas=(0.0599, 0.0037, 0.0135), kappa=1.15, kappa2=0.04, kappa3=0.1, downwash=3.0,
                    eta_charge=0.9),
        v=12.0, alpha=0.1,
        expected=dict(dandrea=243.51351351351351, dorling=55.654587637671044, thrust=40.2478182,
                      vi=3.7158697226374944, stolaroff=395.54515098687003, kirchstein=717.45951887328833),
    ),
    "P2": dict(
        params=dict(m_body=2.0, m_battery=0.7, m_payload=0.3, eta=0.7, lift_to_drag=4.5, avionics_power=25.0,
                    g=9.80665, rho=1.0, n_rotors=6, rotor_area=0.05, drag_coeffs=(1.2, 0.8, 1.8),
                    ref_areas=(0.1, 0.01, 0.02), kappa=1.2, kappa2=0.05, kappa3=0.08, downwash=2.5,
                    eta_charge=0.85),
        v=5.0, alpha=-0.05,
        expected=dict(dandrea=71.332046332046332, dorling=65.785008094644938, thrust=31.46995,
                      vi=6.5342754415399889, stolaroff=282.52730234506065, kirchstein=205.82118772602985),
    ),
    "P3": dict(
        params=dict(m_body=0.8, m_battery=0.3, m_payload=0.0, eta=0.9, lift_to_drag=2.0, avionics_power=5.0,
                    g=9.81, rho=1.3, n_rotors=4, rotor_area=0.03, drag_coeffs=(1.0, 0.5, 0.0),
                    ref_areas=(0.05, 0.005, 0.0), kappa=1.1, kappa2=0.03, kappa3=0.12, downwash=4.0,
                    eta_charge=0.95),
        v=20.0, alpha=0.3,
        expected=dict(dandrea=123.91891891891892, dorling=20.261926616003417, thrust=24.441,
                      vi=3.665380193430491, stolaroff=260.04638303092294, kirchstein=604.46560024930711),
    ),
}


@pytest.fixture
def full_params():
    return DroneParams(**PARAM_SETS["P1"]["params"])


@pytest.fixture(scope="session")
def flights():
    return make_dataset(n_flights=10, samples_per_flight=40, seed=3)


@pytest.fixture(scope="session")
def dataset_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "flights.csv"
    write_dataset(path, n_flights=6, samples_per_flight=40, seed=11)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
