import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from noma_uav.fhf import PlannerParams
from noma_uav.scenario import derive_link_constants, load_scenario

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PAPER_SCENARIO = os.path.join(REPO_ROOT, "scenarios", "paper_m6.json")


def small_doc(theta=0.3, u_mbits=20.0, two_cells=True):
    stations = [
        {"position": [0, 200], "height_m": 25,
         "gue": {"position": [80, 280], "height_m": 1.5, "qos_bits_per_s_per_hz": theta}},
    ]
    if two_cells:
        stations.append(
            {"position": [700, -200], "height_m": 25,
             "gue": {"position": [620, -100], "height_m": 1.5, "qos_bits_per_s_per_hz": theta}}
        )
    return {
        "radio": {},
        "uav": {"height_m": 110, "max_speed_m_s": 50, "start": [-400, 0], "goal": [1200, 0]},
        "mission": {"required_mbits": u_mbits, "scheme": "noma"},
        "base_stations": stations,
        "rng_seed": 7,
    }


@pytest.fixture(scope="session")
def paper_scenario():
    with open(PAPER_SCENARIO, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())


@pytest.fixture(scope="session")
def paper_consts(paper_scenario):
    return derive_link_constants(paper_scenario)


@pytest.fixture(scope="session")
def two_cell_scenario():
    from noma_uav.scenario import scenario_from_dict

    return scenario_from_dict(small_doc())


@pytest.fixture(scope="session")
def params():
    return PlannerParams()


def random_small_scenario(rng, m_max=4):
    """Random compact instance used by the oracle-agreement tests."""
    m = int(rng.integers(1, m_max + 1))
    span = 700.0
    stations = []
    for _ in range(m):
        bx = float(rng.uniform(-span / 2, span / 2))
        by = float(rng.uniform(-250, 250))
        ang = float(rng.uniform(0, 2 * np.pi))
        d_gue = float(rng.uniform(80, 150))
        theta = float(rng.uniform(0.1, 0.6))
        stations.append(
            {
                "position": [bx, by],
                "height_m": 25,
                "gue": {
                    "position": [bx + d_gue * np.cos(ang), by + d_gue * np.sin(ang)],
                    "height_m": 1.5,
                    "qos_bits_per_s_per_hz": theta,
                },
            }
        )
    doc = {
        "radio": {},
        "uav": {
            "height_m": 110,
            "max_speed_m_s": 50,
            "start": [float(rng.uniform(-600, -350)), float(rng.uniform(-150, 150))],
            "goal": [float(rng.uniform(350, 600)), float(rng.uniform(-150, 150))],
        },
        "mission": {"required_mbits": 10.0, "scheme": "noma"},
        "base_stations": stations,
        "rng_seed": int(rng.integers(0, 2**31)),
    }
    from noma_uav.scenario import scenario_from_dict

    return scenario_from_dict(doc)
