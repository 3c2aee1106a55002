import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from ageroute import make_spec, marginal_from_moments
from ageroute.model import FixedDelay

CONFIG_DIR = Path(__file__).parent.parent / "configs"


@pytest.fixture(scope="session")
def det_spec():
    """Single deterministic persistent route, mean 1."""
    return make_spec([(FixedDelay(1.0), 1.0, 0.0)])


@pytest.fixture(scope="session")
def fig8_spec():
    """Three always-on routes: LN(2.4, .7), Gamma(1.2, 3), Gamma(.7, 3.4)."""
    return make_spec([
        (marginal_from_moments("lognormal", 2.4, 0.7), 1.0, 0.0),
        (marginal_from_moments("gamma", 1.2, 3.0), 1.0, 0.0),
        (marginal_from_moments("gamma", 0.7, 3.4), 1.0, 0.0),
    ])


@pytest.fixture(scope="session")
def energy_spec():
    """Two persistent routes with energy data: LN(5,1,G=3), Gamma(1,7.3,G=18)."""
    def build(e_max=math.inf):
        return make_spec(
            [
                (marginal_from_moments("lognormal", 5.0, 1.0), 1.0, 3.0),
                (marginal_from_moments("gamma", 1.0, 7.3), 1.0, 18.0),
            ],
            C_s=2.0,
            E_max=e_max,
        )
    return build


@pytest.fixture(scope="session")
def sat_spec():
    """Persistent terrestrial route plus two intermittent satellite routes."""
    def build(p=0.5):
        return make_spec([
            (marginal_from_moments("gamma", 6.0, 2.0), 1.0, 0.0),
            (marginal_from_moments("lognormal", 5.0, 4.0), p, 0.0),
            (marginal_from_moments("gamma", 3.0, 7.0), p, 0.0),
        ])
    return build


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR
