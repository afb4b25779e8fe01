import numpy as np
import pytest

from rwinspect.geometry import InspectorSpec, MapSpec
from rwinspect.policy import default_params
from rwinspect.sensing import DetectorModel
from rwinspect.rooms import barbell_room, dense_room, divider_room, drum_room, empty_room


@pytest.fixture(scope="session")
def inspector():
    return InspectorSpec(r_I=0.4, r_D=1.0, speed=0.1, measure_seconds=3.0)


@pytest.fixture(scope="session")
def detector():
    return DetectorModel(background=60.0, z=3.0, clamp=0.1)


@pytest.fixture(scope="session")
def empty_map():
    return empty_room()


@pytest.fixture(scope="session")
def drum_map():
    return drum_room()


@pytest.fixture(scope="session")
def divider_map():
    return divider_room()


@pytest.fixture(scope="session")
def barbell_map():
    return barbell_room()


@pytest.fixture(scope="session")
def dense_map():
    return dense_room()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_params(map_spec: MapSpec, **kw) -> object:
    kw.setdefault("T", 500)
    kw.setdefault("n", 10)
    kw.setdefault("c_U", 4.0)
    return default_params(60.0, map_spec, **kw)
