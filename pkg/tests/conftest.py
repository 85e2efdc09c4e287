import pathlib
import sys

import pytest

from mogbn import inference, netmodel, transforms

ROOT = pathlib.Path(__file__).resolve().parents[1]
NETWORKS = ROOT / "networks"
sys.path.insert(0, str(pathlib.Path(__file__).parent))


def load(name):
    return netmodel.load_network(NETWORKS / f"{name}.json")


class Compiled:
    def __init__(self, name):
        self.source = load(name)
        self.mog, self.report = transforms.compile_network(self.source)
        self.mix = inference.build_mixture(self.mog)


_cache = {}


def compiled(name):
    if name not in _cache:
        _cache[name] = Compiled(name)
    return _cache[name]


@pytest.fixture(scope="session")
def networks_dir():
    return NETWORKS


@pytest.fixture(scope="session")
def uniform_compiled():
    return compiled("uniform")


@pytest.fixture(scope="session")
def logistic_compiled():
    return compiled("logistic")


@pytest.fixture(scope="session")
def square_compiled():
    return compiled("square")


@pytest.fixture(scope="session")
def hetero_compiled():
    return compiled("hetero")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
