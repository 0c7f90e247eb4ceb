import pytest

from dragonroute.topology import TopologyConfig, build_topology


def small_config(**kw):
    base = dict(groups=4, chassis_per_group=2, blades_per_chassis=4, nodes_per_router=2,
                global_links_per_router=1, link_cycle_cost=4)
    base.update(kw)
    return TopologyConfig(**base)


@pytest.fixture(scope="session")
def topo():
    return build_topology(small_config())


@pytest.fixture(scope="session")
def topo3():
    return build_topology(small_config(groups=3))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
