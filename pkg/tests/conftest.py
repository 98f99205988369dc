import pytest

from questgraph import corpus, graph


@pytest.fixture(scope="session")
def scenario():
    return corpus.builtin_scenario()


@pytest.fixture(scope="session")
def sgraph(scenario):
    return graph.expand(graph.build_compact(scenario), scenario)


@pytest.fixture(scope="session")
def cgraph(scenario):
    return graph.build_compact(scenario)


@pytest.fixture(scope="session")
def hints(scenario):
    return corpus.builtin_hints()
