import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracle/gen helper modules

FIXTURES = Path(__file__).parent.parent / "fixtures"
DEMO_BUNDLE = FIXTURES / "demo-bundle"
GOLDEN_QUERY = FIXTURES / "queries" / "nod_while_speaking.json"


@pytest.fixture(scope="session")
def demo_bundle():
    from scenequery.store import load_bundle

    return load_bundle(DEMO_BUNDLE)


@pytest.fixture(scope="session")
def demo_bundle_path():
    return DEMO_BUNDLE


@pytest.fixture(scope="session")
def golden_query_path():
    return GOLDEN_QUERY
