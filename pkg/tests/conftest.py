from pathlib import Path

import pytest

from tmdkit.cli import _load_pattern_file
from tmdkit.scene import load_environment
from tmdkit.session import World

ASSETS = Path(__file__).resolve().parent.parent / "assets"


@pytest.fixture(scope="session")
def assets_dir() -> Path:
    return ASSETS


@pytest.fixture(scope="session")
def shared_space_env():
    path = ASSETS / "environments" / "shared_space.yaml"
    return load_environment(path.read_text(encoding="utf-8"), str(path))


@pytest.fixture(scope="session")
def street_env():
    path = ASSETS / "environments" / "street.yaml"
    return load_environment(path.read_text(encoding="utf-8"), str(path))


@pytest.fixture(scope="session")
def pattern_library():
    return [_load_pattern_file(p)
            for p in sorted((ASSETS / "patterns").glob("*.pattern"))]


@pytest.fixture(scope="session")
def world(shared_space_env, street_env, pattern_library) -> World:
    return World.build([shared_space_env, street_env], pattern_library)
