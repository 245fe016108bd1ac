from __future__ import annotations

from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def csic_profile():
    from hpcflow.profiles import parse_cluster_profile

    return parse_cluster_profile((FIXTURES / "profiles" / "csic.profile").read_text())


@pytest.fixture
def forhlr2_profile():
    from hpcflow.profiles import parse_cluster_profile

    return parse_cluster_profile((FIXTURES / "profiles" / "forhlr2.profile").read_text())


@pytest.fixture
def entrypoint_spec():
    from hpcflow.profiles import parse_env_spec

    return parse_env_spec((FIXTURES / "specs" / "entrypoint.spec").read_text())


@pytest.fixture
def ngc_spec():
    from hpcflow.profiles import parse_env_spec

    return parse_env_spec((FIXTURES / "specs" / "ngc.spec").read_text())


@pytest.fixture
def tags_spec():
    from hpcflow.profiles import parse_env_spec

    return parse_env_spec((FIXTURES / "specs" / "tags.spec").read_text())


def corpus_paths() -> list[Path]:
    """Every Dockerfile fixture: parser corpus plus lint corpus."""
    files = sorted((FIXTURES / "dockerfiles").glob("*.dockerfile"))
    files += sorted((FIXTURES / "lint_corpus").glob("*.dockerfile"))
    return files
