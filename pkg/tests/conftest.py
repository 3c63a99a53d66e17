from __future__ import annotations

import pytest

from matchkit.ingest import SyntheticSpec, generate_synthetic_match


@pytest.fixture(scope="session")
def match_300():
    """Mid-sized deterministic match reused across analysis tests."""
    return generate_synthetic_match(SyntheticSpec(n_points=300, p_serve_win=0.65, seed=42))


@pytest.fixture(scope="session")
def match_80():
    return generate_synthetic_match(SyntheticSpec(n_points=80, p_serve_win=0.6, seed=7))
