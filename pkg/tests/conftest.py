from __future__ import annotations

from typing import List

import pytest

ACCEPTANCE: List[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_episode():
    from scenesearch.world import default_priors, enrich_episode, generate_layout, LayoutConfig

    spec = generate_layout(3, LayoutConfig(rooms=(3, 3)))
    return enrich_episode(spec, default_priors(), 3)
