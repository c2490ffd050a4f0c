from __future__ import annotations

import pytest

from probplan.domains import bundled_domain_path
from probplan.pddl import ground_problem, parse_domain, parse_problem

TWO_BLOCKS = """
(define (problem two)
  (:domain blocksworld)
  (:objects a b - block)
  (:init (ontable a) (ontable b) (clear a) (clear b) (handempty))
  (:goal (and (on a b))))
"""


@pytest.fixture(scope="session")
def bw_text() -> str:
    return bundled_domain_path("blocksworld").read_text()


@pytest.fixture(scope="session")
def bw(bw_text):
    return parse_domain(bw_text)


@pytest.fixture(scope="session")
def two_blocks(bw):
    return ground_problem(bw, parse_problem(TWO_BLOCKS, bw))


@pytest.fixture
def two_blocks_text() -> str:
    return TWO_BLOCKS


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
