"""Shared fixtures: a hand-sized taxonomy, a tiny corpus, and the synthetic
bias corpus (session-scoped, it is reused by the loop/cli/api suites)."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from credloop.corpus import Code, Experience, Taxonomy, build_dataset
from credloop.synth import bias_scenario_spec, synth_corpus

_acceptance_lines: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Queue one pass/fail line for the terminal summary, then assert."""
    verdict = "PASS" if ok else "FAIL"
    _acceptance_lines.append(f"criterion {number}: {verdict} - {detail}")
    assert ok, f"criterion {number}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)


@pytest.fixture()
def tiny_taxonomy() -> Taxonomy:
    return Taxonomy(
        level1=(Code("T1", "Collaboration"), Code("T2", "Analysis")),
        level2=(
            Code("M1", "Teamwork", "T1"),
            Code("M2", "Facilitation", "T1"),
            Code("M3", "Research", "T2"),
        ),
        level3=(
            Code("C1", "Team planning", "M1"),
            Code("C2", "Team delivery", "M1"),
            Code("C3", "Workshop hosting", "M2"),
            Code("C4", "Panel moderation", "M2"),
            Code("C5", "Survey design", "M3"),
            Code("C6", "Data collection", "M3"),
        ),
    )


@pytest.fixture()
def tiny_dataset(tiny_taxonomy):
    rows = [
        ("e1", "u1", "we planned the sprint together", {"race": "alpha"}, {"C1"}),
        ("e2", "u1", "delivered the feature as a team", {"race": "alpha"}, {"C2"}),
        ("e3", "u1", "hosted a workshop on testing", {"race": "alpha"}, {"C3"}),
        ("e4", "u1", "moderated the panel discussion", {"race": "alpha"}, {"C4"}),
        ("e5", "u1", "designed the member survey", {"race": "alpha"}, {"C5"}),
        ("e6", "u2", "collected usage data daily", {"race": "beta"}, {"C6"}),
        ("e7", "u2", "planned the offsite agenda", {"race": "beta"}, {"C1", "C3"}),
        ("e8", "u2", "wrote the survey questions", {"race": "beta"}, {"C5"}),
        ("e9", "u2", "shipped the team milestone", {"race": "beta"}, {"C2"}),
        ("e10", "u2", "ran the retro discussion", {"race": "beta"}, set()),
        ("e11", "u3", "a single short note", {}, {"C1"}),
    ]
    exps = [
        Experience(id=i, user_id=u, text=t, demographics=d, annotations=frozenset(a))
        for i, u, t, d, a in rows
    ]
    return build_dataset(exps, tiny_taxonomy, ["race"])


@pytest.fixture(scope="session")
def bias_dataset():
    return synth_corpus(bias_scenario_spec())
