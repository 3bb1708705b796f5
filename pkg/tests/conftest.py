import os

import hypothesis
import numpy as np
import pytest

from cwlab import environment as envmod

np.seterr(all="warn", under="ignore")  # kernel tails are allowed to underflow

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def matrix_specs(seed: int = 1) -> list[envmod.EnvSpec]:
    """One environment of every bundled kind."""
    return [
        envmod.constant(1, seed=seed),
        envmod.periodic([1, 2], seed=seed),
        envmod.iid_lognormal(0, 1, seed=seed),
        envmod.iid_pareto(0.5, 1, seed=seed),
        envmod.iid_power(0.5, seed=seed),
        envmod.markov([0.5, 3], [[0.7, 0.3], [0.4, 0.6]], seed=seed),
    ]


@pytest.fixture(params=matrix_specs(), ids=lambda s: s.kind)
def any_env(request):
    return envmod.build_env(request.param)


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number, passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_order):
            terminalreporter.write_line(line)


def _criterion_order(line: str):
    token = line.split()[2].rstrip(":")
    head = token.split(".")[0]
    return (int(head) if head.isdigit() else 99, token)
