"""Shared fixtures for the test suite.

The base parameter set used throughout is lam = 10, c = 15, sigma = 0,
q = 0.1, r = 0.8 with exponential(1) claims. Safety loading is 0.5, so
every validation gate passes and the optimal barrier sits near 0.77
when the ruin clock has no grace period.
"""

import math

import numpy as np
import pytest

import divbarrier as db


def make_model(d, sigma=0.0, lam=10.0, c=15.0, q=0.1, r=0.8, mu=1.0):
    return db.validate(
        db.ModelParams(lam=lam, c=c, sigma=sigma, q=q, r=r, d=d),
        db.ExponentialClaims(mu),
    )


@pytest.fixture(scope="session")
def m_d0():
    return make_model(0.0)


@pytest.fixture(scope="session")
def m_d2():
    return make_model(2.0)


@pytest.fixture(scope="session")
def m_dinf():
    return make_model(math.inf)


@pytest.fixture(scope="session")
def tab_dist():
    # exponential(1) sampled onto a grid; drives the general pipeline
    return db.tabulated_exponential(1.0)


@pytest.fixture(scope="session")
def sol_d0(m_d0):
    return db.optimal_barrier(m_d0, a_max=2.0, grid_step=1e-3)


@pytest.fixture(scope="session")
def sol_d2(m_d2):
    return db.optimal_barrier(m_d2, a_max=2.0, grid_step=1e-3)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
