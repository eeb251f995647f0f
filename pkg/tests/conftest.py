"""Shared fixtures: small hand-built scenarios and random Hermitian inputs."""

from __future__ import annotations

import numpy as np
import pytest

from uav_isac.scenario import MissionPlan, Scenario, SensingGrid, UavConfig, User, default_scenario


def make_scenario(users=((300.0, 300.0),), points=((500.0, 500.0),), gamma=0.0, M=4,
                  P=0.5, H=100.0, beta=1e-6, noise=1e-14, weights=None, mission=None,
                  area=((0.0, 1000.0), (0.0, 1000.0))) -> Scenario:
    weights = weights or [1.0] * len(users)
    us = tuple(User(tuple(map(float, u)), w, noise) for u, w in zip(users, weights))
    return Scenario(us, SensingGrid(tuple(tuple(map(float, p)) for p in points), gamma),
                    UavConfig(M, 0.5, H, P, beta), mission, area)


def make_mission(N=6, start=(0.0, 500.0), end=(500.0, 500.0), speed=30.0, dt=5.0) -> MissionPlan:
    return MissionPlan(N, dt, start, end, speed)


def random_hermitian(rng, M, psd=False, rank=None):
    r = rank or M
    B = rng.normal(size=(M, r)) + 1j * rng.normal(size=(M, r))
    if psd:
        return B @ B.conj().T
    A = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    return 0.5 * (A + A.conj().T)


@pytest.fixture(scope="session")
def paper_scenario() -> Scenario:
    return default_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
