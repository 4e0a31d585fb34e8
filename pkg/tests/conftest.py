from __future__ import annotations

import pytest

from koranyi.heisenberg import HPoint
from koranyi.kernels import normalized_coefficients
from koranyi.quadrature import ball_quadrature, sphere_quadrature


@pytest.fixture(autouse=True)
def _isolate_home(monkeypatch, tmp_path):
    # Prevent tests from reading any real user `~/.koranyi/config.yaml`.
    monkeypatch.setenv("HOME", str(tmp_path))
    yield


@pytest.fixture(scope="session")
def sphere():
    return sphere_quadrature(1, (32, 32))


@pytest.fixture(scope="session")
def coarse_sphere():
    return sphere_quadrature(1, (16, 16))


@pytest.fixture(scope="session")
def ball():
    return ball_quadrature(1, (12, 24, 24))


@pytest.fixture(scope="session")
def check_pole():
    return HPoint([0.3 + 0j], 0.1)


@pytest.fixture(scope="session")
def coefficients(sphere, check_pole):
    return normalized_coefficients(1, 6, 6, check_pole, sphere)
