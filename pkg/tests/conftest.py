import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("lab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sl2(rng):
    th1, th2 = rng.uniform(0, 2 * np.pi, 2)
    s = rng.uniform(-2, 2)
    c1, s1, c2, s2 = np.cos(th1), np.sin(th1), np.cos(th2), np.sin(th2)
    return np.array([[c1, -s1], [s1, c1]]) @ np.diag([np.exp(s / 2), np.exp(-s / 2)]) @ np.array([[c2, -s2], [s2, c2]])


def random_group_element(rng, n):
    from orbitlab.geometry import embed_K, make_a
    from orbitlab.quadrature import haar_sample_SO

    k1 = embed_K(haar_sample_SO(n, rng))
    k2 = embed_K(haar_sample_SO(n, rng))
    return k1 @ make_a(rng.uniform(-2, 2), n) @ k2


def random_unimodular(rng, m, steps=8):
    U = np.eye(m, dtype=np.int64)
    for _ in range(steps):
        i, j = rng.choice(m, 2, replace=False)
        E = np.eye(m, dtype=np.int64)
        E[i, j] = rng.integers(-2, 3)
        U = U @ E
        if rng.random() < 0.3:
            P = np.eye(m, dtype=np.int64)
            P[[i, j]] = P[[j, i]]
            U = U @ P
    return U


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
