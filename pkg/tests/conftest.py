import numpy as np
import pytest

from reflected_mmbm.model import validate_model


def make_m1(b=1.0):
    return validate_model([[0.0]], [-1.0], [1.0], b)


def make_m2(b=1.0):
    return validate_model([[-1.0, 1.0], [1.0, -1.0]], [1.0, -2.0], [1.0, 1.0], b)


def random_model(rng, m, min_drift=0.1):
    """Dense random generator, so always irreducible; redraw until |alpha D 1| >= min_drift."""
    while True:
        Q = rng.uniform(0.2, 2.0, size=(m, m))
        np.fill_diagonal(Q, 0.0)
        Q -= np.diag(Q.sum(axis=1))
        mu = rng.uniform(-2.0, 2.0, size=m)
        sigma2 = rng.uniform(0.5, 2.0, size=m)
        b = rng.uniform(0.5, 2.0)
        model = validate_model(Q, mu, sigma2, b)
        if abs(model.mean_drift) >= min_drift:
            return model


def random_model_set(n=20, seed=20240611):
    rng = np.random.default_rng(seed)
    return [random_model(rng, int(rng.choice([2, 3, 4]))) for _ in range(n)]


@pytest.fixture
def m1():
    return make_m1()


@pytest.fixture
def m2():
    return make_m2()


@pytest.fixture(scope="session")
def random_models():
    return random_model_set()


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record_acceptance(number, ok, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
