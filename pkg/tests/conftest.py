import numpy as np
import pytest

from fluxweight.methods import ProblemSpec


def make_linear_problem(cx=2.0, cy=3.0, c0=1.0):
    """u = cx*x + cy*y + c0 with unit coefficient: every method is exact."""
    return ProblemSpec(
        name="linear", domain="unit-square",
        a=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
        grad_a=lambda x, y: np.zeros(np.shape(np.asarray(x)) + (2,)),
        f=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        u=lambda x, y: cx * x + cy * y + c0,
        grad_u=lambda x, y: np.stack(
            [np.full_like(np.asarray(x, dtype=float), cx),
             np.full_like(np.asarray(y, dtype=float), cy)], axis=-1),
    )


def make_gentle_problem():
    """u = x^3 y + sin(pi x) with a = 1 + x/2 + y^2: smooth data at
    unit scale, so assembly quadrature truncation sits at roundoff."""
    def a(x, y):
        return 1.0 + 0.5 * x + y * y

    def grad_a(x, y):
        return np.stack([np.full_like(np.asarray(x, dtype=float), 0.5),
                         2.0 * np.asarray(y, dtype=float)], axis=-1)

    def u(x, y):
        return x ** 3 * y + np.sin(np.pi * x)

    def grad_u(x, y):
        return np.stack([3 * x * x * y + np.pi * np.cos(np.pi * x),
                         x ** 3 + np.zeros_like(np.asarray(y, dtype=float))],
                        axis=-1)

    def f(x, y):
        lap = 6 * x * y - np.pi ** 2 * np.sin(np.pi * x)
        gu = grad_u(x, y)
        return -(a(x, y) * lap + 0.5 * gu[..., 0] + 2 * y * gu[..., 1])

    return ProblemSpec(name="gentle", domain="unit-square", a=a,
                       grad_a=grad_a, f=f, u=u, grad_u=grad_u)


@pytest.fixture(scope="session")
def linear_problem():
    return make_linear_problem()


@pytest.fixture(scope="session")
def gentle_problem():
    return make_gentle_problem()


@pytest.fixture(scope="session")
def square4():
    from fluxweight.mesh import build_unit_square
    return build_unit_square(4)


@pytest.fixture(scope="session")
def square8():
    from fluxweight.mesh import build_unit_square
    return build_unit_square(8)
