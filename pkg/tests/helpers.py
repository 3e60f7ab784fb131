"""Instance recipes shared by the test modules."""
import numpy as np

from memcp.expansion import exp_concave
from memcp.instance import Instance
from memcp.objective import make_context


def t1_instance():
    """One customer, two sites: Psi(z) = (z - 1)^2 / z^2 with g = exp:1:1."""
    return Instance([[1.0, 2.0]], [1.0], [1.0], [0.0], 1)


def t1_ctx():
    return make_context(t1_instance(), exp_concave(1, 1))


def t1_psi(z):
    return (z - 1.0) ** 2 / z ** 2


def concave_instance(rng, n_max=20, m_max=12, c_max=4, n_min=1, m_min=4):
    """Random instance whose terms are concave on [Uc, U] for every certified g.

    Competitor mass Uc >= 2 keeps the customer terms away from the region
    near Uc where certified expansion functions still produce convexity.
    """
    N = int(rng.integers(n_min, n_max + 1))
    m = int(rng.integers(m_min, m_max + 1))
    C = int(rng.integers(1, min(c_max, m) + 1))
    return Instance(rng.uniform(0.2, 3.0, (N, m)), rng.uniform(2.0, 6.0, N),
                    rng.uniform(0.5, 2.0, N), rng.uniform(0.0, 1.0, N), C)


def sigmoid_instance(rng, n_max=10, m_max=10, c_max=3, m_min=4):
    """Attraction mass spanning e^4 so sigmoid:5:4 terms switch curvature."""
    N = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(m_min, m_max + 1))
    C = int(rng.integers(1, min(c_max, m) + 1))
    return Instance(rng.uniform(5.0, 40.0, (N, m)), rng.uniform(10.0, 40.0, N),
                    rng.uniform(0.5, 2.0, N), rng.uniform(0.0, 0.2, N), C)


ACCEPTANCE_LINES = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    """Keep one PASS/FAIL line per criterion for the end-of-run summary."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
