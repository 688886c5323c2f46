"""Standard test objectives for the optimizers."""

import numpy as np


def sphere(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(x @ x)


def rosenbrock(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))
