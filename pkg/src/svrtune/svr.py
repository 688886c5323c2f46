"""Epsilon-insensitive support vector regression.

The dual is solved over the signed coefficients b_i = a_i - a_i^* (one per
training point):

    maximize  -1/2 sum_ij b_i b_j K(x_i, x_j) - eps * sum_i |b_i| + sum_i y_i b_i
    s.t.      sum_i b_i = 0,   |b_i| <= C

by pairwise coordinate ascent: each step picks the most violating index by
ascent gain, pairs it with the partner of largest second-order gain estimate,
and solves the two-coordinate subproblem exactly (the piecewise-quadratic
line search handles the |b| kink). Convergence is measured by the gap of the
feasible bias window; the reported bias is that window's midpoint.

Kernel convention: for the RBF kernel, gamma denotes the full denominator of
the exponent, k(x, z) = exp(-||x - z||^2 / gamma), i.e. gamma = 2*sigma^2.
Larger gamma means a wider, smoother kernel. This is the reciprocal of the
sklearn/libsvm convention; see README.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import jsonio

__all__ = [
    "KernelSpec",
    "SvrParams",
    "SolverSettings",
    "TrainingDiagnostics",
    "SvrModel",
    "kernel_eval",
    "train_svr",
    "predict",
    "predict_batch",
    "mse",
    "count_sv",
    "dual_objective",
    "model_to_json",
    "model_from_json",
    "DEFAULT_PARAMS",
    "KERNEL_CACHE_LIMIT",
]

KERNEL_KINDS = ("linear", "polynomial", "rbf", "sigmoid")

# full kernel matrix is materialized up to this many training rows;
# above it, columns are recomputed on demand
KERNEL_CACHE_LIMIT = 4096


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and its parameters.

    gamma applies to rbf only (exponent denominator, = 2*sigma^2); degree to
    polynomial; shift to sigmoid.
    """

    kind: str = "rbf"
    gamma: float = 0.0625
    degree: int = 3
    shift: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind == "rbf" and not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("rbf kernel requires gamma > 0")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial kernel requires degree >= 1")


@dataclass(frozen=True)
class SvrParams:
    c: float
    epsilon: float
    kernel: KernelSpec

    def __post_init__(self) -> None:
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError("c must be finite and > 0")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError("epsilon must be finite and >= 0")


# comparison baseline: untuned parameters
DEFAULT_PARAMS = SvrParams(c=1.0, epsilon=0.1, kernel=KernelSpec("rbf", gamma=0.2))


@dataclass(frozen=True)
class SolverSettings:
    """Stopping controls for the dual solver.

    max_passes is a sweep budget: the solver performs at most
    max_passes * n pairwise updates. None resolves to 10 * n at train time.
    """

    kkt_tolerance: float = 1e-3
    max_passes: Optional[int] = None
    sv_threshold: float = 1e-8

    def __post_init__(self) -> None:
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be > 0")
        if self.max_passes is not None and self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.sv_threshold < 0:
            raise ValueError("sv_threshold must be >= 0")


@dataclass(frozen=True)
class TrainingDiagnostics:
    iterations: int
    max_kkt_violation: float


@dataclass(frozen=True, eq=False)
class SvrModel:
    """Trained regressor: f(x) = sum_i beta_i k(sv_i, x) + bias.

    Only rows with |beta| above the support-vector threshold are stored.
    """

    support_inputs: np.ndarray
    beta: np.ndarray
    bias: float
    params: SvrParams
    n_sv: int
    diagnostics: TrainingDiagnostics

    def __post_init__(self) -> None:
        sv = np.array(self.support_inputs, dtype=np.float64)
        bt = np.array(self.beta, dtype=np.float64)
        if sv.ndim != 2 or bt.ndim != 1 or sv.shape[0] != bt.shape[0]:
            raise ValueError("support_inputs must be (m, d) with beta of length m")
        sv.setflags(write=False)
        bt.setflags(write=False)
        object.__setattr__(self, "support_inputs", sv)
        object.__setattr__(self, "beta", bt)

    @property
    def n_features(self) -> int:
        return self.support_inputs.shape[1]


# --- kernels -----------------------------------------------------------------

def _pairwise_sqdist(X: np.ndarray, Z: np.ndarray, same: bool = False) -> np.ndarray:
    xx = np.sum(X * X, axis=1)[:, None]
    zz = np.sum(Z * Z, axis=1)[None, :]
    sq = xx + zz - 2.0 * (X @ Z.T)
    np.maximum(sq, 0.0, out=sq)
    if same:
        np.fill_diagonal(sq, 0.0)
    return sq


def _kernel_matrix(
    spec: KernelSpec,
    X: np.ndarray,
    Z: np.ndarray | None = None,
    sqdist: np.ndarray | None = None,
) -> np.ndarray:
    same = Z is None or Z is X
    Zm = X if Z is None else Z
    if spec.kind == "linear":
        return X @ Zm.T
    if spec.kind == "polynomial":
        return (X @ Zm.T + 1.0) ** spec.degree
    if spec.kind == "sigmoid":
        return np.tanh(X @ Zm.T + spec.shift)
    if sqdist is None:
        sqdist = _pairwise_sqdist(X, Zm, same=same)
    return np.exp(-sqdist / spec.gamma)


def kernel_eval(spec: KernelSpec, x, z) -> float:
    """Scalar kernel value; the reference definition used by the matrix paths."""
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {z.shape[0]}")
    if spec.kind == "linear":
        return float(x @ z)
    if spec.kind == "polynomial":
        return float((x @ z + 1.0) ** spec.degree)
    if spec.kind == "sigmoid":
        return float(np.tanh(x @ z + spec.shift))
    diff = x - z
    return float(np.exp(-(diff @ diff) / spec.gamma))


class _DenseKernel:
    """Cached full kernel matrix (used while n <= KERNEL_CACHE_LIMIT)."""

    def __init__(self, mat: np.ndarray) -> None:
        self.mat = mat
        self.diag = np.ascontiguousarray(np.diagonal(mat)).copy()

    def column(self, i: int) -> np.ndarray:
        return self.mat[i]


class _LazyKernel:
    """Column-on-demand kernel for large training sets."""

    def __init__(self, spec: KernelSpec, X: np.ndarray) -> None:
        self.spec = spec
        self.X = X
        if spec.kind == "rbf":
            self.diag = np.ones(X.shape[0])
        else:
            self.diag = np.array([kernel_eval(spec, row, row) for row in X])

    def column(self, i: int) -> np.ndarray:
        col = _kernel_matrix(self.spec, self.X, self.X[i : i + 1]).ravel()
        col[i] = self.diag[i]
        return col


def _solve_dual(kernel, y: np.ndarray, c: float, epsilon: float,
                tol: float, max_steps: int):
    """Core pairwise ascent. Returns (beta, bias, steps, violation).

    Maintains three length-n arrays updated incrementally per step:
    resid  = y - K @ beta
    up[i]  = ascent gain of raising beta[i]   (-inf once beta[i] = c)
    dn[i]  = bias bound from lowering beta[i] (+inf once beta[i] = -c)
    The optimum is reached when max(up) - min(dn) <= tol; that window also
    yields the bias (midpoint), which reduces to the feasible-interval
    midpoint rule when no support vector is free.
    """
    n = y.shape[0]
    beta = np.zeros(n)
    diag = kernel.diag
    resid = y.astype(np.float64, copy=True)
    up = resid - epsilon
    dn = resid + epsilon
    snap = 1e-10 * max(1.0, c)
    steps = 0
    scratch = np.empty(n)
    while True:
        i = int(np.argmax(up))
        b_lo = up[i]
        b_up = dn[int(np.argmin(dn))]
        violation = b_lo - b_up
        if violation <= tol or steps >= max_steps:
            break
        ki = kernel.column(i)
        # second-order partner choice: maximize gain estimate D^2 / eta
        D = b_lo - dn
        np.multiply(ki, -2.0, out=scratch)
        scratch += diag
        scratch += diag[i]
        np.maximum(scratch, 1e-12, out=scratch)
        est = D * np.abs(D)
        est /= scratch
        j = int(np.argmax(est))
        kj = kernel.column(j)
        bi = beta[i]
        bj = beta[j]
        eta = scratch[j]
        a = resid[i] - resid[j]
        lo = max(-c - bi, bj - c)
        hi = min(c - bi, bj + c)
        # exact maximization of the piecewise-concave quadratic in the move d
        best_d = hi
        best_g = a * hi - 0.5 * eta * hi * hi - epsilon * (
            abs(bi + hi) - abs(bi) + abs(bj - hi) - abs(bj))
        for d in (lo, -bi, bj, a / eta, (a - 2.0 * epsilon) / eta, (a + 2.0 * epsilon) / eta):
            if lo <= d <= hi:
                g = a * d - 0.5 * eta * d * d - epsilon * (
                    abs(bi + d) - abs(bi) + abs(bj - d) - abs(bj))
                if g > best_g:
                    best_g = g
                    best_d = d
        if best_g <= 0.0 or best_d == 0.0:
            break  # numerically stuck; keep the honest violation
        new_i = bi + best_d
        new_j = bj - best_d
        if new_i > c - snap:
            new_i = c
        elif new_i < -c + snap:
            new_i = -c
        if new_j > c - snap:
            new_j = c
        elif new_j < -c + snap:
            new_j = -c
        delta = (new_i - bi) * ki
        if new_j != bj:
            delta += (new_j - bj) * kj
        resid -= delta
        up -= delta
        dn -= delta
        beta[i] = new_i
        beta[j] = new_j
        for t in (i, j):
            bt = beta[t]
            rt = resid[t]
            up[t] = -np.inf if bt >= c else (rt - epsilon if bt >= 0.0 else rt + epsilon)
            dn[t] = np.inf if bt <= -c else (rt + epsilon if bt <= 0.0 else rt - epsilon)
        steps += 1
    bias = 0.5 * (b_lo + b_up)
    return beta, float(bias), steps, max(float(violation), 0.0)


def _train_on_kernel(X: np.ndarray, y: np.ndarray, params: SvrParams,
                     settings: SolverSettings, kernel) -> SvrModel:
    n = y.shape[0]
    max_passes = settings.max_passes if settings.max_passes is not None else 10 * n
    beta, bias, steps, violation = _solve_dual(
        kernel, y, params.c, params.epsilon, settings.kkt_tolerance, max_passes * n
    )
    sv_mask = np.abs(beta) > settings.sv_threshold
    return SvrModel(
        support_inputs=X[sv_mask].copy(),
        beta=beta[sv_mask].copy(),
        bias=bias,
        params=params,
        n_sv=int(sv_mask.sum()),
        diagnostics=TrainingDiagnostics(iterations=steps, max_kkt_violation=violation),
    )


def train_svr(features, targets, params: SvrParams,
              settings: SolverSettings | None = None, seed: int = 0) -> SvrModel:
    """Fit an epsilon-SVR on (features, targets).

    Fully deterministic: the pair-selection rule is greedy, so the result
    does not depend on seed (accepted for interface stability). The kernel
    matrix is cached whole for n <= KERNEL_CACHE_LIMIT, otherwise columns
    are recomputed on demand.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError("targets must be a vector matching the feature rows")
    if y.shape[0] == 0:
        raise ValueError("need at least one training row")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite training data")
    settings = settings or SolverSettings()
    if X.shape[0] <= KERNEL_CACHE_LIMIT:
        kernel = _DenseKernel(_kernel_matrix(params.kernel, X))
    else:
        kernel = _LazyKernel(params.kernel, X)
    return _train_on_kernel(X, y, params, settings, kernel)


def predict_batch(model: SvrModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if X.shape[1] != model.n_features:
        raise ValueError(f"dimension mismatch: model has d={model.n_features}, input d={X.shape[1]}")
    if model.beta.shape[0] == 0:
        return np.full(X.shape[0], model.bias)
    K = _kernel_matrix(model.params.kernel, X, model.support_inputs)
    return K @ model.beta + model.bias


def predict(model: SvrModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    return float(predict_batch(model, x[None, :])[0])


def mse(actual, predicted) -> float:
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.shape != p.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {p.shape[0]}")
    if a.shape[0] == 0:
        raise ValueError("mse undefined for empty vectors")
    d = a - p
    return float(d @ d / a.shape[0])


def count_sv(model: SvrModel, threshold: float = 1e-8) -> int:
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    return int((np.abs(model.beta) > threshold).sum())


def dual_objective(K: np.ndarray, y: np.ndarray, epsilon: float, beta: np.ndarray) -> float:
    """Dual value of a coefficient vector under a fixed kernel matrix."""
    beta = np.asarray(beta, dtype=np.float64)
    return float(-0.5 * beta @ (K @ beta) - epsilon * np.abs(beta).sum() + y @ beta)


# --- serialization -----------------------------------------------------------

def model_to_json(model: SvrModel) -> str:
    k = model.params.kernel
    doc = {
        "kernel": {"kind": k.kind, "gamma": k.gamma, "degree": k.degree, "shift": k.shift},
        "c": model.params.c,
        "epsilon": model.params.epsilon,
        "support_inputs": [[float(v) for v in row] for row in model.support_inputs],
        "beta": [float(v) for v in model.beta],
        "bias": model.bias,
        "n_sv": model.n_sv,
        "diagnostics": {
            "iterations": model.diagnostics.iterations,
            "max_kkt_violation": model.diagnostics.max_kkt_violation,
        },
        "n_features": model.n_features,
    }
    return jsonio.dumps(doc)


def model_from_json(text: str) -> SvrModel:
    doc = jsonio.loads(text)
    kd = doc["kernel"]
    spec = KernelSpec(kind=kd["kind"], gamma=float(kd["gamma"]),
                      degree=int(kd["degree"]), shift=float(kd["shift"]))
    params = SvrParams(c=float(doc["c"]), epsilon=float(doc["epsilon"]), kernel=spec)
    m = len(doc["beta"])
    d = int(doc.get("n_features", 0))
    sv = np.array(doc["support_inputs"], dtype=np.float64).reshape(m, d if m == 0 else -1)
    return SvrModel(
        support_inputs=sv if m else np.zeros((0, d)),
        beta=np.array(doc["beta"], dtype=np.float64),
        bias=float(doc["bias"]),
        params=params,
        n_sv=int(doc["n_sv"]),
        diagnostics=TrainingDiagnostics(
            iterations=int(doc["diagnostics"]["iterations"]),
            max_kkt_violation=float(doc["diagnostics"]["max_kkt_violation"]),
        ),
    )
