"""Linear differential operators, benchmark problems, and residual coefficients."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from .errors import ConfigError, SingularCoefficient

BENCHMARK_NAMES = ("poisson1d_sin", "diffusion1d_sincos", "diffusion2d", "diffusion3d")


@dataclass
class LinearOperator:
    """L[u] = c0 u + c1 . grad(u) + c2 lap(u), coefficients constant or callable."""

    dim: int
    c0: object = 0.0
    c1: object = None  # vector field; None means zero
    c2: object = 0.0

    def coeffs_at(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = x.shape[0]
        c0 = self.c0(x) if callable(self.c0) else np.full(n, float(self.c0))
        if self.c1 is None:
            c1 = np.zeros((n, self.dim))
        elif callable(self.c1):
            c1 = np.asarray(self.c1(x), dtype=np.float64).reshape(n, self.dim)
        else:
            c1 = np.broadcast_to(np.asarray(self.c1, dtype=np.float64), (n, self.dim)).copy()
        c2 = self.c2(x) if callable(self.c2) else np.full(n, float(self.c2))
        return c0, c1, c2

    def apply(self, value, grad, lap, points):
        c0, c1, c2 = self.coeffs_at(points)
        return c0 * value + np.sum(c1 * grad, axis=1) + c2 * lap


@dataclass
class Problem:
    """A PDE with Dirichlet data, its source, and (optionally) the exact solution."""

    name: str
    dim: int
    op: LinearOperator
    source: object  # f(points) -> (N,)
    exact: object | None = None  # u(points) -> (N,)
    exact_grad: object | None = None
    exact_lap: object | None = None
    boundary_data: object | None = None  # g(points) -> (N,); None means zero

    def g(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.boundary_data is None:
            return np.zeros(x.shape[0])
        return self.boundary_data(x)

    def self_check(self, n_points=100, seed=0, tol=1e-8):
        """Verify op[exact] == source at random interior points."""
        if self.exact is None:
            return
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.05, 0.95, size=(n_points, self.dim))
        lhs = self.op.apply(self.exact(x), self.exact_grad(x), self.exact_lap(x), x)
        err = np.abs(lhs - self.source(x)).max()
        if err > tol:
            raise ConfigError(f"benchmark '{self.name}' fails self-consistency: {err:.3e}")


@dataclass
class CoefficientField:
    """Per-point residual coefficients alpha, beta, gamma induced by (op, B)."""

    alpha: np.ndarray  # (N,)
    beta: np.ndarray  # (N, d)
    gamma: np.ndarray  # (N,)


def coefficients(op, pair, points):
    """alpha = c0 B + c1 . grad B + c2 lap B; beta = c1 B + 2 c2 grad B; gamma = c2 B."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    c0, c1, c2 = op.coeffs_at(x)
    b = pair.value(x)
    gb = pair.grad(x)
    lb = pair.lap(x)
    with np.errstate(invalid="ignore"):
        alpha = c0 * b + np.sum(c1 * gb, axis=1) + c2 * lb
        beta = c1 * b[:, None] + 2.0 * c2[:, None] * gb
        gamma = c2 * b
    for arr in (alpha, beta, gamma):
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.argwhere(bad)[0][0])
            raise SingularCoefficient(idx)
    return CoefficientField(alpha=alpha, beta=beta, gamma=gamma)


def residual(problem, points, value, grad, lap):
    """R_i = c0 u_i + c1 . grad u_i + c2 lap u_i - f_i for trial values at the points."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return problem.op.apply(np.asarray(value), np.asarray(grad), np.asarray(lap), x) - problem.source(x)


def dump_coefficients(op, pair, points, path):
    """Audit dump of the per-point coefficient fields as CSV."""
    from . import io

    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cf = coefficients(op, pair, x)
    d = x.shape[1]
    header = [f"x{m}" for m in range(d)] + ["alpha"] + [f"beta{m}" for m in range(d)] + ["gamma"]
    rows = np.hstack([x, cf.alpha[:, None], cf.beta, cf.gamma[:, None]])
    io.write_csv(path, header, rows.tolist())
    return path


def _lambdify_fields(expr, symbols):
    """Value/gradient/Laplacian callables on (N, d) arrays from a sympy expression."""
    grads = [sp.diff(expr, s) for s in symbols]
    lap = sum(sp.diff(expr, s, 2) for s in symbols)
    f_v = sp.lambdify(symbols, expr, "numpy")
    f_g = [sp.lambdify(symbols, g, "numpy") for g in grads]
    f_l = sp.lambdify(symbols, sp.simplify(lap), "numpy")

    def value(x):
        cols = [x[:, m] for m in range(len(symbols))]
        return np.broadcast_to(np.asarray(f_v(*cols), dtype=np.float64), (x.shape[0],)).copy()

    def grad(x):
        cols = [x[:, m] for m in range(len(symbols))]
        out = np.empty((x.shape[0], len(symbols)))
        for m, fg in enumerate(f_g):
            out[:, m] = np.broadcast_to(np.asarray(fg(*cols), dtype=np.float64), (x.shape[0],))
        return out

    def laplacian(x):
        cols = [x[:, m] for m in range(len(symbols))]
        return np.broadcast_to(np.asarray(f_l(*cols), dtype=np.float64), (x.shape[0],)).copy()

    return value, grad, laplacian


@lru_cache(maxsize=None)
def benchmark(name):
    """Diffusion benchmarks with symbolically derived sources.

    The source is obtained by applying the operator to the exact solution
    with sympy (never hand-typed), which guarantees the self-consistency
    gate holds by construction; the gate still runs at load.
    """
    if name not in BENCHMARK_NAMES:
        raise ConfigError(f"unknown benchmark '{name}' (choose from {BENCHMARK_NAMES})")
    x, y, z = sp.symbols("x y z")
    if name == "poisson1d_sin":
        dim, syms = 1, (x,)
        u = -sp.sin(sp.pi * x)
        c0, c2 = 0.0, 1.0  # u'' = f
    elif name == "diffusion1d_sincos":
        dim, syms = 1, (x,)
        u = sp.sin(sp.pi * x) * sp.cos(2 * sp.pi * x)
        c0, c2 = 0.0, -1.0  # -u'' = f
    elif name == "diffusion2d":
        dim, syms = 2, (x, y)
        u = sp.sin(sp.pi * x) * sp.sin(sp.pi * y)
        c0, c2 = 1.0, -1.0  # -lap(u) + u = f
    else:  # diffusion3d, constants D = a = 1
        dim, syms = 3, (x, y, z)
        u = sp.sin(sp.pi * x) * sp.sin(sp.pi * y) * sp.sin(sp.pi * z)
        c0, c2 = 1.0, -1.0  # -D lap(u) + a u = f
    f_expr = c0 * u + c2 * sum(sp.diff(u, s, 2) for s in syms)
    exact_v, exact_g, exact_l = _lambdify_fields(u, syms)
    source_v, _, _ = _lambdify_fields(sp.simplify(f_expr), syms)
    op = LinearOperator(dim=dim, c0=c0, c1=None, c2=c2)
    prob = Problem(
        name=name,
        dim=dim,
        op=op,
        source=source_v,
        exact=exact_v,
        exact_grad=exact_g,
        exact_lap=exact_l,
    )
    prob.self_check()
    return prob
