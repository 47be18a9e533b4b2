"""Boundary-function pairs with analytic derivatives, features, and grids.

Every family is a product of one-dimensional factors, so gradients and
Laplacians assemble by the product rule from exact 1D factor derivatives.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

FAMILY_DIMS = {
    "power": 1,
    "power_asym": 1,
    "trig": 1,
    "rational": 1,
    "exponential": 1,
    "tanh": 1,
    "power2d": 2,
    "mixed_power2d": 2,
    "tanh2d": 2,
    "mixed_power_sym3d": 3,
    "mixed_power_asym3d": 3,
    "tanh3d": 3,
}

# Families whose 1D factors violate B(1) = 0; kept for spectral studies only.
ASYMMETRIC_AT_ONE = {"power_asym"}


def _scaled_power(coef, base, expo):
    # coef * base**expo with the convention that a zero coefficient kills the
    # term outright (a(a-1) x^(a-2) must be identically 0 at a == 1, not 0*inf).
    if coef == 0.0:
        return np.zeros_like(base)
    return coef * base**expo


def _power_sym_factor(a):
    # q(x) = [x(1-x)]^a with the expanded second-derivative form.
    def ev(x, order=2):
        q = (x * (1.0 - x)) ** a
        d1 = d2 = None
        if order >= 1:
            d1 = _scaled_power(a, x, a - 1.0) * (1.0 - x) ** (a - 1.0) * (1.0 - 2.0 * x)
        if order >= 2:
            d2 = (
                _scaled_power(a * (a - 1.0), x, a - 2.0) * (1.0 - x) ** a
                - 2.0 * a * a * x ** (a - 1.0) * (1.0 - x) ** (a - 1.0)
                + _scaled_power(a * (a - 1.0), 1.0 - x, a - 2.0) * x**a
            )
        return q, d1, d2

    return ev


def _power_asym_factor(p):
    def ev(x, order=2):
        d1 = _scaled_power(p, x, p - 1.0) if order >= 1 else None
        d2 = _scaled_power(p * (p - 1.0), x, p - 2.0) if order >= 2 else None
        return x**p, d1, d2

    return ev


def _trig_factor(a):
    # q(x) = sin^a(pi x)
    def ev(x, order=2):
        s = np.sin(np.pi * x)
        c = np.cos(np.pi * x)
        q = s**a
        d1 = a * np.pi * _scaled_power(1.0, s, a - 1.0) * c if order >= 1 else None
        d2 = a * np.pi**2 * (_scaled_power(a - 1.0, s, a - 2.0) * c * c - s**a) if order >= 2 else None
        return q, d1, d2

    return ev


def _rational_factor(a):
    # q(x) = w / (1 + a w) with w = x(1-x)
    def ev(x, order=2):
        w = x * (1.0 - x)
        wp = 1.0 - 2.0 * x
        den = 1.0 + a * w
        q = w / den
        d1 = wp / den**2 if order >= 1 else None
        d2 = (-2.0 * den - 2.0 * a * wp * wp) / den**3 if order >= 2 else None
        return q, d1, d2

    return ev


def _exponential_factor(a):
    # q(x) = w exp(-a w) with w = x(1-x)
    def ev(x, order=2):
        w = x * (1.0 - x)
        wp = 1.0 - 2.0 * x
        ex = np.exp(-a * w)
        q = w * ex
        d1 = wp * (1.0 - a * w) * ex if order >= 1 else None
        d2 = (-2.0 * (1.0 - a * w) + wp * wp * (a * a * w - 2.0 * a)) * ex if order >= 2 else None
        return q, d1, d2

    return ev


def _tanh_factor(a):
    # q(x) = tanh(a x) tanh(a (1-x))
    def ev(x, order=2):
        t1 = np.tanh(a * x)
        t2 = np.tanh(a * (1.0 - x))
        q = t1 * t2
        d1 = d2 = None
        if order >= 1:
            t1p = a * (1.0 - t1 * t1)
            t2p = -a * (1.0 - t2 * t2)
            d1 = t1p * t2 + t1 * t2p
        if order >= 2:
            d2 = (
                -2.0 * a * a * t1 * (1.0 - t1 * t1) * t2
                + 2.0 * t1p * t2p
                - 2.0 * a * a * t1 * t2 * (1.0 - t2 * t2)
            )
        return q, d1, d2

    return ev


def _check_positive(family, name, value):
    if value <= 0.0:
        raise ConfigError(f"{family}: parameter {name} must be positive, got {value}")


def _check_nonnegative(family, name, value):
    if value < 0.0:
        raise ConfigError(f"{family}: parameter {name} must be >= 0, got {value}")


def _build_factors(family, params):
    alpha = params.get("alpha")
    if family == "power":
        _check_positive(family, "alpha", alpha)
        return [_power_sym_factor(alpha)]
    if family == "power_asym":
        _check_positive(family, "alpha", alpha)
        return [_power_asym_factor(alpha)]
    if family == "trig":
        _check_positive(family, "alpha", alpha)
        return [_trig_factor(alpha)]
    if family == "rational":
        _check_nonnegative(family, "alpha", alpha)
        return [_rational_factor(alpha)]
    if family == "exponential":
        _check_nonnegative(family, "alpha", alpha)
        return [_exponential_factor(alpha)]
    if family == "tanh":
        _check_positive(family, "alpha", alpha)
        return [_tanh_factor(alpha)]
    if family == "power2d":
        _check_positive(family, "alpha", alpha)
        return [_power_sym_factor(alpha)] * 2
    if family == "mixed_power2d":
        beta = params.get("beta")
        _check_positive(family, "alpha", alpha)
        _check_positive(family, "beta", beta)
        return [_power_sym_factor(alpha), _power_sym_factor(beta)]
    if family == "tanh2d":
        _check_positive(family, "alpha", alpha)
        return [_tanh_factor(alpha)] * 2
    if family == "mixed_power_sym3d":
        _check_positive(family, "alpha", alpha)
        return [_power_sym_factor(alpha)] * 3
    if family == "mixed_power_asym3d":
        beta = params.get("beta")
        gamma = params.get("gamma")
        _check_positive(family, "alpha", alpha)
        _check_positive(family, "beta", beta)
        _check_positive(family, "gamma", gamma)
        return [_power_sym_factor(alpha), _power_sym_factor(beta), _power_sym_factor(gamma)]
    if family == "tanh3d":
        _check_positive(family, "alpha", alpha)
        return [_tanh_factor(alpha)] * 3
    raise ConfigError(f"unknown boundary family '{family}'")


@dataclass
class BoundaryPair:
    """Boundary functions A and B with exact gradient and Laplacian of B.

    A is the boundary-data offset; None means A == 0 (all homogeneous
    benchmarks). B vanishes on the domain boundary and is positive inside
    (power_asym excepted at x = 1; it is barred from training configs).
    """

    family: str
    params: dict
    dim: int
    factors: list
    a_funcs: tuple | None = None  # (value, grad, lap) callables for A

    def _factor_table(self, x, order):
        # singular derivatives at the boundary (alpha < 1 powers) are
        # legitimate inf results, detected by consumers; suppress the noise
        with np.errstate(divide="ignore", invalid="ignore"):
            return [f(x[:, m], order) for m, f in enumerate(self.factors)]

    def value(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        table = self._factor_table(x, 0)
        out = table[0][0].copy()
        for q, _, _ in table[1:]:
            out *= q
        return out

    def grad(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        table = self._factor_table(x, 1)
        n = x.shape[0]
        out = np.empty((n, self.dim))
        for m in range(self.dim):
            acc = table[m][1].copy()
            for k in range(self.dim):
                if k != m:
                    acc *= table[k][0]
            out[:, m] = acc
        return out

    def lap(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        table = self._factor_table(x, 2)
        n = x.shape[0]
        out = np.zeros(n)
        for m in range(self.dim):
            acc = table[m][2].copy()
            for k in range(self.dim):
                if k != m:
                    acc *= table[k][0]
            out += acc
        return out

    def a_value(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.a_funcs is None:
            return np.zeros(x.shape[0])
        return self.a_funcs[0](x)

    def a_grad(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.a_funcs is None:
            return np.zeros((x.shape[0], self.dim))
        return self.a_funcs[1](x)

    def a_lap(self, points):
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.a_funcs is None:
            return np.zeros(x.shape[0])
        return self.a_funcs[2](x)


@dataclass
class BoundaryFeatures:
    """Geometric features of B and of its second derivative on a fixed grid.

    TV and Gini in more than one dimension flatten the grid in lexicographic
    order; the ordering tag records this.
    """

    grad_l2: float
    tv: float
    gini: float
    dyn_range: float  # inf flag when B touches 0 on the feature grid
    curv_l2: float
    b2_max: float
    b2_tv: float
    ordering: str = "lexicographic"

    def as_dict(self):
        return {
            "grad_l2": self.grad_l2,
            "tv": self.tv,
            "gini": self.gini,
            "dyn_range": self.dyn_range,
            "curv_l2": self.curv_l2,
            "b2_max": self.b2_max,
            "b2_tv": self.b2_tv,
        }


def make_pair(family, params, dim=None, a_funcs=None):
    """Construct a boundary pair from a family name and parameter dict."""
    if family not in FAMILY_DIMS:
        raise ConfigError(f"unknown boundary family '{family}'")
    family_dim = FAMILY_DIMS[family]
    if dim is not None and dim != family_dim:
        raise ConfigError(f"family '{family}' is {family_dim}-dimensional, got dim={dim}")
    params = {k: float(v) for k, v in params.items()}
    for key in params:
        if key not in ("alpha", "beta", "gamma"):
            raise ConfigError(f"unknown boundary parameter '{key}'")
    if "alpha" not in params:
        raise ConfigError(f"family '{family}' requires parameter 'alpha'")
    factors = _build_factors(family, params)
    return BoundaryPair(family=family, params=params, dim=family_dim, factors=factors,
                        a_funcs=a_funcs)


def gini_coefficient(samples):
    """Gini coefficient of nonnegative samples via the sorted-rank identity."""
    b = np.sort(np.asarray(samples, dtype=np.float64))
    n = b.size
    total = b.sum()
    if total == 0.0:
        return 0.0
    ranks = np.arange(1, n + 1)
    return float(((2.0 * ranks - n - 1.0) @ b) / (n * total))


def total_variation(samples):
    return float(np.abs(np.diff(np.asarray(samples, dtype=np.float64))).sum())


def features(pair, grid_points) -> BoundaryFeatures:
    """The boundary-function features the kernel spectrum studies consume, on one grid."""
    x = np.atleast_2d(np.asarray(grid_points, dtype=np.float64))
    b = pair.value(x)
    gb = pair.grad(x)
    b2 = pair.lap(x)
    bmin = float(b.min())
    bmax = float(b.max())
    dyn = float("inf") if bmin <= 0.0 else bmax / bmin
    return BoundaryFeatures(
        grad_l2=float(np.sqrt(np.sum(gb * gb))),
        tv=total_variation(b),
        gini=gini_coefficient(b),
        dyn_range=dyn,
        curv_l2=float(np.sqrt(np.sum(b2 * b2))),
        b2_max=float(np.abs(b2).max()),
        b2_tv=total_variation(b2),
    )


def grid(dim, n_per_axis, include_boundary=True):
    """Uniform tensor grid on [0,1]^dim, lexicographic by axis.

    Interior grids place points at (i + 1)/(n + 1) (the inner points of an
    (n+2)-point inclusive grid), keeping them away from derivative
    singularities at the boundary.
    """
    if n_per_axis < 2:
        raise ConfigError(f"n_per_axis must be >= 2, got {n_per_axis}")
    if include_boundary:
        axis = np.linspace(0.0, 1.0, n_per_axis)
    else:
        axis = np.arange(1, n_per_axis + 1) / (n_per_axis + 1.0)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def trim_boundary(points):
    """Drop points lying exactly on the boundary of [0,1]^d."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    mask = np.all((x > 0.0) & (x < 1.0), axis=1)
    return x[mask]
