"""Assembly of the three tangent kernels K_n, K_t, K_r, and the trial ansatz.

K_t and K_r each have two permanently tested construction paths:

* direct — stack per-point Jacobian rows of the trial function / residual
  and take their Gram (combine, then Gram);
* composed — build the component kernels of each derivative order first and
  combine them afterwards (Gram, then combine): diag(B) K_n diag(B) for
  K_t, the nine-term coefficient formula for K_r.

Jacobian rows are produced in parameter chunks, so nothing of size
N x P has to be materialized for the Gram products.
"""

from dataclasses import dataclass

import numpy as np

from . import net, pde
from .linalg import SymMatrix


@dataclass
class TrialFunction:
    """Hard-constraint ansatz u~ = A + B * N."""

    pair: object
    params: object


@dataclass
class TrialEval:
    value: np.ndarray  # (N,)
    grad: np.ndarray  # (N, d)
    lap: np.ndarray  # (N,)
    jac: np.ndarray | None  # (N, P) parameter Jacobian of the trial function


@dataclass
class KernelBundle:
    kn: SymMatrix
    kt: SymMatrix
    kr: SymMatrix
    points: np.ndarray
    provenance: str  # construction path tag


def _symmetrize(k):
    return SymMatrix(0.5 * (k + k.T))


def trial_eval(trial, points, with_jacobian=False, state=None):
    """Trial value, gradient, and Laplacian (and optionally d u~ / d theta).

    u~    = A + B N
    grad  = grad A + N grad B + B grad N
    lap   = lap A + N lap B + 2 grad B . grad N + B lap N
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    pair = trial.pair
    st = state if state is not None else net.forward(trial.params, x, order=2)
    b = pair.value(x)
    gb = pair.grad(x)
    lb = pair.lap(x)
    value = pair.a_value(x) + b * st.value
    grad = pair.a_grad(x) + st.value[:, None] * gb + b[:, None] * st.grad
    lap = (
        pair.a_lap(x)
        + st.value * lb
        + 2.0 * np.sum(gb * st.grad, axis=1)
        + b * st.lap
    )
    jac = None
    if with_jacobian:
        j_value, _, _ = net.param_jacobians(trial.params, x, order=2)
        jac = b[:, None] * j_value
    return TrialEval(value=value, grad=grad, lap=lap, jac=jac)


def assemble_kn(params, points):
    """K_n = J0 J0^T, the Gram of the network-value parameter Jacobian rows.

    Accumulated layer by layer through the rank-one structure of per-point
    weight gradients: the layer-l contribution is
    (Zbar_l Zbar_l^T) o (A_{l-1} A_{l-1}^T + 1), which never materializes
    an N x P array and so scales to widths in the thousands.
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if x.shape[0] < 1:
        raise ValueError("points must be nonempty")
    st = net.forward(params, x, order=0)
    zbars = net.value_backward_layers(params, st)
    n = x.shape[0]
    k = np.zeros((n, n))
    for l in range(1, params.n_layers + 1):
        zb = zbars[l]
        a_prev = st.a[l - 1]
        k += (zb @ zb.T) * (a_prev @ a_prev.T + 1.0)
    return _symmetrize(k)


def assemble_kt(params, pair, points, path="composed"):
    """Trial-function kernel via diag(B) K_n diag(B) or the scaled-row Gram."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    b = pair.value(x)
    if path == "composed":
        kn = assemble_kn(params, x).a
        return _symmetrize(b[:, None] * kn * b[None, :])
    if path == "direct":
        st = net.forward(params, x, order=0)
        n = x.shape[0]
        k = np.zeros((n, n))
        for _, _, _, _, blk in net.jacobian_blocks(params, st):
            rows = b[:, None] * blk[0]
            k += rows @ rows.T
        return _symmetrize(k)
    raise ValueError(f"unknown path '{path}'")


def component_kernels(params, points):
    """The six derivative-order component kernels of the residual formula.

    Returns a dict with entries (shapes for d = input dim, N points):
      nn (N,N), ngrad (d,N,N), gradgrad (d,d,N,N), nlap (N,N),
      gradlap (d,N,N), laplap (N,N).
    Cross kernels are stored one-sided; their transposes follow from the
    inner-product symmetry (checked in tests).
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    st = net.forward(params, x, order=2)
    n, d = x.shape
    comp = {
        "nn": np.zeros((n, n)),
        "ngrad": np.zeros((d, n, n)),
        "gradgrad": np.zeros((d, d, n, n)),
        "nlap": np.zeros((n, n)),
        "gradlap": np.zeros((d, n, n)),
        "laplap": np.zeros((n, n)),
    }
    for _, _, _, _, blk in net.jacobian_blocks(params, st):
        jv = blk[0]
        jl = blk[1 + d]
        comp["nn"] += jv @ jv.T
        comp["nlap"] += jv @ jl.T
        comp["laplap"] += jl @ jl.T
        for m in range(d):
            jm = blk[1 + m]
            comp["ngrad"][m] += jv @ jm.T
            comp["gradlap"][m] += jm @ jl.T
            for kx in range(d):
                comp["gradgrad"][m, kx] += jm @ blk[1 + kx].T
    return comp


def compose_kr(comp, coeff):
    """Nine-term combination of component kernels with the (alpha, beta, gamma) fields."""
    alpha, beta, gamma = coeff.alpha, coeff.beta, coeff.gamma
    d = beta.shape[1]
    k = alpha[:, None] * alpha[None, :] * comp["nn"]
    for m in range(d):
        k += alpha[:, None] * beta[None, :, m] * comp["ngrad"][m]
        k += beta[:, m, None] * comp["ngrad"][m].T * alpha[None, :]
        for kx in range(d):
            k += beta[:, m, None] * comp["gradgrad"][m, kx] * beta[None, :, kx]
        k += beta[:, m, None] * comp["gradlap"][m] * gamma[None, :]
        k += gamma[:, None] * beta[None, :, m] * comp["gradlap"][m].T
    k += alpha[:, None] * gamma[None, :] * comp["nlap"]
    k += gamma[:, None] * alpha[None, :] * comp["nlap"].T
    k += gamma[:, None] * gamma[None, :] * comp["laplap"]
    return k


def assemble_kr(params, problem, pair, points, path="direct"):
    """Residual kernel: Gram of J_r rows, or the nine-term composed formula.

    J_r(r_i) = alpha_i dN/dtheta + beta_i . d(grad N)/dtheta
             + gamma_i d(lap N)/dtheta.
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    coeff = pde.coefficients(problem.op, pair, x)
    n, d = x.shape
    if path == "composed":
        comp = component_kernels(params, x)
        return _symmetrize(compose_kr(comp, coeff))
    if path == "direct":
        st = net.forward(params, x, order=2)
        k = np.zeros((n, n))
        for _, _, _, _, blk in net.jacobian_blocks(params, st):
            rows = coeff.alpha[:, None] * blk[0]
            for m in range(d):
                rows += coeff.beta[:, m, None] * blk[1 + m]
            rows += coeff.gamma[:, None] * blk[1 + d]
            k += rows @ rows.T
        return _symmetrize(k)
    raise ValueError(f"unknown path '{path}'")


def assemble_bundle(params, pair, problem, points, path="direct"):
    """All three kernels over one collocation set."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return KernelBundle(
        kn=assemble_kn(params, x),
        kt=assemble_kt(params, pair, x, path="composed" if path == "composed" else "direct"),
        kr=assemble_kr(params, problem, pair, x, path=path),
        points=x,
        provenance=path,
    )
