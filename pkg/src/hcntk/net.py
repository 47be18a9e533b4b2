"""Fully connected MLP with exact input derivatives and parameter Jacobians.

The forward pass propagates, per layer, the triple (value, input-Jacobian,
input-Hessian) of every neuron. Parameter Jacobians of the network value,
its input gradient, and its input Laplacian are obtained by reverse
accumulation through that extended forward pass, so they are exact to
floating point rather than numerically differenced.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UnsupportedActivation

_SELU_LAMBDA = 1.0507009873554805
_SELU_ALPHA = 1.6732632423543772


class Activation:
    """Elementwise activation with derivatives up to third order.

    ``eval_derivs(z, order)`` returns (a, s1, s2, s3); entries above the
    requested order (and above ``max_order``) are None. Derivatives are
    expressed through the activation value where possible so each is a
    cheap elementwise expression.
    """

    def __init__(self, name, eval_derivs, max_order):
        self.name = name
        self.eval_derivs = eval_derivs
        self.max_order = max_order  # highest usable input-derivative order

    @property
    def smooth(self):
        return self.max_order >= 2


def _tanh_derivs(z, order):
    a = np.tanh(z)
    s1 = 1.0 - a * a
    s2 = s3 = None
    if order >= 2:
        s2 = -2.0 * a * s1
        s3 = -2.0 * s1 * (1.0 - 3.0 * a * a)
    return a, s1, s2, s3


def _sigmoid_derivs(z, order):
    a = 1.0 / (1.0 + np.exp(-z))
    s1 = a * (1.0 - a)
    s2 = s3 = None
    if order >= 2:
        s2 = s1 * (1.0 - 2.0 * a)
        s3 = s1 * (1.0 - 6.0 * a + 6.0 * a * a)
    return a, s1, s2, s3


def _relu_derivs(z, order):
    return np.maximum(z, 0.0), (z > 0.0).astype(np.float64), None, None


def _leaky_relu_derivs(z, order):
    return np.where(z > 0.0, z, 0.01 * z), np.where(z > 0.0, 1.0, 0.01), None, None


def _elu_derivs(z, order, lam=1.0, alpha=1.0):
    pos = z > 0.0
    a = np.where(pos, lam * z, lam * alpha * np.expm1(z))
    neg_slope = a + lam * alpha  # equals lam*alpha*exp(z) on the negative branch
    s1 = np.where(pos, lam, neg_slope)
    s2 = s3 = None
    if order >= 2:
        s2 = np.where(pos, 0.0, neg_slope)
        s3 = s2
    return a, s1, s2, s3


ACTIVATIONS = {
    "tanh": Activation("tanh", _tanh_derivs, max_order=2),
    "sigmoid": Activation("sigmoid", _sigmoid_derivs, max_order=2),
    "relu": Activation("relu", _relu_derivs, max_order=1),
    "leaky_relu": Activation("leaky_relu", _leaky_relu_derivs, max_order=1),
    "elu": Activation("elu", _elu_derivs, max_order=2),
    "selu": Activation(
        "selu",
        lambda z, order: _elu_derivs(z, order, lam=_SELU_LAMBDA, alpha=_SELU_ALPHA),
        max_order=2,
    ),
}

SMOOTH_ACTIVATIONS = ("tanh", "sigmoid", "elu", "selu")
NONSMOOTH_ACTIVATIONS = ("relu", "leaky_relu")


@dataclass
class NetworkParams:
    """Layered weights and biases plus the flat parameter indexing.

    Flat order is layer by layer: weights row-major, then biases.
    """

    layer_sizes: tuple
    activation: str
    weights: list
    biases: list
    seed: int | None = None

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    def param_count(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat_slices(self):
        """Per-layer (weight_slice, bias_slice) into the flat vector."""
        out = []
        off = 0
        for w, b in zip(self.weights, self.biases):
            ws = slice(off, off + w.size)
            off += w.size
            bs = slice(off, off + b.size)
            off += b.size
            out.append((ws, bs))
        return out

    def flatten(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def unflatten(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.param_count():
            raise ConfigError(f"flat vector has {flat.size} entries, expected {self.param_count()}")
        weights, biases = [], []
        off = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[off : off + w.size].reshape(w.shape).copy())
            off += w.size
            biases.append(flat[off : off + b.size].copy())
            off += b.size
        return NetworkParams(self.layer_sizes, self.activation, weights, biases, self.seed)

    def activation_def(self):
        return ACTIVATIONS[self.activation]


@dataclass
class PointEval:
    """Network value/gradient/Laplacian at one point, with parameter Jacobians."""

    value: float
    grad: np.ndarray  # (d,)
    lap: float | None
    jac_value: np.ndarray  # (P,)
    jac_grad: np.ndarray  # (d, P)
    jac_lap: np.ndarray | None  # (P,)


def init_kaiming_uniform(layer_sizes, activation, seed):
    """Kaiming-uniform initialization with one counter-based stream per layer.

    Weights and biases of layer l are drawn from
    U(-sqrt(1/fan_in), sqrt(1/fan_in)) using a Philox stream keyed by
    (seed, l), so widening one layer never perturbs the draws of another.
    Draw order within a layer: weights row-major, then biases.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ConfigError(f"invalid layer sizes {layer_sizes}")
    if sizes[-1] != 1:
        raise ConfigError("output dimension must be exactly 1")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation '{activation}'")
    seed = int(seed)
    if seed < 0:
        raise ConfigError("seed must be a non-negative 64-bit integer")
    weights, biases = [], []
    for l in range(1, len(sizes)):
        fan_in = sizes[l - 1]
        bound = 1.0 / np.sqrt(fan_in)
        gen = np.random.Generator(np.random.Philox(key=np.array([seed, l], dtype=np.uint64)))
        weights.append(gen.uniform(-bound, bound, size=(sizes[l], fan_in)))
        biases.append(gen.uniform(-bound, bound, size=sizes[l]))
    return NetworkParams(sizes, activation, weights, biases, seed)


def save_params(params, path):
    """Write a structured-text header line followed by the flat float64 vector."""
    header = {
        "layer_sizes": list(params.layer_sizes),
        "activation": params.activation,
        "seed": params.seed,
        "dtype": "float64-le",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(params.flatten().astype("<f8").tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        flat = np.frombuffer(fh.read(), dtype="<f8")
    sizes = tuple(header["layer_sizes"])
    template = NetworkParams(
        sizes,
        header["activation"],
        [np.zeros((sizes[l], sizes[l - 1])) for l in range(1, len(sizes))],
        [np.zeros(sizes[l]) for l in range(1, len(sizes))],
        header.get("seed"),
    )
    return template.unflatten(flat)


class ForwardState:
    """Per-layer values and input derivatives for a batch of points.

    ``order`` selects which carriers exist: 0 values only, 1 adds input
    Jacobians, 2 adds input Hessians (full d x d per neuron, contracted to
    the Laplacian only at the output).
    """

    __slots__ = ("x", "order", "z", "a", "u", "g", "s", "h", "sp", "spp", "sppp",
                 "value", "grad", "hess", "lap")


def _require_order(params, order):
    act = params.activation_def()
    if order > act.max_order:
        raise UnsupportedActivation(
            f"activation '{act.name}' does not support order-{order} evaluation"
        )


def forward(params, points, order=2):
    """Extended forward pass over a batch of points (shape (N, d))."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = params.input_dim
    if x.shape[1] != d:
        raise ConfigError(f"points have dimension {x.shape[1]}, network expects {d}")
    _require_order(params, order)
    act = params.activation_def()
    n = x.shape[0]
    st = ForwardState()
    st.x = x
    st.order = order
    st.z, st.a = [None], [x]
    st.u = [None]
    st.g = [np.broadcast_to(np.eye(d), (n, d, d)) if order >= 1 else None]
    st.s = [None]
    st.h = [np.zeros((n, d, d, d)) if order >= 2 else None]
    st.sp, st.spp, st.sppp = [None], [None], [None]
    n_layers = params.n_layers
    for l in range(1, n_layers + 1):
        w = params.weights[l - 1]
        b = params.biases[l - 1]
        z = st.a[l - 1] @ w.T + b
        u = st.g[l - 1] @ w.T if order >= 1 else None
        s = st.h[l - 1] @ w.T if order >= 2 else None
        st.z.append(z)
        st.u.append(u)
        st.s.append(s)
        if l < n_layers:
            a, sp, spp, sppp = act.eval_derivs(z, order)
            st.a.append(a)
            st.sp.append(sp)
            st.spp.append(spp)
            st.sppp.append(sppp)
            st.g.append(sp[:, None, :] * u if order >= 1 else None)
            if order >= 2:
                st.h.append(
                    spp[:, None, None, :] * u[:, :, None, :] * u[:, None, :, :]
                    + sp[:, None, None, :] * s
                )
            else:
                st.h.append(None)
        else:
            st.a.append(None)
            st.sp.append(None)
            st.spp.append(None)
            st.sppp.append(None)
            st.g.append(None)
            st.h.append(None)
    st.value = st.z[n_layers][:, 0]
    st.grad = st.u[n_layers][:, :, 0] if order >= 1 else None
    st.hess = st.s[n_layers][:, :, :, 0] if order >= 2 else None
    st.lap = np.trace(st.hess, axis1=1, axis2=2) if order >= 2 else None
    return st


def _output_seeds(n, d, order):
    """Adjoint seeds for the outputs [value, grad_0..grad_{d-1}, lap]."""
    n_out = 1 + (d if order >= 1 else 0) + (1 if order >= 2 else 0)
    zbar = np.zeros((n_out, n, 1))
    zbar[0] = 1.0
    ubar = sbar = None
    if order >= 1:
        ubar = np.zeros((n_out, n, d, 1))
        for m in range(d):
            ubar[1 + m, :, m, 0] = 1.0
    if order >= 2:
        sbar = np.zeros((n_out, n, d, d, 1))
        for m in range(d):
            sbar[1 + d, :, m, m, 0] = 1.0
    return zbar, ubar, sbar


def _pull_through_activation(st, j, abar, gbar, hbar):
    """Convert adjoints w.r.t. (a_j, g_j, h_j) into adjoints w.r.t. (z_j, u_j, s_j).

    Shapes carry a leading stacked-output axis; gbar/hbar may be None when
    the corresponding carriers are absent.
    """
    sp = st.sp[j]
    zbar = abar * sp
    ubar = sbar = None
    if gbar is not None:
        spp = st.spp[j]
        u = st.u[j]
        if spp is not None:
            zbar = zbar + spp * np.einsum("onmp,nmp->onp", gbar, u)
        ubar = gbar * sp[:, None, :]
    if hbar is not None:
        spp = st.spp[j]
        sppp = st.sppp[j]
        u = st.u[j]
        s = st.s[j]
        hu = np.einsum("onmkp,nkp->onmp", hbar, u)
        zbar = zbar + sppp * np.einsum("onmp,nmp->onp", hu, u)
        zbar = zbar + spp * np.einsum("onmkp,nmkp->onp", hbar, s)
        hs = hbar + hbar.transpose(0, 1, 3, 2, 4)
        ubar = ubar + spp[:, None, :] * np.einsum("onmkp,nkp->onmp", hs, u)
        sbar = hbar * sp[:, None, None, :]
    return zbar, ubar, sbar


def jacobian_blocks(params, st, chunk_elems=8_000_000):
    """Yield per-point Jacobian blocks of all outputs, layer by layer.

    Yields ``(kind, layer, p0, p1, block)`` tuples where ``block`` has shape
    (n_outputs, N, n_block_params); kind is 'w' (weight rows [p0, p1)) or
    'b' (all biases of the layer). Outputs are stacked in the order
    [value, grad_0..grad_{d-1}, lap], restricted to the state's order.
    Blocks are chunked so no intermediate exceeds roughly ``chunk_elems``
    float64 elements.
    """
    order = st.order
    n = st.x.shape[0]
    d = st.x.shape[1]
    zbar, ubar, sbar = _output_seeds(n, d, order)
    n_out = zbar.shape[0]
    for l in range(params.n_layers, 0, -1):
        w = params.weights[l - 1]
        a_prev, g_prev, h_prev = st.a[l - 1], st.g[l - 1], st.h[l - 1]
        n_l, n_prev = w.shape
        rows_per_chunk = max(1, int(chunk_elems // max(1, n_out * n * n_prev)))
        for p0 in range(0, n_l, rows_per_chunk):
            p1 = min(n_l, p0 + rows_per_chunk)
            blk = np.einsum("onp,nq->onpq", zbar[:, :, p0:p1], a_prev)
            if ubar is not None:
                blk += np.einsum("onmp,nmq->onpq", ubar[:, :, :, p0:p1], g_prev)
            if sbar is not None:
                blk += np.einsum("onmkp,nmkq->onpq", sbar[:, :, :, :, p0:p1], h_prev)
            yield "w", l, p0, p1, blk.reshape(n_out, n, -1)
        yield "b", l, 0, n_l, zbar.copy()
        if l > 1:
            abar = zbar @ w
            gbar = ubar @ w if ubar is not None else None
            hbar = sbar @ w if sbar is not None else None
            zbar, ubar, sbar = _pull_through_activation(st, l - 1, abar, gbar, hbar)


def param_jacobians(params, points, order=2):
    """Stacked flat parameter Jacobians J_value (N,P), J_grad (N,d,P), J_lap (N,P)."""
    st = forward(params, points, order=order)
    n = st.x.shape[0]
    d = st.x.shape[1]
    p_total = params.param_count()
    slices = params.flat_slices()
    j_value = np.zeros((n, p_total))
    j_grad = np.zeros((n, d, p_total)) if order >= 1 else None
    j_lap = np.zeros((n, p_total)) if order >= 2 else None
    for kind, l, p0, p1, blk in jacobian_blocks(params, st):
        ws, bs = slices[l - 1]
        n_prev = params.layer_sizes[l - 1]
        if kind == "w":
            dest = slice(ws.start + p0 * n_prev, ws.start + p1 * n_prev)
        else:
            dest = bs
        j_value[:, dest] = blk[0]
        if order >= 1:
            for m in range(d):
                j_grad[:, m, dest] = blk[1 + m]
        if order >= 2:
            j_lap[:, dest] = blk[1 + d]
    return j_value, j_grad, j_lap


def value_backward_layers(params, st):
    """Value-output adjoints z-bar per layer (list indexed 1..L), order-0 state ok."""
    n = st.x.shape[0]
    zbar = np.ones((n, 1))
    out = [None] * (params.n_layers + 1)
    out[params.n_layers] = zbar
    for l in range(params.n_layers, 1, -1):
        abar = zbar @ params.weights[l - 1]
        zbar = abar * st.sp[l - 1]
        out[l - 1] = zbar
    return out


def weighted_residual_gradient(params, st, w_value, w_grad, w_lap):
    """Gradient over flat parameters of sum_n [wv_n N_n + wg_n . grad N_n + wl_n lap N_n].

    This is the reverse pass used in the training hot loop; the per-layer
    weight gradients are reduced over points immediately, so nothing of
    size N x P is ever materialized.
    """
    n, d = st.x.shape
    order = st.order
    zbar = w_value[:, None].copy() if w_value is not None else np.zeros((n, 1))
    ubar = sbar = None
    if order >= 1:
        ubar = np.zeros((n, d, 1))
        if w_grad is not None:
            ubar[:, :, 0] = w_grad
    if order >= 2:
        sbar = np.zeros((n, d, d, 1))
        if w_lap is not None:
            for m in range(d):
                sbar[:, m, m, 0] = w_lap
    slices = params.flat_slices()
    grad_flat = np.zeros(params.param_count())
    for l in range(params.n_layers, 0, -1):
        w = params.weights[l - 1]
        a_prev, g_prev, h_prev = st.a[l - 1], st.g[l - 1], st.h[l - 1]
        wbar = zbar.T @ a_prev
        if ubar is not None:
            wbar += ubar.reshape(n * d, -1).T @ np.ascontiguousarray(g_prev).reshape(n * d, -1)
        if sbar is not None:
            wbar += sbar.reshape(n * d * d, -1).T @ np.ascontiguousarray(h_prev).reshape(n * d * d, -1)
        ws, bs = slices[l - 1]
        grad_flat[ws] = wbar.ravel()
        grad_flat[bs] = zbar.sum(axis=0)
        if l > 1:
            abar = zbar @ w
            gbar = ubar @ w if ubar is not None else None
            hbar = sbar @ w if sbar is not None else None
            zbar, ubar, sbar = _pull_through_activation_single(st, l - 1, abar, gbar, hbar)
    return grad_flat


def _pull_through_activation_single(st, j, abar, gbar, hbar):
    # Same recurrence as _pull_through_activation without the output axis.
    sp = st.sp[j]
    zbar = abar * sp
    ubar = sbar = None
    if gbar is not None:
        spp = st.spp[j]
        u = st.u[j]
        if spp is not None:
            zbar = zbar + spp * np.einsum("nmp,nmp->np", gbar, u)
        ubar = gbar * sp[:, None, :]
    if hbar is not None:
        spp = st.spp[j]
        sppp = st.sppp[j]
        u = st.u[j]
        s = st.s[j]
        hu = np.einsum("nmkp,nkp->nmp", hbar, u)
        zbar = zbar + sppp * np.einsum("nmp,nmp->np", hu, u)
        zbar = zbar + spp * np.einsum("nmkp,nmkp->np", hbar, s)
        hs = hbar + hbar.transpose(0, 2, 1, 3)
        ubar = ubar + spp[:, None, :] * np.einsum("nmkp,nkp->nmp", hs, u)
        sbar = hbar * sp[:, None, None, :]
    return zbar, ubar, sbar


def eval_with_derivatives(params, point, order=2):
    """Evaluate N, its input derivatives, and all parameter Jacobians at one point."""
    x = np.asarray(point, dtype=np.float64).reshape(1, -1)
    st = forward(params, x, order=order)
    j_value, j_grad, j_lap = param_jacobians(params, x, order=order)
    return PointEval(
        value=float(st.value[0]),
        grad=st.grad[0].copy() if order >= 1 else np.zeros(0),
        lap=float(st.lap[0]) if order >= 2 else None,
        jac_value=j_value[0],
        jac_grad=j_grad[0] if order >= 1 else np.zeros((0, 0)),
        jac_lap=j_lap[0] if order >= 2 else None,
    )


def batch_eval(params, points, order=2):
    """Pointwise ``eval_with_derivatives`` over a list of points, order preserved."""
    return [eval_with_derivatives(params, p, order=order) for p in points]
