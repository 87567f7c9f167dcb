"""Minimal feed-forward networks: forward, analytic backprop, operator norms,
single-step gradient attacks, and seeded SGD training.

Everything is plain numpy and deterministic given a seed.  The subgradient
convention at kinks (ReLU, absolute value) is sign(0) = +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimMismatchError, DivergenceError, UnknownActivationError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")
HEADS = ("logsoftmax", "absdev")


def _sgn(x):
    """sign with sgn(0) = +1."""
    return np.where(np.asarray(x) < 0, -1.0, 1.0)


def _act(kind, a):
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "tanh":
        return np.tanh(a)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-a))
    if kind == "identity":
        return a
    raise UnknownActivationError(kind)


def _act_deriv(kind, a):
    if kind == "relu":
        return np.where(a < 0, 0.0, 1.0)  # kink convention: relu'(0) = 1
    if kind == "tanh":
        return 1.0 - np.tanh(a) ** 2
    if kind == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-a))
        return s * (1.0 - s)
    if kind == "identity":
        return np.ones_like(a)
    raise UnknownActivationError(kind)


@dataclass(frozen=True)
class Layer:
    W: np.ndarray
    b: np.ndarray
    act: str = "identity"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise DimMismatchError("layer weight/bias shapes inconsistent")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("weights must be finite")
        if self.act not in ACTIVATIONS:
            raise UnknownActivationError(self.act)


@dataclass(frozen=True)
class Mlp:
    layers: tuple
    head: str = "logsoftmax"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for prev, nxt in zip(self.layers[:-1], self.layers[1:]):
            if prev.W.shape[0] != nxt.W.shape[1]:
                raise DimMismatchError("consecutive layer dimensions incompatible")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")

    @property
    def in_dim(self):
        return self.layers[0].W.shape[1]

    @property
    def out_dim(self):
        return self.layers[-1].W.shape[0]


def init_mlp(dims, act="tanh", head="logsoftmax", seed=0, scale=None):
    """Seeded Gaussian init; ``dims`` = [in, hidden..., out]; last layer linear."""
    rng = np.random.default_rng(seed)
    layers = []
    for k, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        s = scale if scale is not None else 1.0 / math.sqrt(d_in)
        W = rng.normal(0.0, s, size=(d_out, d_in))
        b = np.zeros(d_out)
        layers.append(Layer(W, b, act if k < len(dims) - 2 else "identity"))
    return Mlp(tuple(layers), head=head)


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Network output before the loss head.  Accepts (n,) or batched (B, n)."""
    h = np.asarray(x, dtype=float)
    if h.shape[-1] != net.in_dim:
        raise DimMismatchError(f"input dim {h.shape[-1]} != {net.in_dim}")
    for layer in net.layers:
        h = _act(layer.act, h @ layer.W.T + layer.b)
    return h


def _log_softmax(o):
    m = np.max(o, axis=-1, keepdims=True)
    z = o - m
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def head_loss(net: Mlp, o: np.ndarray, y) -> np.ndarray:
    """Loss from the network output: <y, -log softmax(o)> or |y - o|."""
    if net.head == "logsoftmax":
        return -np.sum(np.asarray(y) * _log_softmax(o), axis=-1)
    return np.abs(np.asarray(y) - o[..., 0])


def loss_value(net: Mlp, x, y) -> np.ndarray:
    return head_loss(net, forward(net, x), y)


def _backward(net: Mlp, x, y, need_params=False):
    """Forward + backward pass; returns (loss, grad_x[, grads_W, grads_b]).

    Batched: x may be (B, n); losses and gradients then carry the batch axis,
    and parameter gradients are summed over the batch.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.in_dim:
        raise DimMismatchError(f"input dim {x.shape[-1]} != {net.in_dim}")
    pre, post = [], [x]
    h = x
    for layer in net.layers:
        a = h @ layer.W.T + layer.b
        h = _act(layer.act, a)
        pre.append(a)
        post.append(h)
    o = h
    if net.head == "logsoftmax":
        y = np.asarray(y, dtype=float)
        logp = _log_softmax(o)
        loss = -np.sum(y * logp, axis=-1)
        # d/do <y, -log softmax(o)> = softmax(o) - y  (y on the simplex)
        g = np.exp(logp) * np.sum(y, axis=-1, keepdims=True) - y
    else:
        u = np.asarray(y, dtype=float) - o[..., 0]
        loss = np.abs(u)
        g = np.zeros_like(o)
        g[..., 0] = -_sgn(u)
    gW = [None] * len(net.layers)
    gb = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        g = g * _act_deriv(layer.act, pre[k])
        if need_params:
            hin = post[k]
            if g.ndim == 1:
                gW[k] = np.outer(g, hin)
                gb[k] = g.copy()
            else:
                gW[k] = g.T @ hin
                gb[k] = g.sum(axis=0)
        g = g @ layer.W
    if need_params:
        return loss, g, gW, gb
    return loss, g


def loss_and_grad_x(net: Mlp, z):
    """Loss and input gradient at a data point z = (x, y)."""
    x, y = z
    loss, g = _backward(net, x, y)
    return float(loss) if np.ndim(loss) == 0 else loss, g


def opnorm(W: np.ndarray, r, maxiter: int = 2000) -> float:
    """Induced operator norm of W for r in {1, 2, inf}.

    r=1 is the max absolute column sum, r=inf the max absolute row sum, r=2 is
    estimated by power iteration on the Gram matrix (early stop once the
    Rayleigh estimate moves less than 1e-13 relative; the cap covers matrices
    with near-degenerate top singular values).
    """
    W = np.asarray(W, dtype=float)
    r = float(r)
    if W.size == 0:
        return 0.0
    if r == 1.0:
        return float(np.max(np.sum(np.abs(W), axis=0)))
    if math.isinf(r):
        return float(np.max(np.sum(np.abs(W), axis=1)))
    if r != 2.0:
        raise ValueError("r must be one of 1, 2, inf")
    n = W.shape[1]
    v = np.ones(n) + 1e-3 * np.arange(n)  # deterministic, generic start
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(maxiter):
        w = W @ v
        v_new = W.T @ w
        nv = np.linalg.norm(v_new)
        if nv == 0.0:
            return 0.0
        v_new /= nv
        sigma_new = np.linalg.norm(W @ v_new)
        if abs(sigma_new - sigma) <= 1e-13 * max(1.0, sigma_new):
            return float(sigma_new)
        sigma, v = sigma_new, v_new
    return float(sigma)


def spectral_norm_gram(W: np.ndarray) -> float:
    """Exact top singular value via the Gram eigen-solve (small matrices)."""
    W = np.asarray(W, dtype=float)
    G = W.T @ W if W.shape[0] >= W.shape[1] else W @ W.T
    return float(math.sqrt(max(np.max(np.linalg.eigvalsh(G)), 0.0)))


def dual_exponent(r) -> float:
    """Conjugate exponent: 1 <-> inf, 2 <-> 2."""
    r = float(r)
    if r == 1.0:
        return math.inf
    if math.isinf(r):
        return 1.0
    return r / (r - 1.0)


def vector_norm(x, r) -> float:
    r = float(r)
    x = np.asarray(x, dtype=float)
    if math.isinf(r):
        return float(np.max(np.abs(x))) if x.size else 0.0
    return float(np.sum(np.abs(x) ** r) ** (1.0 / r))


def fgsm_perturb(net: Mlp, z, eps: float, r) -> tuple:
    """One-step gradient attack on the features, clipped to [0, 1].

    The step direction depends on the attack norm: r=1 moves only the largest
    gradient coordinate, r=2 follows the normalized gradient, r=inf follows
    the gradient signs.  A zero gradient leaves the point unchanged.
    """
    x, y = z
    x = np.asarray(x, dtype=float)
    if eps == 0.0:
        return x.copy(), y
    _, g = _backward(net, x, y)
    r = float(r)
    if not np.any(g):
        return x.copy(), y
    if r == 1.0:
        j = int(np.argmax(np.abs(g)))
        step = np.zeros_like(g)
        step[j] = _sgn(g[j])
    elif r == 2.0:
        step = g / np.linalg.norm(g)
    elif math.isinf(r):
        step = _sgn(g)
    else:
        raise ValueError("r must be one of 1, 2, inf")
    return np.clip(x + eps * step, 0.0, 1.0), y


@dataclass
class TrainConfig:
    lr: float = 0.1
    epochs: int = 50
    batch_size: int = 32
    eps: float = 0.0
    r: float = math.inf
    adversarial: bool = False
    seed: int = 0


TRACE_COLUMNS = ("epoch", "train_loss", "test_loss", "train_acc", "test_acc",
                 "cert_lip", "cert_grad_dual", "cert_advscore")


def _accuracy(net: Mlp, X, Y):
    if net.head != "logsoftmax":
        return math.nan
    o = forward(net, X)
    return float(np.mean(np.argmax(o, axis=-1) == np.argmax(Y, axis=-1)))


def _fgsm_batch(net: Mlp, X, Y, eps, r):
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        out[i], _ = fgsm_perturb(net, (X[i], Y[i]), eps, r)
    return out


def train(net: Mlp, train_data, test_data, config: TrainConfig, cert_fn=None):
    """Plain SGD on clean or FGSM-perturbed batches.

    Returns (trained_net, trace) where trace is a list of per-epoch dicts with
    the TRACE_COLUMNS keys.  ``cert_fn(net) -> (lip, grad_dual, advscore)`` is
    evaluated once per epoch when given; otherwise those columns are NaN.
    """
    X, Y = train_data
    Xt, Yt = test_data
    rng = np.random.default_rng(config.seed)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = X[idx], Y[idx]
            if config.adversarial and config.eps > 0.0:
                xb = _fgsm_batch(net, xb, yb, config.eps, config.r)
            loss, _, gW, gb = _backward(net, xb, yb, need_params=True)
            if not np.all(np.isfinite(loss)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            scale = config.lr / xb.shape[0]
            layers = [replace(l, W=l.W - scale * gw, b=l.b - scale * gbv)
                      for l, gw, gbv in zip(net.layers, gW, gb)]
            net = Mlp(tuple(layers), head=net.head)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(loss_value(net, X, Y))),
            "test_loss": float(np.mean(loss_value(net, Xt, Yt))),
            "train_acc": _accuracy(net, X, Y),
            "test_acc": _accuracy(net, Xt, Yt),
        }
        if cert_fn is not None:
            row["cert_lip"], row["cert_grad_dual"], row["cert_advscore"] = cert_fn(net)
        else:
            row["cert_lip"] = row["cert_grad_dual"] = row["cert_advscore"] = math.nan
        trace.append(row)
    return net, trace


def save_weights(net: Mlp, path) -> None:
    """Flat CSV with layer-tagged rows: layer,kind,row,values..."""
    lines = [f"head,{net.head}"]
    for k, layer in enumerate(net.layers):
        lines.append(f"act,{k},{layer.act}")
        for i, row in enumerate(layer.W):
            vals = ",".join(repr(float(x)) for x in row)
            lines.append(f"W,{k},{i},{vals}")
        vals = ",".join(repr(float(x)) for x in layer.b)
        lines.append(f"b,{k},{vals}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path) -> Mlp:
    head = "logsoftmax"
    acts, rows, biases = {}, {}, {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            tag = parts[0]
            if tag == "head":
                head = parts[1]
            elif tag == "act":
                acts[int(parts[1])] = parts[2]
            elif tag == "W":
                k, i = int(parts[1]), int(parts[2])
                rows.setdefault(k, {})[i] = [float(x) for x in parts[3:]]
            elif tag == "b":
                biases[int(parts[1])] = [float(x) for x in parts[2:]]
    layers = []
    for k in sorted(rows):
        W = np.array([rows[k][i] for i in sorted(rows[k])])
        layers.append(Layer(W, np.array(biases[k]), acts.get(k, "identity")))
    return Mlp(tuple(layers), head=head)
