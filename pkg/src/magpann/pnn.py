"""Positive feedforward network with closed-form input and parameter derivatives.

Hidden layers use Softplus. The output layer is affine with weights and bias
``softplus(theta)``, so the output is non-negative for every parameter value.
All forward routines accept complex inputs (complex-step differentiation).
"""

from __future__ import annotations

import numpy as np


def softplus(z):
    if not np.iscomplexobj(z):
        return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    pos = z.real > 0
    zn = np.where(pos, -z, z)
    return np.where(pos, z, 0.0) + np.log1p(np.exp(zn))


def sigmoid(z):
    if not np.iscomplexobj(z):
        e = np.exp(-np.abs(z))
        return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    pos = z.real > 0
    e = np.exp(np.where(pos, -z, z))
    return np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))


def inverse_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


class PNN:
    """Softplus network ``sizes[0] -> ... -> 1`` with a non-negative output layer.

    Parameters are stored layer by layer as ``(W, b)`` with ``W`` of shape
    (fan_out, fan_in). The last pair holds the raw values ``theta`` whose
    softplus gives the effective output weights and bias.
    """

    def __init__(self, sizes, layers=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or sizes[-1] != 1:
            raise ValueError("PNN sizes must end with a single output")
        self.sizes = sizes
        if layers is None:
            layers = [(np.zeros((o, i)), np.zeros(o)) for i, o in zip(sizes[:-1], sizes[1:])]
        self.layers = [(np.array(W, dtype=float), np.array(b, dtype=float)) for W, b in layers]
        for (W, b), i, o in zip(self.layers, sizes[:-1], sizes[1:]):
            if W.shape != (o, i) or b.shape != (o,):
                raise ValueError("layer shapes do not match the declared sizes")

    # -- parameter vector ----------------------------------------------------

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in self.layers)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def set_flat(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        k = 0
        new = []
        for W, b in self.layers:
            w = theta[k : k + W.size].reshape(W.shape)
            k += W.size
            bb = theta[k : k + b.size].copy()
            k += b.size
            new.append((w.copy(), bb))
        self.layers = new

    def copy(self) -> "PNN":
        return PNN(self.sizes, [(W.copy(), b.copy()) for W, b in self.layers])

    @classmethod
    def initialize(cls, sizes, rng) -> "PNN":
        """Glorot-uniform hidden layers, small positive effective output weights."""
        net = cls(sizes)
        layers = []
        for i, o in zip(net.sizes[:-2], net.sizes[1:-1]):
            lim = np.sqrt(6.0 / (i + o))
            layers.append((rng.uniform(-lim, lim, size=(o, i)), np.zeros(o)))
        n_last = net.sizes[-2]
        w_out = rng.uniform(0.1, 1.0, size=(1, n_last)) / n_last
        layers.append((inverse_softplus(w_out), inverse_softplus(np.array([1e-3]))))
        net.layers = layers
        return net

    def output_layer(self):
        W, b = self.layers[-1]
        return softplus(W[0]), softplus(b[0])

    # -- evaluation -----------------------------------------------------------

    def forward(self, x):
        """Hidden pre-activations, activations and their sigmoids (reusable by the derivative passes)."""
        zs, acts, sig = [], [x], []
        a = x
        for W, b in self.layers[:-1]:
            z = a @ W.T + b
            a = softplus(z)
            zs.append(z)
            acts.append(a)
            sig.append(sigmoid(z))
        return zs, acts, sig

    def _hidden(self, x):
        zs, acts, _ = self.forward(x)
        return zs, acts

    def value(self, x):
        """Network output for inputs ``x`` of shape (n, d); returns (n,)."""
        _, acts = self._hidden(x)
        w, b0 = self.output_layer()
        return acts[-1] @ w + b0

    def value_and_grad(self, x, fw=None):
        """Output and its gradient with respect to the inputs (reverse pass)."""
        zs, acts, sig = self.forward(x) if fw is None else fw
        w, b0 = self.output_layer()
        y = acts[-1] @ w + b0
        delta = np.broadcast_to(w, acts[-1].shape)
        for (W, _), s1 in zip(reversed(self.layers[:-1]), reversed(sig)):
            delta = (delta * s1) @ W
        return y, delta

    def hvp(self, x, u, fw=None):
        """Row-wise Hessian-vector products (d2y/dx2)(x_i) . u_i."""
        zs, acts, sig = self.forward(x) if fw is None else fw
        hidden = self.layers[:-1]
        dz = []
        t = u
        for (W, _), s1 in zip(hidden, sig):
            tz = t @ W.T
            dz.append(tz)
            t = s1 * tz
        w, _ = self.output_layer()
        delta = np.broadcast_to(w, acts[-1].shape)
        ddelta = np.zeros_like(delta)
        for k in range(len(hidden) - 1, -1, -1):
            W, _ = hidden[k]
            s1 = sig[k]
            s2 = s1 * (1.0 - s1)
            ddelta = (ddelta * s1 + delta * s2 * dz[k]) @ W
            delta = (delta * s1) @ W
        return ddelta

    def directional_param_grad(self, x, u, fw=None):
        """Gradient with respect to the flat parameters of sum_i u_i . grad_x y(x_i).

        Reverse pass over the forward tangent propagation of ``u`` (the
        forward-over-reverse product needed for stress-supervised training).
        """
        zs, acts, sig = self.forward(x) if fw is None else fw
        hidden = self.layers[:-1]
        # forward tangents
        dz, da = [], [u]
        t = u
        for (W, _), s1 in zip(hidden, sig):
            tz = t @ W.T
            t = s1 * tz
            dz.append(tz)
            da.append(t)
        Wl, bl = self.layers[-1]
        grads = [None] * len(self.layers)
        # output layer: T = sum_i w . da_last_i, independent of the bias
        gw = np.sum(da[-1], axis=0) * sigmoid(Wl[0])
        grads[-1] = (gw[None, :], np.zeros_like(bl))
        w = softplus(Wl[0])
        bar_t = np.broadcast_to(w, da[-1].shape)  # adjoint of the tangent activation
        bar_a = np.zeros_like(acts[-1])  # adjoint of the primal activation
        for k in range(len(hidden) - 1, -1, -1):
            W, _ = hidden[k]
            s1 = sig[k]
            s2 = s1 * (1.0 - s1)
            bar_tz = bar_t * s1
            bar_z = bar_t * s2 * dz[k] + bar_a * s1
            gW = bar_tz.T @ da[k] + bar_z.T @ acts[k]
            gb = np.sum(bar_z, axis=0)
            grads[k] = (gW, gb)
            bar_t = bar_tz @ W
            bar_a = bar_z @ W
        return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])

    def value_param_grad(self, x):
        """Gradient of sum_i y(x_i) with respect to the flat parameters."""
        zs, acts = self._hidden(x)
        Wl, bl = self.layers[-1]
        grads = [None] * len(self.layers)
        gw = np.sum(acts[-1], axis=0) * sigmoid(Wl[0])
        grads[-1] = (gw[None, :], np.array([x.shape[0] * sigmoid(bl[0])]))
        bar_a = np.broadcast_to(softplus(Wl[0]), acts[-1].shape)
        for k in range(len(self.layers) - 2, -1, -1):
            W, _ = self.layers[k]
            bar_z = bar_a * sigmoid(zs[k])
            grads[k] = (bar_z.T @ acts[k], np.sum(bar_z, axis=0))
            bar_a = bar_z @ W
        return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])

    def to_dict(self) -> list:
        out = []
        n = len(self.layers)
        for k, (W, b) in enumerate(self.layers):
            last = k == n - 1
            out.append(
                {
                    "W": W.tolist(),
                    "b": b.tolist(),
                    "activation": "linear" if last else "softplus",
                    "nonnegative": last,
                    "parameterization": "softplus" if last else "identity",
                }
            )
        return out

    @classmethod
    def from_dict(cls, layers: list) -> "PNN":
        pairs = [(np.array(L["W"], dtype=float), np.array(L["b"], dtype=float)) for L in layers]
        sizes = [pairs[0][0].shape[1]] + [W.shape[0] for W, _ in pairs]
        return cls(sizes, pairs)
