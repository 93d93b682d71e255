"""Batched numpy building blocks of the density net.

Every layer has a forward function returning (output, cache) and a backward
function taking the upstream gradient and the cache, returning the gradient
with respect to the layer input and a dict of parameter gradients. Batch is
always the leading axis.
"""
import math

import numpy as np
from scipy.special import expit, log_softmax

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def inverse_softplus(y: float) -> float:
    return float(y + np.log(-np.expm1(-y)))


def one_hot(positions: np.ndarray, arity: int) -> np.ndarray:
    out = np.zeros((len(positions), arity), dtype=np.float64)
    out[np.arange(len(positions)), positions] = 1.0
    return out


# LSTM cell, gate order i, f, o, g in the stacked pre-activation


def lstm_forward(x, h, c, Wx, Wh, b):
    hidden = h.shape[1]
    a = x @ Wx + h @ Wh + b
    i = sigmoid(a[:, :hidden])
    f = sigmoid(a[:, hidden:2 * hidden])
    o = sigmoid(a[:, 2 * hidden:3 * hidden])
    g = np.tanh(a[:, 3 * hidden:])
    c_next = f * c + i * g
    tanh_c = np.tanh(c_next)
    h_next = o * tanh_c
    return h_next, c_next, (x, h, c, i, f, o, g, tanh_c)


def lstm_backward(dh_next, dc_next, cache, Wh):
    x, h, c, i, f, o, g, tanh_c = cache
    do = dh_next * tanh_c
    dc = dc_next + dh_next * o * (1.0 - tanh_c ** 2)
    di = dc * g
    dg = dc * i
    df = dc * c
    dc_prev = dc * f
    da = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g ** 2)], axis=1
    )
    grads = {"Wx": x.T @ da, "Wh": h.T @ da, "b": da.sum(axis=0)}
    return da @ Wh.T, dc_prev, grads


# Actuator head: categorical over positions


def actuator_head_forward(z, positions, V, b):
    logp = log_softmax(z @ V + b, axis=1)
    nll = -logp[np.arange(len(positions)), positions]
    return nll, (z, positions, logp)


def actuator_head_backward(dnll, cache, V):
    z, positions, logp = cache
    dlogits = np.exp(logp)
    dlogits[np.arange(len(positions)), positions] -= 1.0
    dlogits *= dnll[:, None]
    return dlogits @ V.T, {"V": z.T @ dlogits, "b": dlogits.sum(axis=0)}


# Sensor head: hidden layer, then Gaussian mean and pre-variance


def sensor_head_forward(z, values, W1, b1, W2, b2, variance_floor):
    u = sigmoid(z @ W1 + b1)
    out = u @ W2 + b2
    mean, pre = out[:, 0], out[:, 1]
    variance = softplus(pre) + variance_floor
    resid = values - mean
    nll = HALF_LOG_2PI + 0.5 * np.log(variance) + resid ** 2 / (2.0 * variance)
    return nll, (z, u, pre, variance, resid)


def sensor_head_backward(dnll, cache, W1, W2):
    z, u, pre, variance, resid = cache
    dmean = -resid / variance
    dvariance = 0.5 / variance - resid ** 2 / (2.0 * variance ** 2)
    dout = np.stack([dmean, dvariance * sigmoid(pre)], axis=1) * dnll[:, None]
    du = dout @ W2.T
    dpre_u = du * u * (1.0 - u)
    grads = {"W1": z.T @ dpre_u, "b1": dpre_u.sum(axis=0), "W2": u.T @ dout, "b2": dout.sum(axis=0)}
    return dpre_u @ W1.T, grads


# Bilinear mixer: folds the observed channel value into the context


def mixer_forward(z, e, W, V1, V2, b):
    a = np.einsum("bq,bp,qpk->bk", e, z, W) + z @ V1 + e @ V2 + b
    z_next = sigmoid(a)
    return z_next, (z, e, z_next)


def mixer_backward(dz_next, cache, W, V1):
    z, e, z_next = cache
    da = dz_next * z_next * (1.0 - z_next)
    grads = {
        "W": np.einsum("bq,bp,bk->qpk", e, z, da),
        "V1": z.T @ da,
        "V2": e.T @ da,
        "b": da.sum(axis=0),
    }
    dz = np.einsum("bq,qpk,bk->bp", e, W, da) + da @ V1.T
    return dz, grads
