"""Kernel forward/backward dei layer, float64, solo numpy.

Le convoluzioni usano finestre scorrevoli (im2col senza copia) e tensordot;
il backward riaccumula le finestre con un ciclo sulle posizioni del kernel.
"""
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp

from utils.exceptions import ShapeMismatch


# --- Dense ---

def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x @ weight + bias


def dense_backward(x: np.ndarray, weight: np.ndarray, dout: np.ndarray):
    """Ritorna (dx, dweight, dbias)"""
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0)


# --- Conv2D ---

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _windows(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # (n, c, oh, ow, k, k)
    return sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1,
                   padding: int = 0) -> np.ndarray:
    if x.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"conv2d: ingresso {x.shape} incompatibile con kernel {weight.shape}")
    cols = _windows(x, weight.shape[2], stride, padding)
    out = np.tensordot(cols, weight, axes=([1, 4, 5], [1, 2, 3]))  # (n, oh, ow, o)
    return out.transpose(0, 3, 1, 2) + bias[None, :, None, None]


def conv2d_backward(x: np.ndarray, weight: np.ndarray, dout: np.ndarray, stride: int = 1,
                    padding: int = 0):
    """Ritorna (dx, dweight, dbias)"""
    kernel = weight.shape[2]
    cols = _windows(x, kernel, stride, padding)
    dweight = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))
    dbias = dout.sum(axis=(0, 2, 3))

    n, c, h, w = x.shape
    oh, ow = dout.shape[2], dout.shape[3]
    dcols = np.tensordot(dout, weight, axes=([1], [0]))  # (n, oh, ow, c, k, k)
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return dxp, dweight, dbias


# --- BatchNorm ---

def _bn_axes(x: np.ndarray) -> Tuple[int, ...]:
    return (0,) if x.ndim == 2 else (0, 2, 3)


def _bn_shape(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v.reshape((1, -1) + (1,) * (x.ndim - 2))


def batchnorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, running_mean: np.ndarray,
                      running_var: np.ndarray, training: bool, momentum: float = 0.1, eps: float = 1e-5,
                      update_stats: bool = True):
    """Ritorna (out, cache). In training aggiorna le statistiche correnti sul posto."""
    axes = _bn_axes(x)
    if training:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if update_stats:
            count = x.size // x.shape[1]
            unbiased = var * count / max(count - 1, 1)
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - _bn_shape(x, mean)) * _bn_shape(x, inv_std)
    out = _bn_shape(x, gamma) * xhat + _bn_shape(x, beta)
    return out, (xhat, inv_std, training)


def batchnorm_backward(dout: np.ndarray, gamma: np.ndarray, cache):
    """Ritorna (dx, dgamma, dbeta)"""
    xhat, inv_std, training = cache
    axes = _bn_axes(dout)
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * _bn_shape(dout, gamma)
    if not training:
        return dxhat * _bn_shape(dout, inv_std), dgamma, dbeta
    count = dout.size // dout.shape[1]
    mean_dxhat = _bn_shape(dout, dxhat.sum(axis=axes) / count)
    mean_dxhat_xhat = _bn_shape(dout, (dxhat * xhat).sum(axis=axes) / count)
    dx = _bn_shape(dout, inv_std) * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dgamma, dbeta


# --- ReLU ---

def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * (x > 0.0)


# --- MaxPool (finestre non sovrapposte, stride = pool) ---

def _pool_view(x: np.ndarray, pool: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh, ow = h // pool, w // pool
    win = x[:, :, :oh * pool, :ow * pool].reshape(n, c, oh, pool, ow, pool)
    return win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, pool * pool)


def maxpool_forward(x: np.ndarray, pool: int = 2):
    """Ritorna (out, argmax); a parità vince il primo indice in ordine di scansione"""
    win = _pool_view(x, pool)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool_backward(x_shape: Tuple[int, ...], idx: np.ndarray, dout: np.ndarray, pool: int = 2) -> np.ndarray:
    n, c, h, w = x_shape
    oh, ow = idx.shape[2], idx.shape[3]
    dwin = np.zeros((n, c, oh, ow, pool * pool))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, c, oh, ow, pool, pool).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros(x_shape)
    dx[:, :, :oh * pool, :ow * pool] = dwin.reshape(n, c, oh * pool, ow * pool)
    return dx


# --- ResidualAdd ---

def residual_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatch(f"residual_add: forme diverse {a.shape} e {b.shape}")
    return a + b


# --- Softmax + entropia incrociata ---

def log_softmax(logits: np.ndarray) -> np.ndarray:
    return logits - logsumexp(logits, axis=1, keepdims=True)


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy_grad(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d CE / d logits riga per riga: a^y - target"""
    return softmax(logits) - targets
