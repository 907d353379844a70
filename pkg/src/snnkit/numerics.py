"""Minimal dense-tensor arithmetic: matmul, 2-D convolution, average pooling.

All operations are pure functions over numpy arrays in row-major layout,
default dtype float32, preserving the dtype of their inputs so verification
code can run the same paths in float64. Convolution is implemented via
im2col; the backward helpers for convolution and pooling live here as well
because both the ANN trainer and the spiking BPTT reuse them.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericalError

DTYPE = np.float32


def make_rng(seed) -> np.random.Generator:
    """Deterministic seedable generator (PCG64) owned by the caller."""
    return np.random.default_rng(seed)


def require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} produced non-finite values")
    return arr


def matmul(a, b) -> np.ndarray:
    """Standard matrix product of two 2-D arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return require_finite("matmul", a @ b)


def conv_output_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    """Output size of a convolution along one axis; must come out integral."""
    span = extent + 2 * padding - kernel
    if span < 0 or span % stride != 0:
        raise ConfigurationError(
            f"conv output extent for size {extent} (kernel {kernel}, stride {stride}, "
            f"padding {padding}) is not a positive integer"
        )
    return span // stride + 1


def _as_batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected a (C,H,W) or (B,C,H,W) array, got shape {x.shape}")


def im2col(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Unfold (B,C,H,W) into patch columns of shape (B, C*k*k, Ho*Wo)."""
    b, c, h, w = x.shape
    ho = conv_output_extent(h, kernel, stride, padding)
    wo = conv_output_extent(w, kernel, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((b, c, kernel, kernel, ho, wo), dtype=x.dtype)
    for ky in range(kernel):
        for kx in range(kernel):
            cols[:, :, ky, kx] = x[:, :, ky : ky + stride * ho : stride, kx : kx + stride * wo : stride]
    return cols.reshape(b, c * kernel * kernel, ho * wo)


def col2im(cols: np.ndarray, in_shape, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Scatter-add patch columns back onto the (B,C,H,W) input grid."""
    b, c, h, w = in_shape
    ho = conv_output_extent(h, kernel, stride, padding)
    wo = conv_output_extent(w, kernel, stride, padding)
    padded = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    cols = cols.reshape(b, c, kernel, kernel, ho, wo)
    for ky in range(kernel):
        for kx in range(kernel):
            padded[:, :, ky : ky + stride * ho : stride, kx : kx + stride * wo : stride] += cols[:, :, ky, kx]
    if padding:
        return padded[:, :, padding:-padding, padding:-padding]
    return padded


def conv_from_cols(weights: np.ndarray, cols: np.ndarray, out_hw) -> np.ndarray:
    """Apply a (Co,Ci,k,k) kernel to pre-unfolded columns."""
    co = weights.shape[0]
    wmat = weights.reshape(co, -1)
    out = wmat @ cols
    return out.reshape(cols.shape[0], co, out_hw[0], out_hw[1])


def conv2d(x, weights, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation with zero padding and no bias term.

    Accepts a single (Ci,H,W) input or a batch (B,Ci,H,W); the kernel is
    (Co,Ci,k,k). Returns the matching (Co,Ho,Wo) or (B,Co,Ho,Wo) map.
    """
    x = np.asarray(x)
    weights = np.asarray(weights)
    if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
        raise DimensionError(f"conv kernel must be (Co,Ci,k,k), got {weights.shape}")
    xb, squeezed = _as_batched(x)
    if xb.shape[1] != weights.shape[1]:
        raise DimensionError(
            f"conv input channels {xb.shape[1]} do not match kernel channels {weights.shape[1]}"
        )
    k = weights.shape[2]
    ho = conv_output_extent(xb.shape[2], k, stride, padding)
    wo = conv_output_extent(xb.shape[3], k, stride, padding)
    out = conv_from_cols(weights, im2col(xb, k, stride, padding), (ho, wo))
    require_finite("conv2d", out)
    return out[0] if squeezed else out


def conv2d_input_grad(dout: np.ndarray, weights: np.ndarray, in_shape, stride: int, padding: int) -> np.ndarray:
    """Gradient of a convolution w.r.t. its input, for batched (B,Co,Ho,Wo) dout."""
    b, co, ho, wo = dout.shape
    k = weights.shape[2]
    wmat = weights.reshape(co, -1)
    dcols = wmat.T @ dout.reshape(b, co, ho * wo)
    return col2im(dcols, in_shape, k, stride, padding)


def conv2d_weight_grad(dout: np.ndarray, x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Gradient of a convolution w.r.t. its kernel, summed over the batch."""
    b, co, ho, wo = dout.shape
    cols = im2col(x, kernel, stride, padding)
    dmat = np.einsum("bol,bil->oi", dout.reshape(b, co, ho * wo), cols)
    return dmat.reshape(co, x.shape[1], kernel, kernel)


def avgpool2d(x, window: int) -> np.ndarray:
    """Mean over non-overlapping window x window blocks of a (…,C,H,W) map."""
    x = np.asarray(x)
    xb, squeezed = _as_batched(x)
    b, c, h, w = xb.shape
    if h % window or w % window:
        raise ConfigurationError(f"pool window {window} does not divide extents {(h, w)}")
    out = xb.reshape(b, c, h // window, window, w // window, window).mean(axis=(3, 5))
    out = out.astype(x.dtype, copy=False)
    require_finite("avgpool2d", out)
    return out[0] if squeezed else out


def avgpool2d_input_grad(dout: np.ndarray, window: int) -> np.ndarray:
    """Spread pooled gradients uniformly back over each window."""
    g = np.repeat(np.repeat(dout, window, axis=-2), window, axis=-1)
    return g / (window * window)
