"""Real FFT pair and the adjoints used for backpropagation.

Convention: unnormalized forward transform, ``1/n`` on the inverse (the
numpy ``"backward"`` norm).
"""

import numpy as np

from .errors import LengthMismatch


def bin_count(n: int) -> int:
    return n // 2 + 1


def rfft(signal: np.ndarray, axis: int = -1) -> np.ndarray:
    """Real FFT, ``floor(n/2)+1`` complex bins along ``axis``."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape[axis] < 1:
        raise LengthMismatch("rfft needs at least one sample")
    return np.fft.rfft(signal, axis=axis)


def irfft(spectrum: np.ndarray, n: int, axis: int = -1) -> np.ndarray:
    """Inverse real FFT to ``n`` samples.

    The imaginary parts of the DC bin (and of the Nyquist bin for even ``n``)
    do not contribute.
    """
    spectrum = np.asarray(spectrum)
    if n < 1:
        raise LengthMismatch(f"output length must be >= 1, got {n}")
    if spectrum.shape[axis] != bin_count(n):
        raise LengthMismatch(
            f"spectrum has {spectrum.shape[axis]} bins, length {n} needs {bin_count(n)}"
        )
    return np.fft.irfft(spectrum, n=n, axis=axis)


def hermitian_weights(n: int) -> np.ndarray:
    """Multiplicity of each half-spectrum bin in a length-``n`` real signal."""
    weights = np.full(bin_count(n), 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return weights


def _along(weights: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = weights.shape[0]
    return weights.reshape(shape)


def irfft_adjoint(grad_signal: np.ndarray, axis: int = -1) -> np.ndarray:
    """Adjoint of ``irfft`` with respect to the (real, imag) spectrum.

    Returns a complex array whose real/imaginary parts are the gradients of
    the real/imaginary spectrum parts.
    """
    grad_signal = np.asarray(grad_signal, dtype=np.float64)
    n = grad_signal.shape[axis]
    weights = hermitian_weights(n) / n
    spectrum = np.fft.rfft(grad_signal, axis=axis)
    return spectrum * _along(weights, spectrum.ndim, axis)


def rfft_adjoint(grad_spectrum: np.ndarray, n: int, axis: int = -1) -> np.ndarray:
    """Adjoint of ``rfft``: maps (real, imag) bin gradients to sample gradients."""
    grad_spectrum = np.asarray(grad_spectrum)
    if grad_spectrum.shape[axis] != bin_count(n):
        raise LengthMismatch(
            f"gradient has {grad_spectrum.shape[axis]} bins, length {n} needs {bin_count(n)}"
        )
    # sum_k z_k exp(+2 pi i k t / n) over the half spectrum only
    padded = np.fft.ifft(grad_spectrum, n=n, axis=axis) * n
    return padded.real
