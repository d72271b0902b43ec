import numpy as np


def numeric_jacobian(func, x, *, h=1e-6):
    """Central finite-difference Jacobian of func at x"""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(func(x), dtype=float))
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        forward = np.atleast_1d(np.asarray(func(x + step), dtype=float))
        backward = np.atleast_1d(np.asarray(func(x - step), dtype=float))
        jac[:, i] = (forward - backward) / (2 * h)
    return jac


def compare(actual, expected, *, rtol=1e-9, atol=0.0):
    """Assert two arrays agree, relative to the size of ``expected``"""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    assert actual.shape == expected.shape, f'{actual.shape} - {expected.shape}'
    scale = max(np.max(np.abs(expected), initial=0.0), 1.0) if rtol else 1.0
    error = np.max(np.abs(actual - expected), initial=0.0)
    assert error <= rtol * scale + atol, f'max error {error:.3g}\n{actual}\n!=\n{expected}'


def relative_error(actual, expected):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    return np.linalg.norm(actual - expected) / max(np.linalg.norm(expected), 1e-12)
