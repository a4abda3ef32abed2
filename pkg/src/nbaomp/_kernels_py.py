"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` must agree with them to
floating-point accuracy.
"""
import numpy as np

# Cells per chunk in gain_cells; bounds the (N, chunk) temporary to a few MB.
_CHUNK = 4096


def fresnel_matrix(offsets, phi, zeta, wavenumber):
    """Unit-modulus Fresnel steering matrix.

    Entry ``(i, q)`` is ``exp(1j * k * (x_i * phi_q - x_i**2 * zeta_q))`` with
    ``x_i`` the element offset from the reference antenna.
    """
    x = np.asarray(offsets, dtype=np.float64)
    phase = wavenumber * (np.outer(x, phi) - np.outer(x * x, zeta))
    return np.exp(1j * phase)


def gain_cells(u, offsets, phi, zeta, wavenumber):
    """Normalized array gain ``|s_c^H u|^2 / N^2`` for every candidate cell.

    ``s_c`` is the Fresnel steering vector toward cell ``(phi[c], zeta[c])``.
    """
    u = np.asarray(u, dtype=np.complex128)
    x = np.asarray(offsets, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    zeta = np.asarray(zeta, dtype=np.float64)
    n = u.shape[0]
    out = np.empty(phi.shape[0])
    for start in range(0, phi.shape[0], _CHUNK):
        sl = slice(start, start + _CHUNK)
        phase = wavenumber * (np.outer(x, phi[sl]) - np.outer(x * x, zeta[sl]))
        acc = np.exp(-1j * phase).T @ u
        out[sl] = (acc.real ** 2 + acc.imag ** 2) / n ** 2
    return out
