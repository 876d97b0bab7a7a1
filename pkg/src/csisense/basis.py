"""Low-dimensional subspace bases from reference-user CSI.

The flat-fading basis is the leading left singular vectors of the stacked RU
channels (or their high-resolution codewords).  For multi-carrier channels
the same construction is applied after a truncated-IDFT transform to the
antenna-delay domain, plus a per-carrier basis used by the precoder.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np


@dataclass(frozen=True)
class BasisMatrix:
    """Orthonormal basis D (M x L) with provenance tag."""

    d: np.ndarray
    source: str = "ru_csi"

    @property
    def m(self) -> int:
        return self.d.shape[0]

    @property
    def l(self) -> int:
        return self.d.shape[1]

    def project(self, h: np.ndarray) -> np.ndarray:
        return self.d @ (self.d.conj().T @ h)


@dataclass(frozen=True)
class DelayBasis:
    """Delay-domain basis D_tilde plus per-carrier bases and the IDFT factor.

    ``f`` holds the first n_dl columns of the size-n_C unitary IDFT matrix;
    ``per_carrier[k]`` is the orthonormal basis of the k-th subcarrier's RU
    channel matrix, used for per-carrier precoding.
    """

    d_tilde: np.ndarray
    f: np.ndarray
    per_carrier: tuple[np.ndarray, ...]

    @property
    def m(self) -> int:
        return self.d_tilde.shape[0]

    @property
    def l_tilde(self) -> int:
        return self.d_tilde.shape[1]

    @property
    def n_carriers(self) -> int:
        return self.f.shape[0]

    @property
    def n_delay(self) -> int:
        return self.f.shape[1]


def _fix_phase(u: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate each column so its first significant entry is real-positive."""
    u = u.copy()
    for j in range(u.shape[1]):
        col = u[:, j]
        nz = np.flatnonzero(np.abs(col) > tol * max(np.abs(col).max(), 1e-300))
        if nz.size:
            u[:, j] = col * np.exp(-1j * np.angle(col[nz[0]]))
    return u


def leading_left_singular_vectors(a: np.ndarray, k: int) -> np.ndarray:
    """First k left singular vectors, deterministic phase convention."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError("expected a matrix")
    if k > min(a.shape):
        raise ValueError(f"requested {k} singular vectors from a {a.shape} matrix")
    u, _, _ = np.linalg.svd(a, full_matrices=False)
    return _fix_phase(u[:, :k])


def build_basis(ru_columns: np.ndarray, l: int, source: str = "ru_csi") -> BasisMatrix:
    """Basis from RU channel columns: the L leading left singular vectors."""
    ru_columns = np.asarray(ru_columns, dtype=complex)
    if ru_columns.ndim != 2 or ru_columns.shape[1] == 0:
        raise ValueError("ru_columns must be a nonempty M x n_R matrix")
    if not np.any(ru_columns):
        raise ValueError("ru_columns is all-zero")
    if l > min(ru_columns.shape):
        raise ValueError(f"L={l} exceeds min(M, n_R)={min(ru_columns.shape)}")
    return BasisMatrix(d=leading_left_singular_vectors(ru_columns, l), source=source)


def idft_matrix(n_carriers: int, n_delay: int) -> np.ndarray:
    """First n_delay columns of the size-n_C unitary IDFT matrix."""
    if not 1 <= n_delay <= n_carriers:
        raise ValueError("n_delay must be in [1, n_carriers]")
    k = np.arange(n_carriers)[:, None]
    n = np.arange(n_delay)[None, :]
    return np.exp(2j * np.pi * k * n / n_carriers) / np.sqrt(n_carriers)


def delay_transform(h: np.ndarray, n_delay: int) -> np.ndarray:
    """Antenna-delay-domain channel H @ F (M x n_delay)."""
    h = np.asarray(h, dtype=complex)
    return h @ idft_matrix(h.shape[1], n_delay)


def build_delay_basis(ru_channels, n_delay: int, l_tilde: int) -> DelayBasis:
    """Delay-domain basis from the RU channels of a multi-carrier scenario.

    The delay-transformed RU channels are stacked horizontally and D_tilde
    holds the L_tilde leading left singular vectors; per-carrier bases come
    from the per-subcarrier RU channel matrices.
    """
    ru_channels = [np.asarray(h, dtype=complex) for h in ru_channels]
    if not ru_channels:
        raise ValueError("need at least one RU channel")
    m, n_c = ru_channels[0].shape
    if any(h.shape != (m, n_c) for h in ru_channels):
        raise ValueError("RU channels must share the same shape")
    if l_tilde > m:
        raise ValueError("l_tilde exceeds the number of antennas")
    stacked = np.hstack([delay_transform(h, n_delay) for h in ru_channels])
    d_tilde = leading_left_singular_vectors(stacked, l_tilde)
    per_carrier = []
    for k in range(n_c):
        hk = np.stack([h[:, k] for h in ru_channels], axis=1)  # M x n_R
        per_carrier.append(leading_left_singular_vectors(hk, l_tilde))
    return DelayBasis(d_tilde=d_tilde, f=idft_matrix(n_c, n_delay),
                      per_carrier=tuple(per_carrier))


def reconstruct_csi(g: np.ndarray, basis: DelayBasis) -> np.ndarray:
    """Frequency-domain CSI D_tilde @ G @ F^H from delay-domain coefficients."""
    g = np.asarray(g, dtype=complex)
    if g.shape != (basis.l_tilde, basis.n_delay):
        raise ValueError("coefficient matrix shape does not match the basis")
    return basis.d_tilde @ g @ basis.f.conj().T
