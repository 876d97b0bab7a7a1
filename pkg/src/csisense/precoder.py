"""Training precoders: random Gaussian and subspace-projected hybrid forms."""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .basis import BasisMatrix, DelayBasis


@dataclass(frozen=True)
class Precoder:
    """W = W2 @ W1 with Gaussian W1 (M x N_p) and projection W2 (M x M)."""

    w: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    sigma_w: float

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def n_ports(self) -> int:
        return self.w.shape[1]

    def effective(self, h: np.ndarray) -> np.ndarray:
        """Effective CSI W^H h seen at the user."""
        return self.w.conj().T @ h


def complex_gaussian(rng, shape, sigma: float) -> np.ndarray:
    """Circular complex Gaussian entries with per-entry variance sigma^2."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (sigma / np.sqrt(2))


def gen_gaussian_precoder(m: int, n_ports: int, sigma_w: float, rng) -> Precoder:
    """Pure random Gaussian precoder (the unprojected baseline scheme)."""
    if n_ports > m:
        raise ValueError("n_ports must be <= number of antennas")
    w1 = complex_gaussian(rng, (m, n_ports), sigma_w)
    return Precoder(w=w1, w1=w1, w2=np.eye(m), sigma_w=sigma_w)


def gen_hybrid_precoder(basis: BasisMatrix, n_ports: int, sigma_w: float, rng) -> Precoder:
    """Hybrid precoder: subspace projection D D^H applied to a Gaussian draw.

    The projection aligns the training energy with the channel subspace while
    the Gaussian factor preserves measurement diversity.
    """
    m = basis.m
    if n_ports > m:
        raise ValueError("n_ports must be <= number of antennas")
    w1 = complex_gaussian(rng, (m, n_ports), sigma_w)
    w2 = basis.d @ basis.d.conj().T
    return Precoder(w=w2 @ w1, w1=w1, w2=w2, sigma_w=sigma_w)


def gen_subcarrier_precoders(delay_basis: DelayBasis, n_ports: int,
                             sigma_w: float, rng) -> list[Precoder]:
    """One hybrid precoder per subcarrier sharing a single Gaussian draw.

    W_t^k = D^(k) D^(k)H @ W_t1 with the per-carrier bases of the delay basis.
    """
    m = delay_basis.m
    if n_ports > m:
        raise ValueError("n_ports must be <= number of antennas")
    w1 = complex_gaussian(rng, (m, n_ports), sigma_w)
    out = []
    for dk in delay_basis.per_carrier:
        w2 = dk @ dk.conj().T
        out.append(Precoder(w=w2 @ w1, w1=w1, w2=w2, sigma_w=sigma_w))
    return out
