"""Low- and high-resolution feedback codebooks, PMI selection and CQI quantization.

The low-resolution codebook is the single-panel rank-1 structure: 2D
oversampled DFT beams per polarization combined with a QPSK co-phasing
factor.  The high-resolution surrogate combines several orthogonal DFT beams
with their exact complex projection coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .channel import ArrayGeometry

COPHASING = np.array([1.0, 1.0j, -1.0, -1.0j])


@dataclass(frozen=True)
class Type1Codebook:
    """Unit-norm codeword matrix with deterministic index ordering.

    ``codewords`` is N_p x n_T1; the flat index runs with the horizontal
    beam index m1 fastest, then the vertical beam index m2, then the
    co-phasing index.
    """

    codewords: np.ndarray
    n1: int
    n2: int
    o1: int
    o2: int

    @property
    def n_ports(self) -> int:
        return self.codewords.shape[0]

    @property
    def n_codewords(self) -> int:
        return self.codewords.shape[1]

    def summary(self) -> str:
        """Debug dump: parameters and per-column norms."""
        norms = np.linalg.norm(self.codewords, axis=0)
        lines = [
            f"type1 codebook N1={self.n1} N2={self.n2} O1={self.o1} O2={self.o2}",
            f"ports={self.n_ports} codewords={self.n_codewords} cophasing={len(COPHASING)}",
            "column norms: min=%.12f max=%.12f" % (norms.min(), norms.max()),
        ]
        return "\n".join(lines)


def _dft_beam(n1: int, n2: int, m1: int, m2: int, o1: int, o2: int) -> np.ndarray:
    """Oversampled 2D DFT beam over the N1 x N2 block, horizontal index fastest."""
    v1 = np.exp(2j * np.pi * m1 * np.arange(n1) / (n1 * o1))
    v2 = np.exp(2j * np.pi * m2 * np.arange(n2) / (n2 * o2))
    return np.outer(v2, v1).ravel() / np.sqrt(n1 * n2)


def build_type1_codebook(n1: int, n2: int, o1: int, o2: int) -> Type1Codebook:
    """Rank-1 dual-polarized codebook over N_p = 2*N1*N2 ports.

    Codeword (m1, m2, c) = [v; phi_c v] / sqrt(2) with v the oversampled DFT
    beam and phi_c in {1, j, -1, -j}; n_T1 = N1*O1 * N2*O2 * 4.
    """
    if min(n1, n2, o1, o2) < 1:
        raise ValueError("codebook parameters must be >= 1")
    n_beams1, n_beams2 = n1 * o1, n2 * o2
    n_p = 2 * n1 * n2
    n_cw = n_beams1 * n_beams2 * len(COPHASING)
    cw = np.zeros((n_p, n_cw), dtype=complex)
    j = 0
    for phi in COPHASING:
        for m2 in range(n_beams2):
            for m1 in range(n_beams1):
                v = _dft_beam(n1, n2, m1, m2, o1, o2)
                cw[:, j] = np.concatenate([v, phi * v]) / np.sqrt(2)
                j += 1
    return Type1Codebook(codewords=cw, n1=n1, n2=n2, o1=o1, o2=o2)


def select_pmi(h_eff: np.ndarray, codebook: Type1Codebook) -> tuple[int, float]:
    """PMI = argmax_j |u_j^H h_eff| (lowest index on ties), CQI = |u_pmi^H h_eff|^2."""
    h_eff = np.asarray(h_eff)
    if h_eff.ndim != 1 or h_eff.size == 0:
        raise ValueError("h_eff must be a nonempty vector")
    if h_eff.size != codebook.n_ports:
        raise ValueError("h_eff dimension does not match codebook ports")
    corr = np.abs(codebook.codewords.conj().T @ h_eff)
    pmi = int(np.argmax(corr))  # np.argmax breaks ties to the lowest index
    return pmi, float(corr[pmi] ** 2)


def select_pmi_group(h_effs, codebook: Type1Codebook) -> tuple[int, float]:
    """Group selection: argmax_j of the summed squared correlations over carriers."""
    h_effs = list(h_effs)
    if not h_effs:
        raise ValueError("h_effs must be nonempty")
    stacked = np.stack([np.asarray(h) for h in h_effs], axis=1)  # N_p x n_c
    if stacked.shape[0] != codebook.n_ports:
        raise ValueError("h_eff dimension does not match codebook ports")
    power = np.sum(np.abs(codebook.codewords.conj().T @ stacked) ** 2, axis=1)
    pmi = int(np.argmax(power))
    return pmi, float(power[pmi])


def _orthogonal_beam_dictionary(n1: int, n2: int) -> np.ndarray:
    """Non-oversampled (orthonormal) DFT dictionary for one polarization block."""
    cols = [_dft_beam(n1, n2, m1, m2, 1, 1) for m2 in range(n2) for m1 in range(n1)]
    return np.stack(cols, axis=1)


def build_type2_surrogate(h: np.ndarray, n_beams: int,
                          geometry: ArrayGeometry,
                          quantize: bool = False) -> np.ndarray:
    """High-resolution codeword surrogate: strongest orthogonal DFT beams
    recombined with their complex projection coefficients.

    Beams are selected by total projected power (summed over polarizations
    for dual-polarized arrays) and combined per polarization, then the result
    is normalized.  With ``quantize`` the coefficients are crushed to 3-bit
    amplitude / 8-PSK phase for sensitivity studies.
    """
    n1, n2 = geometry.n_horizontal, geometry.n_vertical
    if not 1 <= n_beams <= n1 * n2:
        raise ValueError("n_beams must be in [1, N1*N2]")
    h = np.asarray(h, dtype=complex)
    if h.shape[0] != geometry.n_ports:
        raise ValueError("h dimension does not match geometry")
    dic = _orthogonal_beam_dictionary(n1, n2)
    block = n1 * n2
    pols = [h[:block], h[block:]] if geometry.dual_polarized else [h]
    coeffs = [dic.conj().T @ p for p in pols]  # per-pol projection coefficients
    power = sum(np.abs(c) ** 2 for c in coeffs)
    top = np.argsort(power)[::-1][:n_beams]
    if quantize:
        coeffs = [_quantize_coeffs(c, top) for c in coeffs]
    out = np.concatenate([dic[:, top] @ c[top] for c in coeffs])
    nrm = np.linalg.norm(out)
    if nrm == 0:
        raise ValueError("input channel has no energy on the selected beams")
    return out / nrm


def _quantize_coeffs(c: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """3-bit amplitude (relative, uniform in [0,1]) and 8-PSK phase."""
    out = np.zeros_like(c)
    sel = c[idx]
    amax = np.max(np.abs(sel))
    if amax == 0:
        return out
    amp = np.round(np.abs(sel) / amax * 7) / 7 * amax
    ph = np.round(np.angle(sel) / (2 * np.pi / 8)) * (2 * np.pi / 8)
    out[idx] = amp * np.exp(1j * ph)
    return out


@dataclass(frozen=True)
class QuantizerSpec:
    """Scalar CQI quantizer.

    ``q_min``/``q_max`` are expressed in the scheme's native domain: linear
    CQI units for scheme="linear", dB for scheme="dB".
    """

    scheme: str
    n_bits: int
    q_min: float
    q_max: float

    def __post_init__(self):
        if self.scheme not in ("linear", "dB"):
            raise ValueError("scheme must be 'linear' or 'dB'")
        if self.n_bits < 1:
            raise ValueError("n_bits must be >= 1")
        if not self.q_min < self.q_max:
            raise ValueError("q_min must be < q_max")

    @classmethod
    def db_from_linear_range(cls, n_bits: int, lo: float, hi: float) -> "QuantizerSpec":
        return cls("dB", n_bits, 10 * np.log10(lo), 10 * np.log10(hi))

    @property
    def n_levels(self) -> int:
        return 2 ** self.n_bits

    def bin_width(self) -> float:
        return (self.q_max - self.q_min) / self.n_levels

    def quantize(self, q: float) -> tuple[int, float]:
        return quantize_cqi(q, self)

    def dequantize(self, index: int) -> float:
        """Map a bin index back to a linear-domain CQI value (bin midpoint)."""
        if not 0 <= index < self.n_levels:
            raise ValueError("index out of range")
        mid = self.q_min + (index + 0.5) * self.bin_width()
        return 10 ** (mid / 10) if self.scheme == "dB" else mid


# Empirical default range of raw CQI values for unit-norm channels.
DEFAULT_CQI_RANGE = (3.35, 28.89)


def default_quantizer(scheme: str = "dB", n_bits: int = 4) -> QuantizerSpec:
    lo, hi = DEFAULT_CQI_RANGE
    if scheme == "dB":
        return QuantizerSpec.db_from_linear_range(n_bits, lo, hi)
    return QuantizerSpec("linear", n_bits, lo, hi)


def quantize_cqi(q: float, spec: QuantizerSpec) -> tuple[int, float]:
    """Uniform quantization in the spec's native domain.

    Returns (bin index, dequantized linear-domain value).  Out-of-range
    inputs clamp to the end bins; q = 0 under the dB scheme clamps to the
    bottom bin.
    """
    if q < 0:
        raise ValueError("CQI must be nonnegative")
    if spec.scheme == "dB":
        if q == 0:
            return 0, spec.dequantize(0)  # clamp to the bottom bin
        x = 10 * np.log10(q)
    else:
        x = q
    idx = int(np.floor((x - spec.q_min) / spec.bin_width()))
    idx = min(max(idx, 0), spec.n_levels - 1)
    return idx, spec.dequantize(idx)
