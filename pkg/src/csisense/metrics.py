"""Evaluation metrics for reconstructed CSI."""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np


@dataclass(frozen=True)
class EvalResult:
    correlation: float
    nmse_r: float
    per_carrier_correlation: tuple[float, ...] | None = None
    per_carrier_nmse_r: tuple[float, ...] | None = None

    @property
    def nmse_r_db(self) -> float:
        return 20 * np.log10(self.nmse_r) if self.nmse_r > 0 else -np.inf


def correlation(h: np.ndarray, h_star: np.ndarray) -> float:
    """|<h, h*>| / (||h|| ||h*||); column-averaged for matrices."""
    h = np.asarray(h)
    h_star = np.asarray(h_star)
    if h.ndim == 2:
        return float(np.mean([correlation(h[:, k], h_star[:, k])
                              for k in range(h.shape[1])]))
    nh, ns = np.linalg.norm(h), np.linalg.norm(h_star)
    if nh == 0 or ns == 0:
        raise ValueError("correlation is undefined for zero vectors")
    return float(np.abs(np.vdot(h, h_star)) / (nh * ns))


def nmse_r(h: np.ndarray, h_star: np.ndarray) -> float:
    """min over psi of ||h - e^{j psi} h*|| / ||h||.

    The optimal rotation is psi = -arg(h^H h*), giving the closed form
    sqrt(||h||^2 + ||h*||^2 - 2|h^H h*|) / ||h||.  Matrices are handled with
    one rotation per column and aggregated in the Frobenius norm.
    """
    h = np.asarray(h)
    h_star = np.asarray(h_star)
    if h.ndim == 2:
        num_sq = 0.0
        for k in range(h.shape[1]):
            num_sq += _rotated_err_sq(h[:, k], h_star[:, k])
        nh = np.linalg.norm(h)
        if nh == 0:
            raise ValueError("reference channel must be nonzero")
        return float(np.sqrt(max(num_sq, 0.0)) / nh)
    nh = np.linalg.norm(h)
    if nh == 0:
        raise ValueError("reference channel must be nonzero")
    return float(np.sqrt(max(_rotated_err_sq(h, h_star), 0.0)) / nh)


def _rotated_err_sq(h: np.ndarray, h_star: np.ndarray) -> float:
    return float(np.linalg.norm(h) ** 2 + np.linalg.norm(h_star) ** 2
                 - 2 * np.abs(np.vdot(h, h_star)))


def evaluate(h: np.ndarray, h_star: np.ndarray) -> EvalResult:
    """Correlation and rotation-invariant error, with per-carrier breakdown."""
    h = np.asarray(h)
    h_star = np.asarray(h_star)
    if h.ndim == 2:
        per_c = tuple(correlation(h[:, k], h_star[:, k]) for k in range(h.shape[1]))
        per_n = tuple(nmse_r(h[:, k], h_star[:, k]) for k in range(h.shape[1]))
        return EvalResult(correlation=float(np.mean(per_c)), nmse_r=nmse_r(h, h_star),
                          per_carrier_correlation=per_c, per_carrier_nmse_r=per_n)
    return EvalResult(correlation=correlation(h, h_star), nmse_r=nmse_r(h, h_star))
