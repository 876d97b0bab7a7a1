"""User-side feedback simulation and assembly of solver instances.

``simulate_round`` produces one round of PMI/CQI feedback from the effective
CSI (with optional estimation error and CQI quantization).  The assembly
functions turn feedback records into reduced-dimension problem instances:
per measurement, a bank of measurement vectors (one column per codeword), a
selected-index target and a CQI value.  The feedback inequalities say that
the selected column must dominate every other column in squared magnitude.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
import numpy as np

from .basis import BasisMatrix, DelayBasis
from .codebook import QuantizerSpec, Type1Codebook, select_pmi, select_pmi_group
from .precoder import Precoder, complex_gaussian


@dataclass(frozen=True)
class FeedbackRecord:
    """One round of feedback: PMI plus raw/quantized CQI.

    ``cqi_hat`` is the value a solver should target; it equals the
    dequantized midpoint when a quantizer was applied and the raw CQI
    otherwise.  ``carrier``/``group`` identify multi-carrier feedback.
    """

    t: int
    pmi: int
    cqi_raw: float
    cqi_index: int | None = None
    cqi_hat: float | None = None
    carrier: int | None = None
    group: int | None = None

    def __post_init__(self):
        if self.cqi_hat is None:
            object.__setattr__(self, "cqi_hat", self.cqi_raw)


@dataclass(frozen=True)
class CprInstance:
    """Reduced-dimension constrained phase-retrieval instance.

    ``mu_all`` has shape (n_meas, dim, n_codewords, n_vec): measurement
    ``t`` and codeword ``j`` contribute the value
    sum_v |mu_all[t,:,j,v]^H g|^2.  Flat instances have n_vec = 1;
    grouped multi-carrier feedback sums over the group's carriers.
    ``pmis`` holds the selected codeword per measurement and ``q`` the CQI
    targets.  Either ``basis_matrix`` (flat) or ``delay_basis``
    (multi-carrier) maps solutions back to antenna-domain CSI.
    """

    mu_all: np.ndarray
    pmis: np.ndarray
    q: np.ndarray
    basis_matrix: np.ndarray | None = None
    delay_basis: DelayBasis | None = None

    @property
    def n_meas(self) -> int:
        return self.mu_all.shape[0]

    @property
    def dim(self) -> int:
        return self.mu_all.shape[1]

    @property
    def n_codewords(self) -> int:
        return self.mu_all.shape[2]

    @property
    def n_constraints(self) -> int:
        return self.n_meas * (self.n_codewords - 1)

    def mu_star(self, t: int) -> np.ndarray:
        return self.mu_all[t, :, self.pmis[t], :]

    def star_stack(self) -> np.ndarray:
        """Selected measurement vectors, shape (n_meas, dim, n_vec)."""
        return np.stack([self.mu_star(t) for t in range(self.n_meas)])

    def values(self, g: np.ndarray) -> np.ndarray:
        """All quadratic form values, shape (n_meas, n_codewords)."""
        proj = np.einsum("tdjv,d->tjv", self.mu_all.conj(), g)
        return np.sum(np.abs(proj) ** 2, axis=2)

    def star_values(self, g: np.ndarray) -> np.ndarray:
        proj = np.einsum("tdv,d->tv", self.star_stack().conj(), g)
        return np.sum(np.abs(proj) ** 2, axis=1)

    def objective(self, g: np.ndarray) -> float:
        """Sum of squared CQI residuals at g."""
        return float(np.sum((self.q - self.star_values(g)) ** 2))

    def reconstruct(self, g: np.ndarray) -> np.ndarray:
        """Map a coefficient vector back to antenna-domain CSI."""
        if self.basis_matrix is not None:
            return self.basis_matrix @ g
        db = self.delay_basis
        gm = g.reshape((db.l_tilde, db.n_delay), order="F")
        return db.d_tilde @ gm @ db.f.conj().T


def estimation_noise(h_eff: np.ndarray, snr_db: float, rng) -> np.ndarray:
    """Additive estimation error at the configured effective-CSI SNR."""
    n = h_eff.size
    var = float(np.linalg.norm(h_eff) ** 2) / (n * 10 ** (snr_db / 10))
    return complex_gaussian(rng, n, np.sqrt(var))


def simulate_round(h: np.ndarray, precoder: Precoder, codebook: Type1Codebook,
                   est_snr_db: float | None = None,
                   quantizer: QuantizerSpec | None = None,
                   rng=None, t: int = 0) -> FeedbackRecord:
    """One flat-fading feedback round.

    The user observes the effective CSI W^H h, optionally corrupted by
    estimation error at ``est_snr_db`` (None means exact), selects the PMI
    and computes the CQI, which is quantized when a quantizer is given.
    """
    h_eff = precoder.effective(h)
    if est_snr_db is not None:
        if rng is None:
            raise ValueError("rng is required when est_snr_db is set")
        h_eff = h_eff + estimation_noise(h_eff, est_snr_db, rng)
    pmi, q = select_pmi(h_eff, codebook)
    if quantizer is None:
        return FeedbackRecord(t=t, pmi=pmi, cqi_raw=q)
    idx, q_hat = quantizer.quantize(q)
    return FeedbackRecord(t=t, pmi=pmi, cqi_raw=q, cqi_index=idx, cqi_hat=q_hat)


def simulate_mc_round(h_matrix: np.ndarray, precoders: list[Precoder],
                      codebook: Type1Codebook,
                      est_snr_db: float | None = None,
                      quantizer: QuantizerSpec | None = None,
                      rng=None, t: int = 0,
                      group_size: int = 1) -> list[FeedbackRecord]:
    """One multi-carrier round: per-carrier feedback, or one PMI/CQI per
    group of ``group_size`` adjacent subcarriers."""
    n_c = h_matrix.shape[1]
    if len(precoders) != n_c:
        raise ValueError("need one precoder per subcarrier")
    if n_c % group_size != 0:
        raise ValueError("group_size must divide the number of subcarriers")
    h_effs = []
    for k in range(n_c):
        he = precoders[k].effective(h_matrix[:, k])
        if est_snr_db is not None:
            if rng is None:
                raise ValueError("rng is required when est_snr_db is set")
            he = he + estimation_noise(he, est_snr_db, rng)
        h_effs.append(he)
    records = []
    if group_size == 1:
        for k, he in enumerate(h_effs):
            pmi, q = select_pmi(he, codebook)
            if quantizer is None:
                records.append(FeedbackRecord(t=t, pmi=pmi, cqi_raw=q, carrier=k))
            else:
                idx, q_hat = quantizer.quantize(q)
                records.append(FeedbackRecord(t=t, pmi=pmi, cqi_raw=q, cqi_index=idx,
                                              cqi_hat=q_hat, carrier=k))
    else:
        for b in range(n_c // group_size):
            grp = h_effs[b * group_size:(b + 1) * group_size]
            pmi, q = select_pmi_group(grp, codebook)
            if quantizer is None:
                records.append(FeedbackRecord(t=t, pmi=pmi, cqi_raw=q, group=b))
            else:
                idx, q_hat = quantizer.quantize(q)
                records.append(FeedbackRecord(t=t, pmi=pmi, cqi_raw=q, cqi_index=idx,
                                              cqi_hat=q_hat, group=b))
    return records


def assemble_cpr_instance(records: list[FeedbackRecord], basis: BasisMatrix,
                          precoders: list[Precoder], codebook: Type1Codebook,
                          use_raw_cqi: bool = False) -> CprInstance:
    """Flat-fading instance: per round, measurement vectors D^H W_t u_j."""
    if not records:
        raise ValueError("records must be nonempty")
    if len(records) != len(precoders):
        raise ValueError("need exactly one precoder per feedback record")
    mu = np.stack([
        basis.d.conj().T @ prec.w @ codebook.codewords
        for prec in precoders
    ])  # (T, L, n_T1)
    q = np.array([r.cqi_raw if use_raw_cqi else r.cqi_hat for r in records])
    pmis = np.array([r.pmi for r in records], dtype=int)
    return CprInstance(mu_all=mu[..., None], pmis=pmis, q=q, basis_matrix=basis.d)


def _lifted_vectors(delay_basis: DelayBasis, precoder: Precoder,
                    codebook: Type1Codebook, k: int) -> np.ndarray:
    """Measurement vectors for subcarrier k in the vec(G) space.

    Column j satisfies m_j^H vec(G) = u_j^H (W^k)^H D_tilde G f^(k) where
    f^(k) is the k-th column of F^H; vec is column-major.
    """
    a = delay_basis.d_tilde.conj().T @ precoder.w @ codebook.codewords  # (Lt, n_T1)
    lifted = np.einsum("n,lj->nlj", delay_basis.f[k, :], a)
    return lifted.reshape(delay_basis.n_delay * delay_basis.l_tilde, -1)


def assemble_multicarrier_instance(records: list[FeedbackRecord],
                                   delay_basis: DelayBasis,
                                   precoders_per_round: list[list[Precoder]],
                                   codebook: Type1Codebook,
                                   group_size: int = 1,
                                   use_raw_cqi: bool = False) -> CprInstance:
    """Joint multi-carrier instance over the delay-domain coefficients.

    With per-carrier feedback each record contributes one rank-1 measurement;
    with grouped feedback the group's carrier vectors are collected so their
    squared magnitudes are summed in both targets and constraints.
    """
    if not records:
        raise ValueError("records must be nonempty")
    n_c = delay_basis.n_carriers
    if n_c % group_size != 0:
        raise ValueError("group_size must divide the number of subcarriers")
    dim = delay_basis.n_delay * delay_basis.l_tilde

    mu_rows, pmis, qs = [], [], []
    for rec in records:
        precs = precoders_per_round[rec.t]
        if len(precs) != n_c:
            raise ValueError("need one precoder per subcarrier in every round")
        if group_size == 1:
            if rec.carrier is None:
                raise ValueError("per-carrier assembly requires carrier ids")
            vecs = _lifted_vectors(delay_basis, precs[rec.carrier], codebook,
                                   rec.carrier)[..., None]
        else:
            if rec.group is None:
                raise ValueError("grouped assembly requires group ids")
            ks = range(rec.group * group_size, (rec.group + 1) * group_size)
            vecs = np.stack([
                _lifted_vectors(delay_basis, precs[k], codebook, k) for k in ks
            ], axis=2)
        if vecs.shape[0] != dim:
            raise ValueError("lifted measurement dimension mismatch")
        mu_rows.append(vecs)
        pmis.append(rec.pmi)
        qs.append(rec.cqi_raw if use_raw_cqi else rec.cqi_hat)
    return CprInstance(mu_all=np.stack(mu_rows), pmis=np.array(pmis, dtype=int),
                       q=np.array(qs), delay_basis=delay_basis)


# --- feedback log replay -----------------------------------------------------

LOG_COLUMNS = ["round", "carrier", "group", "pmi", "cqi_index"]


def write_feedback_log(records: list[FeedbackRecord], path) -> None:
    """Persist quantized feedback as CSV (columns round,carrier,group,pmi,cqi_index)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LOG_COLUMNS)
        for r in records:
            if r.cqi_index is None:
                raise ValueError("feedback log requires quantized CQI")
            w.writerow([r.t,
                        "" if r.carrier is None else r.carrier,
                        "" if r.group is None else r.group,
                        r.pmi, r.cqi_index])


def read_feedback_log(path, quantizer: QuantizerSpec) -> list[FeedbackRecord]:
    """Replay a feedback log; CQI targets are the dequantized midpoints."""
    records = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(LOG_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"feedback log is missing columns: {sorted(missing)}")
        for row in reader:
            idx = int(row["cqi_index"])
            records.append(FeedbackRecord(
                t=int(row["round"]),
                pmi=int(row["pmi"]),
                cqi_raw=float("nan"),
                cqi_index=idx,
                cqi_hat=quantizer.dequantize(idx),
                carrier=int(row["carrier"]) if row["carrier"] else None,
                group=int(row["group"]) if row["group"] else None,
            ))
    return records
