"""Geometric multipath channel generation with spatial consistency.

Channels are sums of planar-array steering vectors over a set of propagation
paths.  A scenario groups one target user (TU) with several nearby reference
users (RUs) that share the same scatterers, so their channels span
approximately the same subspace.  Externally produced CSI can be loaded from
a simple text interchange format (see ``save_csi_dataset``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np


class DatasetFormatError(ValueError):
    """Raised when a CSI interchange file cannot be parsed."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array at the base station.

    ``n_horizontal`` x ``n_vertical`` elements per polarization; dual
    polarization doubles the port count by stacking two identical blocks.
    Spacings are in wavelengths.
    """

    n_horizontal: int
    n_vertical: int = 1
    dual_polarized: bool = False
    spacing_h: float = 0.5
    spacing_v: float = 0.5

    def __post_init__(self):
        if self.n_horizontal < 1 or self.n_vertical < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.spacing_h <= 0 or self.spacing_v <= 0:
            raise ValueError("antenna spacings must be > 0")

    @property
    def n_ports(self) -> int:
        m = self.n_horizontal * self.n_vertical
        return 2 * m if self.dual_polarized else m


@dataclass(frozen=True)
class PathSet:
    """Per-path parameters of one propagation environment.

    powers are linear (>= 0), phases in radians, delays in seconds,
    angles in radians (azimuth/elevation of departure).
    """

    powers: np.ndarray
    phases: np.ndarray
    delays: np.ndarray
    azimuths: np.ndarray
    elevations: np.ndarray

    def __post_init__(self):
        arrs = [self.powers, self.phases, self.delays, self.azimuths, self.elevations]
        n = len(self.powers)
        if n < 1:
            raise ValueError("a PathSet needs at least one path")
        if any(len(a) != n for a in arrs):
            raise ValueError("path parameter arrays must have equal length")
        if np.any(np.asarray(self.powers) < 0):
            raise ValueError("path powers must be nonnegative")
        if np.any(np.asarray(self.delays) < 0):
            raise ValueError("path delays must be nonnegative")

    @property
    def n_paths(self) -> int:
        return len(self.powers)


@dataclass(frozen=True)
class ChannelRealization:
    """One user's channel, M x n_C (n_C = 1 for flat fading)."""

    matrix: np.ndarray
    geometry: ArrayGeometry
    bandwidth: float = 0.0

    @property
    def n_carriers(self) -> int:
        return self.matrix.shape[1]

    @property
    def vector(self) -> np.ndarray:
        """Flat-fading view; only valid for n_C = 1."""
        if self.matrix.shape[1] != 1:
            raise ValueError("vector view requires a single-carrier channel")
        return self.matrix[:, 0]


@dataclass(frozen=True)
class UserSample:
    position: np.ndarray
    channel: ChannelRealization
    pathset: PathSet | None = None
    type2_codeword: np.ndarray | None = None


@dataclass(frozen=True)
class Scenario:
    """A target user plus its reference users, all from one local area."""

    tu: UserSample
    rus: tuple[UserSample, ...]
    seed: int | None = None

    @property
    def n_rus(self) -> int:
        return len(self.rus)

    def ru_matrix(self) -> np.ndarray:
        """RU channels stacked as columns, M x (n_R * n_C)."""
        if not self.rus:
            raise ValueError("scenario has no reference users")
        return np.hstack([ru.channel.matrix for ru in self.rus])


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of the synthetic spatially consistent generator."""

    geometry: ArrayGeometry
    area_size: float = 30.0
    n_ru: int = 10
    n_paths: int = 12
    n_dominant: int = 4
    angle_jitter_per_m: float = 0.005
    weak_power: float = 0.02
    n_carriers: int = 1
    bandwidth: float = 1e6
    max_delay_taps: float = 3.0
    normalize: bool = True

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 1 <= self.n_dominant <= self.n_paths:
            raise ValueError("n_dominant must be in [1, n_paths]")
        if self.n_ru < 0:
            raise ValueError("n_ru must be >= 0")


def array_response(geometry: ArrayGeometry, az: float, el: float) -> np.ndarray:
    """Unit-norm steering vector of the planar array.

    Element (p, q) of the single-polarization block carries phase
    2*pi*(p*spacing_h*sin(el)*sin(az) + q*spacing_v*cos(el)); the horizontal
    index p varies fastest in the flattened vector, elevation is measured
    from the vertical array axis.  Dual-polarized arrays stack two identical
    blocks.
    """
    if not (np.isfinite(az) and np.isfinite(el)):
        raise ValueError("angles must be finite")
    n1, n2 = geometry.n_horizontal, geometry.n_vertical
    p = np.arange(n1)
    q = np.arange(n2)
    ph = geometry.spacing_h * np.sin(el) * np.sin(az) * p
    pv = geometry.spacing_v * np.cos(el) * q
    block = np.exp(2j * np.pi * (pv[:, None] + ph[None, :])).ravel()  # p fastest
    if geometry.dual_polarized:
        block = np.concatenate([block, block])
    return block / np.linalg.norm(block)


def gen_flat_channel(geometry: ArrayGeometry, paths: PathSet,
                     normalize: bool = True) -> np.ndarray:
    """Flat-fading channel h = sum_l sqrt(rho_l) e^{j theta_l} a(az_l, el_l)."""
    h = np.zeros(geometry.n_ports, dtype=complex)
    gains = np.sqrt(np.asarray(paths.powers)) * np.exp(1j * np.asarray(paths.phases))
    for g, az, el in zip(gains, paths.azimuths, paths.elevations):
        h += g * array_response(geometry, az, el)
    if normalize:
        nrm = np.linalg.norm(h)
        if nrm > 0:
            h = h / nrm
    return h


def gen_multicarrier_channel(geometry: ArrayGeometry, paths: PathSet,
                             n_carriers: int, bandwidth: float,
                             normalize: bool = True) -> ChannelRealization:
    """Frequency-selective channel, one column per subcarrier.

    Column k (1-based) is
    sum_l sqrt(rho_l / n_C) e^{j(theta_l - 2 pi k tau_l B / n_C)} a(az_l, el_l).
    Each path gain carries the 1/sqrt(n_C) factor, so a single-carrier call
    equals the flat channel scaled by that factor (before normalization).
    """
    if n_carriers < 1:
        raise ValueError("n_carriers must be >= 1")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    m = geometry.n_ports
    ks = np.arange(1, n_carriers + 1)
    h = np.zeros((m, n_carriers), dtype=complex)
    for rho, th, tau, az, el in zip(paths.powers, paths.phases, paths.delays,
                                    paths.azimuths, paths.elevations):
        gain_k = np.sqrt(rho / n_carriers) * np.exp(
            1j * (th - 2 * np.pi * ks * tau * bandwidth / n_carriers))
        h += np.outer(array_response(geometry, az, el), gain_k)
    if normalize:
        nrm = np.linalg.norm(h, axis=0)
        nrm[nrm == 0] = 1.0
        h = h / nrm
    return ChannelRealization(matrix=h, geometry=geometry, bandwidth=bandwidth)


def _perturbed(base: PathSet, dist: float, scale: float, rng) -> PathSet:
    """Jitter path angles proportionally to the user's distance from the area center."""
    n = base.n_paths
    daz = scale * dist * rng.standard_normal(n)
    del_ = scale * dist * rng.standard_normal(n)
    phases = rng.uniform(0, 2 * np.pi, n)
    return PathSet(powers=base.powers, phases=phases, delays=base.delays,
                   azimuths=base.azimuths + daz, elevations=base.elevations + del_)


def gen_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Draw one spatially consistent scenario.

    A shared scatterer set (angles, delays, powers) is drawn for the local
    area; the TU and the RUs are placed uniformly in the square and each
    user's path angles are perturbed proportionally to its distance from the
    area center.  Deterministic given (config, seed).
    """
    rng = np.random.default_rng(seed)
    cfg = config
    n = cfg.n_paths
    az = rng.uniform(-np.pi / 2, np.pi / 2, n)
    el = rng.uniform(np.pi / 4, 3 * np.pi / 4, n)
    taps = rng.uniform(0.0, cfg.max_delay_taps, n)
    delays = taps / cfg.bandwidth
    powers = rng.uniform(0.5, 1.0, n)
    powers[cfg.n_dominant:] *= cfg.weak_power
    shared = PathSet(powers=powers, phases=np.zeros(n), delays=delays,
                     azimuths=az, elevations=el)

    half = cfg.area_size / 2.0

    def draw_user() -> UserSample:
        pos = rng.uniform(-half, half, 2)
        dist = float(np.linalg.norm(pos))
        ps = _perturbed(shared, dist, cfg.angle_jitter_per_m, rng)
        if cfg.n_carriers == 1:
            h = gen_flat_channel(cfg.geometry, ps, normalize=cfg.normalize)
            chan = ChannelRealization(matrix=h[:, None], geometry=cfg.geometry,
                                      bandwidth=cfg.bandwidth)
        else:
            chan = gen_multicarrier_channel(cfg.geometry, ps, cfg.n_carriers,
                                            cfg.bandwidth, normalize=cfg.normalize)
        return UserSample(position=pos, channel=chan, pathset=ps)

    tu = draw_user()
    rus = tuple(draw_user() for _ in range(cfg.n_ru))
    return Scenario(tu=tu, rus=rus, seed=seed)


# ---------------------------------------------------------------------------
# CSI interchange format
#
# Header:  csi v1 M=<int> nC=<int> nUE=<int>
# Per UE:  ue <id> x=<float> y=<float>
#          then M lines of n_C complex entries "re+imj" separated by spaces.
# The first UE record is the target user; the rest are reference users.
# ---------------------------------------------------------------------------

def _fmt_complex(z: complex) -> str:
    return format(z.real, ".12e") + format(z.imag, "+.12e") + "j"


def save_csi_dataset(scenario: Scenario, path) -> None:
    """Write a scenario's positions and channels in the interchange format."""
    users = [scenario.tu, *scenario.rus]
    m, n_c = scenario.tu.channel.matrix.shape
    lines = [f"csi v1 M={m} nC={n_c} nUE={len(users)}"]
    for i, u in enumerate(users):
        lines.append(f"ue {i} x={u.position[0]:.9f} y={u.position[1]:.9f}")
        for row in u.channel.matrix:
            lines.append(" ".join(_fmt_complex(z) for z in row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_csi_dataset(path, geometry: ArrayGeometry | None = None) -> Scenario:
    """Parse a CSI interchange file into a Scenario.

    The declared geometry (when given) must match the file's port count.
    NaN or Inf entries, dimension mismatches and malformed headers raise
    DatasetFormatError with the offending line number.
    """
    with open(path) as f:
        raw = f.read().splitlines()
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise DatasetFormatError("empty dataset file")

    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 5 or parts[0] != "csi" or parts[1] != "v1":
        raise DatasetFormatError(f"line {lineno}: bad header {header!r}")
    try:
        kv = dict(p.split("=", 1) for p in parts[2:])
        m, n_c, n_ue = int(kv["M"]), int(kv["nC"]), int(kv["nUE"])
    except (KeyError, ValueError) as exc:
        raise DatasetFormatError(f"line {lineno}: bad header fields: {exc}") from exc
    if m < 1 or n_c < 1 or n_ue < 1:
        raise DatasetFormatError(f"line {lineno}: nonpositive dimension in header")
    if geometry is not None and geometry.n_ports != m:
        raise DatasetFormatError(
            f"header M={m} does not match geometry ports {geometry.n_ports}")
    geo = geometry or ArrayGeometry(n_horizontal=m)

    users = []
    idx = 1
    for _ in range(n_ue):
        if idx >= len(lines):
            raise DatasetFormatError("unexpected end of file: missing ue record")
        lineno, ln = lines[idx]
        toks = ln.split()
        if len(toks) != 4 or toks[0] != "ue":
            raise DatasetFormatError(f"line {lineno}: expected 'ue <id> x= y=', got {ln!r}")
        try:
            x = float(toks[2].split("=", 1)[1])
            y = float(toks[3].split("=", 1)[1])
        except (ValueError, IndexError) as exc:
            raise DatasetFormatError(f"line {lineno}: bad position: {exc}") from exc
        if not (np.isfinite(x) and np.isfinite(y)):
            raise DatasetFormatError(f"line {lineno}: non-finite position")
        idx += 1
        rows = np.zeros((m, n_c), dtype=complex)
        for r in range(m):
            if idx >= len(lines):
                raise DatasetFormatError("unexpected end of file: missing channel row")
            lineno, ln = lines[idx]
            entries = ln.split()
            if len(entries) != n_c:
                raise DatasetFormatError(
                    f"line {lineno}: expected {n_c} entries, got {len(entries)}")
            try:
                rows[r] = [complex(e) for e in entries]
            except ValueError as exc:
                raise DatasetFormatError(f"line {lineno}: bad complex entry: {exc}") from exc
            if not np.all(np.isfinite(rows[r].view(float))):
                raise DatasetFormatError(f"line {lineno}: non-finite channel entry")
            idx += 1
        chan = ChannelRealization(matrix=rows, geometry=geo)
        users.append(UserSample(position=np.array([x, y]), channel=chan))
    if idx != len(lines):
        raise DatasetFormatError(f"line {lines[idx][0]}: trailing content after last UE")
    return Scenario(tu=users[0], rus=tuple(users[1:]))
