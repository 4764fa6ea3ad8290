"""Scenario configuration, seeded randomness and node placement."""
from __future__ import annotations

import ast
import dataclasses
import hashlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised for unparsable config files or violated config invariants."""


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one simulation run.

    Defaults reproduce the reference parameter table (M=6, K=3, U=3, L=5,
    N=45 at 10 GHz). Geometry fields left as ``None`` resolve against the
    wavelength: atom spacing lambda, atom area lambda^2/4, SIM thickness
    5 lambda.
    """

    num_tx_antennas: int = 6
    num_users: int = 3
    num_wardens: int = 3
    num_layers: int = 5
    atoms_per_layer: int = 45
    atoms_x: int = 9
    atoms_z: int = 5
    carrier_freq_hz: float = 10e9
    bandwidth_hz: float = 1e6
    noise_psd_dbm_per_hz: float = -174.0
    bs_height_m: float = 5.0
    service_radius_m: float = 10.0
    service_center_m: tuple = (10.0, 10.0, 0.0)
    p_max_dbm: float = 40.0
    covert_eps: float = 0.1
    min_rate_bpshz: float = 0.1
    observations: int = 10
    atom_spacing_x_m: float | None = None
    atom_spacing_z_m: float | None = None
    atom_area_m2: float | None = None
    sim_thickness_m: float | None = None
    path_loss_exp: float = 2.5
    verbatim_path_gain: bool = False
    penalty_mu1: float = 10.0
    penalty_mu2: float = 100.0
    armijo_alpha0: float = 1.0
    armijo_shrink: float = 0.5
    sca_tol: float = 1e-4
    ao_tol: float = 1e-4
    max_ao_iters: int = 50
    max_sca_iters: int = 30
    max_armijo_backtracks: int = 30
    layer_order: str = "descending"
    pga_inner_resolve: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "service_center_m", tuple(float(c) for c in self.service_center_m))
        validate_config(self)

    # derived scalars -----------------------------------------------------
    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def dx(self) -> float:
        return self.wavelength if self.atom_spacing_x_m is None else self.atom_spacing_x_m

    @property
    def dz(self) -> float:
        return self.wavelength if self.atom_spacing_z_m is None else self.atom_spacing_z_m

    @property
    def atom_area(self) -> float:
        return self.wavelength**2 / 4 if self.atom_area_m2 is None else self.atom_area_m2

    @property
    def thickness(self) -> float:
        return 5 * self.wavelength if self.sim_thickness_m is None else self.sim_thickness_m

    @property
    def d_sim(self) -> float:
        """Spacing between adjacent layers (and between the array and layer 1)."""
        return self.thickness / self.num_layers

    @property
    def noise_power(self) -> float:
        return derive_noise_power(self)

    @property
    def p_max(self) -> float:
        return dbm_to_watt(self.p_max_dbm)

    @property
    def gamma_min(self) -> float:
        return 2.0**self.min_rate_bpshz - 1.0

    @property
    def kl_budget(self) -> float:
        """Right-hand side of the per-warden KL constraint, 2 eps^2."""
        return 2.0 * self.covert_eps**2

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def digest(self) -> str:
        return hashlib.sha256(dump_config_text(self).encode()).hexdigest()[:16]


_POSITIVE_INTS = ("num_tx_antennas", "num_users", "num_layers", "atoms_per_layer",
                  "atoms_x", "atoms_z", "observations", "max_ao_iters",
                  "max_sca_iters", "max_armijo_backtracks")
_POSITIVE_REALS = ("carrier_freq_hz", "bandwidth_hz", "bs_height_m", "service_radius_m",
                   "path_loss_exp", "penalty_mu1", "penalty_mu2", "armijo_alpha0",
                   "sca_tol", "ao_tol")
_OPTIONAL_POSITIVE = ("atom_spacing_x_m", "atom_spacing_z_m", "atom_area_m2", "sim_thickness_m")


def validate_config(cfg: SystemConfig) -> None:
    problems = []
    for name in _POSITIVE_INTS:
        value = getattr(cfg, name)
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
            problems.append(f"{name} must be a positive integer (got {value!r})")
    if not isinstance(cfg.num_wardens, (int, np.integer)) or cfg.num_wardens < 0:
        problems.append(f"num_wardens must be a non-negative integer (got {cfg.num_wardens!r})")
    for name in _POSITIVE_REALS:
        if not getattr(cfg, name) > 0:
            problems.append(f"{name} must be > 0")
    for name in _OPTIONAL_POSITIVE:
        value = getattr(cfg, name)
        if value is not None and not value > 0:
            problems.append(f"{name} must be > 0 or None")
    if not problems:
        if cfg.atoms_x * cfg.atoms_z != cfg.atoms_per_layer:
            problems.append(f"atoms_per_layer={cfg.atoms_per_layer} != atoms_x*atoms_z="
                            f"{cfg.atoms_x * cfg.atoms_z}")
        if cfg.atoms_x % 2 == 0 or cfg.atoms_z % 2 == 0:
            problems.append(f"atoms_x and atoms_z must be odd (got {cfg.atoms_x}, {cfg.atoms_z})")
        if cfg.num_users > cfg.num_tx_antennas:
            problems.append(f"num_users={cfg.num_users} exceeds num_tx_antennas="
                            f"{cfg.num_tx_antennas}")
    if not 0 < cfg.covert_eps <= 1:
        problems.append("covert_eps must lie in (0, 1]")
    if not cfg.min_rate_bpshz >= 0:
        problems.append("min_rate_bpshz must be >= 0")
    if not 0 < cfg.armijo_shrink < 1:
        problems.append("armijo_shrink must lie in (0, 1)")
    if len(cfg.service_center_m) != 3:
        problems.append("service_center_m must have 3 coordinates")
    if cfg.layer_order not in ("descending", "ascending"):
        problems.append("layer_order must be 'descending' or 'ascending'")
    if problems:
        raise ConfigError("; ".join(problems))


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def derive_noise_power(cfg: SystemConfig) -> float:
    """Thermal noise power in watts over the configured bandwidth.

    The same floor is used at legitimate users and at wardens.
    """
    return dbm_to_watt(cfg.noise_psd_dbm_per_hz + 10.0 * math.log10(cfg.bandwidth_hz))


# config files ------------------------------------------------------------
_FIELD_NAMES = {f.name for f in fields(SystemConfig)}


def parse_config_text(text: str, defaults: bool = True) -> SystemConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _FIELD_NAMES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            if key == "layer_order":
                values[key] = value
            else:
                raise ConfigError(f"line {lineno}: cannot parse value for {key!r}: {value!r}")
    if not defaults:
        missing = sorted(_FIELD_NAMES - values.keys())
        if missing:
            raise ConfigError(f"missing keys: {', '.join(missing)}")
    try:
        return SystemConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, defaults: bool = True) -> SystemConfig:
    """Read a flat ``key = value`` config file.

    Keys must match :class:`SystemConfig` field names exactly; values are
    Python literals. Unknown keys are rejected so typos never pass silently.
    """
    return parse_config_text(Path(path).read_text(), defaults=defaults)


def dump_config_text(cfg: SystemConfig) -> str:
    return "".join(f"{name} = {value!r}\n" for name, value in cfg.to_dict().items())


def save_config(cfg: SystemConfig, path) -> None:
    Path(path).write_text(dump_config_text(cfg))


PROFILES = {
    "paper": {},
    "desk": dict(num_tx_antennas=4, num_users=2, num_wardens=1, num_layers=3,
                 atoms_per_layer=15, atoms_x=5, atoms_z=3),
}
DESK_SEEDS = 20


def profile_config(name: str, **overrides) -> SystemConfig:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return SystemConfig(**{**PROFILES[name], **overrides})


# randomness and placement ---------------------------------------------------
def scenario_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (placement, algorithm) generators derived from one seed."""
    placement, algorithm = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(placement), np.random.default_rng(algorithm)


@dataclass(frozen=True)
class Placement:
    """Node positions plus spherical coordinates seen from the output layer.

    ``azimuth`` is measured in the x-y plane from +x, ``elevation`` from +z,
    so the unit direction is (sin(el) cos(az), sin(el) sin(az), cos(el)).
    """

    ue_positions: np.ndarray
    warden_positions: np.ndarray
    origin: np.ndarray
    ue_spherical: np.ndarray = field(init=False)
    warden_spherical: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ue_spherical", to_spherical(self.ue_positions, self.origin))
        object.__setattr__(self, "warden_spherical",
                           to_spherical(self.warden_positions, self.origin))


def output_layer_center(cfg: SystemConfig) -> np.ndarray:
    """Centre of the L-th layer; layers stack along +y from the array at (0, 0, Z)."""
    return np.array([0.0, cfg.num_layers * cfg.d_sim, cfg.bs_height_m])


def to_spherical(points, origin) -> np.ndarray:
    rel = np.atleast_2d(np.asarray(points, dtype=float)) - origin
    if rel.size == 0:
        return np.zeros((0, 3))
    r = np.linalg.norm(rel, axis=1)
    azimuth = np.arctan2(rel[:, 1], rel[:, 0])
    elevation = np.arccos(np.clip(rel[:, 2] / r, -1.0, 1.0))
    return np.column_stack([r, azimuth, elevation])


def sample_disk(rng: np.random.Generator, n: int, radius: float, center) -> np.ndarray:
    """Area-uniform points on a disk in the z=0 plane."""
    u = rng.random((n, 2))
    rho = radius * np.sqrt(u[:, 0])
    ang = 2 * np.pi * u[:, 1]
    cx, cy, _ = center
    return np.column_stack([cx + rho * np.cos(ang), cy + rho * np.sin(ang), np.zeros(n)])


def place_nodes(cfg: SystemConfig, rng: np.random.Generator) -> Placement:
    """Drop K users then U wardens uniformly over the service disk.

    Users are drawn first, so a run with more wardens keeps the same users
    and the same leading wardens for a given seed.
    """
    pts = sample_disk(rng, cfg.num_users + cfg.num_wardens, cfg.service_radius_m,
                      cfg.service_center_m)
    return Placement(pts[:cfg.num_users], pts[cfg.num_users:], output_layer_center(cfg))
