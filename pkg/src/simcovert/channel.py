"""SIM diffraction matrices, cascaded response and near-field LoS channels.

Atom indexing: a layer's atoms are numbered row-major with the x position as
the fast index (period ``max(N_x, N_z)``), which is how the antenna-to-layer
distance formula addresses them. Channel vectors use the same order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Placement, SystemConfig


# geometry ----------------------------------------------------------------
@dataclass(frozen=True)
class StackGeometry:
    num_atoms: int
    atoms_x: int
    atoms_z: int
    num_antennas: int
    num_layers: int
    d_sim: float
    wavelength: float
    atom_area: float
    dx: float
    dz: float

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "StackGeometry":
        return cls(cfg.atoms_per_layer, cfg.atoms_x, cfg.atoms_z, cfg.num_tx_antennas,
                   cfg.num_layers, cfg.d_sim, cfg.wavelength, cfg.atom_area, cfg.dx, cfg.dz)

    @property
    def n_max(self) -> int:
        return max(self.atoms_x, self.atoms_z)


def inter_layer_distance(n, n_tilde, geom: StackGeometry, kind: str = "layer"):
    """Distance between atom ``n`` and atom (or antenna) ``n_tilde``.

    Indices are 1-based. ``kind="layer"`` is the layer-to-layer closed form;
    ``kind="antenna"`` treats ``n_tilde`` as the antenna index m of the
    transmit ULA feeding layer 1. Accepts scalars or broadcastable arrays.
    """
    n = np.asarray(n)
    n_tilde = np.asarray(n_tilde)
    upper = geom.num_antennas if kind == "antenna" else geom.num_atoms
    if np.any(n < 1) or np.any(n > geom.num_atoms) or np.any(n_tilde < 1) or np.any(n_tilde > upper):
        raise IndexError(f"atom/antenna index out of range for {kind} hop")
    nm = geom.n_max
    if kind == "layer":
        gap = np.abs(n - n_tilde)
        off_z = gap // nm
        off_x = np.mod(gap, nm)
    elif kind == "antenna":
        # x is the fast atom index; both offsets are centred on the middle atom
        off_x = (np.mod(n - 1, geom.atoms_x) - (geom.atoms_x - 1) / 2) \
            - (n_tilde - (1 + geom.num_antennas) / 2)
        off_z = np.ceil(n / geom.atoms_x) - (1 + geom.atoms_z) / 2
    else:
        raise ValueError(f"unknown hop kind {kind!r}")
    return np.sqrt(geom.d_sim**2 + (geom.dx * off_x) ** 2 + (geom.dz * off_z) ** 2)


def propagation_coeff(r, cos_chi, wavelength: float, atom_area: float):
    """Rayleigh-Sommerfeld coefficient for one atom-to-atom hop."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("propagation distance must be positive")
    return (atom_area * cos_chi / r) * (1 / (2 * np.pi * r) - 1j / wavelength) \
        * np.exp(1j * 2 * np.pi * r / wavelength)


# SIM stack -----------------------------------------------------------------
@dataclass(frozen=True)
class SimStack:
    """Fixed propagation matrices: ``W1`` is N x M, ``W[i]`` is W^{i+2} (N x N)."""

    W1: np.ndarray
    W: tuple
    geometry: StackGeometry | None = None

    @property
    def num_layers(self) -> int:
        return 1 + len(self.W)

    @property
    def num_atoms(self) -> int:
        return self.W1.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.W1.shape[1]

    def layer_matrix(self, l: int) -> np.ndarray:
        """W^l with 1-based l."""
        return self.W1 if l == 1 else self.W[l - 2]


def build_sim_stack(cfg: SystemConfig) -> SimStack:
    geom = StackGeometry.from_config(cfg)
    n = np.arange(1, geom.num_atoms + 1)
    m = np.arange(1, geom.num_antennas + 1)
    r1 = inter_layer_distance(n[:, None], m[None, :], geom, kind="antenna")
    W1 = propagation_coeff(r1, geom.d_sim / r1, geom.wavelength, geom.atom_area)
    rl = inter_layer_distance(n[:, None], n[None, :], geom, kind="layer")
    Wl = propagation_coeff(rl, geom.d_sim / rl, geom.wavelength, geom.atom_area)
    for arr in (W1, Wl):
        arr.setflags(write=False)
    return SimStack(W1, tuple(Wl for _ in range(cfg.num_layers - 1)), geom)


@dataclass(frozen=True)
class PhaseState:
    """Per-layer atom phases in [0, 2*pi); row l-1 holds layer l."""

    theta: np.ndarray
    phi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        theta = np.mod(np.array(self.theta, dtype=float), 2 * np.pi)
        theta[theta >= 2 * np.pi] = 0.0
        theta.setflags(write=False)
        phi = np.exp(1j * theta)
        phi.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def random(cls, rng: np.random.Generator, num_layers: int, num_atoms: int) -> "PhaseState":
        return cls(rng.uniform(0, 2 * np.pi, size=(num_layers, num_atoms)))

    @classmethod
    def zeros(cls, num_layers: int, num_atoms: int) -> "PhaseState":
        return cls(np.zeros((num_layers, num_atoms)))

    @classmethod
    def from_unit(cls, phi) -> "PhaseState":
        return cls(np.angle(np.asarray(phi)))

    def with_layer(self, l: int, phi_l) -> "PhaseState":
        theta = self.theta.copy()
        theta[l - 1] = np.angle(phi_l)
        return PhaseState(theta)


def sim_response(stack: SimStack, phases: PhaseState) -> np.ndarray:
    """G = Theta^L W^L ... Theta^1 W^1 (N x M)."""
    if phases.phi.shape != (stack.num_layers, stack.num_atoms):
        raise ValueError(f"phase shape {phases.phi.shape} does not match stack "
                         f"({stack.num_layers}, {stack.num_atoms})")
    G = phases.phi[0][:, None] * stack.W1
    for l in range(2, stack.num_layers + 1):
        G = phases.phi[l - 1][:, None] * (stack.layer_matrix(l) @ G)
    return G


def split_response(stack: SimStack, phases: PhaseState, l: int):
    """(G_L, G_R) with G = G_L diag(phi_l) G_R for 1-based layer ``l``."""
    L = stack.num_layers
    if not 1 <= l <= L:
        raise IndexError(f"layer {l} out of range 1..{L}")
    phi = phases.phi
    G_R = stack.W1
    for j in range(2, l + 1):
        G_R = stack.layer_matrix(j) @ (phi[j - 2][:, None] * G_R)
    G_L = np.eye(stack.num_atoms, dtype=complex)
    for j in range(l + 1, L + 1):
        G_L = phi[j - 1][:, None] * (stack.layer_matrix(j) @ G_L)
    return G_L, G_R


def all_splits(stack: SimStack, phases: PhaseState):
    """Every layer's (G_L, G_R) pair using shared prefix/suffix products."""
    L, phi = stack.num_layers, phases.phi
    rights = [stack.W1]
    for j in range(2, L + 1):
        rights.append(stack.layer_matrix(j) @ (phi[j - 2][:, None] * rights[-1]))
    lefts = [np.eye(stack.num_atoms, dtype=complex)]
    for j in range(L, 1, -1):
        lefts.append(lefts[-1] @ (phi[j - 1][:, None] * stack.layer_matrix(j)))
    lefts.reverse()
    return list(zip(lefts, rights))


def effective_phase_channel(h, G_L, G_R, v) -> np.ndarray:
    """h_tilde with h^H G v == phi_l^T h_tilde, i.e. diag(h^H G_L) G_R v."""
    h = np.asarray(h)
    v = np.asarray(v)
    if G_L.shape[0] != h.shape[-1] or G_R.shape[1] != v.shape[0] or G_L.shape[1] != G_R.shape[0]:
        raise ValueError("dimension mismatch in effective_phase_channel")
    return (h.conj() @ G_L) * (G_R @ v)


# near-field channels -------------------------------------------------------
@dataclass(frozen=True)
class ChannelSet:
    """Rows of ``h_users`` (K x N) and ``h_wardens`` (U x N) are channel vectors."""

    h_users: np.ndarray
    h_wardens: np.ndarray
    beta_users: np.ndarray
    beta_wardens: np.ndarray

    @property
    def num_users(self) -> int:
        return self.h_users.shape[0]

    @property
    def num_wardens(self) -> int:
        return self.h_wardens.shape[0]


def array_offsets(atoms_x: int, atoms_z: int):
    """Centred (n_x, n_z) offsets for each atom in linear-index order."""
    nx = np.arange(atoms_x) - (atoms_x - 1) // 2
    nz = np.arange(atoms_z) - (atoms_z - 1) // 2
    grid_z, grid_x = np.meshgrid(nz, nx, indexing="ij")
    return grid_x.ravel(), grid_z.ravel()


def large_scale_gain(r, cfg: SystemConfig):
    """Per-element amplitude gain of a node at distance ``r``.

    ``beta0 * r**-eta`` is a power gain (beta0 is the 1 m free-space loss),
    so the amplitude is its square root. ``cfg.verbatim_path_gain`` applies
    the power gain directly as an amplitude instead.
    """
    beta0 = (cfg.wavelength / (4 * np.pi)) ** 2
    power_gain = beta0 * np.asarray(r, dtype=float) ** (-cfg.path_loss_exp)
    return power_gain if cfg.verbatim_path_gain else np.sqrt(power_gain)


def near_field_channel(spherical, cfg: SystemConfig) -> np.ndarray:
    """USW near-field LoS channel for one node given (r, azimuth, elevation)."""
    r, az, el = (float(c) for c in spherical)
    if r <= 0:
        raise ValueError("node distance must be positive")
    lam = cfg.wavelength
    k0 = 2 * np.pi / lam
    nx, nz = array_offsets(cfg.atoms_x, cfg.atoms_z)
    ux = np.cos(az) * np.sin(el)
    phase_x = -nx * cfg.dx * ux + (nx * cfg.dx) ** 2 * (1 - ux**2) / (2 * r)
    phase_z = -nz * cfg.dz * np.cos(el) + (nz * cfg.dz) ** 2 * np.sin(el) ** 2 / (2 * r)
    return large_scale_gain(r, cfg) * np.exp(-1j * k0 * r) * np.exp(-1j * k0 * (phase_x + phase_z))


def build_channels(placement: Placement, cfg: SystemConfig) -> ChannelSet:
    N = cfg.atoms_per_layer

    def stack_rows(sph):
        if len(sph) == 0:
            return np.zeros((0, N), dtype=complex)
        return np.array([near_field_channel(s, cfg) for s in sph])

    return ChannelSet(stack_rows(placement.ue_spherical), stack_rows(placement.warden_spherical),
                      large_scale_gain(placement.ue_spherical[:, 0], cfg),
                      large_scale_gain(placement.warden_spherical[:, 0], cfg))


# regression dumps ------------------------------------------------------------
def dump_arrays(path, arrays: dict, config_digest: str = "") -> None:
    """Write complex arrays as one JSON header line then little-endian float64 pairs."""
    header = {"config": config_digest,
              "arrays": [{"name": k, "shape": list(np.shape(a))} for k, a in arrays.items()]}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<c16").tobytes(order="C"))


def load_arrays(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        out = {}
        for spec in header["arrays"]:
            count = int(np.prod(spec["shape"], dtype=int))
            out[spec["name"]] = np.frombuffer(fh.read(16 * count), dtype="<c16").reshape(spec["shape"])
    return header, out


def dump_scenario(path, stack: SimStack, channels: ChannelSet, cfg: SystemConfig) -> None:
    arrays = {"W1": stack.W1}
    arrays.update({f"W{i + 2}": w for i, w in enumerate(stack.W)})
    arrays["h_users"] = channels.h_users
    arrays["h_wardens"] = channels.h_wardens
    dump_arrays(Path(path), arrays, cfg.digest())
