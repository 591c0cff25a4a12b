"""Dipole model, 2D Green's function, scenes, and interaction-matrix assembly.

Everything is expressed in the dimensionless unit system c = eps = delta = 1 with
operating frequency f0 = 1, so lambda0 = 1 and k(f) = 2*pi*f. Scenes and matrices
are immutable values; assembly is a pure function and safe to parallelize.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    CoincidentPointsError,
    EnergyConservationError,
    LengthMismatchError,
)
from .numerics import BlockIndexMap, hankel0_2

#: Minimum inter-dipole separation, in units of lambda0. Keeps Hankel arguments
#: away from the logarithmic singularity of the 2D Green's function.
D_MIN = 0.1


@dataclass(frozen=True)
class PhysicalConstants:
    """Wave speed, permittivity, discretization constant, and operating frequency."""

    c: float = 1.0
    epsilon: float = 1.0
    delta: float = 1.0
    f0: float = 1.0

    def __post_init__(self):
        if min(self.c, self.epsilon, self.delta, self.f0) <= 0.0:
            raise ValueError("physical constants must be strictly positive")

    @property
    def lambda0(self) -> float:
        return self.c / self.f0

    def wavenumber(self, f: float) -> float:
        return 2.0 * np.pi * f / self.c

    def radiation_floor(self, f: float) -> float:
        """Energy-conservation floor mu(f) = k(f)^2 / (4 eps delta) on Im(1/alpha)."""
        k = self.wavenumber(f)
        return k * k / (4.0 * self.epsilon * self.delta)


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class Dipole:
    """Polarizable point scatterer with a Lorentzian inverse polarizability."""

    x: float
    y: float
    f_res: float = 1.0
    chi: float = 1.0
    gamma_l: float = 0.0
    gamma_r: float = 1.0

    def __post_init__(self):
        if self.chi <= 0.0:
            raise ValueError("chi must be > 0")
        if self.f_res <= 0.0:
            raise ValueError("f_res must be > 0")
        if self.gamma_l < 0.0:
            raise ValueError("gamma_l must be >= 0")
        if self.gamma_r <= 0.0:
            raise ValueError("gamma_r must be > 0")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def inverse_polarizability(
    d: Dipole, f: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> complex:
    """Inverse polarizability (f_res^2 - f^2)/chi^2 + i (gamma_r + f*gamma_l)/chi^2.

    Raises :class:`EnergyConservationError` when the imaginary part falls below
    the radiation-loss floor mu(f), i.e. when chi is too large for gamma_r.
    """
    if f <= 0.0:
        raise ValueError("frequency must be > 0")
    chi2 = d.chi * d.chi
    value = complex(
        (d.f_res * d.f_res - f * f) / chi2, (d.gamma_r + f * d.gamma_l) / chi2
    )
    mu = constants.radiation_floor(f)
    if value.imag < mu:
        raise EnergyConservationError(
            f"Im(1/alpha) = {value.imag:.6g} below radiation floor mu(f) = {mu:.6g} "
            f"(chi = {d.chi:.6g} too large for gamma_r = {d.gamma_r:.6g} at f = {f:.6g})"
        )
    return value


def polarizability(
    d: Dipole, f: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> complex:
    return 1.0 / inverse_polarizability(d, f, constants)


def green(
    p: Sequence[float],
    q: Sequence[float],
    k: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> complex:
    """Free-space 2D Green's function G = i (k^2 / 4 eps delta) H0^(2)(k |p-q|).

    Symmetric in p and q. Raises :class:`CoincidentPointsError` below the
    minimum separation ``D_MIN``.
    """
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    dist = float(np.hypot(dx, dy))
    if dist < D_MIN:
        raise CoincidentPointsError(
            f"points separated by {dist:.4g} < d_min = {D_MIN}"
        )
    pref = k * k / (4.0 * constants.epsilon * constants.delta)
    return 1j * pref * hankel0_2(k * dist)


@dataclass(frozen=True)
class RisConfiguration:
    """Binary state of the N_S RIS elements; labels are the matching +/-1 values."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")

    @classmethod
    def from_bits(cls, bits) -> "RisConfiguration":
        return cls(tuple(int(b) for b in bits))

    @classmethod
    def from_bitstring(cls, s: str) -> "RisConfiguration":
        if not set(s) <= {"0", "1"}:
            raise ValueError(f"bitstring must contain only 0/1, got {s!r}")
        return cls(tuple(int(ch) for ch in s))

    @classmethod
    def all_on(cls, n: int) -> "RisConfiguration":
        return cls((1,) * n)

    @classmethod
    def all_off(cls, n: int) -> "RisConfiguration":
        return cls((0,) * n)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "RisConfiguration":
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=n)))

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def labels(self) -> np.ndarray:
        """Entries in {-1, +1} with label = 2*bit - 1."""
        return 2.0 * np.asarray(self.bits, dtype=float) - 1.0

    def bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class Scene:
    """Ordered dipole groups T, R, E, S plus constants and the OFF-state detuning."""

    transmitters: tuple[Dipole, ...]
    receivers: tuple[Dipole, ...]
    environment: tuple[Dipole, ...] = ()
    ris: tuple[Dipole, ...] = ()
    constants: PhysicalConstants = DEFAULT_CONSTANTS
    ris_off_detuning: float = 3.0
    _skip_validation: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if self.ris_off_detuning <= 1.0:
            raise ValueError("ris_off_detuning must be > 1 (OFF state detunes upward)")
        if not self._skip_validation:
            self.validate()

    # -- structure ----------------------------------------------------------
    @property
    def block_map(self) -> BlockIndexMap:
        return BlockIndexMap(
            n_t=len(self.transmitters),
            n_r=len(self.receivers),
            n_e=len(self.environment),
            n_s=len(self.ris),
        )

    def dipoles(self) -> Iterator[Dipole]:
        """All dipoles in T, R, E, S order."""
        yield from self.transmitters
        yield from self.receivers
        yield from self.environment
        yield from self.ris

    @property
    def n_total(self) -> int:
        return self.block_map.n_total

    def positions(self) -> np.ndarray:
        return np.array([[d.x, d.y] for d in self.dipoles()], dtype=float).reshape(
            -1, 2
        )

    # -- validation ---------------------------------------------------------
    def validate(self) -> None:
        """Check pairwise separation and the energy floor at f0. Fails loudly."""
        pos = self.positions()
        n = pos.shape[0]
        if n >= 2:
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.hypot(diff[..., 0], diff[..., 1])
            dist[np.diag_indices(n)] = np.inf
            dmin = float(dist.min())
            if dmin < D_MIN * self.constants.lambda0:
                i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
                raise CoincidentPointsError(
                    f"dipoles {i} and {j} separated by {dmin:.4g} "
                    f"< d_min = {D_MIN * self.constants.lambda0:.4g}"
                )
        for idx, d in enumerate(self.dipoles()):
            try:
                inverse_polarizability(d, self.constants.f0, self.constants)
            except EnergyConservationError as exc:
                raise EnergyConservationError(f"dipole {idx}: {exc}") from exc

    # -- RIS state ----------------------------------------------------------
    @property
    def f_off(self) -> float:
        return self.ris_off_detuning * self.constants.f0

    def with_groups(self, **groups) -> "Scene":
        """Copy with some dipole groups replaced (revalidates)."""
        return replace(self, _skip_validation=False, **groups)


def apply_ris_config(scene: Scene, config: RisConfiguration) -> Scene:
    """Scene copy where RIS element i is resonant at f0 (bit 1) or detuned (bit 0)."""
    if config.n != len(scene.ris):
        raise LengthMismatchError(
            f"configuration has {config.n} bits but scene has {len(scene.ris)} "
            "RIS elements"
        )
    f_on = scene.constants.f0
    f_off = scene.f_off
    new_ris = tuple(
        replace(d, f_res=f_on if bit else f_off)
        for d, bit in zip(scene.ris, config.bits)
    )
    # Geometry is unchanged, so the pairwise-distance check can be skipped; the
    # energy floor does not depend on f_res.
    return replace(scene, ris=new_ris, _skip_validation=True)


def _pairwise_green_matrix(scene: Scene, f: float) -> np.ndarray:
    """Off-diagonal Green's matrix, exactly symmetric, zero diagonal."""
    pos = scene.positions()
    n = pos.shape[0]
    g = np.zeros((n, n), dtype=complex)
    if n < 2:
        return g
    iu, ju = np.triu_indices(n, k=1)
    diff = pos[iu] - pos[ju]
    dist = np.hypot(diff[:, 0], diff[:, 1])
    if dist.min() < D_MIN * scene.constants.lambda0:
        raise CoincidentPointsError(
            f"minimum pairwise distance {dist.min():.4g} below d_min"
        )
    k = scene.constants.wavenumber(f)
    pref = k * k / (4.0 * scene.constants.epsilon * scene.constants.delta)
    vals = 1j * pref * hankel0_2(k * dist)
    g[iu, ju] = vals
    g[ju, iu] = vals
    return g


def assemble_interaction_matrix(
    scene: Scene, f: float
) -> tuple[np.ndarray, BlockIndexMap]:
    """Interaction matrix W: inverse polarizabilities on the diagonal, Green's
    functions off-diagonal, dipoles ordered T, R, E, S. W is complex symmetric."""
    w = _pairwise_green_matrix(scene, f)
    diag = np.array(
        [inverse_polarizability(d, f, scene.constants) for d in scene.dipoles()],
        dtype=complex,
    )
    np.fill_diagonal(w, diag)
    return w, scene.block_map


# ---------------------------------------------------------------------------
# Scene files (JSON). Round-trips losslessly: floats are serialized with repr.
# ---------------------------------------------------------------------------

_GROUP_KEYS = ("transmitters", "receivers", "environment", "ris")


def _dipole_to_dict(d: Dipole) -> dict:
    return {
        "x": d.x,
        "y": d.y,
        "f_res": d.f_res,
        "chi": d.chi,
        "gamma_l": d.gamma_l,
        "gamma_r": d.gamma_r,
    }


def _dipole_from_dict(obj: dict) -> Dipole:
    try:
        return Dipole(
            x=float(obj["x"]),
            y=float(obj["y"]),
            f_res=float(obj.get("f_res", 1.0)),
            chi=float(obj.get("chi", 1.0)),
            gamma_l=float(obj.get("gamma_l", 0.0)),
            gamma_r=float(obj.get("gamma_r", 1.0)),
        )
    except (TypeError, KeyError) as exc:
        raise ValueError(f"invalid dipole entry {obj!r}: missing field {exc}") from exc


def scene_to_dict(scene: Scene) -> dict:
    return {
        "constants": {
            "c": scene.constants.c,
            "epsilon": scene.constants.epsilon,
            "delta": scene.constants.delta,
            "f0": scene.constants.f0,
        },
        "transmitters": [_dipole_to_dict(d) for d in scene.transmitters],
        "receivers": [_dipole_to_dict(d) for d in scene.receivers],
        "environment": [_dipole_to_dict(d) for d in scene.environment],
        "ris": [_dipole_to_dict(d) for d in scene.ris],
        "ris_off_detuning": scene.ris_off_detuning,
    }


def scene_from_dict(obj: dict) -> Scene:
    constants = PhysicalConstants(**obj.get("constants", {}))
    groups = {}
    for key in _GROUP_KEYS:
        groups[key] = tuple(_dipole_from_dict(e) for e in obj.get(key, []))
    return Scene(
        constants=constants,
        ris_off_detuning=float(obj.get("ris_off_detuning", 3.0)),
        **groups,
    )


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text()))
