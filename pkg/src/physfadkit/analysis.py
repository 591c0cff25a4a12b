"""Convergence constants, truncation and round-trip bounds, the hollow-symmetric
norm bound, and the reverberation bounce estimate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    HeterogeneousAlphaError,
    NotConvergentError,
    NotHollowSymmetricError,
)
from .numerics import hankel0_2, spectral_norm
from .physics import (
    DEFAULT_CONSTANTS,
    D_MIN,
    PhysicalConstants,
    Scene,
    inverse_polarizability,
)


@dataclass(frozen=True)
class CouplingConstant:
    """Dimensionless array characteristic C = |alpha| * max off-diagonal |G| row sum.

    The series with this common ratio is certified convergent only for value < 1.
    """

    value: float
    alpha_magnitude: float
    max_row_sum: float
    group: Optional[str] = None

    @property
    def convergent(self) -> bool:
        return self.value < 1.0


def _green_abs_row_sums(
    positions: np.ndarray, k: float, constants: PhysicalConstants
) -> np.ndarray:
    n = positions.shape[0]
    if n < 2:
        return np.zeros(n)
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    off = ~np.eye(n, dtype=bool)
    if dist[off].min() < D_MIN * constants.lambda0:
        raise ValueError(
            f"pairwise distance {dist[off].min():.4g} below d_min = "
            f"{D_MIN * constants.lambda0:.4g}"
        )
    pref = k * k / (4.0 * constants.epsilon * constants.delta)
    g_abs = np.zeros((n, n))
    g_abs[off] = pref * np.abs(hankel0_2(k * dist[off]))
    return g_abs.sum(axis=1)


def coupling_constant(
    alphas: Sequence[complex],
    positions: np.ndarray,
    k: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    group: Optional[str] = None,
) -> CouplingConstant:
    """C = |alpha| * max_i sum_{j != i} |G_ij| for identical-magnitude elements.

    Raises :class:`HeterogeneousAlphaError` when the |alpha_i| differ by more
    than 1e-9 relative, since the formula assumes identical elements.
    """
    alphas = np.asarray(alphas, dtype=complex).reshape(-1)
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if alphas.size != positions.shape[0]:
        raise ValueError("alphas and positions must have matching lengths")
    if alphas.size == 0:
        raise ValueError("need at least one element")
    mags = np.abs(alphas)
    a = float(mags[0])
    if a == 0.0 or (np.abs(mags - a) > 1e-9 * a).any():
        raise HeterogeneousAlphaError(
            "coupling constant assumes identical |alpha| across elements "
            f"(spread {mags.min():.6g}..{mags.max():.6g})"
        )
    row_sums = _green_abs_row_sums(positions, k, constants)
    max_row = float(row_sums.max()) if row_sums.size else 0.0
    return CouplingConstant(
        value=a * max_row, alpha_magnitude=a, max_row_sum=max_row, group=group
    )


def coupling_constant_for_group(
    scene: Scene, group: str, f: float
) -> CouplingConstant:
    """Coupling constant of one dipole group of a scene at frequency f."""
    dipoles = {
        "T": scene.transmitters,
        "R": scene.receivers,
        "E": scene.environment,
        "S": scene.ris,
    }[group]
    alphas = [
        1.0 / inverse_polarizability(d, f, scene.constants) for d in dipoles
    ]
    positions = np.array([[d.x, d.y] for d in dipoles], dtype=float).reshape(-1, 2)
    k = scene.constants.wavenumber(f)
    return coupling_constant(alphas, positions, k, scene.constants, group=group)


def truncation_error_bound(c: float, k: int) -> float:
    """Normalized truncation-error bound C^K (1 + C) / (1 - C) after K terms."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if c < 0.0:
        raise ValueError("coupling constant must be >= 0")
    if c >= 1.0:
        raise NotConvergentError(
            f"coupling constant {c:.6g} >= 1: series not certified convergent"
        )
    return c**k * (1.0 + c) / (1.0 - c)


def mimo_ratio_bound(scene: Scene, f: float) -> float:
    """Upper bound on the round-trip ratio norm ||W_TR W_RR^-1 W_RT W_TT^-1||_2.

    Equals |a_T|/(1-C_T) * |a_R|/(1-C_R) * N_T N_R * (k^2/(4 eps delta))^2
    * |H0^(2)(k D_RT)|^2 with D_RT the smallest TX-RX distance. The Green's
    prefactor enters squared, once per cross block; the factor is attained
    (up to the 1/(1-C) slack) when all TX-RX pairs are equidistant.
    """
    bm = scene.block_map
    if bm.n_t == 0 or bm.n_r == 0:
        raise ValueError("scene needs nonempty T and R groups")
    c_t = coupling_constant_for_group(scene, "T", f)
    c_r = coupling_constant_for_group(scene, "R", f)
    if not c_t.convergent or not c_r.convergent:
        raise NotConvergentError(
            f"C_T = {c_t.value:.4g}, C_R = {c_r.value:.4g}: need both < 1"
        )
    pos_t = np.array([[d.x, d.y] for d in scene.transmitters])
    pos_r = np.array([[d.x, d.y] for d in scene.receivers])
    diff = pos_t[:, None, :] - pos_r[None, :, :]
    d_rt = float(np.hypot(diff[..., 0], diff[..., 1]).min())
    cst = scene.constants
    k = cst.wavenumber(f)
    pref = k * k / (4.0 * cst.epsilon * cst.delta)
    h_abs = abs(hankel0_2(k * d_rt))
    return (
        (c_t.alpha_magnitude / (1.0 - c_t.value))
        * (c_r.alpha_magnitude / (1.0 - c_r.value))
        * bm.n_t
        * bm.n_r
        * pref**2
        * h_abs**2
    )


def hollow_symmetric_norm_bound(a: np.ndarray, diag_tol: float = 1e-12) -> float:
    """Row-sum bound max_i sum_{j != i} |a_ij| for complex symmetric hollow A.

    Guaranteed to dominate the spectral norm for this matrix class (Gershgorin
    analog for the antilinear eigenproblem of complex symmetric matrices).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHollowSymmetricError("expected a square matrix")
    if a.size == 0:
        return 0.0
    if np.abs(np.diag(a)).max(initial=0.0) > diag_tol:
        raise NotHollowSymmetricError(
            f"diagonal magnitude exceeds {diag_tol:g}: matrix is not hollow"
        )
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise NotHollowSymmetricError("matrix is not complex symmetric (A != A^T)")
    off = np.abs(a).copy()
    np.fill_diagonal(off, 0.0)
    return float(off.sum(axis=1).max())


@dataclass(frozen=True)
class BounceEstimate:
    """Reverberation-derived estimate of the required series truncation order."""

    tau: float
    volume: float
    n_s: int
    sigma_s: float
    a_e: float
    n_bounces: float
    k_est: float


def bounce_estimate(
    tau: float,
    volume: float,
    n_s: int,
    sigma_s: float,
    a_e: float,
    c: float = 1.0,
) -> BounceEstimate:
    """Bounce count N = tau c / V^(1/3) and truncation order K = (N_S sigma_S / A_E) N.

    Order-of-magnitude heuristic for roughly cubic enclosures; sigma_s is a
    user-supplied per-element scattering cross-section.
    """
    if tau < 0.0:
        raise ValueError("tau must be >= 0")
    if min(volume, sigma_s, a_e, c) <= 0.0 or n_s <= 0:
        raise ValueError("volume, sigma_s, a_e, c must be > 0 and n_s >= 1")
    n_bounces = tau * c / volume ** (1.0 / 3.0)
    k_est = (n_s * sigma_s / a_e) * n_bounces
    return BounceEstimate(
        tau=tau,
        volume=volume,
        n_s=n_s,
        sigma_s=sigma_s,
        a_e=a_e,
        n_bounces=n_bounces,
        k_est=k_est,
    )


def measured_self_ratio_norm(scene: Scene, group: str, f: float) -> float:
    """Measured ||Omega M||_2 for one group's block (the quantity C bounds)."""
    from .physics import assemble_interaction_matrix

    w, bm = assemble_interaction_matrix(scene, f)
    block = bm.block(w, group, group)
    inv_alpha = np.diag(block)
    omega = np.diag(1.0 / inv_alpha)
    m = block - np.diag(inv_alpha)
    return spectral_norm(omega @ m)
