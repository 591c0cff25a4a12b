"""End-to-end channels: exact block inversion, the hierarchical power-series
expansions, and cascaded-model construction.

The three series levels share one engine. Each term is one matrix product
(running power, right-to-left), so a truncation at K costs O(K N^3). In auto
mode the sum stops when the latest term's 2-norm drops below ``tolerance``
times the accumulated sum's 2-norm; three consecutive growing term norms raise
:class:`DivergenceDetectedError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DivergenceDetectedError,
    EnergyConservationError,
    LengthMismatchError,
)
from .numerics import BlockIndexMap, invert, solve, spectral_norm
from .physics import (
    RisConfiguration,
    Scene,
    apply_ris_config,
    assemble_interaction_matrix,
    inverse_polarizability,
)


@dataclass(frozen=True)
class SeriesTruncation:
    """Truncation policy for the Born / Born-like series."""

    k: Optional[int] = None
    mode: str = "fixed"  # "fixed" | "auto"
    tolerance: float = 1e-12
    max_terms: int = 2000

    def __post_init__(self):
        if self.mode not in ("fixed", "auto"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "fixed":
            if self.k is None or self.k < 1:
                raise ValueError("fixed truncation requires k >= 1")
        else:
            if self.tolerance <= 0.0:
                raise ValueError("auto truncation requires tolerance > 0")

    @classmethod
    def fixed(cls, k: int) -> "SeriesTruncation":
        return cls(k=k, mode="fixed")

    @classmethod
    def auto(cls, tolerance: float = 1e-12, max_terms: int = 2000) -> "SeriesTruncation":
        return cls(k=None, mode="auto", tolerance=tolerance, max_terms=max_terms)


@dataclass(frozen=True)
class ChannelMatrix:
    """N_R x N_T channel with the frequency and computation path it came from."""

    entries: np.ndarray
    frequency: float
    provenance: str = "exact"

    def __post_init__(self):
        object.__setattr__(
            self, "entries", np.asarray(self.entries, dtype=complex)
        )

    @property
    def siso(self) -> complex:
        if self.entries.shape != (1, 1):
            raise ValueError(f"channel is {self.entries.shape}, not SISO")
        return complex(self.entries[0, 0])


def _sum_power_series(
    t0: np.ndarray,
    ratio: np.ndarray,
    trunc: SeriesTruncation,
    side: str,
    level: str,
) -> tuple[np.ndarray, int]:
    """Sum_{k<K} ratio^k @ t0 (side 'left') or t0 @ ratio^k (side 'right')."""
    total = t0.copy()
    term = t0
    if trunc.mode == "fixed":
        for _ in range(trunc.k - 1):
            term = ratio @ term if side == "left" else term @ ratio
            total = total + term
        return total, trunc.k
    grow_run = 0
    prev_norm = None
    for k in range(1, trunc.max_terms):
        term = ratio @ term if side == "left" else term @ ratio
        total = total + term
        term_norm = spectral_norm(term)
        if prev_norm is not None and term_norm > prev_norm:
            grow_run += 1
            if grow_run >= 3:
                raise DivergenceDetectedError(
                    f"{level}: term 2-norm grew for 3 consecutive terms "
                    f"(k = {k}, ||term|| = {term_norm:.3e})"
                )
        else:
            grow_run = 0
        prev_norm = term_norm
        if term_norm <= trunc.tolerance * spectral_norm(total):
            return total, k + 1
    raise DivergenceDetectedError(
        f"{level}: no convergence within {trunc.max_terms} terms"
    )


# ---------------------------------------------------------------------------
# Exact channel
# ---------------------------------------------------------------------------


class RisChannelSolver:
    """Exact channels for many configurations of one scene at one frequency.

    The interaction matrix depends on the configuration only through the
    S-block diagonal, so assembly is done once and each configuration costs a
    diagonal update plus one LU solve. Results are bit-identical to
    :func:`channel_exact` on the freshly configured scene.
    """

    def __init__(self, scene: Scene, f: float):
        self.scene = scene
        self.f = f
        self._w, self._bm = assemble_interaction_matrix(scene, f)
        s_off = self._bm.offset("S")
        self._s_idx = np.arange(s_off, s_off + self._bm.n_s)
        f0 = scene.constants.f0
        self._inv_alpha_on = np.array(
            [
                inverse_polarizability(
                    _retuned(d, f0), f, scene.constants
                )
                for d in scene.ris
            ],
            dtype=complex,
        )
        self._inv_alpha_off = np.array(
            [
                inverse_polarizability(
                    _retuned(d, scene.f_off), f, scene.constants
                )
                for d in scene.ris
            ],
            dtype=complex,
        )

    def interaction_matrix(self, config: RisConfiguration) -> np.ndarray:
        if config.n != self._bm.n_s:
            raise LengthMismatchError(
                f"configuration has {config.n} bits, scene has {self._bm.n_s}"
            )
        w = self._w.copy()
        if self._bm.n_s:
            bits = np.asarray(config.bits, dtype=bool)
            w[self._s_idx, self._s_idx] = np.where(
                bits, self._inv_alpha_on, self._inv_alpha_off
            )
        return w

    def channel(self, config: RisConfiguration) -> ChannelMatrix:
        w = self.interaction_matrix(config)
        bm = self._bm
        cols = solve(w, np.eye(bm.n_total, dtype=complex)[:, bm.sl("T")])
        h = cols[bm.sl("R"), :]
        return ChannelMatrix(h, self.f, provenance="exact")


def _retuned(d, f_res):
    from dataclasses import replace

    return replace(d, f_res=f_res)


def channel_exact(scene: Scene, config: RisConfiguration, f: float) -> ChannelMatrix:
    """Exact channel: assemble W for the configured scene, solve, extract the
    RT block of the inverse (proportionality constant fixed to 1)."""
    return RisChannelSolver(scene, f).channel(config)


def channel_frequency_sweep(
    scene: Scene, config: RisConfiguration, f_grid: np.ndarray
) -> np.ndarray:
    """Exact channels on a frequency grid, shape (n_f, N_R, N_T).

    Distances are computed once and the Hankel evaluations are batched over
    the whole grid, which is what makes impulse responses affordable.
    """
    from .numerics import hankel0_2

    scene_c = apply_ris_config(scene, config)
    f_grid = np.asarray(f_grid, dtype=float)
    bm = scene_c.block_map
    n = bm.n_total
    pos = scene_c.positions()
    iu, ju = np.triu_indices(n, k=1)
    diff = pos[iu] - pos[ju]
    dist = np.hypot(diff[:, 0], diff[:, 1])
    cst = scene_c.constants
    k_grid = 2.0 * np.pi * f_grid / cst.c
    pref = k_grid**2 / (4.0 * cst.epsilon * cst.delta)

    dip = list(scene_c.dipoles())
    f_res = np.array([d.f_res for d in dip])
    chi2 = np.array([d.chi for d in dip]) ** 2
    g_l = np.array([d.gamma_l for d in dip])
    g_r = np.array([d.gamma_r for d in dip])

    if dist.size:
        hank = hankel0_2(np.outer(k_grid, dist))  # (n_f, n_pairs)
    out = np.empty((f_grid.size, bm.n_r, bm.n_t), dtype=complex)
    eye_t = np.eye(n, dtype=complex)[:, bm.sl("T")]
    for i, f in enumerate(f_grid):
        diag = (f_res**2 - f**2) / chi2 + 1j * (g_r + f * g_l) / chi2
        mu = cst.radiation_floor(f)
        if (diag.imag < mu).any():
            j = int(np.argmin(diag.imag))
            raise EnergyConservationError(
                f"dipole {j}: Im(1/alpha) = {diag.imag[j]:.6g} below mu(f) = "
                f"{mu:.6g} at f = {f:.6g}"
            )
        w = np.zeros((n, n), dtype=complex)
        if dist.size:
            vals = 1j * pref[i] * hank[i]
            w[iu, ju] = vals
            w[ju, iu] = vals
        np.fill_diagonal(w, diag)
        cols = solve(w, eye_t)
        out[i] = cols[bm.sl("R"), :]
    return out


# ---------------------------------------------------------------------------
# Series expansions
# ---------------------------------------------------------------------------


def antenna_self_inverse_series(
    scene: Scene, f: float, trunc: SeriesTruncation, group: str = "T"
) -> np.ndarray:
    """Born series for the self-block inverse: sum_k (-Omega M)^k Omega.

    Omega is the diagonal of polarizabilities of the chosen group, M the
    off-diagonal Green's part of that group's block. K = 1 returns Omega,
    the no-mutual-coupling assumption.
    """
    w, bm = assemble_interaction_matrix(scene, f)
    block = bm.block(w, group, group)
    return self_inverse_series_from_block(block, trunc)


def self_inverse_series_from_block(
    block: np.ndarray, trunc: SeriesTruncation
) -> np.ndarray:
    """Same series, starting from an already-extracted diagonal-plus-coupling block."""
    inv_alpha = np.diag(block)
    omega = np.diag(1.0 / inv_alpha)
    m = block - np.diag(inv_alpha)
    ratio = -omega @ m
    total, _ = _sum_power_series(omega, ratio, trunc, side="left", level="antenna-self")
    return total


def mimo_series_rt(
    scene: Scene, f: float, trunc: SeriesTruncation
) -> ChannelMatrix:
    """Born-like series for the RT block of a TX/RX-only scene (round trips).

    K = 1 gives the no-round-trip channel -W_RR^-1 W_RT W_TT^-1; each further
    term appends one TX-RX-TX round trip.
    """
    bm = scene.block_map
    if bm.n_e or bm.n_s:
        raise ValueError("mimo_series_rt expects a scene with only T and R groups")
    w, bm = assemble_interaction_matrix(scene, f)
    w_tt = bm.block(w, "T", "T")
    w_tr = bm.block(w, "T", "R")
    w_rt = bm.block(w, "R", "T")
    w_rr = bm.block(w, "R", "R")
    inv_tt = invert(w_tt)
    inv_rr = invert(w_rr)
    prefix = -inv_rr @ w_rt @ inv_tt
    ratio = w_tr @ inv_rr @ w_rt @ inv_tt
    total, k_used = _sum_power_series(prefix, ratio, trunc, side="right", level="mimo")
    return ChannelMatrix(total, f, provenance=f"series(k={k_used}, level=mimo)")


def mimo_ratio_matrix(scene: Scene, f: float) -> np.ndarray:
    """Common ratio W_TR W_RR^-1 W_RT W_TT^-1 of the round-trip series."""
    w, bm = assemble_interaction_matrix(scene, f)
    w_tt = bm.block(w, "T", "T")
    w_tr = bm.block(w, "T", "R")
    w_rt = bm.block(w, "R", "T")
    w_rr = bm.block(w, "R", "R")
    return w_tr @ invert(w_rr) @ w_rt @ invert(w_tt)


def wss_inverse_series(
    phi: np.ndarray, m_ss: np.ndarray, trunc: SeriesTruncation
) -> np.ndarray:
    """Born series sum_k (Phi M_SS)^k Phi for the RIS-block inverse.

    ``phi`` holds the polarizabilities of the configured RIS elements
    (diagonal entries). K = 1 yields diag(phi): mutual coupling neglected.
    """
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    m_ss = np.asarray(m_ss, dtype=complex)
    if m_ss.shape != (phi.size, phi.size):
        raise ValueError("m_ss shape does not match phi length")
    t0 = np.diag(phi)
    ratio = phi[:, None] * m_ss
    total, _ = _sum_power_series(t0, ratio, trunc, side="left", level="ris-mutual")
    return total


def _schur_series_rt(
    scene: Scene,
    config: RisConfiguration,
    f: float,
    trunc: SeriesTruncation,
    wss_trunc: Optional[SeriesTruncation],
    level: str,
) -> ChannelMatrix:
    scene_c = apply_ris_config(scene, config)
    w, bm = assemble_interaction_matrix(scene_c, f)
    n3 = bm.n_t + bm.n_r + bm.n_e
    s = slice(n3, bm.n_total)
    w3 = w[:n3, :n3]
    w3_inv = invert(w3)
    if bm.n_s:
        w_3s = w[:n3, s]
        w_s3 = w[s, :n3]
        w_ss = w[s, s]
        if wss_trunc is None:
            wss_inv = invert(w_ss)
        else:
            inv_alpha_s = np.diag(w_ss)
            m_ss = w_ss - np.diag(inv_alpha_s)
            wss_inv = wss_inverse_series(1.0 / inv_alpha_s, m_ss, wss_trunc)
        ratio = w_3s @ wss_inv @ w_s3 @ w3_inv
    else:
        ratio = np.zeros((n3, n3), dtype=complex)
    total, k_used = _sum_power_series(w3_inv, ratio, trunc, side="right", level=level)
    h = total[bm.sl("R"), bm.sl("T")]
    return ChannelMatrix(h, f, provenance=f"series(k={k_used}, level={level})")


def ris_free_space_series(
    scene: Scene,
    config: RisConfiguration,
    f: float,
    trunc: SeriesTruncation,
    wss_trunc: Optional[SeriesTruncation] = None,
) -> ChannelMatrix:
    """Born-like series for the RT channel of a free-space RIS scene.

    The common ratio is W_1S W_SS^-1 W_S1 W_1^-1; W_SS^-1 is exact by default
    or itself truncated via ``wss_trunc``. K = 1 drops the RIS entirely.
    """
    if scene.block_map.n_e:
        raise ValueError("ris_free_space_series requires an empty environment group")
    return _schur_series_rt(scene, config, f, trunc, wss_trunc, "ris-free-space")


def generic_series_rt(
    scene: Scene,
    config: RisConfiguration,
    f: float,
    trunc: SeriesTruncation,
    wss_trunc: Optional[SeriesTruncation] = None,
) -> ChannelMatrix:
    """Born-like series for the RT channel in a generic scattering environment.

    Identical machinery with the T, R, E groups folded into one outer block;
    with an empty E group this reduces bitwise to :func:`ris_free_space_series`.
    """
    return _schur_series_rt(scene, config, f, trunc, wss_trunc, "generic")


def schur_ratio_matrix(
    scene: Scene, config: RisConfiguration, f: float
) -> np.ndarray:
    """Common ratio W_3S W_SS^-1 W_S3 W_3^-1 of the generic (or free-space) series."""
    scene_c = apply_ris_config(scene, config)
    w, bm = assemble_interaction_matrix(scene_c, f)
    n3 = bm.n_t + bm.n_r + bm.n_e
    if not bm.n_s:
        return np.zeros((n3, n3), dtype=complex)
    s = slice(n3, bm.n_total)
    return w[:n3, s] @ invert(w[s, s]) @ w[s, :n3] @ invert(w[:n3, :n3])


# ---------------------------------------------------------------------------
# Cascaded model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CascadedModel:
    """Affine channel model H0 + H1 diag(v) H2 with v the RIS polarizabilities.

    ``predict`` maps a binary configuration to its ON/OFF polarizability values
    and evaluates the affine form; ``predict_values`` takes an arbitrary value
    vector (useful for synthetic checks, e.g. v = 0 returns H0).
    """

    h0_block: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    alpha_on: np.ndarray
    alpha_off: np.ndarray
    frequency: float
    environment: str = "free-space"
    pruned: bool = field(default=False)

    @property
    def n_s(self) -> int:
        return self.h1.shape[1]

    def ris_values(self, config: RisConfiguration) -> np.ndarray:
        if config.n != self.n_s:
            raise LengthMismatchError(
                f"configuration has {config.n} bits, model has {self.n_s}"
            )
        bits = np.asarray(config.bits, dtype=bool)
        return np.where(bits, self.alpha_on, self.alpha_off)

    def predict_values(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=complex).reshape(-1)
        if values.size != self.n_s:
            raise LengthMismatchError(
                f"value vector has {values.size} entries, model has {self.n_s}"
            )
        return self.h0_block + self.h1 @ (values[:, None] * self.h2)

    def predict(self, config: RisConfiguration) -> ChannelMatrix:
        h = self.predict_values(self.ris_values(config))
        return ChannelMatrix(
            h, self.frequency, provenance=f"cascaded({self.environment})"
        )

    # SISO reductions h = h0 + t . v with t = h1 (.) h2
    @property
    def h0(self) -> complex:
        if self.h0_block.shape != (1, 1):
            raise ValueError("SISO reduction requires N_T = N_R = 1")
        return complex(self.h0_block[0, 0])

    @property
    def t(self) -> np.ndarray:
        if self.h0_block.shape != (1, 1):
            raise ValueError("SISO reduction requires N_T = N_R = 1")
        return self.h1[0, :] * self.h2[:, 0]


def cascaded_from_blocks(
    scene: Scene,
    f: float,
    environment: str = "free-space",
    prune_assumption2: bool = False,
) -> CascadedModel:
    """Cascaded model built from the exact sub-inverse blocks.

    H0 is the RT block of the inverse of the non-RIS part; H1 and H2 collect
    the one-RIS-encounter path families; the RIS response enters as the
    diagonal of polarizabilities (mutual coupling between RIS elements
    neglected). ``prune_assumption2`` additionally drops the path families
    that start RIS-to-TX (in H1) or end RX-to-RIS (in H2), which is the
    weak-antenna simplification; by default both summands are kept.
    """
    if environment not in ("free-space", "generic"):
        raise ValueError(f"unknown environment {environment!r}")
    bm = scene.block_map
    if environment == "free-space" and bm.n_e:
        raise ValueError("free-space cascaded model requires an empty E group")
    w, bm = assemble_interaction_matrix(scene, f)
    n3 = bm.n_t + bm.n_r + bm.n_e
    s = slice(n3, bm.n_total)
    w3_inv = invert(w[:n3, :n3])
    t_sl = bm.sl("T")
    r_sl = bm.sl("R")
    e_sl = bm.sl("E")
    h0 = w3_inv[r_sl, t_sl]
    h1 = w3_inv[r_sl, r_sl] @ w[r_sl, s]
    h2 = w[s, t_sl] @ w3_inv[t_sl, t_sl]
    if not prune_assumption2:
        h1 = h1 + w3_inv[r_sl, t_sl] @ w[t_sl, s]
        h2 = h2 + w[s, r_sl] @ w3_inv[r_sl, t_sl]
    if bm.n_e:
        h1 = h1 + w3_inv[r_sl, e_sl] @ w[e_sl, s]
        h2 = h2 + w[s, e_sl] @ w3_inv[e_sl, t_sl]
    f0 = scene.constants.f0
    alpha_on = np.array(
        [1.0 / inverse_polarizability(_retuned(d, f0), f, scene.constants)
         for d in scene.ris],
        dtype=complex,
    )
    alpha_off = np.array(
        [1.0 / inverse_polarizability(_retuned(d, scene.f_off), f, scene.constants)
         for d in scene.ris],
        dtype=complex,
    )
    return CascadedModel(
        h0_block=h0,
        h1=h1,
        h2=h2,
        alpha_on=alpha_on,
        alpha_off=alpha_off,
        frequency=f,
        environment=environment,
        pruned=prune_assumption2,
    )


def cascaded_predict(model: CascadedModel, config: RisConfiguration) -> ChannelMatrix:
    """Affine evaluation of a cascaded model for a binary RIS configuration."""
    return model.predict(config)
