"""Genotype angles, codification gates and mutations."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .linalg import apply_unitary
from .pcf import PcfInterpolant, inverse_sample


@dataclass(frozen=True)
class Genotype:
    angles: tuple[float, ...]
    target: int
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.angles) != 2 * self.dim - 1:
            raise DimensionError(
                f"dimension {self.dim} needs {2 * self.dim - 1} angles, got {len(self.angles)}"
            )
        if not 0 <= self.target < self.dim:
            raise DimensionError(f"target index {self.target} outside [0, {self.dim})")

    @classmethod
    def zero(cls, dim: int, target: int = 0) -> "Genotype":
        return cls((0.0,) * (2 * dim - 1), target, dim)

    def to_json(self) -> str:
        return json.dumps({"dim": self.dim, "target": self.target, "angles": list(self.angles)})

    @classmethod
    def from_json(cls, text: str) -> "Genotype":
        data = json.loads(text)
        return cls(data["angles"], data["target"], data["dim"])


def single_qubit_gate(theta, phi, lam):
    """General single-qubit unitary U(theta, phi, lambda); broadcasts over inputs.

    Returns an array of shape ``broadcast_shape + (2, 2)``.
    """
    theta, phi, lam = np.broadcast_arrays(
        np.asarray(theta, dtype=float), np.asarray(phi, dtype=float), np.asarray(lam, dtype=float)
    )
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = -np.exp(1j * phi) * s
    out[..., 1, 0] = np.exp(1j * lam) * s
    out[..., 1, 1] = np.exp(1j * (phi + lam)) * c
    return out


def chain(dim: int, target: int) -> list[int]:
    """Basis ordering used by the two-level decomposition: target first."""
    return [target] + [k for k in range(dim) if k != target]


def codification_gates(angles, target: int, dim: int) -> np.ndarray:
    """Batched codification gates ``G`` for angle rows of shape ``(R, 2d-1)``.

    For ``dim == 2`` this is ``U(a0, a1, a2)``.  For larger dimensions it is
    the product ``B_{d-2} ... B_1 B_0`` of two-level blocks along
    ``chain(dim, target)``.  Block ``k`` is ``U(a_{2k}, a_{2k+1}, lam_k)`` with
    its second basis state mapped to ``c_k`` and its first to ``c_{k+1}``, so
    the amplitude carried down the chain passes through the phi-dependent
    column; ``lam_k`` is zero except on the last block, where it is the final
    angle.  Each block also carries the phase ``exp(i a_{2k}/2)``: a bare
    half-angle block turns into ``-1`` on its two-level subspace under
    ``a_{2k} -> a_{2k} + 2 pi``, which is a relative sign once ``d > 2``, and
    the phase cancels it so the gate stays 2 pi periodic in every angle.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape[-1] != 2 * dim - 1:
        raise DimensionError(f"dimension {dim} needs {2 * dim - 1} angles, got {angles.shape[-1]}")
    if dim == 2:
        return single_qubit_gate(angles[..., 0], angles[..., 1], angles[..., 2])
    batch = angles.shape[:-1]
    G = np.broadcast_to(np.eye(dim, dtype=complex), batch + (dim, dim)).copy()
    c = chain(dim, target)
    for k in range(dim - 1):
        lam = angles[..., 2 * dim - 2] if k == dim - 2 else 0.0
        B = single_qubit_gate(angles[..., 2 * k], angles[..., 2 * k + 1], lam)
        B = B * np.exp(0.5j * angles[..., 2 * k])[..., None, None]
        top, bottom = c[k + 1], c[k]
        row_top, row_bottom = G[..., top, :].copy(), G[..., bottom, :].copy()
        G[..., top, :] = B[..., 0, 0, None] * row_top + B[..., 0, 1, None] * row_bottom
        G[..., bottom, :] = B[..., 1, 0, None] * row_top + B[..., 1, 1, None] * row_bottom
    return G


def codification_gate(g: Genotype) -> np.ndarray:
    return codification_gates(np.asarray(g.angles), g.target, g.dim)


def prepared_state(g: Genotype) -> np.ndarray:
    """The quantum individual ``G(theta)|j>``."""
    return codification_gate(g)[:, g.target]


def protocol_states(G_enc, U, target: int, G_dec=None) -> np.ndarray:
    """Batched ``G_dec^dagger U G_enc |j>`` for gates of shape ``(R, d, d)``.

    ``G_dec`` defaults to ``G_enc``; distinct gates model independent noise on
    the encoding and decoding steps.
    """
    if G_dec is None:
        G_dec = G_enc
    evolved = G_enc[..., :, target] @ U.T
    return np.einsum("...ik,...i->...k", G_dec.conj(), evolved)


def protocol_state(g: Genotype, U: np.ndarray) -> np.ndarray:
    G = codification_gate(g)
    if U.shape != G.shape:
        raise DimensionError(f"environment {U.shape} does not match genotype dimension {g.dim}")
    psi = G.conj().T @ apply_unitary(U, G[:, g.target])
    return psi / np.linalg.norm(psi)


def mutate(g: Genotype, sampler: PcfInterpolant, alive: bool, rng, scale: float = 1.0) -> Genotype:
    """Apply ``theta_k += pi * eps_k`` with one fresh variate per angle, unless alive.

    ``scale`` multiplies every sampled ``eps_k`` (used by epsilon-scaling runs).
    """
    if alive:
        return g
    u = rng.random(len(g.angles))
    eps = scale * np.asarray(inverse_sample(sampler, u))
    return Genotype(tuple(np.asarray(g.angles) + np.pi * eps), g.target, g.dim)
