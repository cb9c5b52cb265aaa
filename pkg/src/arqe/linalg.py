"""Dense complex linear algebra for small systems (2 <= d <= 16).

States are 1-D complex numpy arrays, operators are 2-D complex arrays.
The Hermitian eigensolver is a cyclic complex Jacobi iteration so results
do not depend on the LAPACK build; outputs follow a fixed phase convention
(first non-negligible component of every eigenvector is real positive).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, HermiticityError, UnitarityError

log = logging.getLogger(__name__)

MIN_DIM, MAX_DIM = 2, 16
HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
JACOBI_OFF_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100
DEGENERACY_GAP = 1e-9
PHASE_THRESHOLD = 1e-9
NORM_DRIFT_TOL = 1e-9

# cos/sin of a fixed irrational angle; mixes the Hermitian parts of a unitary
_MIX = (np.cos(0.7853981), np.sin(0.7853981) * np.sqrt(2.0) / 1.3)

_drift = {"count": 0}


def norm_drift_count() -> int:
    """Number of defensive renormalizations performed by measurements."""
    return _drift["count"]


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues and column eigenvectors.

    ``values`` are ascending reals for Hermitian input, unit-modulus phases
    sorted by principal argument in [0, 2pi) for unitary input.
    """

    values: np.ndarray
    vectors: np.ndarray
    kind: str = "hermitian"

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def vector(self, k: int) -> np.ndarray:
        return self.vectors[:, k]

    def angles(self) -> np.ndarray:
        """Eigenvalues as real numbers (eigenphase arguments for unitaries)."""
        if self.kind == "unitary":
            return np.mod(np.angle(self.values), 2.0 * np.pi)
        return self.values.real

    def clusters(self, gap: float = DEGENERACY_GAP) -> list[list[int]]:
        """Index groups whose eigenvalues coincide within ``gap``."""
        vals = self.values
        groups: list[list[int]] = []
        for k in range(len(vals)):
            for g in groups:
                if abs(vals[k] - vals[g[-1]]) < gap:
                    g.append(k)
                    break
            else:
                groups.append([k])
        return groups


def check_dim(matrix: np.ndarray) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {matrix.shape}")
    d = matrix.shape[0]
    if not MIN_DIM <= d <= MAX_DIM:
        raise DimensionError(f"dimension {d} outside [{MIN_DIM}, {MAX_DIM}]")
    return d


def check_hermitian(matrix) -> np.ndarray:
    H = np.asarray(matrix, dtype=complex)
    check_dim(H)
    err = np.max(np.abs(H - H.conj().T))
    if err > HERMITIAN_TOL:
        raise HermiticityError(f"matrix is not Hermitian (max deviation {err:.3g})")
    return H


def check_unitary(matrix) -> np.ndarray:
    U = np.asarray(matrix, dtype=complex)
    d = check_dim(U)
    err = np.max(np.abs(U @ U.conj().T - np.eye(d)))
    if err > UNITARY_TOL:
        raise UnitarityError(f"matrix is not unitary (max deviation {err:.3g})")
    return U


def _offdiag_norm(A):
    off = A - np.diag(np.diag(A))
    return np.sqrt(np.sum(off.real**2 + off.imag**2))


def jacobi_eigh(H: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Cyclic complex Jacobi on a Hermitian matrix.

    Returns unsorted eigenvalues, eigenvector columns and the sweep count.
    """
    A = np.array(H, dtype=complex)
    d = A.shape[0]
    V = np.eye(d, dtype=complex)
    tol = JACOBI_OFF_TOL * max(1.0, np.linalg.norm(A))
    sweeps = 0
    while sweeps < JACOBI_MAX_SWEEPS and _offdiag_norm(A) > tol:
        sweeps += 1
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                r = abs(apq)
                if r < 1e-300:
                    continue
                phase = apq / r
                theta = 0.5 * np.arctan2(2.0 * r, (A[q, q] - A[p, p]).real)
                c, s = np.cos(theta), np.sin(theta)
                # J = diag(1, conj(phase)) @ [[c, s], [-s, c]] on (p, q)
                jpp, jpq = c, s
                jqp, jqq = -s * np.conj(phase), c * np.conj(phase)
                colp, colq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = colp * jpp + colq * jqp
                A[:, q] = colp * jpq + colq * jqq
                rowp, rowq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = np.conj(jpp) * rowp + np.conj(jqp) * rowq
                A[q, :] = np.conj(jpq) * rowp + np.conj(jqq) * rowq
                A[p, q] = A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = vp * jpp + vq * jqp
                V[:, q] = vp * jpq + vq * jqq
    return np.diag(A).real.copy(), V, sweeps


def _gram_schmidt(V: np.ndarray, cols: list[int]) -> None:
    for i, k in enumerate(cols):
        v = V[:, k]
        for prev in cols[:i]:
            v = v - np.vdot(V[:, prev], v) * V[:, prev]
        V[:, k] = v / np.linalg.norm(v)


def _fix_phases(V: np.ndarray) -> None:
    for k in range(V.shape[1]):
        col = V[:, k]
        idx = int(np.argmax(np.abs(col) > PHASE_THRESHOLD))
        V[:, k] = col * (abs(col[idx]) / col[idx])


def hermitian_eigensystem(matrix) -> EigenSystem:
    H = check_hermitian(matrix)
    vals, V, _ = jacobi_eigh(H)
    order = np.argsort(vals, kind="stable")
    vals, V = vals[order], V[:, order]
    es = EigenSystem(vals, V, "hermitian")
    for group in es.clusters():
        if len(group) > 1:
            _gram_schmidt(V, group)
    _fix_phases(V)
    return es


def _refine(U: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Diagonalize ``U`` restricted to the span of ``basis`` columns."""
    sub = basis.conj().T @ U @ basis
    herm = (sub + sub.conj().T) / 2.0
    anti = (sub - sub.conj().T) / 2.0j
    for part in (herm, anti):
        if basis.shape[1] == 1:
            break
        vals, W, _ = jacobi_eigh(part)
        order = np.argsort(vals, kind="stable")
        basis = basis @ W[:, order]
        sub = basis.conj().T @ U @ basis
        herm = (sub + sub.conj().T) / 2.0
        anti = (sub - sub.conj().T) / 2.0j
    return basis


def unitary_eigensystem(matrix) -> EigenSystem:
    """Eigenphases and eigenvectors of a unitary (hence normal) matrix."""
    U = check_unitary(matrix)
    herm = (U + U.conj().T) / 2.0
    anti = (U - U.conj().T) / 2.0j
    mix = _MIX[0] * herm + _MIX[1] * anti
    vals, V, _ = jacobi_eigh((mix + mix.conj().T) / 2.0)
    order = np.argsort(vals, kind="stable")
    vals, V = vals[order], V[:, order]
    # split clusters of the mixed operator using the two Hermitian parts
    groups = EigenSystem(vals, V).clusters()
    for group in groups:
        if len(group) > 1:
            V[:, group] = _refine(U, V[:, group])
    phases = np.array([np.vdot(V[:, k], U @ V[:, k]) for k in range(V.shape[1])])
    phases = phases / np.abs(phases)
    args = np.mod(np.angle(phases), 2.0 * np.pi)
    args = np.where(args > 2.0 * np.pi - 1e-12, 0.0, args)
    order = np.argsort(args, kind="stable")
    phases, V = phases[order], V[:, order]
    es = EigenSystem(phases, V, "unitary")
    for group in es.clusters():
        if len(group) > 1:
            _gram_schmidt(V, group)
    _fix_phases(V)
    return es


def environment_from_observable(matrix) -> np.ndarray:
    """``exp(-i H)`` built from the Jacobi eigensystem of ``H``."""
    es = hermitian_eigensystem(matrix)
    V = es.vectors
    U = (V * np.exp(-1j * es.values)) @ V.conj().T
    return check_unitary(U)


def apply_unitary(U: np.ndarray, v: np.ndarray) -> np.ndarray:
    if U.shape[1] != v.shape[0]:
        raise DimensionError(f"operator {U.shape} cannot act on vector of length {v.shape[0]}")
    return U @ v


def measure_computational(v: np.ndarray, u: float) -> int:
    """Born-rule outcome for uniform variate ``u`` by cumulative-sum inversion."""
    probs = np.abs(np.asarray(v)) ** 2
    total = probs.sum()
    if abs(total - 1.0) > NORM_DRIFT_TOL:
        _drift["count"] += 1
        log.warning("state norm drifted to %.12g; renormalizing", total)
    cum = np.cumsum(probs / total)
    return int(min(np.searchsorted(cum, u, side="right"), len(probs) - 1))


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"fidelity of vectors with shapes {np.shape(a)} and {np.shape(b)}")
    return float(abs(np.vdot(a, b)) ** 2)


def basis_state(d: int, k: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[k] = 1.0
    return v


def load_matrix(path) -> tuple[str, np.ndarray]:
    """Read ``{"dim", "kind", "re", "im"}`` JSON and validate it."""
    data = json.loads(Path(path).read_text())
    return matrix_from_dict(data)


def matrix_from_dict(data: dict) -> tuple[str, np.ndarray]:
    kind = data.get("kind", "hermitian")
    re = np.asarray(data["re"], dtype=float)
    im = np.asarray(data.get("im", np.zeros_like(re)), dtype=float)
    M = re + 1j * im
    if M.shape != (data["dim"], data["dim"]):
        raise DimensionError(f"declared dim {data['dim']} but matrix has shape {M.shape}")
    if kind == "hermitian":
        return kind, check_hermitian(M)
    if kind == "unitary":
        return kind, check_unitary(M)
    raise ValueError(f"unknown matrix kind {kind!r}")


def matrix_to_dict(M: np.ndarray, kind: str) -> dict:
    return {"dim": M.shape[0], "kind": kind, "re": M.real.tolist(), "im": M.imag.tolist()}
