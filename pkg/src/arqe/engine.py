"""The adaptive eigensolver loop: shots, death/alive feedback, reward/punishment.

Every repetition ``i`` of an ensemble owns two random streams derived from
``(master_seed, i)``: a uniform stream feeding measurements and mutations
(``1 + n_angles`` variates per iteration) and a normal stream feeding optional
gate noise.  Repetitions are simulated in lockstep as numpy batches; since
all batched operations are elementwise per repetition, results do not depend
on how repetitions are grouped or scheduled.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArqeError
from .genotype import Genotype, codification_gates, protocol_states
from .linalg import EigenSystem, check_unitary
from .pcf import (
    KnotSet,
    check_knots,
    cubic_coefficients,
    full_points,
    invert_symmetric,
    scale_arrays,
)

SCALING_MODES = ("knots", "epsilon")
CHUNK = 64
HIST_BINS = 20


@dataclass(frozen=True)
class RpState:
    """Reward/punishment scale ``w`` with constants ``r < 1 < p`` and threshold ``delta``.

    Punishment never raises ``w`` above ``w_max`` (``None`` disables the cap);
    the default cap of 1 keeps scaled knots inside [-1, 0].
    """

    w: float = 1.0
    r: float = 0.9
    p: float = 1.0 / 0.9
    delta: float = 0.1
    w_max: float | None = 1.0

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ArqeError(f"reward constant must lie in (0, 1), got {self.r}")
        if not self.p > 1.0:
            raise ArqeError(f"punishment constant must exceed 1, got {self.p}")
        # r*p >= 1 up to rounding of e.g. p = 1/r
        if self.r * self.p < 1.0 - 1e-12:
            raise ArqeError(f"r*p must be >= 1, got {self.r * self.p}")
        if not 0.0 < self.delta < 1.0:
            raise ArqeError(f"threshold must lie in (0, 1), got {self.delta}")
        if not self.w > 0.0:
            raise ArqeError(f"scale w must be positive, got {self.w}")
        if self.w_max is not None and not self.w_max >= self.w:
            raise ArqeError(f"w_max must be >= w, got {self.w_max}")


def rp_update(s: RpState, alive: bool) -> RpState:
    w = s.w * (s.r if alive else s.p)
    if s.w_max is not None:
        w = min(w, s.w_max)
    return replace(s, w=w)


def converged(s: RpState) -> bool:
    return s.w < s.delta


def minimal_convergence_count(r: float, delta: float, w0: float = 1.0) -> int:
    """Iterations needed when every shot survives, by repeated multiplication."""
    w, n = w0, 0
    while not w < delta:
        w *= r
        n += 1
    return n


@dataclass(frozen=True, eq=False)
class RunConfig:
    environment: np.ndarray
    reference: EigenSystem
    knots: KnotSet
    rp: RpState = field(default_factory=RpState)
    target: int = 0
    max_iterations: int = 2000
    scaling_mode: str = "knots"
    gate_noise_sigma: float = 0.0
    # run exactly this many iterations and ignore convergence (accuracy criteria)
    fixed_iterations: int | None = None

    def __post_init__(self):
        U = check_unitary(self.environment)
        object.__setattr__(self, "environment", U)
        check_knots(self.knots)
        if self.reference.dim != U.shape[0]:
            raise ArqeError("reference eigensystem dimension does not match environment")
        if not 0 <= self.target < U.shape[0]:
            raise ArqeError(f"target index {self.target} outside [0, {U.shape[0]})")
        if self.max_iterations < 1:
            raise ArqeError("max_iterations must be >= 1")
        if self.fixed_iterations is not None and self.fixed_iterations < 1:
            raise ArqeError("fixed_iterations must be >= 1")
        if self.scaling_mode not in SCALING_MODES:
            raise ArqeError(f"scaling_mode must be one of {SCALING_MODES}")
        if self.gate_noise_sigma < 0.0:
            raise ArqeError("gate_noise_sigma must be >= 0")

    @property
    def dim(self) -> int:
        return self.environment.shape[0]

    @property
    def n_angles(self) -> int:
        return 2 * self.dim - 1

    @property
    def limit(self) -> int:
        return self.fixed_iterations or self.max_iterations


@dataclass(frozen=True)
class IterationRecord:
    t: int
    m: int
    alive: bool
    w: float
    fidelity: float
    eigenindex: int


@dataclass(frozen=True, eq=False)
class RunTrace:
    records: list[IterationRecord]
    converged: bool
    iterations: int
    final_genotype: Genotype
    final_w: float
    eigenindex: int
    fidelity: float
    seed: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "m", "alive", "w", "fidelity", "eigenindex"])
        for r in self.records:
            writer.writerow([r.t, r.m, int(r.alive), repr(r.w), repr(r.fidelity), r.eigenindex])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# random streams


class RepStream:
    """Uniform and normal generators for one repetition."""

    def __init__(self, master_seed: int, rep: int):
        self.uniform = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(rep, 0)))
        )
        self.normal = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(rep, 1)))
        )


class _ChunkedStreams:
    """Per-repetition variates served one iteration at a time from chunks."""

    def __init__(self, master_seed, reps, width, noise_width):
        self.streams = [RepStream(master_seed, int(i)) for i in reps]
        self.width, self.noise_width = width, noise_width
        self.chunk_index = -1

    def block(self, t, rows):
        """Variates for iteration ``t`` (0-based) of the given batch rows."""
        c = t // CHUNK
        if c != self.chunk_index:
            R = len(self.streams)
            self.u = np.zeros((R, CHUNK, self.width))
            self.z = np.zeros((R, CHUNK, self.noise_width)) if self.noise_width else None
            for r in rows:
                s = self.streams[r]
                self.u[r] = s.uniform.random((CHUNK, self.width))
                if self.noise_width:
                    self.z[r] = s.normal.standard_normal((CHUNK, self.noise_width))
            self.chunk_index = c
        k = t % CHUNK
        return self.u[rows, k], (self.z[rows, k] if self.noise_width else None)


# ---------------------------------------------------------------------------
# batched kernels


class _Sampler:
    """Mutation sampler for a batch of scale factors under one scaling mode."""

    def __init__(self, knots: KnotSet, mode: str):
        self.xs = np.asarray(knots.xs)
        self.ys = np.asarray(knots.ys)
        self.secant = knots.secant_start
        self.mode = mode
        X, Y = full_points(self.xs, self.ys)
        self.base = (X, Y, cubic_coefficients(X, Y, self.secant)[0])

    def sample(self, w, u):
        """Mutations ``eps`` of shape ``u.shape`` for scale factors ``w``."""
        if self.mode == "knots":
            sx, sy = scale_arrays(self.xs, self.ys, w)
            X, Y = full_points(sx, sy)
            coeffs, _ = cubic_coefficients(X, Y, self.secant)
            return invert_symmetric(X, Y, coeffs, u)
        n = len(w)
        X, Y, coeffs = (np.broadcast_to(a, (n,) + a.shape) for a in self.base)
        return w[:, None] * invert_symmetric(X, Y, coeffs, u)


def _apply(G_col, M):
    # rows of G_col (R, d) times M^T, accumulated in a fixed order
    out = np.zeros_like(G_col)
    for i in range(G_col.shape[1]):
        out += G_col[:, i, None] * M[None, :, i]
    return out


def _shot_probabilities(angles, config: RunConfig, noise):
    j, d, U = config.target, config.dim, config.environment
    if noise is None:
        G_enc = G_dec = codification_gates(angles, j, d)
    else:
        sigma, na = config.gate_noise_sigma, config.n_angles
        G_enc = codification_gates(angles + sigma * noise[:, :na], j, d)
        G_dec = codification_gates(angles + sigma * noise[:, na:], j, d)
    evolved = _apply(G_enc[:, :, j], U)
    psi = np.zeros_like(evolved)
    for i in range(d):
        psi += G_dec[:, i, :].conj() * evolved[:, i, None]
    probs = psi.real**2 + psi.imag**2
    return probs / probs.sum(axis=1, keepdims=True)


def _advance(angles, w, u, noise, config: RunConfig, sampler: _Sampler):
    """One protocol iteration for a batch; returns (angles', w', m, alive)."""
    probs = _shot_probabilities(angles, config, noise)
    cum = np.cumsum(probs, axis=1)
    m = np.minimum((cum <= u[:, :1]).sum(axis=1), config.dim - 1)
    alive = m == config.target
    w = w * np.where(alive, config.rp.r, config.rp.p)
    if config.rp.w_max is not None:
        w = np.minimum(w, config.rp.w_max)
    dead = ~alive
    if dead.any():
        angles = angles.copy()
        eps = sampler.sample(w[dead], u[dead, 1:])
        angles[dead] += np.pi * eps
    return angles, w, m, alive


def match_scores(states, reference: EigenSystem):
    """Overlap weight of each state on each eigenvector, clusters pooled.

    Returns ``(scores, owner)`` where ``scores[:, k]`` is the weight on the
    cluster containing eigenvector ``k`` and ``owner[k]`` is that cluster's
    lowest index.
    """
    states = np.asarray(states)
    V = reference.vectors.conj()
    # fixed accumulation order keeps results independent of batch size
    amps = np.zeros((states.shape[0], V.shape[1]), dtype=complex)
    for i in range(V.shape[0]):
        amps += states[:, i, None] * V[None, i, :]
    weights = amps.real**2 + amps.imag**2
    scores = np.empty_like(weights)
    owner = np.arange(reference.dim)
    for group in reference.clusters():
        scores[:, group] = weights[:, group].sum(axis=1, keepdims=True)
        owner[group] = group[0]
    return scores, owner


def best_match_batch(states, reference: EigenSystem):
    scores, owner = match_scores(states, reference)
    k = np.argmax(scores, axis=1)
    return owner[k], scores[np.arange(len(k)), k]


def best_match_fidelity(genotype: Genotype, reference: EigenSystem) -> tuple[int, float]:
    """Eigenvector (or degenerate cluster) best matching ``G(theta)|j>``."""
    G = codification_gates(np.asarray(genotype.angles)[None], genotype.target, genotype.dim)
    idx, fid = best_match_batch(G[:, :, genotype.target], reference)
    return int(idx[0]), float(fid[0])


def step(genotype: Genotype, rp: RpState, config: RunConfig, stream):
    """Advance one iteration; ``stream`` is a :class:`RepStream` or numpy Generator."""
    if isinstance(stream, np.random.Generator):
        uni = nor = stream
    else:
        uni, nor = stream.uniform, stream.normal
    u = uni.random(1 + config.n_angles)[None]
    noise = None
    if config.gate_noise_sigma > 0.0:
        noise = nor.standard_normal(2 * config.n_angles)[None]
    cfg = replace(config, rp=rp) if rp != config.rp else config
    sampler = _Sampler(config.knots, config.scaling_mode)
    angles, w, m, alive = _advance(
        np.asarray(genotype.angles)[None], np.array([rp.w]), u, noise, cfg, sampler
    )
    new = genotype if alive[0] else Genotype(tuple(angles[0]), genotype.target, genotype.dim)
    new_rp = replace(rp, w=float(w[0]))
    G = codification_gates(angles, config.target, config.dim)
    idx, fid = best_match_batch(G[:, :, config.target], config.reference)
    return new, new_rp, IterationRecord(0, int(m[0]), bool(alive[0]), new_rp.w, float(fid[0]), int(idx[0]))


@dataclass
class BatchResult:
    iterations: np.ndarray
    converged: np.ndarray
    final_w: np.ndarray
    angles: np.ndarray
    eigenindex: np.ndarray
    fidelity: np.ndarray
    records: list | None = None


def simulate(config: RunConfig, master_seed: int, reps, record: bool = False) -> BatchResult:
    """Run the repetitions ``reps`` of an ensemble in lockstep."""
    reps = np.asarray(reps, dtype=np.int64)
    R, na = len(reps), config.n_angles
    noise_width = 2 * na if config.gate_noise_sigma > 0.0 else 0
    streams = _ChunkedStreams(master_seed, reps, 1 + na, noise_width)
    sampler = _Sampler(config.knots, config.scaling_mode)
    angles = np.zeros((R, na))
    w = np.full(R, config.rp.w)
    iterations = np.full(R, config.limit, dtype=np.int64)
    conv = np.zeros(R, dtype=bool)
    active = np.arange(R)
    records = [] if record else None
    fixed = config.fixed_iterations is not None
    for t in range(config.limit):
        u, noise = streams.block(t, active)
        a, w_new, m, alive = _advance(angles[active], w[active], u, noise, config, sampler)
        angles[active], w[active] = a, w_new
        if record:
            G = codification_gates(a, config.target, config.dim)
            idx, fid = best_match_batch(G[:, :, config.target], config.reference)
            records.append((t + 1, m.copy(), alive.copy(), w_new.copy(), fid, idx))
        if not fixed:
            hit = w_new < config.rp.delta
            if hit.any():
                iterations[active[hit]] = t + 1
                conv[active[hit]] = True
                active = active[~hit]
                if len(active) == 0:
                    break
    if fixed:
        conv = w < config.rp.delta
    G = codification_gates(angles, config.target, config.dim)
    idx, fid = best_match_batch(G[:, :, config.target], config.reference)
    return BatchResult(iterations, conv, w, angles, idx, fid, records)


def run_single(config: RunConfig, seed: int, rep: int = 0) -> RunTrace:
    """One traced run using the stream of repetition ``rep`` under ``seed``."""
    res = simulate(config, seed, [rep], record=True)
    records = [
        IterationRecord(t, int(m[0]), bool(a[0]), float(w[0]), float(f[0]), int(i[0]))
        for t, m, a, w, f, i in res.records
    ]
    final = Genotype(tuple(res.angles[0]), config.target, config.dim)
    return RunTrace(
        records, bool(res.converged[0]), int(res.iterations[0]), final,
        float(res.final_w[0]), int(res.eigenindex[0]), float(res.fidelity[0]), seed,
    )


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True, eq=False)
class MonteCarloSummary:
    repetitions: int
    master_seed: int
    iterations: np.ndarray
    converged: np.ndarray
    final_w: np.ndarray
    fidelity: np.ndarray
    eigenindex: np.ndarray

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations))

    @property
    def mean_fidelity(self) -> float:
        return float(np.mean(self.fidelity))

    @property
    def mean_final_w(self) -> float:
        return float(np.mean(self.final_w))

    @property
    def convergence_rate(self) -> float:
        return float(np.mean(self.converged))

    def iteration_histogram(self, bins=HIST_BINS):
        counts, edges = np.histogram(self.iterations, bins=bins)
        return edges, counts

    def fidelity_histogram(self, bins=HIST_BINS):
        counts, edges = np.histogram(self.fidelity, bins=bins)
        return edges, counts

    def assignment_counts(self, dim: int) -> list[int]:
        return np.bincount(self.eigenindex, minlength=dim).tolist()

    def to_dict(self, dim: int | None = None) -> dict:
        dim = dim or int(self.eigenindex.max()) + 1
        it_edges, it_counts = self.iteration_histogram()
        f_edges, f_counts = self.fidelity_histogram()
        return {
            "master_seed": self.master_seed,
            "repetitions": self.repetitions,
            "mean_iterations": self.mean_iterations,
            "mean_fidelity": self.mean_fidelity,
            "mean_final_w": self.mean_final_w,
            "convergence_rate": self.convergence_rate,
            "iteration_histogram": {"edges": it_edges.tolist(), "counts": it_counts.tolist()},
            "fidelity_histogram": {"edges": f_edges.tolist(), "counts": f_counts.tolist()},
            "assignment_counts": self.assignment_counts(dim),
        }

    def to_json(self, dim: int | None = None) -> str:
        return json.dumps(self.to_dict(dim), indent=2, sort_keys=True) + "\n"


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("ARQE_THREADS", "1")))
    except ValueError:
        return 1


def run_ensemble(config: RunConfig, repetitions: int, master_seed: int,
                 workers: int | None = None) -> MonteCarloSummary:
    """``repetitions`` independent runs; repetition ``i`` uses stream ``(master_seed, i)``."""
    if repetitions < 1:
        raise ArqeError("repetitions must be >= 1")
    workers = workers or worker_count()
    blocks = np.array_split(np.arange(repetitions), min(workers, repetitions))
    if len(blocks) == 1:
        parts = [simulate(config, master_seed, blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = list(pool.map(lambda b: simulate(config, master_seed, b), blocks))
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
    return MonteCarloSummary(
        repetitions, master_seed, cat("iterations"), cat("converged"),
        cat("final_w"), cat("fidelity"), cat("eigenindex"),
    )


def initial_fidelity(config: RunConfig) -> float:
    """Best-match fidelity of the starting individual ``|j>``."""
    g = Genotype.zero(config.dim, config.target)
    return best_match_fidelity(g, config.reference)[1]


def log_w_ledger(trace: RunTrace, rp: RpState) -> float:
    """Expected ``log w_N`` from the alive/dead counts of a trace.

    Exact only while the ``w_max`` cap never binds (always, when it is ``None``).
    """
    alive = sum(r.alive for r in trace.records)
    dead = len(trace.records) - alive
    return math.log(rp.w) + alive * math.log(rp.r) + dead * math.log(rp.p)
