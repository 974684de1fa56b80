"""Monte Carlo trajectory engine: sweep, resample, stop, record.

Pure-state unravelling: the maximally mixed initial state and every
maximally-mixed resample are realized as uniformly random computational
basis states, which reproduces the density-matrix process exactly in
ensemble expectation.  Each trajectory owns its state buffers and random
stream, so runs are embarrassingly parallel and bit-reproducible.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .agsp import agsp_chebyshev, agsp_linear
from .errors import ConfigError, ParameterError
from .instrument import Instrument, Resampler, make_instrument
from .pauli import PauliHamiltonian, SpectralData, diagonalize, support_index_table, to_dense
from .stopping import EpsilonSchedule, RuleTracker, StoppingRule, epsilon_at

AGSP_MODES = ("linear-global", "chebyshev-global", "product-sweep", "mixture-random")
RESAMPLER_KINDS = ("global", "local", "identity")
WEIGHTINGS = ("max", "sum")


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines one trajectory, including its seed."""

    hamiltonian: PauliHamiltonian
    agsp_mode: str = "product-sweep"
    schedule: EpsilonSchedule = field(default_factory=lambda: EpsilonSchedule.constant(0.2))
    resampler: str = "global"
    rule: StoppingRule = None  # type: ignore[assignment]
    seed: int = 0
    max_steps: int = 1_000_000
    record_series: bool = False
    record_micro: bool = False  # debug channel: per-term outcomes per sweep
    weighting: str = "max"
    cheb_degree: int = 2
    noise: object | None = None  # noise.DepolarizingPerGate, gate-level faults

    def __post_init__(self):
        if self.agsp_mode not in AGSP_MODES:
            raise ConfigError(f"agsp_mode must be one of {AGSP_MODES}, got {self.agsp_mode!r}")
        if self.resampler not in RESAMPLER_KINDS:
            raise ConfigError(f"resampler must be one of {RESAMPLER_KINDS}")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}")
        if self.rule is None:
            raise ConfigError("a stopping rule is required")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.noise is not None:
            if self.agsp_mode not in ("product-sweep", "mixture-random"):
                raise ConfigError("gate-level noise needs a local sweep mode")
            if self.schedule.kind != "constant":
                raise ConfigError("gate-level noise needs a constant eps schedule")


@dataclass
class TrajectoryRecord:
    """Observables of one stopped (or truncated) run."""

    stop_step: int
    stopped_run_length: int
    final_energy: float
    final_overlap: float
    truncated: bool
    seed: int
    outcomes: np.ndarray | None = None
    series: np.ndarray | None = None
    micro_outcomes: list | None = None  # per sweep: tuple of per-term bits


@dataclass(frozen=True)
class EnsembleStats:
    num_trajectories: int
    mean_overlap: float
    stderr_overlap: float
    mean_energy: float
    stderr_energy: float
    mean_tau: float
    stderr_tau: float
    run_length_histogram: dict[int, int]
    truncated_count: int


class _TermData:
    """Per-term arrays the hot loop needs for a Pauli weak measurement."""

    __slots__ = ("perm", "phase", "sign", "weight", "support", "table")

    def __init__(self, term, weight, num_qubits):
        self.perm, self.phase = term.string.perm_and_phase()
        self.sign = term.sign
        self.weight = weight
        self.support = term.string.support
        self.table = (
            support_index_table(num_qubits, self.support) if self.support else None
        )


def term_weights(ham: PauliHamiltonian, weighting: str) -> list[float]:
    """Per-term measurement weights kappa_v.

    "sum" divides by kappa = sum |alpha| (the linear-AGSP factorization);
    "max" divides by max |alpha|, so uniform-coefficient Hamiltonians get
    kappa_v = 1 exactly (the simplified projective-factor case).
    """
    if weighting == "sum":
        return [abs(t.coefficient) / ham.kappa for t in ham.terms]
    amax = max(abs(t.coefficient) for t in ham.terms)
    return [abs(t.coefficient) / amax for t in ham.terms]


class TrajectoryEngine:
    """Precomputed operators shared (read-only) by all trajectories."""

    def __init__(self, cfg: RunConfig, spectral: SpectralData | None = None):
        self.cfg = cfg
        ham = cfg.hamiltonian
        self.num_qubits = ham.num_qubits
        self.dim = ham.dimension
        self.spectral = spectral if spectral is not None else diagonalize(ham)
        self.h_dense = to_dense(ham)
        self.pi0 = self.spectral.ground_projector
        self.noisy_terms = None  # per-term (kraus0, kraus1, table) for the hot loop
        self.noisy_instruments = None
        if cfg.agsp_mode in ("linear-global", "chebyshev-global"):
            if cfg.agsp_mode == "linear-global":
                self.k_global = agsp_linear(ham, self.spectral).operator
            else:
                self.k_global = agsp_chebyshev(
                    self.spectral, cfg.cheb_degree, num_terms=ham.num_terms
                ).operator
            w, v = np.linalg.eigh(self.k_global)
            self._kw, self._kv = w, v
            self.terms = None
        else:
            self.k_global = None
            weights = term_weights(ham, cfg.weighting)
            self.terms = [
                _TermData(t, w, ham.num_qubits) for t, w in zip(ham.terms, weights)
            ]
            if cfg.noise is not None:
                from .noise import noisy_term_instrument

                eps = cfg.schedule.base
                self.noisy_instruments = [
                    noisy_term_instrument(t, eps, w, cfg.noise)
                    for t, w in zip(ham.terms, weights)
                ]
                self.noisy_terms = []
                for ni, td in zip(self.noisy_instruments, self.terms):
                    # heaviest Kraus first so the lazy branch walk usually
                    # stops after one application
                    k0 = sorted(ni.kraus0, key=lambda a: -np.linalg.norm(a))
                    k1 = sorted(ni.kraus1, key=lambda a: -np.linalg.norm(a))
                    m0 = sum(a.conj().T @ a for a in k0)
                    m0 = (m0 + m0.conj().T) / 2.0
                    self.noisy_terms.append((tuple(k0), tuple(k1), td.table, m0))

    # -- instruments for the analytics oracle ------------------------------

    def instruments_at(self, eps: float) -> list[Instrument]:
        """Instrument list matching the engine's sweep at a fixed eps."""
        ham = self.cfg.hamiltonian
        d = self.dim
        if self.k_global is not None:
            return [make_instrument(self.k_global, eps, self._resampler_for(None))]
        weights = term_weights(ham, self.cfg.weighting)
        insts = []
        for t, w in zip(ham.terms, weights):
            k_full = (np.eye(d) - t.sign * t.string.to_matrix()) / 2.0
            insts.append(
                make_instrument(
                    w * k_full, eps, self._resampler_for(t.string.support), support=t.string.support
                )
            )
        return insts

    def _resampler_for(self, support) -> Resampler:
        if self.cfg.resampler == "global":
            return Resampler.global_mixed(self.dim)
        if self.cfg.resampler == "identity":
            return Resampler.identity()
        if support:
            return Resampler.local_mixed(support)
        return Resampler.global_mixed(self.dim)

    def sweep_transfers(self, eps: float):
        """(T0, T1) transfer pair of one engine sweep at constant eps."""
        from .instrument import (
            sweep_transfer_global,
            sweep_transfer_mixture,
            sweep_transfer_product,
        )

        insts = self.instruments_at(eps)
        if self.cfg.agsp_mode == "linear-global" or self.cfg.agsp_mode == "chebyshev-global":
            return sweep_transfer_global(insts[0])
        if self.cfg.agsp_mode == "product-sweep":
            return sweep_transfer_product(insts, self.num_qubits)
        return sweep_transfer_mixture(insts, self.num_qubits)

    def sweep_success_kraus(self, eps: float) -> np.ndarray:
        """Kraus operator of the all-zeros sweep branch at constant eps.

        For the product sweep this is the forward-then-reversed factor
        product M M^dag; the mixture sweep has no single Kraus operator.
        """
        if self.k_global is not None:
            return (1.0 - eps) * np.eye(self.dim) + eps * self.k_global
        if self.cfg.agsp_mode != "product-sweep":
            raise ParameterError("mixture sweeps have no single success Kraus operator")
        insts = self.instruments_at(eps)
        fwd = np.eye(self.dim, dtype=np.complex128)
        for inst in insts:
            fwd = fwd @ inst.e0
        k = fwd @ fwd.conj().T
        return (k + k.conj().T) / 2.0

    def measure_observables(self, state: np.ndarray) -> tuple[float, float]:
        energy = float(np.vdot(state, self.h_dense @ state).real)
        overlap = float(np.vdot(state, self.pi0 @ state).real)
        return energy, overlap


def measure_observables(state, h_dense, pi0):
    """<psi|H|psi> and <psi|Pi0|psi> for a normalized pure state, or the
    trace forms when given a density matrix."""
    state = np.asarray(state)
    if state.ndim == 2:
        return (
            float(np.trace(h_dense @ state).real),
            float(np.trace(pi0 @ state).real),
        )
    return (
        float(np.vdot(state, h_dense @ state).real),
        float(np.vdot(state, pi0 @ state).real),
    )


class _TrajectoryState:
    """Mutable per-trajectory workspace: state vector, buffers, rng."""

    def __init__(self, engine: TrajectoryEngine, seed_seq):
        self.rng = np.random.default_rng(seed_seq)
        d = engine.dim
        self.psi = np.zeros(d, dtype=np.complex128)
        self.psi[self.rng.integers(d)] = 1.0
        self.buf = np.empty(d, dtype=np.complex128)

    def reset_random_basis(self):
        self.psi[:] = 0.0
        self.psi[self.rng.integers(self.psi.shape[0])] = 1.0


def _measure_term_clean(ts: _TrajectoryState, td: _TermData, eps: float, resampler: str) -> int:
    """One weak measurement of a Pauli term; returns the outcome bit."""
    w = td.weight
    a0 = complex(1.0 - eps + eps * w / 2.0)
    b0 = complex(-eps * w * td.sign / 2.0)
    p0 = _kernels.axpb_pauli(ts.psi, ts.buf, td.perm, td.phase, a0, b0)
    u = ts.rng.random()
    if u < p0 and p0 > 1e-15:
        ts.buf *= 1.0 / np.sqrt(p0)
        ts.psi, ts.buf = ts.buf, ts.psi
        return 0
    if resampler == "global":
        ts.reset_random_basis()
        return 1
    # failure Kraus E1 = s_phi Pi + s_theta (1 - Pi), affine in (psi, h psi)
    s_theta = np.sqrt(max(eps * (2.0 - eps), 0.0))
    c = 1.0 - eps * (1.0 - w)
    s_phi = np.sqrt(max(1.0 - c * c, 0.0))
    a1 = complex((s_phi + s_theta) / 2.0)
    b1 = complex(-td.sign * (s_phi - s_theta) / 2.0)
    p1 = _kernels.axpb_pauli(ts.psi, ts.buf, td.perm, td.phase, a1, b1)
    if p1 < 1e-15:
        ts.reset_random_basis()
        return 1
    ts.buf *= 1.0 / np.sqrt(p1)
    ts.psi, ts.buf = ts.buf, ts.psi
    if resampler == "local" and td.table is not None:
        _local_measure_replace(ts, td.table)
    return 1


def _local_measure_replace(ts: _TrajectoryState, table: np.ndarray):
    probs = _kernels.local_probs(ts.psi, table)
    total = probs.sum()
    a_old = int(ts.rng.choice(probs.size, p=probs / total))
    a_new = int(ts.rng.integers(probs.size))
    scale = 1.0 / np.sqrt(probs[a_old])
    _kernels.project_replace(ts.psi, ts.buf, table, a_old, a_new, scale)
    ts.psi, ts.buf = ts.buf, ts.psi


def _lazy_kraus_apply(ts: _TrajectoryState, kraus, table, total: float) -> bool:
    """Sample a Kraus branch by Born weight, applying operators lazily.

    Walks the (weight-sorted) Kraus list accumulating norms until the
    sampled target is passed; the accepted operator's output is already in
    the buffer, so the dominant operator usually costs one application.
    """
    if len(kraus) == 1:
        norm = _kernels.apply_local(ts.psi, ts.buf, table, kraus[0])
        if norm < 1e-15:
            return False
        ts.buf *= 1.0 / np.sqrt(norm)
        ts.psi, ts.buf = ts.buf, ts.psi
        return True
    target = ts.rng.random() * total
    acc = 0.0
    norm = 0.0
    for op in kraus:
        norm = _kernels.apply_local(ts.psi, ts.buf, table, op)
        acc += norm
        if acc >= target:
            break
    if norm < 1e-15:
        return False
    ts.buf *= 1.0 / np.sqrt(norm)
    ts.psi, ts.buf = ts.buf, ts.psi
    return True


def _measure_term_noisy(ts: _TrajectoryState, nt, resampler: str) -> int:
    """Weak measurement through tomography-extracted Kraus branches.

    The success probability comes from one quadratic form with the branch
    POVM element; with a single Kraus operator per branch (zero noise) the
    random-stream consumption matches the clean path exactly, so p=0
    reproduces clean trajectories bit for bit.
    """
    kraus0, kraus1, table, m0 = nt
    p0 = _kernels.local_quadform(ts.psi, table, m0)
    u = ts.rng.random()
    if u < p0 and p0 > 1e-15:
        if _lazy_kraus_apply(ts, kraus0, table, p0):
            return 0
        ts.reset_random_basis()
        return 0
    if resampler == "global":
        ts.reset_random_basis()
        return 1
    p1 = max(1.0 - p0, 0.0)
    if p1 < 1e-15 or not _lazy_kraus_apply(ts, kraus1, table, p1):
        ts.reset_random_basis()
        return 1
    if resampler == "local":
        _local_measure_replace(ts, table)
    return 1


def _global_measure(ts: _TrajectoryState, engine: TrajectoryEngine, eps: float) -> int:
    kw, kv = engine._kw, engine._kv
    amps = (1.0 - eps) + eps * kw
    coeff = kv.conj().T @ ts.psi
    phi0 = kv @ (amps * coeff)
    p0 = float(np.vdot(phi0, phi0).real)
    u = ts.rng.random()
    if u < p0 and p0 > 1e-15:
        ts.psi = phi0 / np.sqrt(p0)
        return 0
    if engine.cfg.resampler == "global":
        ts.reset_random_basis()
        return 1
    e1_amps = np.sqrt(np.clip(1.0 - amps**2, 0.0, None))
    phi1 = kv @ (e1_amps * coeff)
    p1 = float(np.vdot(phi1, phi1).real)
    if p1 < 1e-15:
        ts.reset_random_basis()
        return 1
    ts.psi = phi1 / np.sqrt(p1)
    return 1


def _run_sweep(ts: _TrajectoryState, engine: TrajectoryEngine, eps: float, micro_sink=None) -> int:
    """One sweep; the sweep bit is 1 if any micro-measurement failed."""
    cfg = engine.cfg
    if engine.k_global is not None:
        bit = _global_measure(ts, engine, eps)
        if micro_sink is not None:
            micro_sink.append((bit,))
        return bit
    m = len(engine.terms)
    bit = 0
    if cfg.agsp_mode == "product-sweep":
        order = list(range(m)) + list(range(m - 1, -1, -1))
    else:
        order = [int(ts.rng.integers(m)) for _ in range(2 * m)]
    micro = [] if micro_sink is not None else None
    for v in order:
        if engine.noisy_terms is not None:
            out = _measure_term_noisy(ts, engine.noisy_terms[v], cfg.resampler)
        else:
            out = _measure_term_clean(ts, engine.terms[v], eps, cfg.resampler)
        bit |= out
        if micro is not None:
            micro.append(out)
    if micro_sink is not None:
        micro_sink.append(tuple(micro))
    return bit


def run_trajectory(
    engine: TrajectoryEngine, seed_seq=None, record_series: bool | None = None
) -> TrajectoryRecord:
    """One complete stopped run (or a truncated one, flagged as such).

    A truncated run reports the state snapshotted at the end of the longest
    run seen so far, matching the rule framing that stopping happens at a
    run boundary.
    """
    cfg = engine.cfg
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(cfg.seed)
    if record_series is None:
        record_series = cfg.record_series
    ts = _TrajectoryState(engine, seed_seq)
    tracker = RuleTracker(cfg.rule, ts.rng)
    caps = [cfg.max_steps]
    if cfg.rule.hard_cap() is not None:
        caps.append(cfg.rule.hard_cap())
    cap = min(caps)
    t1_last = 0
    snap_state = ts.psi.copy()
    snap_len = 0
    snap_step = 0
    outcomes = np.empty(cap, dtype=np.uint8) if record_series else None
    series = np.empty((cap, 2)) if record_series else None
    micro_sink = [] if cfg.record_micro else None
    for t in range(1, cap + 1):
        eps_t = epsilon_at(cfg.schedule, t, t1_last)
        bit = _run_sweep(ts, engine, eps_t, micro_sink)
        stop = tracker.update(bit)
        if record_series:
            outcomes[t - 1] = bit
            series[t - 1] = engine.measure_observables(ts.psi)
        if bit:
            t1_last = t
        elif tracker.history.current_run > snap_len:
            snap_state[:] = ts.psi
            snap_len = tracker.history.current_run
            snap_step = t
        if stop:
            energy, overlap = engine.measure_observables(ts.psi)
            return TrajectoryRecord(
                stop_step=t,
                stopped_run_length=tracker.history.current_run,
                final_energy=energy,
                final_overlap=overlap,
                truncated=False,
                seed=cfg.seed,
                outcomes=outcomes[:t] if record_series else None,
                series=series[:t] if record_series else None,
                micro_outcomes=micro_sink,
            )
    energy, overlap = measure_observables(snap_state, engine.h_dense, engine.pi0)
    return TrajectoryRecord(
        stop_step=snap_step,
        stopped_run_length=snap_len,
        final_energy=energy,
        final_overlap=overlap,
        truncated=True,
        seed=cfg.seed,
        outcomes=outcomes[:cap] if record_series else None,
        series=series[:cap] if record_series else None,
        micro_outcomes=micro_sink,
    )


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

_WORKER_ENGINE: TrajectoryEngine | None = None


def _worker_init(cfg: RunConfig):
    global _WORKER_ENGINE
    _WORKER_ENGINE = TrajectoryEngine(cfg)


def _worker_run(index: int):
    cfg = _WORKER_ENGINE.cfg
    seq = np.random.SeedSequence(cfg.seed, spawn_key=(index,))
    rec = run_trajectory(_WORKER_ENGINE, seq, record_series=False)
    return (
        index,
        rec.stop_step,
        rec.stopped_run_length,
        rec.final_energy,
        rec.final_overlap,
        rec.truncated,
    )


def run_ensemble(
    cfg: RunConfig,
    num_trajectories: int,
    parallelism: int | None = None,
    engine: TrajectoryEngine | None = None,
    return_records: bool = False,
):
    """Independent trajectories with per-index derived seeds.

    The aggregate is a deterministic function of (cfg.seed, num_trajectories)
    regardless of the degree of parallelism: trajectory i always uses the
    seed sequence spawned at key (i,), and reduction happens in index order.
    """
    if num_trajectories < 1:
        raise ParameterError("num_trajectories must be >= 1")
    if parallelism is None:
        parallelism = 1
    rows = []
    if parallelism > 1:
        with multiprocessing.Pool(
            parallelism, initializer=_worker_init, initargs=(cfg,)
        ) as pool:
            rows = pool.map(_worker_run, range(num_trajectories), chunksize=64)
    else:
        if engine is None:
            engine = TrajectoryEngine(cfg)
        for i in range(num_trajectories):
            seq = np.random.SeedSequence(cfg.seed, spawn_key=(i,))
            rec = run_trajectory(engine, seq, record_series=False)
            rows.append(
                (i, rec.stop_step, rec.stopped_run_length, rec.final_energy,
                 rec.final_overlap, rec.truncated)
            )
    rows.sort(key=lambda r: r[0])
    taus = np.array([r[1] for r in rows], dtype=float)
    runs = np.array([r[2] for r in rows], dtype=int)
    energies = np.array([r[3] for r in rows])
    overlaps = np.array([r[4] for r in rows])
    truncated = sum(1 for r in rows if r[5])
    hist_vals, hist_counts = np.unique(runs, return_counts=True)
    stats = EnsembleStats(
        num_trajectories=num_trajectories,
        mean_overlap=float(overlaps.mean()),
        stderr_overlap=_stderr(overlaps),
        mean_energy=float(energies.mean()),
        stderr_energy=_stderr(energies),
        mean_tau=float(taus.mean()),
        stderr_tau=_stderr(taus),
        run_length_histogram={int(v): int(c) for v, c in zip(hist_vals, hist_counts)},
        truncated_count=truncated,
    )
    if return_records:
        return stats, rows
    return stats


def _stderr(x: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(x.std(ddof=1) / np.sqrt(x.size))


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, seed=seed)
