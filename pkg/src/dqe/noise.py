"""Fault injection and the fault-resilience bounds.

Two noise models: per-gate depolarizing applied inside the measurement
circuit (the effective noisy instrument is then extracted by process
tomography on the dense simulator), and a direct Kraus-operator
perturbation of a clean instrument with a transfer-norm budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuits import (
    AncillaRotation,
    BasisRotation,
    ControlledNot,
    MeasureAncilla,
    ResetAncilla,
    gate_unitary,
    measurement_circuit,
)
from .errors import InvalidNoiseError, ParameterError
from .instrument import Instrument, principal_sqrt_complement
from .pauli import PauliString, PauliTerm

_PAULI_AXES = ("X", "Y", "Z")


@dataclass(frozen=True)
class DepolarizingPerGate:
    """Depolarizing channel after every gate: rate p1 (1q) / p2 (2q)."""

    p1: float
    p2: float

    def __post_init__(self):
        if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p2 <= 1.0):
            raise ParameterError("depolarizing rates must be in [0, 1]")


@dataclass(frozen=True)
class ChannelPerturbation:
    """E0' = E0 + delta * direction, direction unit-normalized in transfer norm."""

    delta: float
    seed: int = 0

    def __post_init__(self):
        if self.delta < 0.0:
            raise ParameterError("delta must be >= 0")


NoiseModel = DepolarizingPerGate | ChannelPerturbation


@dataclass(frozen=True)
class NoisyTermInstrument:
    """Tomography-extracted branches of one noisy weak measurement."""

    kraus0: tuple[np.ndarray, ...]
    kraus1: tuple[np.ndarray, ...]
    support: tuple[int, ...]
    delta_measured: float


@dataclass(frozen=True)
class ResilienceReport:
    runtimes: tuple[int, ...]
    overlaps: tuple[float, ...]
    stderrs: tuple[float, ...]
    baseline_overlaps: tuple[float, ...]
    delta_measured: float  # largest per-term success-branch transfer distance
    sweep_delta: float = float("nan")  # whole-sweep transfer distance
    bound_asymptotic: float = float("nan")  # n->infinity overlap bound at sweep_delta
    energies: tuple[float, ...] = ()
    baseline_series: tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# Depolarizing channels on dense density matrices
# ---------------------------------------------------------------------------


def _pauli_conj_data(num_qubits: int, qubits: tuple[int, ...]):
    """(perm, phase-left) pairs realizing sigma rho sigma^dag for the 3 or 15
    non-identity Pauli words on the given qubits."""
    words = []
    if len(qubits) == 1:
        combos = [(a,) for a in _PAULI_AXES]
    else:
        combos = [
            (a, b)
            for a in ("I",) + _PAULI_AXES
            for b in ("I",) + _PAULI_AXES
            if not (a == "I" and b == "I")
        ]
    for combo in combos:
        factors = ["I"] * num_qubits
        for q, ax in zip(qubits, combo):
            if ax != "I":
                factors[q] = ax
        perm, phase = PauliString("".join(factors)).perm_and_phase()
        words.append((perm, phase[perm]))
    return words


def _apply_depolarizing(rho: np.ndarray, words, p: float) -> np.ndarray:
    if p == 0.0:
        return rho
    acc = np.zeros_like(rho)
    for perm, pl in words:
        acc += (pl[:, None] * rho[np.ix_(perm, perm)]) * pl.conj()[None, :]
    return (1.0 - p) * rho + (p / len(words)) * acc


def depolarize_qubit(rho: np.ndarray, qubit: int, num_qubits: int, p: float) -> np.ndarray:
    """Single-qubit depolarizing channel on a dense density matrix."""
    return _apply_depolarizing(rho, _pauli_conj_data(num_qubits, (qubit,)), p)


def _gate_noise_targets(gate, num_qubits: int):
    if isinstance(gate, BasisRotation):
        return (gate.qubit,)
    if isinstance(gate, AncillaRotation):
        return (num_qubits - 1,)
    if isinstance(gate, ControlledNot):
        return (gate.control, gate.target)
    return ()


def noisy_circuit_branches(circ, model: DepolarizingPerGate):
    """Branch channels Phi_0, Phi_1 of the noisy circuit, as Choi matrices.

    Evolves each data basis matrix unit through the gate list with a
    depolarizing channel after every gate, then projects the ancilla.
    """
    n = circ.num_qubits
    d_data = 1 << (n - 1)
    gates = []
    for g in circ.gates:
        if isinstance(g, (MeasureAncilla, ResetAncilla)):
            continue
        targets = _gate_noise_targets(g, n)
        p = model.p1 if len(targets) == 1 else model.p2
        gates.append((gate_unitary(g, n), _pauli_conj_data(n, targets), p))
    anc0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.complex128)
    choi0 = np.zeros((d_data * d_data, d_data * d_data), dtype=np.complex128)
    choi1 = np.zeros_like(choi0)
    for i in range(d_data):
        for j in range(d_data):
            e_ij = np.zeros((d_data, d_data), dtype=np.complex128)
            e_ij[i, j] = 1.0
            rho = np.kron(e_ij, anc0)
            for u, words, p in gates:
                rho = u @ rho @ u.conj().T
                rho = _apply_depolarizing(rho, words, p)
            unit = np.zeros_like(e_ij)
            unit[i, j] = 1.0
            choi0 += np.kron(unit, rho[0::2, 0::2])
            choi1 += np.kron(unit, rho[1::2, 1::2])
    return choi0, choi1


def _kraus_from_choi(choi: np.ndarray, d: int, tol: float = 1e-12):
    choi = (choi + choi.conj().T) / 2.0
    w, v = np.linalg.eigh(choi)
    cut = tol * max(w.max(), 1.0)
    ops = []
    for lam, col in zip(w, v.T):
        if lam > cut:
            ops.append(np.sqrt(lam) * col.reshape((d, d), order="F"))
    return ops


def noisy_term_instrument(
    term: PauliTerm, eps: float, weight: float, model: DepolarizingPerGate
) -> NoisyTermInstrument:
    """Effective noisy instrument of one term's measurement circuit.

    delta_measured is the transfer-norm distance between the noisy and
    clean success branches on the term's support.
    """
    from .agsp import local_projector

    circ = measurement_circuit(term, eps, weight)
    choi0, choi1 = noisy_circuit_branches(circ, model)
    d = 1 << len(term.string.support)
    kraus0 = _kraus_from_choi(choi0, d)
    kraus1 = _kraus_from_choi(choi1, d)
    comp = sum(a.conj().T @ a for a in kraus0) + sum(a.conj().T @ a for a in kraus1)
    defect = float(np.abs(comp - np.eye(d)).max())
    if defect > 1e-8:
        raise InvalidNoiseError(f"noisy instrument completeness defect {defect:.2e}")
    e0_clean = (1.0 - eps) * np.eye(d) + eps * weight * local_projector(term)
    t_clean = np.kron(e0_clean.conj(), e0_clean)
    t_noisy = sum(np.kron(a.conj(), a) for a in kraus0)
    delta = float(np.linalg.norm(t_noisy - t_clean, 2))
    return NoisyTermInstrument(tuple(kraus0), tuple(kraus1), term.string.support, delta)


# ---------------------------------------------------------------------------
# Direct channel perturbation
# ---------------------------------------------------------------------------


def _random_hermitian_direction(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (g + g.conj().T) / 2.0


def perturb_instrument(inst: Instrument, model: ChannelPerturbation) -> Instrument:
    """Shift E0 by delta along a transfer-norm-normalized Kraus direction.

    E1 is recomputed as the principal complement root, so the perturbed
    instrument satisfies completeness exactly; the perturbation must keep
    ||E0'|| <= 1 or the noise model is rejected.
    """
    e0 = inst.e0
    d = e0.shape[0]
    g = _random_hermitian_direction(d, model.seed)
    d1 = np.kron(g.conj(), e0) + np.kron(e0.conj(), g)
    scale = np.linalg.norm(d1, 2)
    if scale < 1e-30:
        raise InvalidNoiseError("degenerate perturbation direction")
    g = g / scale
    e0p = e0 + model.delta * g
    if np.linalg.norm(e0p, 2) > 1.0:
        raise InvalidNoiseError("perturbation pushes ||E0|| above 1; reduce delta")
    e1p = principal_sqrt_complement(e0p)
    return Instrument(e0p, e1p, inst.resampler, inst.support)


def transfer_delta(inst_a: Instrument, inst_b: Instrument) -> float:
    """Operator-norm distance between the success-branch transfer matrices."""
    ta = np.kron(inst_a.e0.conj(), inst_a.e0)
    tb = np.kron(inst_b.e0.conj(), inst_b.e0)
    return float(np.linalg.norm(ta - tb, 2))


# ---------------------------------------------------------------------------
# Resilience bounds
# ---------------------------------------------------------------------------


def resilience_bound_asymptotic(params, delta: float):
    """n -> infinity overlap bound 1 - eps - 2 delta / (sqrtG(sqrtG - sqrtD) - 2 delta).

    Returns (value, vacuous): vacuous when delta reaches the threshold
    sqrtGamma (sqrtGamma - sqrtDelta) / 2.
    """
    from .analytics import BoundResult

    gap = params.sqrt_gamma * (params.sqrt_gamma - params.sqrt_delta)
    if delta >= gap / 2.0:
        return BoundResult(0.0, True)
    value = 1.0 - params.epsilon - 2.0 * delta / (gap - 2.0 * delta)
    return BoundResult(min(max(value, 0.0), 1.0), False)


def fixed_point_resilience_bound(params, delta: float, dim: int, degeneracy: int) -> float:
    """1 - ((1-Gamma)/(1-Delta) + delta)(D/N - 1) - eps - delta."""
    ratio = (1.0 - params.gamma) / (1.0 - params.delta) if params.delta < 1.0 else 0.0
    return 1.0 - (ratio + delta) * (dim / degeneracy - 1.0) - params.epsilon - delta


def noisy_sweep_success_transfer(engine) -> np.ndarray:
    """Transfer matrix of the noisy all-zeros sweep branch of an engine."""
    ham = engine.cfg.hamiltonian
    d = ham.dimension
    micro = []
    for kraus0, _, table, _ in engine.noisy_terms:
        t0 = np.zeros((d * d, d * d), dtype=np.complex128)
        for a in kraus0:
            full = np.zeros((d, d), dtype=np.complex128)
            for r in range(table.shape[0]):
                full[np.ix_(table[r], table[r])] = a
            t0 += np.kron(full.conj(), full)
        micro.append(t0)
    m = len(micro)
    out = np.eye(d * d, dtype=np.complex128)
    for v in list(range(m)) + list(range(m - 1, -1, -1)):
        out = micro[v] @ out
    return out


# ---------------------------------------------------------------------------
# Resilience experiment
# ---------------------------------------------------------------------------


def free_decay_overlaps(spectral, p1: float, steps: int):
    """Ground state decaying under per-qubit depolarizing, overlap per step.

    The comparison series of the noise experiment: no measurements, just the
    same single-qubit noise applied across all qubits each time step.
    """
    n = int(round(np.log2(spectral.dimension)))
    rho = spectral.ground_projector.astype(np.complex128) / spectral.degeneracy
    words = [_pauli_conj_data(n, (q,)) for q in range(n)]
    series = np.empty(steps + 1)
    series[0] = float(np.trace(spectral.ground_projector @ rho).real)
    for t in range(1, steps + 1):
        for q in range(n):
            rho = _apply_depolarizing(rho, words[q], p1)
        series[t] = float(np.trace(spectral.ground_projector @ rho).real)
    return series


def run_resilience_experiment(
    ham,
    model: DepolarizingPerGate,
    runtimes,
    eps: float,
    num_trajectories: int,
    seed: int = 0,
    weighting: str = "max",
    parallelism: int | None = None,
) -> ResilienceReport:
    """Noisy ensembles at several run-time caps plus the free-decay baseline."""
    from .stopping import EpsilonSchedule, Secretary
    from .trajectory import RunConfig, TrajectoryEngine, run_ensemble

    from .agsp import verify_agsp

    runtimes = tuple(int(t) for t in runtimes)
    overlaps, stderrs, energies = [], [], []
    delta = float("nan")
    sweep_delta = float("nan")
    bound = float("nan")
    for cap in runtimes:
        cfg = RunConfig(
            ham,
            agsp_mode="product-sweep",
            schedule=EpsilonSchedule.constant(eps),
            resampler="global",
            rule=Secretary(cap),
            seed=seed,
            weighting=weighting,
            noise=model,
        )
        stats = run_ensemble(cfg, num_trajectories, parallelism=parallelism)
        overlaps.append(stats.mean_overlap)
        stderrs.append(stats.stderr_overlap)
        energies.append(stats.mean_energy)
        if np.isnan(delta):
            engine = TrajectoryEngine(cfg)
            delta = max(nt.delta_measured for nt in engine.noisy_instruments)
            kraus_clean = engine.sweep_success_kraus(eps)
            t_clean = np.kron(kraus_clean.conj(), kraus_clean)
            sweep_delta = float(
                np.linalg.norm(noisy_sweep_success_transfer(engine) - t_clean, 2)
            )
            params = verify_agsp(kraus_clean, engine.pi0)
            bound = resilience_bound_asymptotic(params, sweep_delta).value
    from .pauli import diagonalize

    spectral = diagonalize(ham)
    series = free_decay_overlaps(spectral, model.p1, max(runtimes))
    baseline = tuple(float(series[t]) for t in runtimes)
    return ResilienceReport(
        runtimes=runtimes,
        overlaps=tuple(overlaps),
        stderrs=tuple(stderrs),
        baseline_overlaps=baseline,
        delta_measured=delta,
        sweep_delta=sweep_delta,
        bound_asymptotic=bound,
        energies=tuple(energies),
        baseline_series=tuple(series.tolist()),
    )
