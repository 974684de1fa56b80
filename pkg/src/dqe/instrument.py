"""Two-outcome weak-measurement instruments, transfer matrices, fixed points.

Vectorization fixes the column-stacking convention: |rho>> stacks columns,
so the map rho -> A rho B^dag has transfer matrix conj(B) (x) A.  The trace
functional is the row vector <<1| = vec(identity)^dag.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    ConvergenceError,
    InvalidAgspError,
    ParameterError,
    ResourceLimitError,
    SingularFixedPointError,
)
from .pauli import support_index_table

logger = logging.getLogger(__name__)

TRANSFER_LIMIT_QUBITS = 6


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacked vectorization of a matrix."""
    return np.asarray(rho).reshape(-1, order="F").astype(np.complex128, copy=False)


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape((d, d), order="F")


def trace_row(dim: int) -> np.ndarray:
    """<<1| as a 1-D array: <<1|rho>> = tr(rho)."""
    return vec(np.eye(dim)).conj()


class ResamplerKind(Enum):
    GLOBAL = "global"
    LOCAL = "local"
    IDENTITY = "identity"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Resampler:
    """Recovery map applied after a failure outcome.

    ``min_support`` is the guaranteed minimum eigenvalue mu of the output:
    1/D for global maximally-mixed resampling, 0 for the others unless a
    custom map declares better.
    """

    kind: ResamplerKind
    qubits: tuple[int, ...] | None = None
    kraus: tuple[np.ndarray, ...] | None = None
    min_support: float = 0.0

    def __post_init__(self):
        if self.kind is ResamplerKind.LOCAL and not self.qubits:
            raise ParameterError("local resampler needs a qubit set")
        if self.kind is ResamplerKind.CUSTOM:
            if not self.kraus:
                raise ParameterError("custom resampler needs Kraus operators")
            d = self.kraus[0].shape[0]
            comp = sum(a.conj().T @ a for a in self.kraus)
            if np.abs(comp - np.eye(d)).max() > 1e-10:
                raise ParameterError("custom resampler Kraus set is not trace-preserving")

    @staticmethod
    def global_mixed(dim: int) -> "Resampler":
        return Resampler(ResamplerKind.GLOBAL, min_support=1.0 / dim)

    @staticmethod
    def local_mixed(qubits) -> "Resampler":
        return Resampler(ResamplerKind.LOCAL, qubits=tuple(sorted(qubits)))

    @staticmethod
    def identity() -> "Resampler":
        return Resampler(ResamplerKind.IDENTITY)

    @staticmethod
    def custom(kraus, min_support: float = 0.0) -> "Resampler":
        return Resampler(
            ResamplerKind.CUSTOM,
            kraus=tuple(np.asarray(a, dtype=np.complex128) for a in kraus),
            min_support=min_support,
        )


def validate_min_support(resampler: Resampler, num_qubits: int, rng, samples: int = 20):
    """Check the declared mu by minimum-eigenvalue sampling.

    Applies the resampling map to random pure states and verifies the output
    never dips below the declared minimum support.  Raises ParameterError on
    a violation (custom resamplers must declare an honest mu).
    """
    if resampler.min_support <= 0.0:
        return
    d = 1 << num_qubits
    t = resampler_transfer(resampler, num_qubits).matrix
    for _ in range(samples):
        psi = rng.normal(size=d) + 1j * rng.normal(size=d)
        psi /= np.linalg.norm(psi)
        out = unvec(t @ vec(np.outer(psi, psi.conj())))
        lam = float(np.linalg.eigvalsh((out + out.conj().T) / 2.0).min())
        if lam < resampler.min_support - 1e-10:
            raise ParameterError(
                f"resampler output eigenvalue {lam:.3e} below declared mu "
                f"{resampler.min_support:.3e}"
            )


@dataclass(frozen=True)
class Instrument:
    """Success/failure Kraus pair {E0, E1} plus the resampling map."""

    e0: np.ndarray
    e1: np.ndarray
    resampler: Resampler
    support: tuple[int, ...] | None = None

    @property
    def kraus0(self) -> tuple[np.ndarray, ...]:
        return (self.e0,)

    @property
    def kraus1(self) -> tuple[np.ndarray, ...]:
        return (self.e1,)

    @property
    def dimension(self) -> int:
        return self.e0.shape[0]


def principal_sqrt_complement(e0: np.ndarray) -> np.ndarray:
    """Principal square root of 1 - E0^dag E0.

    Eigenvalues below 1e-13 are treated as exact zeros: the square root
    would otherwise inflate eigh roundoff to the 1e-8 scale and spoil the
    circuit-equivalence tolerance.
    """
    g = np.eye(e0.shape[0]) - e0.conj().T @ e0
    g = (g + g.conj().T) / 2.0
    w, v = np.linalg.eigh(g)
    if w.min() < -1e-9:
        raise InvalidAgspError(f"1 - E0^dag E0 has eigenvalue {w.min():.3e} < 0; scale the AGSP")
    w = np.where(w < 1e-13, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def make_instrument(op: np.ndarray, eps: float, resampler: Resampler, support=None) -> Instrument:
    """Weak measurement E0 = (1-eps)1 + eps*op with E1 completing it.

    ``op`` is the (pre-weighted) Hermitian AGSP piece: the global K, or a
    local factor kappa_v k_v embedded in the full space.  eps = 1 recovers
    the bare AGSP Kraus pair, eps = 0 the trivial instrument.
    """
    if not 0.0 <= eps <= 1.0:
        raise ParameterError(f"eps must be in [0, 1], got {eps}")
    d = op.shape[0]
    e0 = (1.0 - eps) * np.eye(d) + eps * op
    if np.linalg.norm(e0, ord=2) > 1.0 + 1e-12:
        raise InvalidAgspError("||E0|| > 1: AGSP piece must be pre-scaled below unit norm")
    e1 = principal_sqrt_complement(e0)
    return Instrument(e0, e1, resampler, tuple(support) if support is not None else None)


def _resample_pure(state: np.ndarray, resampler: Resampler, rng, num_qubits: int) -> np.ndarray:
    d = state.shape[0]
    if resampler.kind is ResamplerKind.GLOBAL:
        out = np.zeros(d, dtype=np.complex128)
        out[rng.integers(d)] = 1.0
        return out
    if resampler.kind is ResamplerKind.IDENTITY:
        return state
    if resampler.kind is ResamplerKind.LOCAL:
        table = support_index_table(num_qubits, resampler.qubits)
        block = state[table]
        probs = np.einsum("ra,ra->a", block.real, block.real) + np.einsum(
            "ra,ra->a", block.imag, block.imag
        )
        total = probs.sum()
        if total < 1e-15:
            raise InvalidAgspError("zero-norm state passed to local resampler")
        a_old = rng.choice(probs.size, p=probs / total)
        a_new = rng.integers(probs.size)
        out = np.zeros(d, dtype=np.complex128)
        out[table[:, a_new]] = state[table[:, a_old]] / np.sqrt(probs[a_old])
        return out
    weights = np.array([float(np.vdot(a @ state, a @ state).real) for a in resampler.kraus])
    total = weights.sum()
    j = rng.choice(weights.size, p=weights / total)
    new = resampler.kraus[j] @ state
    return new / np.linalg.norm(new)


def apply_sampled(inst: Instrument, state: np.ndarray, rng, num_qubits: int | None = None):
    """One sampled application of the instrument to a normalized pure state.

    Returns (outcome, new_state).  Outcome 0 keeps E0|psi> renormalized;
    outcome 1 applies E1, renormalizes, then resamples.  A branch whose norm
    underflows (< 1e-15) triggers an unconditional resample and a diagnostic.
    """
    if num_qubits is None:
        num_qubits = int(round(np.log2(state.shape[0])))
    phi0 = inst.e0 @ state
    p0 = float(np.vdot(phi0, phi0).real)
    if rng.random() < p0:
        if p0 < 1e-15:
            logger.warning("zero-norm success branch; resampling unconditionally")
            return 0, _resample_pure(state, inst.resampler, rng, num_qubits)
        return 0, phi0 / np.sqrt(p0)
    phi1 = inst.e1 @ state
    p1 = float(np.vdot(phi1, phi1).real)
    if p1 < 1e-15:
        logger.warning("zero-norm failure branch; resampling unconditionally")
        return 1, _resample_pure(state, inst.resampler, rng, num_qubits)
    if inst.resampler.kind in (ResamplerKind.GLOBAL,):
        # the resampled state does not depend on E1|psi>
        return 1, _resample_pure(state, inst.resampler, rng, num_qubits)
    return 1, _resample_pure(phi1 / np.sqrt(p1), inst.resampler, rng, num_qubits)


@dataclass(frozen=True)
class TransferMatrix:
    """Dense D^2 x D^2 matrix form of a CP map."""

    matrix: np.ndarray
    trace_preserving: bool = field(default=False)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho))


def _check_transfer_dim(dim: int):
    if dim > 1 << TRANSFER_LIMIT_QUBITS:
        raise ResourceLimitError(
            f"dimension {dim} exceeds the {TRANSFER_LIMIT_QUBITS}-qubit transfer-matrix cap"
        )


def transfer_of_kraus(ops) -> TransferMatrix:
    """E = sum_i conj(A_i) (x) A_i in the column-stacking convention."""
    ops = list(ops)
    d = ops[0].shape[0]
    _check_transfer_dim(d)
    mat = np.zeros((d * d, d * d), dtype=np.complex128)
    for a in ops:
        mat += np.kron(a.conj(), a)
    row = trace_row(d)
    tp = bool(np.abs(row @ mat - row).max() < 1e-9)
    return TransferMatrix(mat, trace_preserving=tp)


def resampler_transfer(resampler: Resampler, num_qubits: int) -> TransferMatrix:
    d = 1 << num_qubits
    _check_transfer_dim(d)
    if resampler.kind is ResamplerKind.GLOBAL:
        mat = np.outer(vec(np.eye(d) / d), trace_row(d).conj()).astype(np.complex128)
        return TransferMatrix(mat, trace_preserving=True)
    if resampler.kind is ResamplerKind.IDENTITY:
        return TransferMatrix(np.eye(d * d, dtype=np.complex128), trace_preserving=True)
    if resampler.kind is ResamplerKind.LOCAL:
        table = support_index_table(num_qubits, resampler.qubits)
        ds = table.shape[1]
        ops = []
        for a in range(ds):
            for b in range(ds):
                k = np.zeros((d, d), dtype=np.complex128)
                k[table[:, b], table[:, a]] = 1.0 / np.sqrt(ds)
                ops.append(k)
        return transfer_of_kraus(ops)
    return transfer_of_kraus(resampler.kraus)


def transfer_of_instrument_success(inst: Instrument) -> TransferMatrix:
    return transfer_of_kraus(inst.kraus0)


def transfer_of_instrument_failure(inst: Instrument, num_qubits: int | None = None) -> TransferMatrix:
    """Failure branch rho -> R(E1 rho E1^dag) as a transfer matrix.

    For the global maximally-mixed resampler this equals
    |1/D>><<1| (1 - E0-transfer) identically, which is the form used.
    """
    d = inst.dimension
    if num_qubits is None:
        num_qubits = int(round(np.log2(d)))
    if inst.resampler.kind is ResamplerKind.GLOBAL:
        t0 = transfer_of_kraus(inst.kraus0).matrix
        mat = np.outer(vec(np.eye(d) / d), trace_row(d).conj()) @ (np.eye(d * d) - t0)
        return TransferMatrix(mat.astype(np.complex128))
    r = resampler_transfer(inst.resampler, num_qubits).matrix
    t1 = sum(np.kron(a.conj(), a) for a in inst.kraus1)
    return TransferMatrix(r @ t1)


def global_channel_transfer(e0: np.ndarray) -> TransferMatrix:
    """Transfer matrix of rho -> E0 rho E0^dag + (tr rho - tr E0 rho E0^dag) 1/D."""
    d = e0.shape[0]
    _check_transfer_dim(d)
    t0 = np.kron(e0.conj(), e0)
    mat = t0 + np.outer(vec(np.eye(d) / d), trace_row(d).conj()) @ (np.eye(d * d) - t0)
    return TransferMatrix(mat, trace_preserving=True)


def fixed_point_direct(k: np.ndarray, margin: float = 1e-8) -> np.ndarray:
    """Closed-form fixed point (1 - K^2)^{-1} / tr(...) for ||K|| < 1.

    Refuses near-singular inversions: the channel only has this fixed point
    when the AGSP norm stays strictly below 1.
    """
    k = (k + k.conj().T) / 2.0
    w, v = np.linalg.eigh(k)
    if np.max(np.abs(w)) >= 1.0 - margin:
        raise SingularFixedPointError(
            f"||K|| = {np.max(np.abs(w)):.12f} too close to 1 for the closed-form fixed point"
        )
    x = 1.0 / (1.0 - w**2)
    rho = (v * x) @ v.conj().T
    rho = (rho + rho.conj().T) / 2.0
    return rho / np.trace(rho).real


def fixed_point_iterate(
    transfer, tol: float = 1e-10, max_iters: int = 200000, rho0: np.ndarray | None = None
) -> np.ndarray:
    """Power-iterate a trace-preserving transfer matrix to its fixed point."""
    mat = transfer.matrix if isinstance(transfer, TransferMatrix) else np.asarray(transfer)
    d = int(round(np.sqrt(mat.shape[0])))
    rho = np.eye(d, dtype=np.complex128) / d if rho0 is None else rho0.astype(np.complex128)
    v = vec(rho)
    for _ in range(max_iters):
        nv = mat @ v
        diff = unvec(nv - v)
        diff = (diff + diff.conj().T) / 2.0
        resid = 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())
        v = nv
        if resid < tol:
            rho = unvec(v)
            rho = (rho + rho.conj().T) / 2.0
            return rho / np.trace(rho).real
    raise ConvergenceError(
        f"fixed point not converged after {max_iters} iterations", residual=resid
    )


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = (a - b + (a - b).conj().T) / 2.0
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


# ---------------------------------------------------------------------------
# Per-sweep channel transfers: the exact density-matrix view of one sweep of
# the trajectory engine, used as the oracle for Monte Carlo runs.
# ---------------------------------------------------------------------------


def _micro_transfer(inst: Instrument, num_qubits: int) -> tuple[np.ndarray, np.ndarray]:
    t0 = transfer_of_instrument_success(inst).matrix
    t1 = transfer_of_instrument_failure(inst, num_qubits).matrix
    return t0, t1


def sweep_transfer_product(instruments, num_qubits: int):
    """(T0_sweep, T1_sweep) for one forward-then-reversed sweep.

    The success branch composes all 2m success Kraus maps; the failure
    branch is everything else: resampling fires right after the failing
    term and the sweep continues, so T1 = (full sweep channel) - T0.
    """
    m = len(instruments)
    micro = [_micro_transfer(inst, num_qubits) for inst in instruments]
    d2 = micro[0][0].shape[0]
    full = np.eye(d2, dtype=np.complex128)
    succ = np.eye(d2, dtype=np.complex128)
    seq = list(range(m)) + list(reversed(range(m)))
    for v in seq:
        t0, t1 = micro[v]
        full = (t0 + t1) @ full
        succ = t0 @ succ
    return TransferMatrix(succ), TransferMatrix(full - succ)


def sweep_transfer_mixture(instruments, num_qubits: int):
    """(T0_sweep, T1_sweep) for 2m uniformly sampled single-term micro-steps."""
    m = len(instruments)
    micro = [_micro_transfer(inst, num_qubits) for inst in instruments]
    a = sum(t0 for t0, _ in micro) / m
    b = sum(t0 + t1 for t0, t1 in micro) / m
    succ = np.linalg.matrix_power(a, 2 * m)
    full = np.linalg.matrix_power(b, 2 * m)
    return TransferMatrix(succ), TransferMatrix(full - succ)


def sweep_transfer_global(inst: Instrument):
    """(T0, T1) of a single global instrument applied once per sweep."""
    t0 = transfer_of_instrument_success(inst)
    t1 = transfer_of_instrument_failure(inst)
    return t0, t1
