"""Approximate ground state projectors and their measured parameters.

An AGSP is a Hermitian K whose spectrum splits into a block >= sqrt(Gamma)
on (a projector near) the ground space and a block <= sqrt(Delta) on its
complement; epsilon is the operator-norm distance of that projector from
the true ground projector.  Constructions here: the linear rescaling of H,
the ordered product of local weak factors, the random-mixture Kraus set,
and the Chebyshev spectral filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInstanceError, ParameterError
from .pauli import PauliHamiltonian, PauliTerm, SpectralData, to_dense

_HERM_TOL = 1e-12


@dataclass(frozen=True)
class AgspParams:
    """(Delta, Gamma, epsilon) triple, with the square roots kept explicit.

    ``sqrt_gamma`` is the smallest eigenvalue of K on the selected block and
    ``sqrt_delta`` the largest magnitude outside it; ``delta``/``gamma`` are
    their squares, which is what the overlap and run-time bounds consume.
    """

    delta: float
    gamma: float
    epsilon: float
    sqrt_delta: float = field(default=None)  # type: ignore[assignment]
    sqrt_gamma: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.sqrt_delta is None:
            object.__setattr__(self, "sqrt_delta", float(np.sqrt(max(self.delta, 0.0))))
        if self.sqrt_gamma is None:
            object.__setattr__(self, "sqrt_gamma", float(np.sqrt(max(self.gamma, 0.0))))
        if self.delta < -1e-12 or self.epsilon < -1e-12:
            raise ParameterError(f"negative AGSP parameters: {self}")

    @classmethod
    def from_sqrt(cls, sqrt_delta: float, sqrt_gamma: float, epsilon: float) -> "AgspParams":
        return cls(
            delta=float(sqrt_delta) ** 2,
            gamma=float(sqrt_gamma) ** 2,
            epsilon=float(epsilon),
            sqrt_delta=float(sqrt_delta),
            sqrt_gamma=float(sqrt_gamma),
        )


@dataclass(frozen=True)
class LocalFactor:
    """One weighted local factor kappa_i * k_i of a decomposed AGSP."""

    weight: float
    operator: np.ndarray
    support: tuple[int, ...]


@dataclass(frozen=True)
class Agsp:
    """Dense AGSP operator with claimed-or-measured parameters attached."""

    operator: np.ndarray
    params: AgspParams
    claimed: bool = True
    local_factors: tuple[LocalFactor, ...] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        k = self.operator
        if np.abs(k - k.conj().T).max() > _HERM_TOL:
            raise ParameterError("AGSP operator is not Hermitian within 1e-12")


def local_projector(term: PauliTerm) -> np.ndarray:
    """k_v = (1 - s_v h_v)/2 restricted to the term's support qubits."""
    sub = "".join(c for c in term.string.factors if c != "I")
    if not sub:
        # identity term: k_v is 0 (s_v > 0) or 1 (s_v < 0) on a trivial support
        d = 1
        return np.zeros((d, d), dtype=np.complex128) if term.sign > 0 else np.eye(d, dtype=np.complex128)
    from .pauli import PauliString

    h_loc = PauliString(sub).to_matrix()
    d = h_loc.shape[0]
    return (np.eye(d) - term.sign * h_loc) / 2.0


def _dense_factors(ham: PauliHamiltonian) -> tuple[LocalFactor, ...]:
    d = ham.dimension
    factors = []
    for t in ham.terms:
        k_full = (np.eye(d) - t.sign * t.string.to_matrix()) / 2.0
        factors.append(LocalFactor(abs(t.coefficient) / ham.kappa, k_full, t.string.support))
    return tuple(factors)


def agsp_linear(ham: PauliHamiltonian, spec: SpectralData) -> Agsp:
    """K = (1 - H/kappa)/2 with its closed-form parameters.

    sqrt(Gamma) = (1 - lambda0/kappa)/2 and sqrt(Delta) = (1 - lambda1/kappa)/2,
    with epsilon = 0 since K commutes with the ground projector exactly.
    """
    if ham.kappa <= 0.0:
        raise DegenerateInstanceError("kappa = 0: Hamiltonian has no weight to rescale")
    mat = to_dense(ham)
    k = (np.eye(ham.dimension) - mat / ham.kappa) / 2.0
    k = (k + k.conj().T) / 2.0
    params = AgspParams.from_sqrt(
        sqrt_delta=(1.0 - spec.lambda1 / ham.kappa) / 2.0,
        sqrt_gamma=(1.0 - spec.lambda0 / ham.kappa) / 2.0,
        epsilon=0.0,
    )
    return Agsp(k, params, claimed=True, local_factors=_dense_factors(ham))


def agsp_product(
    ham: PauliHamiltonian, eps: float, spec: SpectralData | None = None
) -> Agsp:
    """Ordered forward-then-reversed product of the 2m weak local factors.

    K' = F_1...F_m F_m...F_1 with F_i = (1-eps)1 + eps*kappa_i*k_i, which is
    Hermitian PSD by construction.  Claimed parameters are the leading-order
    corollary forms; the O(eps^2) corrections are what verify_agsp measures.
    """
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"eps must be in (0, 1), got {eps}")
    factors = _dense_factors(ham)
    d = ham.dimension
    eye = np.eye(d)
    fwd = eye
    for f in factors:
        fwd = fwd @ ((1.0 - eps) * eye + eps * f.weight * f.operator)
    k = fwd @ fwd.conj().T
    k = (k + k.conj().T) / 2.0
    m = ham.num_terms
    if spec is not None:
        pref = (1.0 - eps) ** (2 * m - 1)
        params = AgspParams(
            delta=pref * (1.0 - eps * spec.lambda1 / ham.kappa),
            gamma=pref * (1.0 - eps * spec.lambda0 / ham.kappa),
            epsilon=0.0,
        )
    else:
        params = AgspParams(delta=1.0, gamma=1.0, epsilon=0.0)
    return Agsp(k, params, claimed=True, local_factors=factors, metadata={"eps": eps})


def mixture_kraus(ham: PauliHamiltonian, eps: float) -> list[np.ndarray]:
    """Kraus set E_i = ((1-eps)1 + eps*kappa_i*k_i)/sqrt(m) of the mixture map."""
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"eps must be in (0, 1), got {eps}")
    factors = _dense_factors(ham)
    m = len(factors)
    eye = np.eye(ham.dimension)
    return [((1.0 - eps) * eye + eps * f.weight * f.operator) / np.sqrt(m) for f in factors]


def _chebyshev_t(ell: int, y: np.ndarray) -> np.ndarray:
    """T_ell evaluated stably inside and outside [-1, 1]."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    inside = np.abs(y) <= 1.0
    out[inside] = np.cos(ell * np.arccos(np.clip(y[inside], -1.0, 1.0)))
    above = y > 1.0
    out[above] = np.cosh(ell * np.arccosh(y[above]))
    below = y < -1.0
    out[below] = (-1.0) ** ell * np.cosh(ell * np.arccosh(-y[below]))
    return out


def agsp_chebyshev(spec: SpectralData, ell: int, num_terms: int | None = None) -> Agsp:
    """Rescaled Chebyshev filter C_ell(H) applied by eigendecomposition.

    The polynomial is normalized to 1 at lambda0 and minimax-flat on
    [lambda1, ||H||]; when that interval degenerates to a point the monomial
    ((x - lambda1)/(lambda0 - lambda1))^ell is used instead, which annihilates
    the excited spectrum exactly.
    """
    if ell < 1:
        raise ParameterError(f"Chebyshev degree must be >= 1, got {ell}")
    tol = 1e-12 * max(1.0, spec.norm)
    if spec.gap <= tol:
        raise DegenerateInstanceError("gapless spectrum: Chebyshev filter undefined")
    if spec.eigenvalues is None or spec.eigenvectors is None:
        raise ParameterError("SpectralData must carry the full eigendecomposition")
    evals = spec.eigenvalues
    top = spec.norm
    if top - spec.lambda1 <= tol:
        vals = ((evals - spec.lambda1) / (spec.lambda0 - spec.lambda1)) ** ell
    else:
        y = (2.0 * evals - spec.lambda1 - top) / (top - spec.lambda1)
        y0 = (2.0 * spec.lambda0 - spec.lambda1 - top) / (top - spec.lambda1)
        vals = _chebyshev_t(ell, y) / _chebyshev_t(ell, np.array([y0]))[0]
    v = spec.eigenvectors
    k = (v * vals) @ v.conj().T
    k = (k + k.conj().T) / 2.0
    sqrt_delta_bound = 2.0 * np.exp(-2.0 * ell * np.sqrt(spec.gap / (spec.norm - spec.lambda0)))
    params = AgspParams.from_sqrt(sqrt_delta=min(sqrt_delta_bound, 1.0), sqrt_gamma=1.0, epsilon=0.0)
    metadata = {"degree": ell}
    if num_terms is not None:
        metadata["term_count_estimate"] = float((np.e / ell) ** ell * num_terms**ell)
    return Agsp(k, params, claimed=True, metadata=metadata)


def verify_agsp(k: np.ndarray, pi0: np.ndarray) -> AgspParams:
    """Measure (Delta, Gamma, epsilon) of K against a ground projector.

    Selects the rank-N spectral projector of K closest to pi0 by
    overlap-greedy matching (largest <v|pi0|v> first, ties by descending
    eigenvalue), then reads the parameters off the split spectrum.  Always
    returns; a poor AGSP simply shows up as a large epsilon.
    """
    if np.abs(k - k.conj().T).max() > _HERM_TOL:
        raise ParameterError("verify_agsp needs a Hermitian operator")
    n_ground = int(round(float(np.trace(pi0).real)))
    w, v = np.linalg.eigh(k)
    overlaps = np.einsum("ij,jk,ki->i", v.conj().T, pi0, v).real
    order = np.lexsort((-w, -overlaps))
    chosen = order[:n_ground]
    rest = order[n_ground:]
    pi = v[:, chosen] @ v[:, chosen].conj().T
    sqrt_gamma = float(np.min(w[chosen])) if chosen.size else 0.0
    sqrt_delta = float(np.max(np.abs(w[rest]))) if rest.size else 0.0
    epsilon = float(np.linalg.norm(pi - pi0, ord=2))
    return AgspParams.from_sqrt(sqrt_delta=sqrt_delta, sqrt_gamma=sqrt_gamma, epsilon=epsilon)


def find_block_projector(k: np.ndarray, pi0: np.ndarray) -> np.ndarray:
    """The rank-N projector Pi selected by the verify_agsp matching rule."""
    n_ground = int(round(float(np.trace(pi0).real)))
    w, v = np.linalg.eigh(k)
    overlaps = np.einsum("ij,jk,ki->i", v.conj().T, pi0, v).real
    order = np.lexsort((-w, -overlaps))
    chosen = order[:n_ground]
    return v[:, chosen] @ v[:, chosen].conj().T
