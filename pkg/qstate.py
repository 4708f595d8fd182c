# qstate.py - Bipartite path states, noise channels and measurement bases

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from utils import (
    log_message, compensated_sum, is_power_of_two,
    InvalidDimensionError, InvalidParameterError, DegenerateInputError,
    DimensionMismatchError, ValidationError,
)
from config import *

LN2 = np.log(2.0)

# -----------------------
# TYPES
# -----------------------

@dataclass(frozen=True, eq=False)
class PureState:
    """Pure state of two path qudits, amplitude index (i, j) <-> i*dim_b + j"""
    dim_a: int
    dim_b: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.dim_a * self.dim_b:
            raise DimensionMismatchError(
                f"expected {self.dim_a * self.dim_b} amplitudes, got {amps.size}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"state is not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", amps)

    def as_matrix(self):
        """Amplitudes reshaped to dim_a x dim_b (row = path of A)"""
        return self.amplitudes.reshape(self.dim_a, self.dim_b)

    def overlap(self, other):
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class BipartiteDensityMatrix:
    """Hermitian, positive, unit-trace operator on the two-party path basis"""
    dim_a: int
    dim_b: int
    entries: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        n = self.dim_a * self.dim_b
        if rho.shape != (n, n):
            raise DimensionMismatchError(f"expected {n}x{n} matrix, got {rho.shape}")
        object.__setattr__(self, "entries", rho)
        self._check_hermitian_trace()
        if n <= PSD_CHECK_MAX_DIM:
            self._check_psd()

    def _check_hermitian_trace(self):
        rho = self.entries
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ValidationError("density matrix is not Hermitian")
        trace = np.trace(rho)
        if abs(trace - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix trace is {trace.real!r}, expected 1")

    def _check_psd(self):
        smallest = float(np.linalg.eigvalsh(self.entries)[0])
        if smallest < -PSD_TOL:
            raise ValidationError(f"density matrix has eigenvalue {smallest!r} < 0")

    def check_invariants(self):
        """Full invariant check including the eigenvalue test at any size"""
        self._check_hermitian_trace()
        self._check_psd()
        return True

    @property
    def dim(self):
        if self.dim_a != self.dim_b:
            raise DimensionMismatchError("local dimensions differ")
        return self.dim_a

    def index(self, i, j):
        return i * self.dim_b + j

    def element(self, bra, ket):
        return matrix_element(self, bra, ket)


@dataclass(frozen=True, eq=False)
class Basis:
    """d orthonormal vectors of C^d, stored as the rows of `vectors`"""
    dim: int
    vectors: np.ndarray
    name: str = ""

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=complex)
        if vecs.shape != (self.dim, self.dim):
            raise DimensionMismatchError(f"expected {self.dim} vectors of length {self.dim}")
        gram = vecs.conj() @ vecs.T
        if np.max(np.abs(gram - np.eye(self.dim))) > NORM_TOL:
            raise ValidationError(f"basis {self.name or '?'} is not orthonormal")
        object.__setattr__(self, "vectors", vecs)

    def __len__(self):
        return self.dim

    def __getitem__(self, k):
        return self.vectors[k]

# -----------------------
# STATE CONSTRUCTION
# -----------------------

def _check_dim(d):
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {d}")
    return int(d)

def max_entangled(d):
    """
    Maximally entangled target state (1/sqrt(d)) sum_i |ii>
    Args:
        d (int): local path dimension, >= 2
    Returns:
        PureState
    """
    d = _check_dim(d)
    amps = np.zeros(d * d, dtype=complex)
    amps[np.arange(d) * (d + 1)] = 1.0 / np.sqrt(d)
    return PureState(d, d, amps)

def weighted_entangled(amplitudes):
    """
    Normalized sum_i a_i |ii> for an arbitrary (imbalanced) amplitude vector
    Args:
        amplitudes (array-like): complex weights a_i, one per path
    Returns:
        PureState
    """
    a = np.asarray(amplitudes, dtype=complex).reshape(-1)
    norm = np.sqrt(np.vdot(a, a).real)
    if a.size == 0 or norm == 0.0:
        raise DegenerateInputError("amplitude vector is zero")
    d = a.size
    amps = np.zeros(d * d, dtype=complex)
    amps[np.arange(d) * (d + 1)] = a / norm
    return PureState(d, d, amps)

def density_from_pure(psi):
    vec = psi.amplitudes
    rho = np.outer(vec, vec.conj())
    return BipartiteDensityMatrix(psi.dim_a, psi.dim_b, 0.5 * (rho + rho.conj().T))

def _as_density(state):
    if isinstance(state, PureState):
        return density_from_pure(state)
    return state

def random_density_matrix(d, rank=None, seed=None):
    """Ginibre-distributed random two-qudit density matrix (for oracle tests)"""
    d = _check_dim(d)
    n = d * d
    rank = n if rank is None else int(rank)
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return BipartiteDensityMatrix(d, d, rho / np.trace(rho).real)

# -----------------------
# NOISE CHANNELS
# -----------------------

def apply_white_noise(rho, p):
    """p*rho + (1-p)*identity/(d_a d_b)"""
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"white-noise weight p must lie in [0, 1], got {p}")
    rho = _as_density(rho)
    n = rho.dim_a * rho.dim_b
    mixed = p * rho.entries + (1.0 - p) * np.eye(n) / n
    return BipartiteDensityMatrix(rho.dim_a, rho.dim_b, mixed)

def apply_crosstalk(rho, eps):
    """
    Uniform background eps on every cross-path population <ij|rho|ij> (i != j),
    followed by renormalization of the trace
    Args:
        rho (BipartiteDensityMatrix): input state
        eps (float): background per cross population, eps*(#cross) < 1
    Returns:
        BipartiteDensityMatrix
    """
    rho = _as_density(rho)
    da, db = rho.dim_a, rho.dim_b
    cross = np.array([i != j for i in range(da) for j in range(db)], dtype=float)
    if eps < 0 or eps * cross.sum() >= 1.0:
        raise InvalidParameterError(
            f"crosstalk eps={eps} must satisfy 0 <= eps*{int(cross.sum())} < 1"
        )
    out = rho.entries + eps * np.diag(cross)
    out = out / np.trace(out).real
    return BipartiteDensityMatrix(da, db, out)

def dephasing_mask(dim_a, dim_b, sigma):
    """Damping factors for a Gaussian random phase per path of arm A"""
    damp = np.exp(-float(sigma) ** 2)
    mask_a = np.full((dim_a, dim_a), damp)
    np.fill_diagonal(mask_a, 1.0)
    return np.kron(mask_a, np.ones((dim_b, dim_b)))

def apply_dephasing(rho, sigma, seed=None, n_samples=0):
    """
    Path dephasing: every coherence between different A-paths is multiplied
    by exp(-sigma^2), populations <ij|rho|ij> are untouched.
    With n_samples > 0 the phase average is sampled instead of taken
    analytically (seeded, converges to the analytic map).
    """
    if sigma < 0:
        raise InvalidParameterError(f"dephasing width must be >= 0, got {sigma}")
    rho = _as_density(rho)
    da, db = rho.dim_a, rho.dim_b
    if n_samples <= 0:
        out = rho.entries * dephasing_mask(da, db, sigma)
        return BipartiteDensityMatrix(da, db, out)

    rng = np.random.default_rng(seed)
    acc = np.zeros_like(rho.entries)
    for _ in range(int(n_samples)):
        phases = np.exp(1j * rng.normal(0.0, sigma, size=da))
        diag = np.repeat(phases, db)
        acc += diag[:, None] * rho.entries * diag.conj()[None, :]
    out = acc / n_samples
    return BipartiteDensityMatrix(da, db, 0.5 * (out + out.conj().T))

def dephasing_width_for_damping(damping):
    """sigma such that exp(-sigma^2) equals the requested coherence damping"""
    if not 0.0 < damping <= 1.0:
        raise InvalidParameterError(f"damping must lie in (0, 1], got {damping}")
    return float(np.sqrt(-np.log(damping)))

def isotropic_state(d, p):
    return apply_white_noise(density_from_pure(max_entangled(d)), p)

def isotropic_for_fidelity(d, fidelity):
    """White-noise weight p giving Tr(rho Phi+) = fidelity"""
    d = _check_dim(d)
    p = (fidelity - 1.0 / d ** 2) / (1.0 - 1.0 / d ** 2)
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"fidelity {fidelity} not reachable with white noise at d={d}")
    return p

NOISE_KINDS = ("white", "dephase", "crosstalk")

def apply_noise_stack(rho, noise, seed=None):
    """Apply a list of {kind, params} channel descriptions in order"""
    for step in noise or []:
        kind = step.get("kind")
        params = step.get("params", {})
        if kind == "white":
            rho = apply_white_noise(rho, float(params["p"]))
        elif kind == "dephase":
            rho = apply_dephasing(rho, float(params["sigma"]), seed=seed,
                                  n_samples=int(params.get("samples", 0)))
        elif kind == "crosstalk":
            rho = apply_crosstalk(rho, float(params["eps"]))
        else:
            raise InvalidParameterError(f"unknown noise kind {kind!r}, expected one of {NOISE_KINDS}")
        log_message(f"Applied {kind} channel {params}", "DEBUG")
    return rho

def build_state(document):
    """
    Build the simulated source state from a state/noise document
    Args:
        document (dict): {dim, amplitudes?, noise: [{kind, params}...], seed}
    Returns:
        BipartiteDensityMatrix
    """
    amplitudes = document.get("amplitudes")
    if amplitudes:
        psi = weighted_entangled(amplitudes)
        if "dim" in document and psi.dim_a != int(document["dim"]):
            raise DimensionMismatchError("amplitude list length differs from dim")
    else:
        psi = max_entangled(int(document["dim"]))
    rho = density_from_pure(psi)
    return apply_noise_stack(rho, document.get("noise"), seed=document.get("seed"))

# -----------------------
# BASES
# -----------------------

def computational_basis(d):
    d = _check_dim(d)
    return Basis(d, np.eye(d, dtype=complex), "computational")

def fourier_basis(d):
    """|L_k> = sum_j exp(2 pi i k j / d) |j> / sqrt(d)"""
    d = _check_dim(d)
    k = np.arange(d)
    vecs = np.exp(2j * np.pi * np.outer(k, k) / d) / np.sqrt(d)
    return Basis(d, vecs, "fourier")

def product_mub_basis(n):
    """
    Tensor products of the qubit basis (|0> +- |1>)/sqrt(2) over n qubits,
    with |b1...bn> encoded as the path index (b1 most significant)
    """
    if int(n) != n or n < 1:
        raise InvalidDimensionError(f"number of qubits must be >= 1, got {n}")
    hadamard = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
    vecs = np.array([[1.0]])
    for _ in range(int(n)):
        vecs = np.kron(vecs, hadamard)
    return Basis(2 ** int(n), vecs.astype(complex), "product-mub")

def unbiasedness(b1, b2):
    """max_{j,k} | |<b1_j|b2_k>|^2 - 1/d |  (0 for mutually unbiased bases)"""
    if b1.dim != b2.dim:
        raise DimensionMismatchError(f"basis dimensions differ: {b1.dim} vs {b2.dim}")
    overlaps = np.abs(b1.vectors.conj() @ b2.vectors.T) ** 2
    return float(np.max(np.abs(overlaps - 1.0 / b1.dim)))

# -----------------------
# FUNCTIONALS
# -----------------------

def shannon_entropy(probs):
    """Shannon entropy in bits, 0 log 0 := 0, compensated summation"""
    p = np.asarray(probs, dtype=float).reshape(-1)
    return -compensated_sum(xlogy(p, p)) / LN2

def entanglement_entropy_pure(psi):
    """Entropy (bits) of the squared Schmidt coefficients of a pure state"""
    singular = np.linalg.svd(psi.as_matrix(), compute_uv=False)
    return shannon_entropy(singular ** 2)

def matrix_element(rho, bra, ket):
    """<ij|rho|kl> for bra=(i, j), ket=(k, l)"""
    rho = _as_density(rho)
    (i, j), (k, l) = bra, ket
    for a, b in ((i, j), (k, l)):
        if not (0 <= a < rho.dim_a and 0 <= b < rho.dim_b):
            raise InvalidParameterError(f"path index ({a},{b}) out of range")
    return complex(rho.entries[i * rho.dim_b + j, k * rho.dim_b + l])

def fidelity_to_target(rho):
    """Tr(rho |Phi+><Phi+|) against the maximally entangled state of rho's dimension"""
    rho = _as_density(rho)
    d = rho.dim
    idx = np.arange(d) * (d + 1)
    return float(rho.entries[np.ix_(idx, idx)].sum().real / d)

def is_supported_pipeline_dim(d):
    return is_power_of_two(d) and 2 <= d <= MAX_PIPELINE_DIM
