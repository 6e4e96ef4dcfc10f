"""Dense qubit-register linear algebra.

Small-register (d <= 10) states and observables are held as explicit
complex matrices.  Conventions used throughout the package:

* qubit 0 is the leftmost Kronecker factor, so basis index x encodes the
  bitstring (x_1 ... x_d) with qubit 0 as the most significant bit;
* density matrices are Hermitian, unit trace, positive semidefinite up to
  a small numerical floor;
* eigensystems are returned with eigenvalues ascending and a deterministic
  eigenvector convention (fixed phase, tie-broken degenerate blocks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)
PHASE_S = np.array([[1.0, 0.0], [0.0, 1.0j]], dtype=complex)

PAULI_BY_LETTER = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

HERMITIAN_ATOL = 1e-10
TRACE_ATOL = 1e-10
EIGVAL_FLOOR = -1e-9
UNITARY_ATOL = 1e-8
BORN_CLAMP = -1e-10
IMAG_RESIDUE_ATOL = 1e-9

MAX_QUBITS = 10


def kron_all(factors):
    """Kronecker product of a sequence of matrices, qubit 0 leftmost."""
    out = np.array([[1.0 + 0.0j]])
    for f in factors:
        out = np.kron(out, f)
    return out


def _as_matrix(obj):
    if isinstance(obj, DensityMatrix) or isinstance(obj, Observable):
        return obj.mat
    return np.asarray(obj, dtype=complex)


def _check_square_qubit_dim(mat, what):
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {mat.shape}")
    dim = mat.shape[0]
    if dim < 2 or (dim & (dim - 1)) != 0:
        raise ValueError(f"{what} dimension {dim} is not a power of two")
    if not np.all(np.isfinite(mat.view(float))):
        raise ValueError(f"{what} contains non-finite entries")
    return dim


def _check_hermitian(mat, what, atol=HERMITIAN_ATOL):
    dev = np.max(np.abs(mat - mat.conj().T))
    if dev > atol:
        raise ValueError(f"{what} is not Hermitian (max deviation {dev:.3e})")


class DensityMatrix:
    """A validated d-qubit density matrix.

    Parameters
    ----------
    mat : array_like
        Square complex matrix of dimension 2**d.  Must be Hermitian within
        1e-10, have unit trace within 1e-10, and eigenvalues >= -1e-9.
    """

    def __init__(self, mat):
        mat = np.asarray(mat, dtype=complex)
        dim = _check_square_qubit_dim(mat, "density matrix")
        _check_hermitian(mat, "density matrix")
        tr = np.trace(mat)
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValueError(f"density matrix trace {tr:.12g} differs from 1")
        # eigvalsh is cheap here and only feeds this validity check
        evals = np.linalg.eigvalsh((mat + mat.conj().T) / 2.0)
        if evals.min() < EIGVAL_FLOOR:
            raise ValueError(
                f"density matrix has eigenvalue {evals.min():.3e} below floor {EIGVAL_FLOOR}"
            )
        self.mat = mat
        self.dim = dim
        self.n_qubits = dim.bit_length() - 1

    def __repr__(self):
        return f"DensityMatrix(d={self.n_qubits})"


class Observable:
    """A Hermitian observable with cached support, norm and trace.

    The support is the set of qubit indices the operator acts on
    non-trivially.  ``factors`` may record a tensor-product decomposition
    (one 2x2 factor per qubit) and ``pauli_letters`` a plain Pauli-string
    form; both enable fast estimator paths but are never required.
    """

    def __init__(self, mat, factors=None, pauli_letters=None):
        mat = np.asarray(mat, dtype=complex)
        dim = _check_square_qubit_dim(mat, "observable")
        _check_hermitian(mat, "observable")
        self.mat = mat
        self.dim = dim
        self.n_qubits = dim.bit_length() - 1
        evals = np.linalg.eigvalsh((mat + mat.conj().T) / 2.0)
        self.eigmin = float(evals[0])
        self.eigmax = float(evals[-1])
        self.op_norm = float(np.max(np.abs(evals)))
        self.trace = float(np.trace(mat).real)
        self.support = self._compute_support()
        if factors is not None:
            factors = [np.asarray(f, dtype=complex) for f in factors]
            if len(factors) != self.n_qubits:
                raise ValueError("factor list length must equal qubit count")
        self.factors = factors
        self.pauli_letters = pauli_letters

    def _compute_support(self):
        d = self.n_qubits
        tensor = self.mat.reshape((2,) * (2 * d))
        support = set()
        for k in range(d):
            tk = np.moveaxis(tensor, (k, d + k), (0, 1))
            off = max(np.max(np.abs(tk[0, 1])), np.max(np.abs(tk[1, 0])))
            diag_dev = np.max(np.abs(tk[0, 0] - tk[1, 1]))
            if off > HERMITIAN_ATOL or diag_dev > HERMITIAN_ATOL:
                support.add(k)
        return frozenset(support)

    def __repr__(self):
        return f"Observable(d={self.n_qubits}, support={sorted(self.support)})"


@dataclass
class EigenSystem:
    """Eigenvalues (ascending) and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def make_theta_state(d, theta):
    """Build the d-qubit state (I + theta * X^{tensor d}) / 2**d.

    Valid for d in [1, 10] and |theta| <= 1; outside that range the matrix
    would not be a state or would be too large for the dense backend.
    """
    if not isinstance(d, (int, np.integer)) or d < 1 or d > MAX_QUBITS:
        raise ValueError(f"qubit count d={d} outside supported range [1, {MAX_QUBITS}]")
    if abs(theta) > 1.0:
        raise ValueError(f"theta={theta} outside [-1, 1], state would not be positive")
    xd = kron_all([PAULI_X] * d)
    mat = (np.eye(2**d, dtype=complex) + theta * xd) / (2**d)
    return DensityMatrix(mat)


def pauli_string(letters):
    """Observable for a Pauli string such as ``"XZY"`` (qubit 0 leftmost)."""
    letters = str(letters).upper()
    if not letters or any(c not in PAULI_BY_LETTER for c in letters):
        raise ValueError(f"invalid Pauli string {letters!r}")
    factors = [PAULI_BY_LETTER[c] for c in letters]
    return Observable(kron_all(factors), factors=factors, pauli_letters=letters)


def rotated_observable(d, gamma):
    """Observable (Rz(gamma)^dag X Rz(gamma))^{tensor d}.

    With Rz(gamma) = cos(gamma/2) I - i sin(gamma/2) Z the single-qubit
    factor works out to cos(gamma) X - sin(gamma) Y, so against the state
    from make_theta_state(d, theta) the expectation is theta * cos(gamma)**d.
    """
    if not isinstance(d, (int, np.integer)) or d < 1 or d > MAX_QUBITS:
        raise ValueError(f"qubit count d={d} outside supported range [1, {MAX_QUBITS}]")
    factor = math.cos(gamma) * PAULI_X - math.sin(gamma) * PAULI_Y
    letters = None
    if abs(math.sin(gamma)) < 1e-15:
        letters = "X" * d if math.cos(gamma) > 0 else None
    obs = Observable(kron_all([factor] * d), factors=[factor] * d, pauli_letters=letters)
    return obs


def expectation(rho, obs):
    """Real expectation value Tr(rho O).

    Raises if the dimensions disagree or the trace has an imaginary residue
    above 1e-9, which would indicate a non-Hermitian input.
    """
    rmat = _as_matrix(rho)
    omat = _as_matrix(obs)
    if rmat.shape != omat.shape:
        raise ValueError(f"dimension mismatch {rmat.shape} vs {omat.shape}")
    val = np.trace(rmat @ omat)
    if abs(val.imag) > IMAG_RESIDUE_ATOL * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has imaginary residue {val.imag:.3e}")
    return float(val.real)


# ---------------------------------------------------------------------------
# Cyclic Jacobi eigensolver for Hermitian matrices.
# Dimensions in this package are at most 2**10, so the O(n^3)-per-sweep cost
# is irrelevant next to the benefit of simple, robustly orthonormal vectors.


def _jacobi_sweeps(a, max_sweeps=100, tol=1e-14):
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(1.0, np.max(np.abs(a)))
    for _ in range(max_sweeps):
        off = math.sqrt(np.sum(np.abs(np.tril(a, -1)) ** 2))
        if off <= tol * scale * n:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= tol * scale:
                    continue
                # phase factor making the pivot real, then a plane rotation
                e = apq.conjugate() / r
                alpha = a[p, p].real
                gamma = a[q, q].real
                phi = 0.5 * math.atan2(2.0 * r, gamma - alpha)
                c = math.cos(phi)
                s = math.sin(phi)
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * e * colq
                a[:, q] = s * colp + c * e * colq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * e.conjugate() * rowq
                a[q, :] = s * rowp + c * e.conjugate() * rowq
                a[p, q] = 0.0
                a[q, p] = 0.0
                colp = v[:, p].copy()
                colq = v[:, q].copy()
                v[:, p] = c * colp - s * e * colq
                v[:, q] = s * colp + c * e * colq
    return np.real(np.diag(a)).copy(), v


def _canonical_phase(col):
    idx = np.flatnonzero(np.abs(col) > 1e-8)
    if idx.size == 0:
        return col
    lead = col[idx[0]]
    return col * (lead.conjugate() / abs(lead))


def _lexi_key(col):
    rounded = np.round(col, 9)
    key = np.empty(2 * rounded.size)
    key[0::2] = rounded.real
    key[1::2] = rounded.imag
    # avoid -0.0 flipping comparisons
    key[key == 0.0] = 0.0
    return tuple(key)


def hermitian_eig(obs):
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns an EigenSystem with eigenvalues ascending.  Each eigenvector is
    phase-fixed (first sizable entry real positive) and degenerate blocks
    are ordered lexicographically by their rounded entries, so the output
    is deterministic for a fixed input.
    """
    mat = _as_matrix(obs)
    _check_square_qubit_dim(mat, "matrix")
    _check_hermitian(mat, "matrix")
    a = ((mat + mat.conj().T) / 2.0).astype(complex)
    evals, evecs = _jacobi_sweeps(a)
    order = np.argsort(evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    for j in range(evecs.shape[1]):
        evecs[:, j] = _canonical_phase(evecs[:, j])
    # deterministic ordering inside degenerate blocks
    scale = max(1.0, np.max(np.abs(evals)))
    gap_tol = 1e-9 * scale
    start = 0
    n = evals.size
    while start < n:
        stop = start + 1
        while stop < n and evals[stop] - evals[stop - 1] <= gap_tol:
            stop += 1
        if stop - start > 1:
            # copies, not views: writing reordered columns back would
            # otherwise read through aliased memory
            block = [evecs[:, j].copy() for j in range(start, stop)]
            block.sort(key=_lexi_key)
            for j, colv in enumerate(block):
                evecs[:, start + j] = colv
        start = stop
    return EigenSystem(eigenvalues=evals, eigenvectors=evecs)


def born_probabilities(rho, unitary):
    """Computational-basis outcome distribution of U rho U^dag.

    Small negative diagonal entries above -1e-10 are clamped to zero and
    the vector is renormalized; anything more negative raises.
    """
    rmat = _as_matrix(rho)
    u = np.asarray(unitary, dtype=complex)
    if u.shape != rmat.shape:
        raise ValueError(f"unitary shape {u.shape} does not match state {rmat.shape}")
    probs = np.real(np.einsum("ij,jk,ik->i", u, rmat, u.conj()))
    if probs.min() < BORN_CLAMP:
        raise ValueError(f"outcome probability {probs.min():.3e} below clamp {BORN_CLAMP}")
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if not (0.9999999 < total < 1.0000001):
        raise ValueError(f"outcome probabilities sum to {total:.9f}")
    return probs / total


def born_sample(rho, unitary, rng):
    """Measure U rho U^dag in the computational basis.

    Returns the outcome bitstring as an int array of shape (d,), qubit 0
    first.  ``unitary`` must be unitary within 1e-8.
    """
    u = np.asarray(unitary, dtype=complex)
    dim = u.shape[0]
    if np.max(np.abs(u @ u.conj().T - np.eye(dim))) > UNITARY_ATOL:
        raise ValueError("matrix is not unitary within 1e-8")
    probs = born_probabilities(rho, u)
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    idx = min(idx, dim - 1)
    d = dim.bit_length() - 1
    return np.array([(idx >> (d - 1 - k)) & 1 for k in range(d)], dtype=np.int64)


def bits_to_index(bits):
    """Bitstring (qubit 0 first) to computational-basis index."""
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx
