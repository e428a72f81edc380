"""Exact linear-algebra substrate for small multi-qubit protocol simulations.

States, observables, channels and measurements for registers of up to a few
qubits, plus the specific entangled resource states, logical-subspace Pauli
operators and phase-encoding unitaries used by the sensing protocols.
Everything is dense complex linear algebra; nothing here scales past n = 4
probe qubits and nothing needs to.

All objects are immutable after construction and all operations are pure
functions taking an explicit rng where sampling is involved, so concurrent
read access is safe.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

# Tolerances for type invariants.
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
NORM_TOL = 1e-12
KRAUS_TOL = 1e-10
EIGENVALUE_GROUP_TOL = 1e-8

PAULI_AXES = ("X", "Y", "Z")

_I2 = np.eye(2, dtype=complex)
_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# |R/L> = (|0> +- i|1>)/sqrt(2): the circular (Y-eigenstate) basis.
KET_R = np.array([1, 1j], dtype=complex) / np.sqrt(2)
KET_L = np.array([1, -1j], dtype=complex) / np.sqrt(2)


class DimensionMismatchError(ValueError):
    """Operands act on different Hilbert-space dimensions."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def kron_all(*ops):
    """Tensor product of matrices or vectors, left to right."""
    out = np.array([[1.0 + 0j]]) if ops[0].ndim == 2 else np.array([1.0 + 0j])
    for op in ops:
        out = np.kron(out, op)
    return out


def kron_power(op, n):
    out = np.array([[1.0 + 0j]]) if op.ndim == 2 else np.array([1.0 + 0j])
    for _ in range(n):
        out = np.kron(out, op)
    return out


@dataclass(frozen=True)
class PureState:
    """Unit-norm state vector on a Hilbert space of dimension ``dim``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(np.asarray(self.amplitudes, dtype=complex).reshape(-1))
        object.__setattr__(self, "amplitudes", amps)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state vector norm {norm} deviates from 1 by more than {NORM_TOL}")

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix."""

    data: np.ndarray

    def __post_init__(self):
        m = _frozen(np.asarray(self.data, dtype=complex))
        object.__setattr__(self, "data", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian within tolerance")
        if abs(np.trace(m).real - 1.0) > TRACE_TOL or abs(np.trace(m).imag) > TRACE_TOL:
            raise ValueError("density matrix trace deviates from 1")
        if np.linalg.eigvalsh(m)[0] < -PSD_TOL:
            raise ValueError("density matrix has a negative eigenvalue below tolerance")

    @property
    def dim(self) -> int:
        return self.data.shape[0]


def as_density(state) -> DensityMatrix:
    """Coerce a PureState, DensityMatrix or raw array to a DensityMatrix."""
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, PureState):
        return state.density()
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return PureState(arr).density()
    return DensityMatrix(arr)


def canonical_eigh(matrix):
    """Eigendecomposition with a reproducible convention.

    Eigenvalues ascending; each eigenvector's phase is fixed so that its
    first component with magnitude above 1e-9 is real and positive.
    """
    vals, vecs = np.linalg.eigh(matrix)
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-9)
        if nz.size:
            phase = col[nz[0]] / abs(col[nz[0]])
            vecs[:, k] = col / phase
    return vals, vecs


@dataclass(frozen=True)
class Observable:
    """Hermitian operator with cached spectral decomposition.

    ``eigenvalues`` holds the distinct eigenvalues (ascending) and
    ``eigenprojectors`` the matching orthogonal projectors, complete on the
    whole space.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenprojectors: tuple

    def __post_init__(self):
        m = _frozen(np.asarray(self.matrix, dtype=complex))
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "eigenvalues", _frozen(np.asarray(self.eigenvalues, dtype=float)))
        object.__setattr__(self, "eigenprojectors", tuple(_frozen(p) for p in self.eigenprojectors))
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("observable is not Hermitian within tolerance")
        recon = sum(l * p for l, p in zip(self.eigenvalues, self.eigenprojectors))
        if np.max(np.abs(recon - m)) > HERMITIAN_TOL:
            raise ValueError("spectral decomposition does not reproduce the matrix")
        total = sum(self.eigenprojectors)
        if np.max(np.abs(total - np.eye(self.dim))) > HERMITIAN_TOL:
            raise ValueError("eigenprojectors are not complete")
        for i, p in enumerate(self.eigenprojectors):
            for q in self.eigenprojectors[i + 1:]:
                if np.max(np.abs(p @ q)) > HERMITIAN_TOL:
                    raise ValueError("eigenprojectors are not orthogonal")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, matrix) -> "Observable":
        matrix = np.asarray(matrix, dtype=complex)
        vals, vecs = canonical_eigh(matrix)
        distinct = []
        projectors = []
        k = 0
        while k < len(vals):
            j = k
            while j + 1 < len(vals) and vals[j + 1] - vals[k] < EIGENVALUE_GROUP_TOL:
                j += 1
            block = vecs[:, k:j + 1]
            distinct.append(float(np.mean(vals[k:j + 1])))
            projectors.append(block @ block.conj().T)
            k = j + 1
        return cls(matrix, np.array(distinct), tuple(projectors))


def pauli(axis: str) -> Observable:
    """Single-qubit Pauli observable in the computational basis."""
    axis = axis.upper()
    if axis not in PAULI_AXES:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    return Observable.from_matrix(_PAULI[axis])


def pauli_matrix(axis: str):
    return _PAULI[axis.upper()].copy()


# Cyclic successor on (X, Y, Z): successor(X)=Y, successor(Y)=Z, successor(Z)=X.
_SUCC = {"X": "Y", "Y": "Z", "Z": "X"}


@dataclass(frozen=True)
class LogicalFrame:
    """Two-dimensional logical subspace of an n-qubit register.

    ``pole0``/``pole1`` span the subspace and are the +1/-1 eigenstates of
    the logical Pauli named by ``pole_axis``.  The other two logical Paulis
    are fixed by the cyclic algebra: the successor axis of ``pole_axis`` acts
    as the flip |pole0><pole1| + h.c., the predecessor as the corresponding
    -i/+i combination, so that the three operators square to the subspace
    projector and anticommute pairwise on it.

    The protocol frame (``standard``) uses the per-qubit circular states
    R^n / L^n as poles with pole_axis Y: the per-qubit phase encoding then
    acts inside the subspace as a rotation about the diagonal logical Pauli,
    and at n = 1 all three logical operators reduce to the ordinary Paulis.
    """

    n: int
    pole0: PureState
    pole1: PureState
    pole_axis: str = "Y"

    def __post_init__(self):
        if self.pole_axis not in PAULI_AXES:
            raise ValueError(f"invalid pole axis {self.pole_axis!r}")
        if self.pole0.dim != 2 ** self.n or self.pole1.dim != 2 ** self.n:
            raise ValueError("pole dimension does not match qubit count")
        overlap = np.vdot(self.pole0.amplitudes, self.pole1.amplitudes)
        if abs(overlap) > NORM_TOL * 10:
            raise ValueError("poles are not orthogonal")

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @classmethod
    def standard(cls, n: int) -> "LogicalFrame":
        """Protocol frame: poles R^n and L^n, diagonal axis Y."""
        return cls(n, PureState(kron_power(KET_R, n)), PureState(kron_power(KET_L, n)), "Y")

    @classmethod
    def computational(cls, n: int) -> "LogicalFrame":
        """Frame with poles |0...0> and |1...1>, diagonal axis Z."""
        e0 = np.zeros(2 ** n, dtype=complex)
        e0[0] = 1.0
        e1 = np.zeros(2 ** n, dtype=complex)
        e1[-1] = 1.0
        return cls(n, PureState(e0), PureState(e1), "Z")

    def subspace_projector(self):
        p0, p1 = self.pole0.amplitudes, self.pole1.amplitudes
        return np.outer(p0, p0.conj()) + np.outer(p1, p1.conj())

    def _bold_matrix(self, axis: str):
        p0, p1 = self.pole0.amplitudes, self.pole1.amplitudes
        m00 = np.outer(p0, p0.conj())
        m11 = np.outer(p1, p1.conj())
        m01 = np.outer(p0, p1.conj())
        m10 = np.outer(p1, p0.conj())
        if axis == self.pole_axis:
            return m00 - m11
        if axis == _SUCC[self.pole_axis]:
            return m01 + m10
        return -1j * m01 + 1j * m10


def bold_pauli(frame: LogicalFrame, axis: str) -> Observable:
    """Logical Pauli of the frame: +-1 on the subspace, 0 on its complement."""
    axis = axis.upper()
    if axis not in PAULI_AXES:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    return Observable.from_matrix(frame._bold_matrix(axis))


def parse_probe_label(label) -> tuple:
    """Normalize a signed Pauli label like '+X' or ('Z', -1) to (axis, sign)."""
    if isinstance(label, str):
        label = label.strip()
        sign = -1 if label.startswith("-") else 1
        axis = label.lstrip("+-").upper()
    else:
        axis, sign = label
        axis = axis.upper()
        sign = int(sign)
    if axis not in PAULI_AXES or sign not in (1, -1):
        raise ValueError(f"invalid signed Pauli label {label!r}")
    return axis, sign


SIGNED_LABELS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")


def mub_probe(frame: LogicalFrame, label) -> PureState:
    """+1 eigenvector of the signed logical Pauli within the frame subspace."""
    axis, sign = parse_probe_label(label)
    p0, p1 = frame.pole0.amplitudes, frame.pole1.amplitudes
    if axis == frame.pole_axis:
        vec = p0 if sign == 1 else p1
    elif axis == _SUCC[frame.pole_axis]:
        vec = (p0 + sign * p1) / np.sqrt(2)
    else:
        vec = (p0 + sign * 1j * p1) / np.sqrt(2)
    return PureState(vec)


def encoding_unitary(n: int, phi: float):
    """Per-qubit phase rotation exp(i*phi*Y), tensored over n qubits.

    Restricted to span{R^n, L^n} it acts as diag(e^{i n phi}, e^{-i n phi}).
    """
    single = np.cos(phi) * _I2 + 1j * np.sin(phi) * _PAULI["Y"]
    return kron_power(single, n)


@functools.lru_cache(maxsize=None)
def resource_state(n: int) -> PureState:
    """Entangled (1+n)-qubit probe shared between the provider and sensor.

    Defined operationally as the unique joint +1 eigenstate of the three
    commuting check operators X (x) Zb, Z (x) Xb, Y (x) Yb, with the logical
    operators taken in the standard frame.  For n = 1 this is
    (|0>|+> + |1>|->)/sqrt(2); the reduced state on the first qubit is
    maximally mixed for every n.
    """
    frame = LogicalFrame.standard(n)
    s_total = sum(
        np.kron(_PAULI[a], frame._bold_matrix(b))
        for a, b in (("X", "Z"), ("Z", "X"), ("Y", "Y"))
    )
    vals, vecs = canonical_eigh(s_total)
    if abs(vals[-1] - 3.0) > 1e-9 or vals[-2] > 3.0 - 1e-6:
        raise RuntimeError("resource state eigenproblem is degenerate")
    return PureState(vecs[:, -1])


@dataclass(frozen=True)
class Channel:
    """Completely positive trace-preserving map in Kraus form."""

    dim_in: int
    dim_out: int
    kraus_operators: tuple

    def __post_init__(self):
        ops = tuple(_frozen(np.asarray(k, dtype=complex)) for k in self.kraus_operators)
        object.__setattr__(self, "kraus_operators", ops)
        for k in ops:
            if k.shape != (self.dim_out, self.dim_in):
                raise DimensionMismatchError("Kraus operator shape does not match channel dims")
        total = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(total - np.eye(self.dim_in))) > KRAUS_TOL:
            raise ValueError("Kraus operators do not satisfy the completeness relation")


def identity_channel(dim: int) -> Channel:
    return Channel(dim, dim, (np.eye(dim, dtype=complex),))


def _pauli_strings(n: int):
    ops = [np.array([[1.0 + 0j]])]
    for _ in range(n):
        ops = [np.kron(o, m) for o in ops for m in (_I2, _PAULI["X"], _PAULI["Y"], _PAULI["Z"])]
    return ops


def depolarizing_channel(p: float, n_qubits: int = 1) -> Channel:
    """Register depolarizing map rho -> (1-p) rho + p I/d on n qubits."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("depolarizing probability must lie in [0, 1]")
    d = 2 ** n_qubits
    strings = _pauli_strings(n_qubits)
    kraus = [np.sqrt(1.0 - p + p / d ** 2) * strings[0]]
    kraus += [np.sqrt(p / d ** 2) * s for s in strings[1:]]
    return Channel(d, d, tuple(kraus))


def apply(op, state) -> DensityMatrix:
    """Apply a Channel or a unitary matrix to a state."""
    rho = as_density(state)
    if isinstance(op, Channel):
        if op.dim_in != rho.dim:
            raise DimensionMismatchError(f"channel acts on dim {op.dim_in}, state has dim {rho.dim}")
        out = sum(k @ rho.data @ k.conj().T for k in op.kraus_operators)
        return DensityMatrix(out)
    u = np.asarray(op, dtype=complex)
    if u.shape != (rho.dim, rho.dim):
        raise DimensionMismatchError(f"operator shape {u.shape} does not match state dim {rho.dim}")
    return DensityMatrix(u @ rho.data @ u.conj().T)


def expectation(obs: Observable, state) -> float:
    """Tr[O rho]."""
    rho = as_density(state)
    if obs.dim != rho.dim:
        raise DimensionMismatchError("observable and state dimensions differ")
    val = np.trace(obs.matrix @ rho.data)
    return float(val.real)


def born_probabilities(obs: Observable, state):
    rho = as_density(state)
    if obs.dim != rho.dim:
        raise DimensionMismatchError("observable and state dimensions differ")
    probs = np.array([np.trace(p @ rho.data).real for p in obs.eigenprojectors])
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def measure(obs: Observable, state, rng) -> tuple:
    """Projective measurement: returns (eigenvalue, post-measurement state)."""
    rho = as_density(state)
    probs = born_probabilities(obs, rho)
    k = int(rng.choice(len(probs), p=probs))
    proj = obs.eigenprojectors[k]
    post = proj @ rho.data @ proj
    post = post / np.trace(post).real
    return float(obs.eigenvalues[k]), DensityMatrix(post)


def _sqrtm_psd(m):
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(a, b) -> float:
    """F(rho, sigma) = ||sqrt(rho) sqrt(sigma)||_1^2; |<a|b>|^2 for pure inputs."""
    if isinstance(a, PureState) and isinstance(b, PureState):
        if a.dim != b.dim:
            raise DimensionMismatchError("states have different dimensions")
        return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
    if isinstance(a, PureState) or isinstance(b, PureState):
        psi, rho = (a, b) if isinstance(a, PureState) else (b, a)
        rho = as_density(rho)
        if psi.dim != rho.dim:
            raise DimensionMismatchError("states have different dimensions")
        return float((psi.amplitudes.conj() @ rho.data @ psi.amplitudes).real)
    ra, rb = as_density(a), as_density(b)
    if ra.dim != rb.dim:
        raise DimensionMismatchError("states have different dimensions")
    sa = _sqrtm_psd(ra.data)
    prod = sa @ rb.data @ sa
    vals = np.clip(np.linalg.eigvalsh(prod), 0.0, None)
    # drop the numerical noise floor; sqrt amplifies it otherwise
    if vals.size and vals[-1] > 0:
        vals[vals < vals[-1] * 1e-13] = 0.0
    return float(np.sum(np.sqrt(vals)) ** 2)


def trace_distance(a, b) -> float:
    """D(rho, sigma) = (1/2) ||rho - sigma||_1."""
    ra, rb = as_density(a), as_density(b)
    if ra.dim != rb.dim:
        raise DimensionMismatchError("states have different dimensions")
    vals = np.linalg.eigvalsh(ra.data - rb.data)
    return float(0.5 * np.sum(np.abs(vals)))


def partial_trace(state, dims, keep) -> DensityMatrix:
    """Reduced state over the subsystems listed in ``keep`` (indices into dims)."""
    rho = as_density(state)
    dims = list(dims)
    if int(np.prod(dims)) != rho.dim:
        raise DimensionMismatchError("subsystem dims do not multiply to the state dim")
    keep = sorted(keep)
    n = len(dims)
    tensor = rho.data.reshape(dims + dims)
    cur = n
    # Trace highest non-kept axis first so remaining axis positions stay valid.
    for idx in sorted((i for i in range(n) if i not in keep), reverse=True):
        tensor = np.trace(tensor, axis1=idx, axis2=idx + cur)
        cur -= 1
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return DensityMatrix(tensor.reshape(d_keep, d_keep))


def embed_operator(op, dims, targets):
    """Lift ``op`` acting on the listed subsystems to the full product space."""
    op = np.asarray(op, dtype=complex)
    dims = list(dims)
    targets = list(targets)
    n = len(dims)
    rest = [i for i in range(n) if i not in targets]
    d = int(np.prod(dims))
    d_t = int(np.prod([dims[i] for i in targets]))
    if op.shape != (d_t, d_t):
        raise DimensionMismatchError("operator does not match target register dims")
    big = np.kron(op, np.eye(int(np.prod([dims[i] for i in rest])) if rest else 1, dtype=complex))
    perm = targets + rest
    multi = np.array(np.unravel_index(np.arange(d), dims))
    ridx = np.ravel_multi_index([multi[i] for i in perm], [dims[i] for i in perm])
    return big[np.ix_(ridx, ridx)]


def random_pure_state(dim: int, rng) -> PureState:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return PureState(v / np.linalg.norm(v))


def random_density_matrix(dim: int, rng, rank=None) -> DensityMatrix:
    """Ginibre-induced random state (full rank unless ``rank`` given)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


class RegisterState:
    """Mutable multi-register density matrix used by the round engine.

    Registers are addressed by label; attach/trace operations let an
    adversary splice its own ancillas into the round's quantum state.  This
    is the one deliberately mutable object in the module; each protocol
    round owns a fresh instance.
    """

    def __init__(self, labels, dims, rho):
        self.labels = list(labels)
        self.dims = list(dims)
        self.rho = np.asarray(rho, dtype=complex)
        self.probe = self.labels[-1]

    @classmethod
    def from_state(cls, labels, dims, state):
        return cls(labels, dims, as_density(state).data)

    def index(self, label):
        return self.labels.index(label)

    def attach(self, label, state):
        rho = as_density(state)
        self.rho = np.kron(self.rho, rho.data)
        self.labels.append(label)
        self.dims.append(rho.dim)

    def apply_unitary(self, u, labels):
        full = embed_operator(u, self.dims, [self.index(l) for l in labels])
        self.rho = full @ self.rho @ full.conj().T

    def apply_kraus(self, kraus_list, labels):
        targets = [self.index(l) for l in labels]
        acc = np.zeros_like(self.rho)
        for k in kraus_list:
            full = embed_operator(k, self.dims, targets)
            acc += full @ self.rho @ full.conj().T
        self.rho = acc

    def embedded_projectors(self, obs: Observable, label):
        idx = self.index(label)
        return [embed_operator(p, self.dims, [idx]) for p in obs.eigenprojectors]

    def measure(self, obs: Observable, label, rng):
        projs = self.embedded_projectors(obs, label)
        probs = np.array([np.trace(p @ self.rho).real for p in projs])
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        k = int(rng.choice(len(probs), p=probs))
        post = projs[k] @ self.rho @ projs[k]
        self.rho = post / np.trace(post).real
        return float(obs.eigenvalues[k])

    def reduced(self, label) -> DensityMatrix:
        return partial_trace(DensityMatrix(self.rho), self.dims, [self.index(label)])

    def trace_out(self, label):
        idx = self.index(label)
        keep = [i for i in range(len(self.dims)) if i != idx]
        reduced = partial_trace(DensityMatrix(self.rho), self.dims, keep)
        self.rho = reduced.data.copy()
        del self.labels[idx]
        del self.dims[idx]
