"""Dense complex linear algebra and quantum primitives.

Everything operates on plain ``numpy`` arrays with ``complex128`` entries.
Composite systems use the convention that the *leftmost* tensor factor is
the most significant part of a composite index, matching ``numpy.kron``.
Subsystem shapes are plain tuples of local dimensions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ID2",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "PAULIS",
    "dag",
    "tensor",
    "proj",
    "partial_trace",
    "partial_transpose",
    "hermitian_eig",
    "is_hermitian",
    "is_psd",
    "is_density_matrix",
    "bell_vector",
    "ghz_vector",
    "bell_state",
    "ghz_state",
    "isotropic_state",
    "rho_alpha_theta",
    "make_state",
    "Isometry",
    "copy_isometry",
    "broadcast_isometry",
    "identity_isometry",
    "make_isometry",
    "apply_isometry",
    "ChoiMatrix",
    "choi_of_isometry",
    "apply_choi",
    "random_hermitian",
    "random_isometry",
    "random_density_matrix",
    "random_separable_state",
]

ID2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)

HERMITICITY_TOL = 1e-10


def dag(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return m.conj().T


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more arrays, leftmost factor most significant."""
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def proj(psi: np.ndarray) -> np.ndarray:
    """Rank-one projector |psi><psi| from a state vector."""
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def _check_shape(m: np.ndarray, dims: tuple[int, ...]) -> None:
    d = int(np.prod(dims))
    if m.shape != (d, d):
        raise ValueError(f"matrix shape {m.shape} does not match subsystem dims {dims}")


def partial_trace(m: np.ndarray, dims, keep) -> np.ndarray:
    """Trace out all factors not listed in ``keep``, preserving the kept order.

    ``dims`` are the local dimensions of the tensor factors of ``m``;
    ``keep`` is an iterable of factor indices to retain.
    """
    m = np.asarray(m, dtype=complex)
    dims = tuple(int(d) for d in dims)
    keep = tuple(int(k) for k in keep)
    _check_shape(m, dims)
    if sorted(keep) != sorted(set(keep)) or any(k < 0 or k >= len(dims) for k in keep):
        raise ValueError(f"invalid keep set {keep} for {len(dims)} factors")
    n = len(dims)
    t = m.reshape(dims + dims)
    # contract row/col indices of every traced factor
    traced = [i for i in range(n) if i not in keep]
    for cnt, i in enumerate(sorted(traced)):
        ax = i - cnt  # axes shift as previous traces remove pairs
        t = np.trace(t, axis1=ax, axis2=ax + (n - cnt))
    # remaining axes are in ascending factor order; permute to requested order
    kept_sorted = sorted(keep)
    perm = [kept_sorted.index(k) for k in keep]
    nk = len(keep)
    t = t.transpose(perm + [p + nk for p in perm])
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(dk, dk)


def partial_transpose(m: np.ndarray, dims, on: int) -> np.ndarray:
    """Transpose a single tensor factor of ``m``."""
    m = np.asarray(m, dtype=complex)
    dims = tuple(int(d) for d in dims)
    _check_shape(m, dims)
    n = len(dims)
    if not 0 <= on < n:
        raise ValueError(f"factor index {on} out of range for {n} factors")
    t = m.reshape(dims + dims)
    t = np.swapaxes(t, on, on + n)
    d = int(np.prod(dims))
    return t.reshape(d, d)


def is_hermitian(m: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return bool(np.linalg.norm(m - dag(m)) <= tol * max(1.0, np.linalg.norm(m)))


def is_psd(m: np.ndarray, tol: float = 1e-10) -> bool:
    if not is_hermitian(m):
        return False
    w = np.linalg.eigvalsh(m)
    return bool(w.min() >= -tol)


def is_density_matrix(m: np.ndarray, tol: float = 1e-9) -> bool:
    return is_psd(m, tol) and abs(np.trace(m) - 1.0) <= tol


def hermitian_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, eigenvector matrix V) with m = V diag(w) V†.
    Raises ValueError if ``m`` is not Hermitian within tolerance.
    """
    m = np.asarray(m, dtype=complex)
    if not is_hermitian(m):
        raise ValueError("hermitian_eig requires a Hermitian matrix")
    w, v = np.linalg.eigh(m)
    return w, v


# ---------------------------------------------------------------------------
# state constructors

_BELL_KINDS = {
    "phi+": (0, 1.0),
    "phi-": (0, -1.0),
    "psi+": (1, 1.0),
    "psi-": (1, -1.0),
}


def bell_vector(which: str = "phi+") -> np.ndarray:
    """One of the four Bell state vectors 'phi+', 'phi-', 'psi+', 'psi-'."""
    try:
        flip, sign = _BELL_KINDS[which]
    except KeyError:
        raise ValueError(f"unknown Bell state {which!r}") from None
    v = np.zeros(4, dtype=complex)
    if flip == 0:
        v[0], v[3] = 1.0, sign
    else:
        v[1], v[2] = 1.0, sign
    return v / np.sqrt(2.0)


def ghz_vector(n: int = 3) -> np.ndarray:
    """n-qubit GHZ state vector (|0...0> + |1...1>)/sqrt(2)."""
    if n < 1:
        raise ValueError("ghz needs at least one qubit")
    v = np.zeros(2**n, dtype=complex)
    v[0] = v[-1] = 1.0 / np.sqrt(2.0)
    return v


def bell_state(which: str = "phi+") -> np.ndarray:
    return proj(bell_vector(which))


def ghz_state(n: int = 3) -> np.ndarray:
    return proj(ghz_vector(n))


def isotropic_state(alpha: float) -> np.ndarray:
    """Two-qubit state alpha |phi+><phi+| + (1 - alpha) I/4."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} out of range [0, 1]")
    return alpha * bell_state("phi+") + (1.0 - alpha) * np.eye(4, dtype=complex) / 4.0


def rho_alpha_theta(alpha: float, theta: float) -> np.ndarray:
    """Two-qubit family alpha |psi_theta><psi_theta| + (1 - alpha) rho_A x I/2.

    |psi_theta> = cos(theta)|00> + sin(theta)|11> and rho_A is its first
    marginal, so the noise term leaves Alice's reduced state untouched.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} out of range [0, 1]")
    if not 0.0 <= theta <= np.pi / 4 + 1e-12:
        raise ValueError(f"theta={theta} out of range [0, pi/4]")
    psi = np.zeros(4, dtype=complex)
    psi[0], psi[3] = np.cos(theta), np.sin(theta)
    pure = proj(psi)
    rho_a = partial_trace(pure, (2, 2), (0,))
    return alpha * pure + (1.0 - alpha) * tensor(rho_a, ID2 / 2.0)


def make_state(kind: str, **params) -> np.ndarray:
    """Dispatch constructor for the built-in density matrices."""
    if kind == "isotropic":
        return isotropic_state(float(params["alpha"]))
    if kind == "rho_alpha_theta":
        return rho_alpha_theta(float(params["alpha"]), float(params["theta"]))
    if kind == "bell":
        return bell_state(params.get("which", "phi+"))
    if kind == "ghz":
        return ghz_state(int(params.get("n", 3)))
    raise ValueError(f"unknown state kind {kind!r}")


# ---------------------------------------------------------------------------
# isometries and channels


@dataclass(frozen=True)
class Isometry:
    """A norm preserving map V with V†V = 1, stored as a d_out x d_in matrix."""

    matrix: np.ndarray
    tol: float = field(default=1e-10, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] < m.shape[1]:
            raise ValueError(f"isometry must be d_out x d_in with d_out >= d_in, got {m.shape}")
        gram = dag(m) @ m
        if np.linalg.norm(gram - np.eye(m.shape[1])) > self.tol:
            raise ValueError("matrix is not an isometry: V†V deviates from identity")

    @property
    def d_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def d_out(self) -> int:
        return self.matrix.shape[0]


def copy_isometry() -> Isometry:
    """The qubit copier |00><0| + |11><1|."""
    m = np.zeros((4, 2), dtype=complex)
    m[0, 0] = 1.0
    m[3, 1] = 1.0
    return Isometry(m)


def broadcast_isometry(beta: float) -> Isometry:
    """Qubit-to-two-qubit isometry sending |0>, |1> to rotated Bell combinations.

    |0> goes to sin(beta)|phi-> + cos(beta)|psi+> and |1> to the orthogonal
    combination -cos(beta)|phi-> + sin(beta)|psi+>.
    """
    phi_m = bell_vector("phi-")
    psi_p = bell_vector("psi+")
    psi0 = np.sin(beta) * phi_m + np.cos(beta) * psi_p
    psi1 = -np.cos(beta) * phi_m + np.sin(beta) * psi_p
    return Isometry(np.column_stack([psi0, psi1]))


def identity_isometry(d: int) -> Isometry:
    return Isometry(np.eye(d, dtype=complex))


def make_isometry(kind: str, **params) -> Isometry:
    """Dispatch constructor for the built-in isometries."""
    if kind == "broadcast_beta":
        return broadcast_isometry(float(params["beta"]))
    if kind == "copy":
        return copy_isometry()
    if kind == "identity":
        return identity_isometry(int(params.get("d", 2)))
    raise ValueError(f"unknown isometry kind {kind!r}")


def apply_isometry(rho: np.ndarray, dims, on: int, v: Isometry) -> np.ndarray:
    """Conjugate factor ``on`` of ``rho`` by the isometry: (1 x V) rho (1 x V)†.

    The returned matrix lives on the shape with dims[on] replaced by v.d_out.
    """
    rho = np.asarray(rho, dtype=complex)
    dims = tuple(int(d) for d in dims)
    _check_shape(rho, dims)
    if dims[on] != v.d_in:
        raise ValueError(f"isometry input dim {v.d_in} does not match factor dim {dims[on]}")
    d_before = int(np.prod(dims[:on])) if on > 0 else 1
    d_after = int(np.prod(dims[on + 1:])) if on + 1 < len(dims) else 1
    big_v = tensor(np.eye(d_before), v.matrix, np.eye(d_after))
    return big_v @ rho @ dag(big_v)


@dataclass(frozen=True)
class ChoiMatrix:
    """Choi state of a channel on input x output, with identity input marginal.

    Convention: choi = sum_ij |i><j| x Omega(|i><j|), so the channel acts as
    Omega(sigma) = Tr_in[choi (sigma^T x 1_out)].
    """

    matrix: np.ndarray
    d_in: int
    d_out: int
    tol: float = field(default=1e-10, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        d = self.d_in * self.d_out
        if m.shape != (d, d):
            raise ValueError(f"Choi matrix shape {m.shape} does not match dims ({d}, {d})")
        if not is_hermitian(m, self.tol):
            raise ValueError("Choi matrix is not Hermitian")
        if np.linalg.eigvalsh(m).min() < -self.tol:
            raise ValueError("Choi matrix is not positive semidefinite")
        marg = partial_trace(m, (self.d_in, self.d_out), (0,))
        if np.linalg.norm(marg - np.eye(self.d_in)) > self.tol:
            raise ValueError("Choi input marginal deviates from identity (not trace preserving)")


def choi_of_isometry(v: Isometry) -> ChoiMatrix:
    """Choi state of the channel rho -> V rho V†."""
    d = v.d_in
    m = np.zeros((d * v.d_out, d * v.d_out), dtype=complex)
    eij = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            eij[:] = 0.0
            eij[i, j] = 1.0
            m += tensor(eij, v.matrix @ eij @ dag(v.matrix))
    return ChoiMatrix(m, d_in=d, d_out=v.d_out)


def apply_choi(rho: np.ndarray, dims, on: int, c: ChoiMatrix) -> np.ndarray:
    """Apply a channel in Choi form to factor ``on`` of ``rho``.

    Equivalent to apply_isometry when the Choi state comes from an isometry.
    """
    rho = np.asarray(rho, dtype=complex)
    dims = tuple(int(d) for d in dims)
    _check_shape(rho, dims)
    if dims[on] != c.d_in:
        raise ValueError(f"Choi input dim {c.d_in} does not match factor dim {dims[on]}")
    n = len(dims)
    din, dout = c.d_in, c.d_out
    # rho as a 2n-tensor; contract the 'on' row/col indices against the Choi state
    t = rho.reshape(dims + dims)
    ch = c.matrix.reshape(din, dout, din, dout)
    # Omega(sigma)[o, o'] = sum_{i j} ch[i, o, j, o'] sigma[i, j]
    # (the transpose in Tr_in[choi (sigma^T x 1)] is absorbed by index placement)
    out = np.tensordot(t, ch, axes=([on, n + on], [0, 2]))
    # tensordot moved the contracted axes to the end as (o, o'); restore positions
    row_axes = [i for i in range(n) if i != on]
    col_axes = [n + i for i in range(n) if i != on]
    # current layout: row_axes + col_axes (shifted) + [o, o']
    order = []
    pos = 0
    mapping = {}
    for ax in row_axes + col_axes:
        mapping[ax] = pos
        pos += 1
    for i in range(n):
        order.append(mapping[i] if i != on else 2 * n - 2)
    for i in range(n):
        order.append(mapping[n + i] if i != on else 2 * n - 1)
    out = out.transpose(order)
    new_dims = dims[:on] + (dout,) + dims[on + 1:]
    d_total = int(np.prod(new_dims))
    return out.reshape(d_total, d_total)


# ---------------------------------------------------------------------------
# seeded random ensembles


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """GUE-like random Hermitian matrix."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (g + dag(g)) / 2.0


def random_isometry(d_out: int, d_in: int, rng: np.random.Generator) -> Isometry:
    """Haar-distributed isometry from the QR factor of a complex Ginibre matrix."""
    g = (rng.normal(size=(d_out, d_in)) + 1j * rng.normal(size=(d_out, d_in))) / np.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return Isometry(q)


def random_density_matrix(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ dag(g)
    return rho / np.trace(rho).real


def random_separable_state(dims: tuple[int, int], rng: np.random.Generator, terms: int = 4) -> np.ndarray:
    """Random convex mixture of product states on dims[0] x dims[1]."""
    w = rng.dirichlet(np.ones(terms))
    rho = np.zeros((dims[0] * dims[1], dims[0] * dims[1]), dtype=complex)
    for k in range(terms):
        rho += w[k] * tensor(random_density_matrix(dims[0], rng), random_density_matrix(dims[1], rng))
    return rho
