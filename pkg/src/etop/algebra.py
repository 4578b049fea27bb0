"""Sin-algebra basis of Mat(N), structure constants, tensor operators.

Mode indices live in Z_N x Z_N and are stored with canonical
representatives in {0, ..., N-1}^2.  The basis element for an arbitrary
integer pair is ``basis_matrix(a1, a2, n)``; for a non-canonical pair it
can differ from the canonical element by a sign (``raw_sign``).  The
relation T_a T_b = kappa(a, b) T_{a+b} holds with the *unreduced* sum, and
T_{-a} always means the inverse of T_a.
"""

import functools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class ModeIndex(NamedTuple):
    a1: int
    a2: int

    def canonical(self, n):
        return ModeIndex(self.a1 % n, self.a2 % n)

    def neg(self, n):
        return ModeIndex((-self.a1) % n, (-self.a2) % n)

    def is_zero(self, n):
        return self.a1 % n == 0 and self.a2 % n == 0


def modes(n, include_zero=True):
    """Canonical mode indices in row-major order (a1 major)."""
    out = [ModeIndex(a1, a2) for a1 in range(n) for a2 in range(n)]
    return out if include_zero else out[1:]


def mode_position(alpha, n):
    a1, a2 = alpha
    return (a1 % n) * n + (a2 % n)


def clock(n):
    """Q with Q_kk = exp(2 pi i k / N), k = 1..N."""
    k = np.arange(1, n + 1)
    return np.diag(np.exp(2j * np.pi * k / n))


def shift(n):
    """Lambda with Lambda_kl = 1 iff k - l + 1 = 0 mod N."""
    lam = np.zeros((n, n), dtype=complex)
    for k in range(n):
        lam[k, (k + 1) % n] = 1.0
    return lam


def basis_matrix(a1, a2, n):
    """exp(pi i a1 a2 / N) Q^a1 Lambda^a2 for any integers a1, a2."""
    q = np.linalg.matrix_power(clock(n), a1 % n)
    lam = np.linalg.matrix_power(shift(n), a2 % n)
    # Q^N = Lambda^N = 1, so only the prefactor sees the raw integers
    return np.exp(1j * np.pi * a1 * a2 / n) * (q @ lam)


def raw_sign(alpha, n):
    """Sign s with basis_matrix(alpha) = s * basis_matrix(canonical alpha)."""
    a1, a2 = alpha
    c1, c2 = a1 % n, a2 % n
    p, q = (a1 - c1) // n, (a2 - c2) // n
    return -1 if (c1 * q + c2 * p + p * q * n) % 2 else 1


def negation_sign(alpha, n):
    """Sign s with T_{-alpha} (inverse of T_alpha) = s * T_{canonical(-alpha)}."""
    a1, a2 = alpha
    return raw_sign((-(a1 % n), -(a2 % n)), n)


@dataclass(frozen=True)
class BasisSet:
    n: int
    matrices: tuple  # canonical order, see ``modes``

    def __getitem__(self, alpha):
        return self.matrices[mode_position(alpha, self.n)]

    def inverse(self, alpha):
        """T_{-alpha}, i.e. the inverse of T_alpha."""
        return self[alpha].conj().T

    @property
    def stack(self):
        return np.array(self.matrices)


@functools.lru_cache(maxsize=None)
def build_basis(n):
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    mats = []
    for alpha in modes(n):
        m = basis_matrix(alpha.a1, alpha.a2, n)
        m.setflags(write=False)
        mats.append(m)
    return BasisSet(n, tuple(mats))


def kappa(alpha, beta, n):
    """exp(pi i / N (b1 a2 - b2 a1)) on canonical representatives."""
    a1, a2 = alpha[0] % n, alpha[1] % n
    b1, b2 = beta[0] % n, beta[1] % n
    return np.exp(1j * np.pi * (b1 * a2 - b2 * a1) / n)


def structure_c(alpha, beta, n):
    return kappa(alpha, beta, n) - kappa(beta, alpha, n)


def product_coefficient(alpha, beta, n):
    """c with T_alpha T_beta = c * T_{canonical(alpha + beta)}."""
    a1, a2 = alpha[0] % n, alpha[1] % n
    b1, b2 = beta[0] % n, beta[1] % n
    return kappa(alpha, beta, n) * raw_sign((a1 + b1, a2 + b2), n)


@functools.lru_cache(maxsize=None)
def product_table(n):
    """G[g, a, b] = coefficient of T_g in T_a T_b (canonical positions)."""
    size = n * n
    table = np.zeros((size, size, size), dtype=complex)
    for i, alpha in enumerate(modes(n)):
        for j, beta in enumerate(modes(n)):
            g = mode_position((alpha.a1 + beta.a1, alpha.a2 + beta.a2), n)
            table[g, i, j] = product_coefficient(alpha, beta, n)
    table.setflags(write=False)
    return table


def decompose(mat):
    """Coefficients S_alpha = tr(S T_{-alpha}) / N in canonical order."""
    mat = np.asarray(mat, dtype=complex)
    n = mat.shape[0]
    basis = build_basis(n).stack
    # tr(S T_alpha^{-1}) = sum_ij S_ij conj(T_alpha)_ij
    return np.einsum("ij,aij->a", mat, basis.conj()) / n


def compose(coeffs, n=None):
    """Inverse of ``decompose``; accepts scalar or matrix-valued coefficients.

    For matrix-valued coefficients of shape (N^2, M, M) the result is the
    Mat(N) (x) Mat(M) element sum_alpha T_alpha (x) S_alpha.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if n is None:
        n = int(round(np.sqrt(coeffs.shape[0])))
    basis = build_basis(n).stack
    if coeffs.ndim == 1:
        return np.einsum("a,aij->ij", coeffs, basis)
    m = coeffs.shape[-1]
    out = np.einsum("aij,akl->ikjl", basis, coeffs)
    return out.reshape(n * m, n * m)


def decompose_matrix(mat, n, m):
    """Split an (NM x NM) matrix into coefficients of shape (N^2, M, M)."""
    mat = np.asarray(mat, dtype=complex).reshape(n, m, n, m)
    basis = build_basis(n).stack
    return np.einsum("ikjl,aij->akl", mat, basis.conj()) / n


def involution_h(n):
    """h = J Lambda^{-1} with J the anti-diagonal exchange matrix."""
    exchange = np.fliplr(np.eye(n, dtype=complex))
    return exchange @ shift(n).conj().T


def apply_involution(x):
    """h x h^{-1}; maps T_alpha to T_{-alpha}.

    Works for Mat(N) and for Mat(N) (x) Mat(M) when ``n`` divides the size
    and the auxiliary factor comes first; pass ``n`` via ``apply_involution_nm``.
    """
    x = np.asarray(x, dtype=complex)
    h = involution_h(x.shape[0])
    return h @ x @ np.linalg.inv(h)


def apply_involution_nm(x, n, m):
    h = np.kron(involution_h(n), np.eye(m))
    return h @ np.asarray(x, dtype=complex) @ np.linalg.inv(h)


def permutation_matrix(n):
    """sum_ij E_ij (x) E_ji as an (n^2 x n^2) array."""
    p = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            p[i * n + j, j * n + i] = 1.0
    return p


class TensorOperator:
    """Dense operator on a product of spaces of dimensions ``dims``.

    ``data`` is the (D x D) matrix with D = prod(dims), first space most
    significant.  Composition, commutators, partial traces and space
    permutations are supported; all sizes here are small.
    """

    __array_priority__ = 1000

    def __init__(self, data, dims):
        self.dims = tuple(int(d) for d in dims)
        size = int(np.prod(self.dims))
        self.data = np.asarray(data, dtype=complex).reshape(size, size)

    def __repr__(self):
        return f"TensorOperator(dims={self.dims})"

    @classmethod
    def identity(cls, dims):
        return cls(np.eye(int(np.prod(dims))), dims)

    def _check(self, other):
        if self.dims != other.dims:
            raise ValueError(f"space mismatch: {self.dims} vs {other.dims}")

    def __matmul__(self, other):
        self._check(other)
        return TensorOperator(self.data @ other.data, self.dims)

    def __add__(self, other):
        self._check(other)
        return TensorOperator(self.data + other.data, self.dims)

    def __sub__(self, other):
        self._check(other)
        return TensorOperator(self.data - other.data, self.dims)

    def __neg__(self):
        return TensorOperator(-self.data, self.dims)

    def __mul__(self, scalar):
        return TensorOperator(self.data * scalar, self.dims)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return TensorOperator(self.data / scalar, self.dims)

    def commutator(self, other):
        return self @ other - other @ self

    def norm(self):
        """Max-entry norm."""
        return float(np.max(np.abs(self.data)))

    def kron(self, other):
        return TensorOperator(np.kron(self.data, other.data), self.dims + other.dims)

    def _tensor(self):
        return self.data.reshape(self.dims + self.dims)

    def permute(self, order):
        """Conjugate by the space permutation: new space i is old ``order[i]``."""
        k = len(self.dims)
        order = list(order)
        axes = order + [k + o for o in order]
        t = np.transpose(self._tensor(), axes)
        dims = tuple(self.dims[o] for o in order)
        return TensorOperator(t.reshape(int(np.prod(dims)), -1), dims)

    def swap(self, i=0, j=1):
        order = list(range(len(self.dims)))
        order[i], order[j] = order[j], order[i]
        return self.permute(order)

    def partial_trace(self, spaces):
        """Trace out the listed spaces (indices into ``dims``)."""
        spaces = sorted(set(spaces))
        keep = [i for i in range(len(self.dims)) if i not in spaces]
        t = self._tensor()
        k = len(self.dims)
        letters = "abcdefghijklmnopqrstuvwxyz"
        row = list(letters[:k])
        col = list(letters[k:2 * k])
        for s in spaces:
            col[s] = row[s]
        out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
        res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
        dims = tuple(self.dims[i] for i in keep)
        size = int(np.prod(dims)) if dims else 1
        return TensorOperator(res.reshape(size, size), dims)

    def trace(self):
        return complex(np.trace(self.data))

    def embed(self, dims, targets):
        """Place this operator on spaces ``targets`` of a larger product space.

        Identity acts on the remaining spaces; ``targets`` lists, in order,
        which spaces of ``dims`` receive this operator's factors.
        """
        targets = list(targets)
        if len(targets) != len(self.dims):
            raise ValueError("one target per factor is required")
        for t, d in zip(targets, self.dims):
            if dims[t] != d:
                raise ValueError(f"space {t} has dimension {dims[t]}, expected {d}")
        rest = [i for i in range(len(dims)) if i not in targets]
        eye = np.eye(int(np.prod([dims[i] for i in rest])) if rest else 1)
        big = TensorOperator(
            np.kron(self.data, eye),
            tuple(self.dims) + tuple(dims[i] for i in rest),
        )
        current = targets + rest
        order = [current.index(i) for i in range(len(dims))]
        return big.permute(order)


def permutation(n):
    """Permutation operator P_12 on C^n (x) C^n."""
    return TensorOperator(permutation_matrix(n), (n, n))


def permutation_from_basis(n):
    """(1/N) sum_alpha T_alpha (x) T_{-alpha}."""
    basis = build_basis(n)
    acc = np.zeros((n * n, n * n), dtype=complex)
    for alpha in modes(n):
        acc += np.kron(basis[alpha], basis.inverse(alpha))
    return TensorOperator(acc / n, (n, n))
