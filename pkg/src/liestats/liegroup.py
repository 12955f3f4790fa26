"""Matrix Lie groups with their group exponential and logarithm.

Every group is embedded in GL(N) for some ambient size N, so a single
matrix code path serves all of them; the abelian group R^k is represented
by (k+1)x(k+1) unipotent translation matrices.

Two layers are provided.  :class:`MatrixGroup` and its subclasses expose a
batched array API (``exp``, ``log``, ``inv``, ``adjoint`` on stacks of
shape ``(..., N, N)``) used by the statistics kernels.  The value types
:class:`GroupElement` and :class:`TangentVector` and the free functions
(:func:`compose`, :func:`group_log`, ...) wrap single elements.
"""

import re
from dataclasses import dataclass

import numpy as np

from . import matfuncs
from .errors import GroupMismatchError, MembershipError, OutOfDomainError

__all__ = [
    "MatrixGroup", "GLPlus", "SO3", "SE3", "Euclidean", "group_from_name",
    "GroupElement", "TangentVector", "identity", "compose", "inverse",
    "group_exp", "group_log", "adjoint", "log_at",
]

# eigenvalues closer than this to the closed negative real axis are rejected
DOMAIN_TOL = 1e-8
MEMBERSHIP_TOL = 1e-9


class MatrixGroup:
    """A matrix Lie group with a fixed basis of its Lie algebra.

    Subclasses provide the canonical basis and membership test, and may
    replace the generic matrix functions with closed forms.

    Parameters
    ----------
    basis : (k, N, N) array_like, optional
        Alternative basis of the Lie algebra.  It must span the same space
        as the canonical basis.  Statistics built on the group do not
        depend on this choice.
    """

    name = "matrix group"
    matrix_size = 0

    def __init__(self, basis=None):
        canonical = self._canonical_basis()
        if basis is None:
            basis = canonical
        else:
            basis = np.array(basis, dtype=float)
            if basis.shape != canonical.shape:
                raise ValueError(f"basis must have shape {canonical.shape}, got {basis.shape}")
            k = len(canonical)
            flat = basis.reshape(k, -1)
            both = np.vstack([canonical.reshape(k, -1), flat])
            if np.linalg.matrix_rank(flat) < k or np.linalg.matrix_rank(both) > k:
                raise ValueError("basis does not span the Lie algebra")
        basis = np.array(basis, dtype=float)
        basis.setflags(write=False)
        self.basis = basis
        flat = basis.reshape(len(basis), -1)
        self._flat_basis = flat
        # dual frame: coords = vec(X) @ dual, exact for the canonical bases
        self._dual = np.linalg.solve(flat @ flat.T, flat).T

    @property
    def dim(self):
        return len(self.basis)

    @property
    def identity(self):
        return np.eye(self.matrix_size)

    def with_basis(self, basis):
        """Same group, different Lie algebra basis."""
        return type(self)(*self._init_args(), basis=basis)

    def _init_args(self):
        return ()

    def _canonical_basis(self):
        raise NotImplementedError

    def __eq__(self, other):
        return (type(self) is type(other) and self._init_args() == other._init_args()
                and np.array_equal(self.basis, other.basis))

    def __hash__(self):
        return hash((type(self).__name__, self._init_args()))

    def __repr__(self):
        return self.name

    # coordinates

    def hat(self, coords):
        """Lie algebra matrices from coordinates, ``(..., k) -> (..., N, N)``."""
        coords = np.asarray(coords, dtype=float)
        n = self.matrix_size
        return (coords @ self._flat_basis).reshape(coords.shape[:-1] + (n, n))

    def vee(self, x):
        """Coordinates of Lie algebra matrices, ``(..., N, N) -> (..., k)``."""
        x = np.asarray(x, dtype=float)
        return x.reshape(x.shape[:-2] + (-1,)) @ self._dual

    # group structure

    def compose(self, a, b):
        return np.asarray(a) @ np.asarray(b)

    def inv(self, a):
        return np.linalg.inv(a)

    def contains(self, a, tol=MEMBERSHIP_TOL):
        """Boolean mask of which matrices belong to the group."""
        raise NotImplementedError

    def _expm(self, x):
        return matfuncs.expm(x)

    def _logm(self, a):
        return matfuncs.logm(a)

    def _in_log_domain(self, a):
        return matfuncs.distance_to_negative_axis(a) > DOMAIN_TOL

    def exp(self, coords):
        """Group exponential of tangent coordinates at the identity."""
        return self._expm(self.hat(coords))

    def log(self, a, return_mask=False):
        """Coordinates of the principal group logarithm.

        Parameters
        ----------
        a : (..., N, N) array_like
        return_mask : bool
            If true, out-of-domain matrices do not raise; their coordinates
            are set to zero and a boolean mask of valid entries is returned
            as a second value.

        Raises
        ------
        OutOfDomainError
            If any matrix has an eigenvalue on (or within ``1e-8`` of) the
            closed negative real axis and ``return_mask`` is false.
        """
        a = np.asarray(a, dtype=float)
        n = self.matrix_size
        flat = a.reshape(-1, n, n)
        finite = np.isfinite(flat).all(axis=(-2, -1))
        if not finite.all():
            flat = np.where(finite[:, None, None], flat, np.eye(n))
        ok = finite & self._in_log_domain(flat)
        if not ok.all():
            if not return_mask:
                bad = int(np.flatnonzero(~ok)[0])
                raise OutOfDomainError(
                    f"{self.name}: element {bad} is outside the domain of the principal logarithm",
                    index=bad)
            flat = np.where(ok[:, None, None], flat, np.eye(n))
        coords = self.vee(self._logm(flat))
        coords = coords.reshape(a.shape[:-2] + (self.dim,))
        if return_mask:
            return coords, ok.reshape(a.shape[:-2])
        return coords

    def adjoint(self, a):
        """Matrix of ``X -> a X a^-1`` in the Lie algebra basis, ``(..., k, k)``."""
        a = np.asarray(a, dtype=float)
        ainv = self.inv(a)
        conj = a[..., None, :, :] @ self.basis @ ainv[..., None, :, :]
        return np.swapaxes(self.vee(conj), -1, -2)


def _elementary(n, rows, cols, size):
    out = np.zeros((len(rows), size, size))
    for i, (r, c) in enumerate(zip(rows, cols)):
        out[i, r, c] = 1.0
    return out


class GLPlus(MatrixGroup):
    """Invertible n x n matrices with positive determinant."""

    def __init__(self, n, basis=None):
        self.n = int(n)
        if self.n < 1:
            raise ValueError("n must be positive")
        self.matrix_size = self.n
        self.name = f"GLplus({self.n})"
        super().__init__(basis)

    def _init_args(self):
        return (self.n,)

    def _canonical_basis(self):
        n = self.n
        rows, cols = np.divmod(np.arange(n * n), n)
        return _elementary(n, rows, cols, n)

    def contains(self, a, tol=MEMBERSHIP_TOL):
        a = np.asarray(a, dtype=float)
        finite = np.isfinite(a).all(axis=(-2, -1))
        with np.errstate(invalid="ignore"):
            det = np.linalg.det(np.where(finite[..., None, None], a, 0.0))
        return finite & (det > 0)


_SO3_GENERATORS = np.array([
    [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
    [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
    [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
])


def _skew(w):
    z = np.zeros(w.shape[:-1])
    x, y, t = w[..., 0], w[..., 1], w[..., 2]
    return np.stack([
        np.stack([z, -t, y], axis=-1),
        np.stack([t, z, -x], axis=-1),
        np.stack([-y, x, z], axis=-1),
    ], axis=-2)


def _unskew(x):
    return 0.5 * np.stack([
        x[..., 2, 1] - x[..., 1, 2],
        x[..., 0, 2] - x[..., 2, 0],
        x[..., 1, 0] - x[..., 0, 1],
    ], axis=-1)


def _rodrigues_coefficients(theta):
    """sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3 with series near zero."""
    t2 = theta * theta
    small = theta < 1e-2
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1 - t2 / 6 * (1 - t2 / 20 * (1 - t2 / 42)), np.sin(safe) / safe)
    half = np.sin(safe / 2) / safe
    b = np.where(small, 0.5 - t2 / 24 * (1 - t2 / 30 * (1 - t2 / 56)), 2 * half * half)
    small_c = theta < 0.1
    safe_c = np.where(small_c, 1.0, theta)
    c = np.where(small_c,
                 1 / 6 - t2 / 120 * (1 - t2 / 42 * (1 - t2 / 72 * (1 - t2 / 110))),
                 (safe_c - np.sin(safe_c)) / safe_c ** 3)
    return a, b, c


def _so3_exp(w):
    theta = np.linalg.norm(w, axis=-1)
    a, b, _ = _rodrigues_coefficients(theta)
    k = _skew(w)
    return np.eye(3) + a[..., None, None] * k + b[..., None, None] * (k @ k)


def _so3_log(r):
    """Rotation vectors and angles of rotation matrices (angle < pi assumed)."""
    skew = _unskew(r)  # sin(theta) * axis
    s = np.linalg.norm(skew, axis=-1)
    c = 0.5 * (np.trace(r, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    a, _, _ = _rodrigues_coefficients(theta)
    w = skew / a[..., None]

    # near pi the skew part vanishes; read the axis off the symmetric part
    near_pi = theta > np.pi - 1e-2
    if np.any(near_pi):
        sym = 0.5 * (r + np.swapaxes(r, -1, -2)) - c[..., None, None] * np.eye(3)
        diag = np.diagonal(sym, axis1=-2, axis2=-1)
        j = np.argmax(diag, axis=-1)
        col = np.take_along_axis(sym, j[..., None, None], axis=-1)[..., 0]
        pivot = np.take_along_axis(diag, j[..., None], axis=-1)[..., 0]
        axis = col / np.sqrt(np.maximum(pivot * (1.0 - c), 1e-300))[..., None]
        sign = np.where((axis * skew).sum(axis=-1) < 0, -1.0, 1.0)
        w_pi = theta[..., None] * sign[..., None] * axis
        w = np.where(near_pi[..., None], w_pi, w)
    return w, theta


def _left_jacobian_inverse_coefficient(theta):
    """(1 - (t/2) cot(t/2)) / t^2, with its series near zero."""
    t2 = theta * theta
    small = theta < 0.1
    safe = np.where(small, 1.0, theta)
    a, b, _ = _rodrigues_coefficients(safe)
    direct = (1 - a / (2 * b)) / (safe * safe)
    series = 1 / 12 + t2 / 720 + t2 * t2 / 30240 + t2 ** 3 / 1209600
    return np.where(small, series, direct)


class SO3(MatrixGroup):
    """Rotations of R^3; closed-form (Rodrigues) exponential and logarithm."""

    name = "SO3"
    matrix_size = 3

    def _canonical_basis(self):
        return _SO3_GENERATORS.copy()

    def contains(self, a, tol=MEMBERSHIP_TOL):
        a = np.asarray(a, dtype=float)
        err = np.abs(np.swapaxes(a, -1, -2) @ a - np.eye(3)).max(axis=(-2, -1))
        return (err <= tol) & (np.linalg.det(a) > 0)

    def inv(self, a):
        return np.swapaxes(np.asarray(a, dtype=float), -1, -2).copy()

    def _expm(self, x):
        return _so3_exp(_unskew(x))

    def _logm(self, a):
        w, _ = _so3_log(a)
        return _skew(w)

    def _in_log_domain(self, a):
        _, theta = _so3_log(a)
        return theta < np.pi - DOMAIN_TOL


class SE3(MatrixGroup):
    """Rigid motions of R^3 as 4 x 4 homogeneous matrices.

    Lie algebra coordinates are ordered (rotation, translation).
    """

    name = "SE3"
    matrix_size = 4

    def _canonical_basis(self):
        basis = np.zeros((6, 4, 4))
        basis[:3, :3, :3] = _SO3_GENERATORS
        for i in range(3):
            basis[3 + i, i, 3] = 1.0
        return basis

    def contains(self, a, tol=MEMBERSHIP_TOL):
        a = np.asarray(a, dtype=float)
        bottom = np.abs(a[..., 3, :] - np.array([0.0, 0.0, 0.0, 1.0])).max(axis=-1)
        return (bottom <= tol) & SO3().contains(a[..., :3, :3], tol)

    def inv(self, a):
        a = np.asarray(a, dtype=float)
        rt = np.swapaxes(a[..., :3, :3], -1, -2)
        out = np.zeros(a.shape)
        out[..., :3, :3] = rt
        out[..., :3, 3] = -(rt @ a[..., :3, 3:4])[..., 0]
        out[..., 3, 3] = 1.0
        return out

    def _expm(self, x):
        w = _unskew(x[..., :3, :3])
        u = x[..., :3, 3]
        theta = np.linalg.norm(w, axis=-1)
        a, b, c = _rodrigues_coefficients(theta)
        k = _skew(w)
        k2 = k @ k
        eye = np.eye(3)
        rot = eye + a[..., None, None] * k + b[..., None, None] * k2
        v = eye + b[..., None, None] * k + c[..., None, None] * k2
        out = np.zeros(x.shape)
        out[..., :3, :3] = rot
        out[..., :3, 3] = (v @ u[..., None])[..., 0]
        out[..., 3, 3] = 1.0
        return out

    def _logm(self, a):
        w, theta = _so3_log(a[..., :3, :3])
        k = _skew(w)
        d = _left_jacobian_inverse_coefficient(theta)
        vinv = np.eye(3) - 0.5 * k + d[..., None, None] * (k @ k)
        out = np.zeros(a.shape)
        out[..., :3, :3] = k
        out[..., :3, 3] = (vinv @ a[..., :3, 3:4])[..., 0]
        return out

    def _in_log_domain(self, a):
        _, theta = _so3_log(a[..., :3, :3])
        return theta < np.pi - DOMAIN_TOL


class Euclidean(MatrixGroup):
    """The additive group R^k as (k+1) x (k+1) translation matrices."""

    def __init__(self, k, basis=None):
        self.k = int(k)
        if self.k < 1:
            raise ValueError("k must be positive")
        self.matrix_size = self.k + 1
        self.name = f"Euclidean({self.k})"
        super().__init__(basis)

    def _init_args(self):
        return (self.k,)

    def _canonical_basis(self):
        k = self.k
        return _elementary(k, np.arange(k), np.full(k, k), k + 1)

    def contains(self, a, tol=MEMBERSHIP_TOL):
        a = np.asarray(a, dtype=float)
        k = self.k
        pattern = np.eye(k + 1)
        dev = np.abs(a - pattern)
        dev[..., :k, k] = 0.0
        return dev.max(axis=(-2, -1)) <= tol

    def inv(self, a):
        a = np.asarray(a, dtype=float)
        out = np.broadcast_to(np.eye(self.k + 1), a.shape).copy()
        out[..., :self.k, self.k] = -a[..., :self.k, self.k]
        return out

    def _expm(self, x):
        # the algebra is nilpotent of order two
        return np.eye(self.k + 1) + x

    def _logm(self, a):
        return a - np.eye(self.k + 1)

    def _in_log_domain(self, a):
        return np.ones(a.shape[:-2], dtype=bool)

    def from_vectors(self, x):
        """Translation matrices from vectors, ``(..., k) -> (..., k+1, k+1)``."""
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(np.eye(self.k + 1), x.shape[:-1] + (self.k + 1, self.k + 1)).copy()
        out[..., :self.k, self.k] = x
        return out

    def to_vectors(self, a):
        return np.asarray(a, dtype=float)[..., :self.k, self.k].copy()


_NAME_PATTERNS = [
    (re.compile(r"^(?:GL\+|GLplus|GLP)\(?(\d+)\)?$", re.I), GLPlus),
    (re.compile(r"^(?:EuclideanVector|Euclidean|R)\(?(\d+)\)?$", re.I), Euclidean),
    (re.compile(r"^SO\(?3\)?$", re.I), SO3),
    (re.compile(r"^SE\(?3\)?$", re.I), SE3),
]


def group_from_name(name):
    """Parse a group kind such as ``SE3`` or ``GLplus(3)``."""
    text = name.strip().replace(" ", "")
    for pattern, cls in _NAME_PATTERNS:
        match = pattern.match(text)
        if match:
            return cls(int(match.group(1))) if match.groups() else cls()
    raise ValueError(f"unknown group kind {name!r}")


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A single element of a matrix group.  Membership is checked on creation."""

    group: MatrixGroup
    mat: np.ndarray

    def __post_init__(self):
        mat = np.array(self.mat, dtype=float)
        n = self.group.matrix_size
        if mat.shape != (n, n):
            raise MembershipError(f"{self.group.name} needs a {n}x{n} matrix, got shape {mat.shape}")
        if not self.group.contains(mat):
            raise MembershipError(f"matrix is not an element of {self.group.name}")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    def __matmul__(self, other):
        return compose(self, other)

    def __repr__(self):
        return f"GroupElement({self.group.name}, {self.mat.tolist()})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Coordinates of a Lie algebra element in the group's basis."""

    group: MatrixGroup
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1)
        if coords.shape != (self.group.dim,):
            raise ValueError(f"{self.group.name} tangent vectors have length {self.group.dim}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)


def _same_group(a, b):
    if a.group != b.group:
        raise GroupMismatchError(f"cannot combine {a.group.name} with {b.group.name}")


def identity(group):
    return GroupElement(group, group.identity)


def compose(a, b):
    _same_group(a, b)
    return GroupElement(a.group, a.group.compose(a.mat, b.mat))


def inverse(g):
    return GroupElement(g.group, g.group.inv(g.mat))


def group_exp(v):
    return GroupElement(v.group, v.group.exp(v.coords))


def group_log(g):
    """Principal group logarithm; raises :class:`OutOfDomainError` off its domain."""
    return TangentVector(g.group, g.group.log(g.mat))


def adjoint(g):
    return g.group.adjoint(g.mat)


def log_at(g, h):
    """The difference of ``h`` and ``g`` translated to the identity, ``log(g^-1 h)``."""
    _same_group(g, h)
    grp = g.group
    return TangentVector(grp, grp.log(grp.inv(g.mat) @ h.mat))
