"""Matrix Lie group kernel.

Concrete groups: the translation group R^n, the circle S^1 (stored as a
wrapped angle, not a 2x2 matrix), SO(3), and two-factor products of these.
Algebra and dual-algebra elements are plain coordinate vectors in a fixed
basis; the basis and its dual are chosen biorthogonal, so every pairing
reduces to a Euclidean dot product.

Conventions:
  * ``Ad(g, xi)`` is conjugation g xi g^-1 pulled back to coordinates.
  * ``coAd(g, a)`` and ``coad(eta, a)`` are the duals, defined through the
    pairing: <coAd(g,a), xi> = <a, Ad(g,xi)> and <coad(eta,a), xi> =
    <a, ad(eta,xi)>.
  * ``dexpinv_op(X, v)`` applies the analytic function z e^z / (e^z - 1) of
    ad_X to v (the operator that converts right-trivialized variations of a
    group element into variations of its logarithm).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import bernoulli as _bernoulli

_TWO_PI = 2.0 * math.pi

# SO(3) elements are re-projected onto the orthogonal manifold after this
# many compositions; bounds drift in long simulations.
_REORTHO_PERIOD = 100


class GroupMismatchError(ValueError):
    """Binary operation applied to elements of different groups."""


class DomainError(ValueError):
    """Argument outside the domain of log / dexpinv (time step too large)."""


# ---------------------------------------------------------------------------
# Group descriptors


class Group:
    """A matrix Lie group descriptor plus its coordinate-level operations.

    Subclasses provide representations (``rep``) for group elements and the
    maps between reps and algebra coordinates. Descriptors are compared
    structurally and act as the ``group_id`` tag of every element.
    """

    dim: int  # dimension of the Lie algebra

    # -- element construction -------------------------------------------------
    def element(self, rep) -> "GroupElement":
        return GroupElement(self, self.validate_rep(rep))

    def identity(self) -> "GroupElement":
        return GroupElement(self, self.identity_rep())

    def algebra(self, coords) -> "AlgebraVector":
        return AlgebraVector(self, _as_coords(coords, self.dim))

    def coalgebra(self, coords) -> "CoAlgebraVector":
        return CoAlgebraVector(self, _as_coords(coords, self.dim))

    # -- rep-level primitives (implemented per group) --------------------------
    def identity_rep(self):
        raise NotImplementedError

    def validate_rep(self, rep):
        raise NotImplementedError

    def compose_rep(self, a, b):
        raise NotImplementedError

    def inverse_rep(self, a):
        raise NotImplementedError

    def exp_coords(self, coords: np.ndarray):
        raise NotImplementedError

    def log_rep(self, rep) -> np.ndarray:
        raise NotImplementedError

    def ad_matrix(self, coords: np.ndarray) -> np.ndarray:
        """Matrix of ad_X on algebra coordinates."""
        raise NotImplementedError

    def Ad_matrix(self, rep) -> np.ndarray:
        """Matrix of Ad_g on algebra coordinates."""
        raise NotImplementedError

    def project_rep(self, rep):
        """Pull a drifted rep back onto the group (no-op where exact)."""
        return rep

    def constraint_defect(self, rep) -> float:
        """Max-norm violation of the group's defining constraint."""
        return 0.0


@dataclass(frozen=True)
class RealLine(Group):
    """The abelian translation group R^n; rep = coordinate vector."""

    n: int = 1

    @property
    def dim(self) -> int:
        return self.n

    def identity_rep(self):
        return np.zeros(self.n)

    def validate_rep(self, rep):
        return _as_coords(rep, self.n)

    def compose_rep(self, a, b):
        return a + b

    def inverse_rep(self, a):
        return -a

    def exp_coords(self, coords):
        return coords.copy()

    def log_rep(self, rep):
        return rep.copy()

    def ad_matrix(self, coords):
        return np.zeros((self.n, self.n))

    def Ad_matrix(self, rep):
        return np.eye(self.n)


@dataclass(frozen=True)
class Circle(Group):
    """S^1 as a wrapped angle in (-pi, pi]; all maps are modular arithmetic."""

    dim = 1

    def identity_rep(self):
        return 0.0

    def validate_rep(self, rep):
        return wrap_angle(float(np.asarray(rep).reshape(())))

    def compose_rep(self, a, b):
        return wrap_angle(a + b)

    def inverse_rep(self, a):
        return wrap_angle(-a)

    def exp_coords(self, coords):
        return wrap_angle(float(coords[0]))

    def log_rep(self, rep):
        return np.array([rep])

    def ad_matrix(self, coords):
        return np.zeros((1, 1))

    def Ad_matrix(self, rep):
        return np.eye(1)


@dataclass(frozen=True)
class SO3(Group):
    """Rotation group; rep = 3x3 orthogonal matrix with unit determinant."""

    dim = 3
    rep_tol: float = 1e-10

    def identity_rep(self):
        return np.eye(3)

    def validate_rep(self, rep):
        R = np.asarray(rep, dtype=float)
        if R.shape != (3, 3):
            raise ValueError(f"SO(3) rep must be 3x3, got {R.shape}")
        defect = self.constraint_defect(R)
        if defect > self.rep_tol:
            raise ValueError(f"matrix violates SO(3) constraints by {defect:.3e}")
        return R

    def constraint_defect(self, rep) -> float:
        ortho = np.abs(rep.T @ rep - np.eye(3)).max()
        det = abs(np.linalg.det(rep) - 1.0)
        return max(ortho, det)

    def compose_rep(self, a, b):
        return a @ b

    def inverse_rep(self, a):
        return a.T.copy()

    def exp_coords(self, coords):
        return so3_exp(coords)

    def log_rep(self, rep):
        return so3_log(rep)

    def ad_matrix(self, coords):
        return hat(coords)

    def Ad_matrix(self, rep):
        return np.asarray(rep)

    def project_rep(self, rep):
        # Polar projection: nearest orthogonal matrix in Frobenius norm.
        U, _, Vt = np.linalg.svd(rep)
        R = U @ Vt
        if np.linalg.det(R) < 0:
            R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
        return R


@dataclass(frozen=True)
class ProductGroup(Group):
    """Finite product of groups; rep = tuple of factor reps, coords concatenated."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    def factor_slices(self) -> list[slice]:
        out, start = [], 0
        for f in self.factors:
            out.append(slice(start, start + f.dim))
            start += f.dim
        return out

    def identity_rep(self):
        return tuple(f.identity_rep() for f in self.factors)

    def validate_rep(self, rep):
        if len(rep) != len(self.factors):
            raise ValueError("product rep arity mismatch")
        return tuple(f.validate_rep(r) for f, r in zip(self.factors, rep))

    def compose_rep(self, a, b):
        return tuple(f.compose_rep(x, y) for f, x, y in zip(self.factors, a, b))

    def inverse_rep(self, a):
        return tuple(f.inverse_rep(x) for f, x in zip(self.factors, a))

    def exp_coords(self, coords):
        return tuple(
            f.exp_coords(coords[s]) for f, s in zip(self.factors, self.factor_slices())
        )

    def log_rep(self, rep):
        return np.concatenate(
            [f.log_rep(r) for f, r in zip(self.factors, rep)]
        )

    def ad_matrix(self, coords):
        blocks = [
            f.ad_matrix(coords[s]) for f, s in zip(self.factors, self.factor_slices())
        ]
        return _block_diag(blocks)

    def Ad_matrix(self, rep):
        blocks = [f.Ad_matrix(r) for f, r in zip(self.factors, rep)]
        return _block_diag(blocks)

    def project_rep(self, rep):
        return tuple(f.project_rep(r) for f, r in zip(self.factors, rep))

    def constraint_defect(self, rep) -> float:
        return max(f.constraint_defect(r) for f, r in zip(self.factors, rep))


# ---------------------------------------------------------------------------
# Tagged values


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A point on a matrix Lie group, tagged with its owning group.

    ``age`` counts compositions since the last re-orthonormalization; it is
    bookkeeping, not part of the value.
    """

    group: Group
    rep: object
    age: int = field(default=0, repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class AlgebraVector:
    """Tangent vector at the identity, as coordinates in the fixed basis."""

    group: Group
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_coords(self.coords, self.group.dim))


@dataclass(frozen=True, eq=False)
class CoAlgebraVector:
    """Momentum-type dual vector, as coordinates in the dual basis."""

    group: Group
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _as_coords(self.coords, self.group.dim))


def _as_coords(x, dim: int) -> np.ndarray:
    c = np.atleast_1d(np.asarray(x, dtype=float))
    if c.shape != (dim,):
        raise ValueError(f"expected coordinate vector of length {dim}, got shape {c.shape}")
    return c


def _block_diag(blocks) -> np.ndarray:
    dims = [b.shape[0] for b in blocks]
    out = np.zeros((sum(dims), sum(dims)))
    start = 0
    for b, d in zip(blocks, dims):
        out[start : start + d, start : start + d] = b
        start += d
    return out


def _same_group(a, b):
    if a.group != b.group:
        raise GroupMismatchError(f"group mismatch: {a.group} vs {b.group}")


# ---------------------------------------------------------------------------
# Group operations


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    """Group product ab."""
    _same_group(a, b)
    g = a.group
    rep = g.compose_rep(a.rep, b.rep)
    age = max(a.age, b.age) + 1
    if age >= _REORTHO_PERIOD:
        rep = g.project_rep(rep)
        age = 0
    return GroupElement(g, rep, age)


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(g.group, g.group.inverse_rep(g.rep), g.age)


def exp(X: AlgebraVector) -> GroupElement:
    """Group exponential; coordinate identity on abelian instances."""
    return GroupElement(X.group, X.group.exp_coords(X.coords))


def log(g: GroupElement) -> AlgebraVector:
    """Principal logarithm. Raises DomainError outside the injectivity domain."""
    return AlgebraVector(g.group, g.group.log_rep(g.rep))


def Ad(g: GroupElement, xi: AlgebraVector) -> AlgebraVector:
    _same_group(g, xi)
    return AlgebraVector(g.group, g.group.Ad_matrix(g.rep) @ xi.coords)


def ad(eta: AlgebraVector, xi: AlgebraVector) -> AlgebraVector:
    """Lie bracket [eta, xi]; zero on abelian groups."""
    _same_group(eta, xi)
    return AlgebraVector(eta.group, eta.group.ad_matrix(eta.coords) @ xi.coords)


def coAd(g: GroupElement, alpha: CoAlgebraVector) -> CoAlgebraVector:
    _same_group(g, alpha)
    return CoAlgebraVector(g.group, g.group.Ad_matrix(g.rep).T @ alpha.coords)


def coad(eta: AlgebraVector, alpha: CoAlgebraVector) -> CoAlgebraVector:
    _same_group(eta, alpha)
    return CoAlgebraVector(eta.group, eta.group.ad_matrix(eta.coords).T @ alpha.coords)


def pair(alpha: CoAlgebraVector, xi: AlgebraVector) -> float:
    """Duality pairing <alpha, xi>; a dot product by the basis convention."""
    _same_group(alpha, xi)
    return float(alpha.coords @ xi.coords)


# Bernoulli numbers with B_1 = +1/2, so that sum_n B_n z^n / n! = z e^z/(e^z - 1).
_BERNOULLI_PLUS = _bernoulli(40)
_BERNOULLI_PLUS[1] = 0.5

_DEXPINV_TOL = 1e-15


def dexpinv_op(X: AlgebraVector, v: AlgebraVector) -> AlgebraVector:
    """Apply z e^z / (e^z - 1) evaluated at ad_X to v.

    Evaluated through the Bernoulli series I + ad_X/2 + sum B_n/n! ad_X^n,
    truncated once the contribution of the next terms drops below 1e-15;
    exact identity for abelian groups. The series has radius 2*pi in the
    spectrum of ad_X.
    """
    _same_group(X, v)
    A = X.group.ad_matrix(X.coords)
    if not A.any():
        return AlgebraVector(v.group, v.coords.copy())
    if np.linalg.norm(A, 2) >= _TWO_PI:
        raise DomainError("ad_X spectrum outside the dexpinv convergence domain")
    term = v.coords.copy()
    total = term.copy()
    for n in range(1, len(_BERNOULLI_PLUS) - 1):
        term = A @ term
        cn = _BERNOULLI_PLUS[n] / math.factorial(n)
        total += cn * term
        # Odd Bernoulli numbers vanish for n >= 3: look one term ahead before
        # declaring convergence.
        bound = np.linalg.norm(term) * (
            abs(cn) + abs(_BERNOULLI_PLUS[n + 1]) / math.factorial(n + 1)
        )
        if bound < _DEXPINV_TOL:
            break
    return AlgebraVector(v.group, total)


def product_split(g: GroupElement) -> tuple[GroupElement, GroupElement]:
    """Split an element of a two-factor product into its factors."""
    grp = _two_factor(g.group)
    return (
        GroupElement(grp.factors[0], g.rep[0], g.age),
        GroupElement(grp.factors[1], g.rep[1], g.age),
    )


def product_join(a: GroupElement, b: GroupElement) -> GroupElement:
    """Inverse of product_split; coordinates concatenate in factor order."""
    grp = ProductGroup((a.group, b.group))
    return GroupElement(grp, (a.rep, b.rep), max(a.age, b.age))


def _two_factor(group: Group) -> ProductGroup:
    if not isinstance(group, ProductGroup) or len(group.factors) != 2:
        raise GroupMismatchError(f"expected a two-factor product group, got {group}")
    return group


def algebra_split(x: AlgebraVector) -> tuple[AlgebraVector, AlgebraVector]:
    grp = _two_factor(x.group)
    s0, s1 = grp.factor_slices()
    return (
        AlgebraVector(grp.factors[0], x.coords[s0]),
        AlgebraVector(grp.factors[1], x.coords[s1]),
    )


def coalgebra_join(a: CoAlgebraVector, b: CoAlgebraVector) -> CoAlgebraVector:
    grp = ProductGroup((a.group, b.group))
    return CoAlgebraVector(grp, np.concatenate([a.coords, b.coords]))


# ---------------------------------------------------------------------------
# Scalar / SO(3) helpers


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, _TWO_PI)
    if w <= -math.pi:
        w += _TWO_PI
    return w


def hat(w: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def vee(W: np.ndarray) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


# Below this rotation angle the closed forms switch to series to avoid 0/0.
_SMALL_ANGLE = 1e-4


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula with a series fallback near the identity."""
    theta = np.linalg.norm(w)
    W = hat(w)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Inverse Rodrigues on the principal branch (rotation angle < pi)."""
    c = (np.trace(R) - 1.0) / 2.0
    if c <= -1.0 + 1e-9:
        raise DomainError("rotation angle at or beyond pi: log undefined")
    c = min(c, 1.0)
    theta = math.acos(c)
    if theta < _SMALL_ANGLE:
        t2 = theta * theta
        s = 0.5 + t2 / 12.0 + 7.0 * t2 * t2 / 720.0
    else:
        s = theta / (2.0 * math.sin(theta))
    return vee(s * (R - R.T))
