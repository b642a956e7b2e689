"""Variational integrators and indirect trajectory optimization on product Lie groups."""

from .lie import (
    Ad,
    AlgebraVector,
    Circle,
    CoAlgebraVector,
    DomainError,
    GroupElement,
    GroupMismatchError,
    ProductGroup,
    RealLine,
    SO3,
    ad,
    coAd,
    coad,
    compose,
    dexpinv_op,
    exp,
    inverse,
    log,
    pair,
    product_join,
    product_split,
)

__all__ = [
    "Ad",
    "AlgebraVector",
    "Circle",
    "CoAlgebraVector",
    "DomainError",
    "GroupElement",
    "GroupMismatchError",
    "ProductGroup",
    "RealLine",
    "SO3",
    "ad",
    "coAd",
    "coad",
    "compose",
    "dexpinv_op",
    "exp",
    "inverse",
    "log",
    "pair",
    "product_join",
    "product_split",
]
