"""Group-kernel tests: closed forms against brute-force matrix oracles."""

import math

import numpy as np
import pytest

from varishoot.lie import (
    Ad,
    AlgebraVector,
    Circle,
    DomainError,
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
    hat,
    inverse,
    log,
    pair,
    product_join,
    product_split,
    vee,
    wrap_angle,
)

SO3_G = SO3()
S1 = Circle()
R1 = RealLine(1)


def series_exp(W, terms=30):
    """Truncated power-series oracle for the matrix exponential."""
    out = np.eye(3)
    term = np.eye(3)
    for n in range(1, terms):
        term = term @ W / n
        out = out + term
    return out


def random_so3(rng, scale=1.0):
    return exp(SO3_G.algebra(scale * rng.standard_normal(3)))


# ---------------------------------------------------------------------------
# compose


def test_compose_circle_is_addition():
    c = compose(S1.element(0.3), S1.element(0.4))
    assert c.rep == pytest.approx(0.7)


def test_compose_identity_law():
    rng = np.random.default_rng(0)
    g = random_so3(rng)
    gi = compose(g, SO3_G.identity())
    assert np.allclose(gi.rep, g.rep)


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(1)
    a, b = random_so3(rng), random_so3(rng)
    c = compose(a, b)
    assert np.allclose(c.rep, a.rep @ b.rep, atol=1e-14)
    assert np.abs(c.rep.T @ c.rep - np.eye(3)).max() < 1e-12


def test_compose_group_mismatch_rejected():
    with pytest.raises(GroupMismatchError):
        compose(S1.element(0.1), R1.element([0.1]))


# ---------------------------------------------------------------------------
# exp / log


def test_exp_zero_is_identity():
    assert np.allclose(exp(SO3_G.algebra([0, 0, 0])).rep, np.eye(3))
    assert exp(S1.algebra([0.0])).rep == 0.0


def test_exp_abelian_is_coordinate_identity():
    assert np.allclose(exp(R1.algebra([0.25])).rep, [0.25])


def test_exp_against_series_oracle():
    w = np.array([0.0, 0.0, math.pi / 2])
    R = exp(SO3_G.algebra(w)).rep
    assert np.allclose(R, series_exp(hat(w)), atol=1e-12)
    assert R[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert R[0, 1] == pytest.approx(-1.0)
    assert R[1, 0] == pytest.approx(1.0)


def test_log_identity_is_zero():
    assert np.allclose(log(SO3_G.identity()).coords, 0.0)


def test_log_exp_roundtrip_unit_norm():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.standard_normal(3)
        x *= 1.0 / np.linalg.norm(x)
        back = log(exp(SO3_G.algebra(x)))
        assert np.allclose(back.coords, x, atol=1e-12)


def test_log_domain_error_at_pi():
    R = exp(SO3_G.algebra([0, 0, math.pi]))
    with pytest.raises(DomainError):
        log(R)


def test_roundtrip_up_to_norm_three():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.standard_normal(3)
        x *= rng.uniform(0, 3.0) / np.linalg.norm(x)
        assert np.allclose(log(exp(SO3_G.algebra(x))).coords, x, atol=1e-10)
    for _ in range(20):
        a = rng.uniform(-3, 3)
        assert log(exp(S1.algebra([a]))).coords[0] == pytest.approx(wrap_angle(a))
        assert np.allclose(log(exp(R1.algebra([a]))).coords, [a])


# ---------------------------------------------------------------------------
# Ad / ad and duals


def test_Ad_identity_on_abelian():
    xi = S1.algebra([0.7])
    assert np.allclose(Ad(S1.element(1.2), xi).coords, xi.coords)


def test_Ad_at_identity():
    rng = np.random.default_rng(4)
    xi = SO3_G.algebra(rng.standard_normal(3))
    assert np.allclose(Ad(SO3_G.identity(), xi).coords, xi.coords)


def test_Ad_is_matrix_conjugation():
    rng = np.random.default_rng(5)
    g = random_so3(rng)
    xi = SO3_G.algebra(rng.standard_normal(3))
    # Oracle: conjugate the hat matrix and map back.
    expect = vee(g.rep @ hat(xi.coords) @ g.rep.T)
    assert np.allclose(Ad(g, xi).coords, expect, atol=1e-12)
    assert np.allclose(Ad(g, xi).coords, g.rep @ xi.coords, atol=1e-12)


def test_ad_abelian_zero_and_antisymmetry():
    assert np.allclose(ad(R1.algebra([1.0]), R1.algebra([2.0])).coords, [0.0])
    rng = np.random.default_rng(6)
    eta = SO3_G.algebra(rng.standard_normal(3))
    assert np.allclose(ad(eta, eta).coords, 0.0, atol=1e-15)


def test_ad_basis_commutator():
    e1 = SO3_G.algebra([1, 0, 0])
    e2 = SO3_G.algebra([0, 1, 0])
    assert np.allclose(ad(e1, e2).coords, [0, 0, 1])
    # Oracle: matrix commutator of the generators.
    comm = hat(e1.coords) @ hat(e2.coords) - hat(e2.coords) @ hat(e1.coords)
    assert np.allclose(hat(ad(e1, e2).coords), comm)


def test_coAd_duality_pairing():
    rng = np.random.default_rng(7)
    for _ in range(100):
        g = random_so3(rng)
        alpha = SO3_G.coalgebra(rng.standard_normal(3))
        xi = SO3_G.algebra(rng.standard_normal(3))
        assert pair(coAd(g, alpha), xi) - pair(alpha, Ad(g, xi)) == pytest.approx(
            0.0, abs=1e-12
        )


def test_coad_duality_pairing():
    rng = np.random.default_rng(8)
    for _ in range(100):
        eta = SO3_G.algebra(rng.standard_normal(3))
        alpha = SO3_G.coalgebra(rng.standard_normal(3))
        xi = SO3_G.algebra(rng.standard_normal(3))
        assert pair(coad(eta, alpha), xi) == pytest.approx(
            pair(alpha, ad(eta, xi)), abs=1e-12
        )


def test_co_maps_trivial_cases():
    alpha = S1.coalgebra([0.4])
    assert np.allclose(coAd(S1.element(2.0), alpha).coords, alpha.coords)
    assert np.allclose(coad(S1.algebra([1.0]), alpha).coords, 0.0)
    rng = np.random.default_rng(9)
    a3 = SO3_G.coalgebra(rng.standard_normal(3))
    assert np.allclose(coAd(SO3_G.identity(), a3).coords, a3.coords)


# ---------------------------------------------------------------------------
# dexpinv


def dexpinv_series_oracle(X, v, terms=12):
    """Literal truncation of z e^z/(e^z-1) = sum B+_n z^n / n! applied to ad_X."""
    bplus = [1.0, 0.5, 1.0 / 6, 0.0, -1.0 / 30, 0.0, 1.0 / 42, 0.0, -1.0 / 30,
             0.0, 5.0 / 66, 0.0, -691.0 / 2730]
    A = hat(X)
    term = v.copy()
    out = term.copy()
    for n in range(1, terms + 1):
        term = A @ term
        out = out + bplus[n] / math.factorial(n) * term
    return out


def test_dexpinv_identity_at_zero():
    v = SO3_G.algebra([1.0, -2.0, 0.5])
    out = dexpinv_op(SO3_G.algebra([0, 0, 0]), v)
    assert np.allclose(out.coords, v.coords)


def test_dexpinv_identity_on_abelian():
    v = R1.algebra([3.0])
    assert np.allclose(dexpinv_op(R1.algebra([100.0]), v).coords, v.coords)


def test_dexpinv_matches_series_oracle():
    rng = np.random.default_rng(10)
    x = rng.standard_normal(3)
    x *= 0.1 / np.linalg.norm(x)
    v = rng.standard_normal(3)
    got = dexpinv_op(SO3_G.algebra(x), SO3_G.algebra(v))
    assert np.allclose(got.coords, dexpinv_series_oracle(x, v), atol=1e-12)


def test_dexpinv_domain_error():
    with pytest.raises(DomainError):
        dexpinv_op(SO3_G.algebra([2 * math.pi, 0, 0]), SO3_G.algebra([1, 0, 0]))


# ---------------------------------------------------------------------------
# products


def test_product_split_join_roundtrip():
    grp = ProductGroup((S1, R1))
    rng = np.random.default_rng(11)
    g = grp.element((rng.uniform(-3, 3), [rng.uniform(-2, 2)]))
    a, u = product_split(g)
    back = product_join(a, u)
    assert back.rep[0] == g.rep[0]
    assert np.allclose(back.rep[1], g.rep[1])


def test_product_split_identity():
    grp = ProductGroup((S1, R1))
    a, u = product_split(grp.identity())
    assert a.rep == 0.0 and np.allclose(u.rep, [0.0])


def test_product_split_values():
    grp = ProductGroup((S1, RealLine(1)))
    a, u = product_split(grp.element((0.3, [0.5])))
    assert a.rep == pytest.approx(0.3)
    assert u.rep[0] == pytest.approx(0.5)


def test_product_split_requires_product():
    with pytest.raises(GroupMismatchError):
        product_split(S1.element(0.1))


# ---------------------------------------------------------------------------
# invariants


def test_constraint_preserved_over_long_compose_chains():
    rng = np.random.default_rng(12)
    g = SO3_G.identity()
    step = random_so3(rng, scale=0.02)
    for _ in range(10_000):
        g = compose(g, step)
    assert np.abs(g.rep.T @ g.rep - np.eye(3)).max() <= 1e-8


def test_ad_derivative_identities_finite_difference():
    """Central finite differences of the four Ad-map derivative identities."""
    rng = np.random.default_rng(13)
    eps = 1e-6
    for _ in range(100):
        g = random_so3(rng)
        eta = SO3_G.algebra(rng.standard_normal(3))
        xi = SO3_G.algebra(rng.standard_normal(3))
        alpha = SO3_G.coalgebra(rng.standard_normal(3))

        def perturbed(sign):
            return compose(g, exp(SO3_G.algebra(sign * eps * eta.coords)))

        gp, gm = perturbed(+1), perturbed(-1)

        fd = (Ad(gp, xi).coords - Ad(gm, xi).coords) / (2 * eps)
        assert np.allclose(fd, ad(Ad(g, eta), Ad(g, xi)).coords, atol=1e-6)

        fd = (Ad(inverse(gp), xi).coords - Ad(inverse(gm), xi).coords) / (2 * eps)
        assert np.allclose(fd, ad(Ad(inverse(g), xi), eta).coords, atol=1e-6)

        fd = (coAd(gp, alpha).coords - coAd(gm, alpha).coords) / (2 * eps)
        assert np.allclose(fd, coAd(g, coad(Ad(g, eta), alpha)).coords, atol=1e-6)

        fd = (coAd(inverse(gp), alpha).coords - coAd(inverse(gm), alpha).coords) / (2 * eps)
        assert np.allclose(fd, -coAd(inverse(g), coad(eta, alpha)).coords, atol=1e-6)


def test_bch_fourth_order_bound():
    """log(exp X exp Y) minus the series through third order is O(max^4)."""
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(200):
        scale = rng.uniform(0.01, 0.1)
        x = rng.standard_normal(3)
        y = rng.standard_normal(3)
        x *= scale / np.linalg.norm(x)
        y *= rng.uniform(0.1, 1.0) * scale / np.linalg.norm(y)
        X, Y = SO3_G.algebra(x), SO3_G.algebra(y)
        lhs = log(compose(exp(X), exp(Y))).coords
        series = (
            x
            + y
            + 0.5 * ad(X, Y).coords
            + (ad(X, ad(X, Y)).coords + ad(Y, ad(Y, AlgebraVector(SO3_G, x))).coords)
            / 12.0
        )
        err = np.linalg.norm(lhs - series)
        denom = max(np.linalg.norm(x), np.linalg.norm(y)) ** 4
        worst = max(worst, err / denom)
    assert worst <= 10.0


def test_pairing_is_dot_product():
    rng = np.random.default_rng(15)
    a = rng.standard_normal(3)
    b = rng.standard_normal(3)
    assert pair(SO3_G.coalgebra(a), SO3_G.algebra(b)) == float(a @ b)


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(0.0) == 0.0
