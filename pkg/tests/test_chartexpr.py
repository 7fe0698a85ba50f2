import numpy as np

from diracsphere.chartexpr import ChartExpr, PowerCache


def _fd_wirtinger(expr, z, h=1e-6):
    def ev(zz):
        return expr(np.asarray([zz]))[0]
    dx = (ev(z + h) - ev(z - h)) / (2 * h)
    dy = (ev(z + 1j * h) - ev(z - 1j * h)) / (2 * h)
    return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)


def test_wirtinger_derivatives_match_finite_differences():
    rng = np.random.default_rng(7)
    expr = (ChartExpr.monomial(1.3 - 0.4j, 2, 1, 3)
            + ChartExpr.monomial(-0.7j, 0, 2, 1)
            + ChartExpr.monomial(2.0, 1, 0, 0))
    for _ in range(10):
        z = rng.normal() + 1j * rng.normal()
        fd_z, fd_zb = _fd_wirtinger(expr, z)
        assert abs(expr.dz()(np.array([z]))[0] - fd_z) < 1e-7
        assert abs(expr.dzbar()(np.array([z]))[0] - fd_zb) < 1e-7


def test_product_and_conjugate():
    rng = np.random.default_rng(8)
    a = ChartExpr.monomial(1.0 + 2j, 1, 0, 1) + ChartExpr.monomial(0.5, 0, 0, 0)
    b = ChartExpr.monomial(-1j, 0, 1, 2)
    z = rng.normal(size=6) + 1j * rng.normal(size=6)
    assert np.allclose((a * b)(z), a(z) * b(z), atol=1e-14)
    assert np.allclose(a.conj()(z), np.conj(a(z)), atol=1e-14)
    assert np.allclose((a - b)(z), a(z) - b(z), atol=1e-14)
    assert np.allclose(a.scale(3j)(z), 3j * a(z), atol=1e-14)


def test_power_cache_consistency():
    z = np.array([0.3 + 0.4j, -2.0 + 1j])
    cache = PowerCache(z)
    assert np.allclose(cache.zp(3), z**3)
    assert np.allclose(cache.zbp(2), np.conj(z) ** 2)
    assert np.allclose(cache.uinv(2), (1 + np.abs(z) ** 2) ** -2.0)
