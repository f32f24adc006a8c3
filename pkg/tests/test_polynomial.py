import numpy as np
import pytest

from epgp.polynomial import Poly


def test_parse_and_evaluate():
    p = Poly.parse("-y2-z2", "xyzt")
    z = np.array([[1.0, 2.0, 3.0, 4.0]])
    assert p.eval_z(z)[0] == pytest.approx(-13)
    assert p.degree == 2 and not p.depends_on_x()


def test_coefficients_and_zero():
    assert Poly.parse("0", "xt").is_zero()
    p = Poly.parse("3x2-2t", "xt")
    assert p.eval_z(np.array([2.0, 5.0])) == pytest.approx(2)


def test_derivatives():
    p = Poly.parse("x2t", "xt")
    assert p.dz(0).eval_z(np.array([3.0, 2.0])) == pytest.approx(12)
    assert p.dz(1).dz(1).is_zero()


def test_bad_text():
    with pytest.raises(ValueError):
        Poly.parse("x*y", "xy")
