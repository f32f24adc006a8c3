"""Small sparse polynomials in space-time variables ``x`` and spectral
variables ``z``, enough to hold Noetherian multipliers and differentiate
them exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

_TERM = re.compile(r"([+-]?)(\d*)((?:[a-z]\d*)*)")
_FACTOR = re.compile(r"([a-z])(\d*)")


@dataclass(frozen=True)
class Poly:
    """Polynomial in ``x_1..x_n, z_1..z_n``.

    ``terms`` maps an exponent tuple of length ``2n`` (x exponents first)
    to a complex coefficient.
    """

    n: int
    terms: tuple

    @classmethod
    def constant(cls, n, value=1.0):
        return cls(n, (((0,) * (2 * n), complex(value)),))

    @classmethod
    def parse(cls, text, zvars):
        """Parse Macaulay2-style text such as ``"-y2-z2"`` or ``"xz"``.

        ``zvars`` names the spectral variables in order, e.g. ``"xyzt"``;
        the written letters are read as spectral coordinates.
        """
        n = len(zvars)
        text = text.replace(" ", "")
        if text in ("0", ""):
            return cls(n, ())
        terms = {}
        pos = 0
        while pos < len(text):
            m = _TERM.match(text, pos)
            if m is None or m.end() == pos:
                raise ValueError(f"cannot parse polynomial {text!r} at {pos}")
            sign, coef, body = m.groups()
            c = float(coef) if coef else 1.0
            if sign == "-":
                c = -c
            exps = [0] * (2 * n)
            for var, power in _FACTOR.findall(body):
                exps[n + zvars.index(var)] += int(power) if power else 1
            key = tuple(exps)
            terms[key] = terms.get(key, 0.0) + c
            pos = m.end()
        return cls(n, tuple((k, complex(v)) for k, v in terms.items() if v != 0))

    @property
    def degree(self):
        return max((sum(e) for e, _ in self.terms), default=0)

    def is_zero(self):
        return len(self.terms) == 0

    def __call__(self, x, z):
        """Evaluate on points ``x`` of shape (P, n) and spectral points ``z``
        of shape (..., n); the result has shape (..., P)."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=complex)
        n = self.n
        out = np.zeros(z.shape[:-1] + (x.shape[0],), dtype=complex)
        for exps, coef in self.terms:
            xs = np.ones(x.shape[0])
            for k in range(n):
                if exps[k]:
                    xs = xs * x[:, k] ** exps[k]
            zs = np.ones(z.shape[:-1], dtype=complex)
            for k in range(n):
                if exps[n + k]:
                    zs = zs * z[..., k] ** exps[n + k]
            out += coef * zs[..., None] * xs
        return out

    def eval_z(self, z):
        """Evaluate a polynomial that does not involve ``x``."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape[:-1], dtype=complex)
        for exps, coef in self.terms:
            term = np.full(z.shape[:-1], coef, dtype=complex)
            for k in range(self.n):
                if exps[self.n + k]:
                    term = term * z[..., k] ** exps[self.n + k]
            out += term
        return out

    def depends_on_x(self):
        return any(any(e[: self.n]) for e, _ in self.terms)

    def _diff(self, index):
        terms = {}
        for exps, coef in self.terms:
            p = exps[index]
            if p == 0:
                continue
            e = list(exps)
            e[index] -= 1
            key = tuple(e)
            terms[key] = terms.get(key, 0) + coef * p
        return Poly(self.n, tuple((k, v) for k, v in terms.items() if v != 0))

    def dx(self, k, times=1):
        p = self
        for _ in range(times):
            p = p._diff(k)
        return p

    def dz(self, k):
        return self._diff(self.n + k)
