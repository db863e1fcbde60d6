"""Scattering-data function f(z; x, t) = f_0(z) - x z - 2 t z^2."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr as _expr

SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class Singularity:
    """A point where f_0 is not analytic, optionally with a branch-cut ray.

    The ray is ``point + s * direction`` for ``s >= 0``.
    """

    point: complex
    direction: complex | None = None


@dataclass(frozen=True)
class ScatteringData:
    """Analytic part f_0 plus the linear (x, t) dependence of f.

    ``reflect_lower`` replaces f_0 in the open lower half-plane by its Schwarz
    reflection ``conj(f_0(conj z))``; this is how a non-real f_0 acquires the
    jump of Im f across the real axis.
    """

    f0_expr: _expr.Node
    singularities: tuple[Singularity, ...] = ()
    schwarz_symmetric: bool = False
    reflect_lower: bool = False
    source: str = field(default="", compare=False)

    @cached_property
    def f0_prime_expr(self) -> _expr.Node:
        return self.f0_expr.diff()

    @property
    def is_zero(self) -> bool:
        return isinstance(self.f0_expr, _expr.Const) and self.f0_expr.value == 0

    def to_text(self) -> str:
        return str(self.f0_expr)

    def _check(self, z):
        for s in self.singularities:
            if np.any(np.abs(np.asarray(z) - s.point) <= SINGULAR_TOL * (1 + abs(s.point))):
                raise ValueError(f"evaluation at declared singularity {s.point}")

    def _eval_tree(self, node: _expr.Node, z):
        if not self.reflect_lower:
            return node.eval(z)
        z = np.asarray(z, dtype=complex)
        lower = z.imag < 0
        out = np.asarray(node.eval(np.where(lower, np.conj(z), z)), dtype=complex)
        out = np.where(lower, np.conj(out), out)
        return out if out.ndim else complex(out)

    def f0(self, z):
        self._check(z)
        return self._eval_tree(self.f0_expr, z)

    def f0_prime(self, z):
        self._check(z)
        return self._eval_tree(self.f0_prime_expr, z)


def parse_f0(
    text: str,
    singularities=(),
    schwarz_symmetric: bool | None = None,
    reflect_lower: bool = False,
) -> ScatteringData:
    """Parse ``text`` into :class:`ScatteringData`.

    Branch points of ``log``/``sqrt`` and poles of divisions whose argument is
    affine in z are added to the declared ``singularities``.  When
    ``schwarz_symmetric`` is None it is detected by sampling.
    """
    tree = _expr.parse(text)
    sings = [s if isinstance(s, Singularity) else Singularity(complex(s)) for s in singularities]
    sings.extend(_affine_singularities(tree))
    unique = []
    for s in sings:
        if not any(abs(s.point - u.point) < 1e-14 and s.direction == u.direction for u in unique):
            unique.append(s)
    sd = ScatteringData(tree, tuple(unique), False, reflect_lower, source=text)
    detected = reflect_lower or _schwarz_defect(sd) == 0.0
    if schwarz_symmetric is None:
        schwarz_symmetric = detected
    elif schwarz_symmetric and not detected:
        raise ValueError(f"f_0 = {text!r} is not Schwarz symmetric")
    return ScatteringData(tree, tuple(unique), bool(schwarz_symmetric), reflect_lower, source=text)


def _affine_singularities(tree: _expr.Node) -> list[Singularity]:
    out = []
    for node in _expr.walk(tree):
        if isinstance(node, _expr.Func) and node.name in ("log", "sqrt"):
            ab = _expr.affine_coefficients(node.arg)
            if ab is not None and ab[0] != 0:
                a, b = ab
                # principal cut: a z + b in (-inf, 0]
                out.append(Singularity(-b / a, -1 / a / abs(1 / a)))
        elif isinstance(node, _expr.BinOp) and node.op == "/":
            ab = _expr.affine_coefficients(node.right)
            if ab is not None and ab[0] != 0:
                out.append(Singularity(-ab[1] / ab[0]))
    return out


def _sample_points(sd: ScatteringData, n: int = 64, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.uniform(-3, 3, n) + 1j * rng.uniform(0.05, 3, n)
    keep = np.ones(n, bool)
    for s in sd.singularities:
        keep &= np.abs(z - s.point) > 1e-3
        keep &= np.abs(np.conj(z) - s.point) > 1e-3
    return z[keep]


def _schwarz_defect(sd: ScatteringData) -> float:
    """Fraction of samples violating f_0(conj z) = conj f_0(z)."""
    z = _sample_points(sd)
    with np.errstate(all="ignore"):
        a = np.asarray(sd.f0_expr.eval(np.conj(z)), dtype=complex)
        b = np.conj(np.asarray(sd.f0_expr.eval(z), dtype=complex))
    bad = np.abs(a - b) > 1e-12 * (1 + np.abs(b))
    return float(np.mean(bad))


def schwarz_defect(sd: ScatteringData, z) -> float:
    """Max |f_0(conj z) - conj f_0(z)| / (1 + |f_0(z)|) over the points ``z``."""
    z = np.asarray(z, dtype=complex)
    a = np.asarray(sd.f0(np.conj(z)), dtype=complex)
    b = np.asarray(sd.f0(z), dtype=complex)
    return float(np.max(np.abs(a - np.conj(b)) / (1 + np.abs(b))))


def eval_f(sd: ScatteringData, z, x: float, t: float):
    """f(z) = f_0(z) - x z - 2 t z^2 (scalar or array z)."""
    return sd.f0(z) - x * z - 2 * t * z * z


def eval_f_prime(sd: ScatteringData, z, x: float, t: float):
    """f'(z) = f_0'(z) - x - 4 t z, with f_0' from the differentiated tree."""
    return sd.f0_prime(z) - x - 4 * t * z


PRESETS = {
    "zero": "0",
    "cubic": "z^3",
    "quadratic": "z^2 + 0.5*z + 1",
    "log": "i*log(z + 5)",
}
