"""Monotone lower-triangular transport maps with integrated-squared components.

Each component has the form

    T_i(r_1, ..., r_i) = T_i^L(r_1, ..., r_{i-1})
                         + integral_0^{r_i} (T_i^R(r_1, ..., r_{i-1}, t))^2 dt

with T^L and T^R expanded in total-degree monomial bases.  Squaring the
integrand makes dT_i/dr_i >= 0 by construction, so the map is monotone in
its diagonal arguments wherever T^R is nonzero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .polybasis import MultiIndexSet, eval_basis, total_degree_set

__all__ = [
    "MapComponent",
    "TriangularMap",
    "DeepMap",
    "MapInversionError",
    "identity_map",
    "gaussian_map",
    "compose",
    "pullback_logdensity",
    "map_to_json",
    "map_from_json",
    "save_map",
    "load_map",
]

DEFAULT_QUADRATURE_ORDER = 16

# Inversion constants: bracket growth cap, Newton iteration cap, and the
# derivative floor below which the map is considered flat.
_BRACKET_CAP = 2.0**60
_MAX_NEWTON = 200
_DERIV_FLOOR = 1e-14

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


class MapInversionError(RuntimeError):
    """Raised when a triangular map component cannot be inverted."""


def _gauss_legendre_01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights rescaled to [0, 1].

    The weights are nudged so they sum to exactly 1.0 in floating point;
    this keeps the identity map (constant unit integrand) bit-exact, which
    the sampler equivalence reductions rely on.
    """
    if q < 1:
        raise ValueError(f"quadrature order must be positive, got {q}")
    cached = _GL_CACHE.get(q)
    if cached is not None:
        return cached
    x, w = np.polynomial.legendre.leggauss(q)
    nodes = (x + 1.0) / 2.0
    weights = w / 2.0
    for _ in range(10):
        residual = 1.0 - np.sum(weights)
        if residual == 0.0:
            break
        weights[q // 2] += residual
    _GL_CACHE[q] = (nodes, weights)
    return nodes, weights


@dataclass
class MapComponent:
    """One scalar component T_i of a triangular map.

    Attributes:
        i: 1-based component index; T_i depends on r_1..r_i only.
        set_L: index set of the off-diagonal part (variables 1..i-1).
        set_R: index set of the integrand (variables 1..i).
        coeffs_L: coefficients over ``set_L``.
        coeffs_R: coefficients over ``set_R``.
        q: Gauss-Legendre quadrature order for the diagonal integral.
    """

    i: int
    set_L: MultiIndexSet
    set_R: MultiIndexSet
    coeffs_L: np.ndarray
    coeffs_R: np.ndarray
    q: int = DEFAULT_QUADRATURE_ORDER

    def __post_init__(self) -> None:
        self.coeffs_L = np.asarray(self.coeffs_L, dtype=float)
        self.coeffs_R = np.asarray(self.coeffs_R, dtype=float)
        if self.coeffs_L.shape != (len(self.set_L),):
            raise ValueError(
                f"component {self.i}: coeffs_L has length {self.coeffs_L.size}, "
                f"expected {len(self.set_L)}"
            )
        if self.coeffs_R.shape != (len(self.set_R),):
            raise ValueError(
                f"component {self.i}: coeffs_R has length {self.coeffs_R.size}, "
                f"expected {len(self.set_R)}"
            )

    def _integrand_poly(self, points: np.ndarray) -> np.ndarray:
        """Coefficients of T^R as a univariate polynomial in the diagonal variable.

        For fixed r_1..r_{i-1}, T^R(r, t) = sum_p c_p(r) t^p.  Returns the
        array c of shape (n, ell_R + 1).
        """
        prefix = self.set_R.indices.copy()
        diag_deg = prefix[:, self.i - 1].copy()
        prefix[:, self.i - 1] = 0
        phi = np.prod(points[:, None, :] ** prefix[None, :, :], axis=2)
        c = np.empty((points.shape[0], self.set_R.ell + 1))
        for p in range(self.set_R.ell + 1):
            mask = diag_deg == p
            c[:, p] = phi[:, mask] @ self.coeffs_R[mask] if mask.any() else 0.0
        return c

    def offdiag(self, points: np.ndarray) -> np.ndarray:
        """T^L at a batch of points, shape (n,)."""
        return eval_basis(self.set_L, points) @ self.coeffs_L

    def eval(self, points: np.ndarray) -> np.ndarray:
        """T_i at a batch of points, shape (n,)."""
        nodes, weights = _gauss_legendre_01(self.q)
        x = points[:, self.i - 1]
        c = self._integrand_poly(points)
        t = x[:, None] * nodes[None, :]
        vals = np.zeros_like(t)
        for p in range(self.set_R.ell, -1, -1):
            vals = vals * t + c[:, p : p + 1]
        integral = x * np.sum(weights[None, :] * vals * vals, axis=1)
        return self.offdiag(points) + integral

    def diag_derivative(self, points: np.ndarray) -> np.ndarray:
        """dT_i/dr_i = (T^R)^2 evaluated at t = r_i, shape (n,)."""
        x = points[:, self.i - 1]
        c = self._integrand_poly(points)
        s = np.zeros_like(x)
        for p in range(self.set_R.ell, -1, -1):
            s = s * x + c[:, p]
        return s * s


@dataclass
class TriangularMap:
    """A monotone lower-triangular map R^d -> R^d (one component per output)."""

    d: int
    components: list[MapComponent]

    def __post_init__(self) -> None:
        if len(self.components) != self.d:
            raise ValueError(
                f"map has {len(self.components)} components, expected d={self.d}"
            )
        for k, comp in enumerate(self.components, start=1):
            if comp.i != k:
                raise ValueError(f"component at position {k} has index i={comp.i}")

    def _check_points(self, points: np.ndarray) -> tuple[np.ndarray, bool]:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.d:
            raise ValueError(f"points have dimension {pts.shape[1]}, map has d={self.d}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("map evaluation requires finite input points")
        return pts, single

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Apply the map to a point (d,) or batch (n, d)."""
        pts, single = self._check_points(points)
        out = np.empty_like(pts)
        for k, comp in enumerate(self.components):
            out[:, k] = comp.eval(pts)
        return out[0] if single else out

    def log_det_jacobian(self, points: np.ndarray) -> np.ndarray | float:
        """log det of the (triangular) Jacobian; -inf where a diagonal derivative is 0."""
        pts, single = self._check_points(points)
        total = np.zeros(pts.shape[0])
        with np.errstate(divide="ignore"):
            for comp in self.components:
                total += np.log(comp.diag_derivative(pts))
        return float(total[0]) if single else total

    def invert(self, theta: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Solve T(r) = theta for r by sequential scalar root finds.

        Each component is solved with safeguarded Newton inside a sign-change
        bracket grown geometrically from [-1, 1].

        Args:
            theta: target point of shape (d,).
            tol: absolute tolerance on |T_i(r) - theta_i|.

        Returns:
            The preimage r of shape (d,).
        """
        th = np.asarray(theta, dtype=float)
        if th.shape != (self.d,):
            raise ValueError(f"invert expects a single point of shape ({self.d},)")
        if not np.all(np.isfinite(th)):
            raise ValueError("invert requires a finite target point")
        r = np.zeros(self.d)
        work = np.zeros((1, self.d))
        for k, comp in enumerate(self.components):
            work[0, :k] = r[:k]
            r[k] = _invert_component(comp, work, th[k], tol)
            work[0, k] = r[k]
        return r


def _invert_component(comp: MapComponent, work: np.ndarray, target: float, tol: float) -> float:
    """Scalar solve of T_i(prefix, x) = target for x, prefix fixed in ``work``."""
    i = comp.i

    def f(x: float) -> float:
        work[0, i - 1] = x
        return comp.eval(work)[0] - target

    def fprime(x: float) -> float:
        work[0, i - 1] = x
        return comp.diag_derivative(work)[0]

    lo, hi = -1.0, 1.0
    f_hi = f(hi)
    while f_hi < 0.0:
        if hi >= _BRACKET_CAP:
            raise MapInversionError(
                f"component {i}: no sign change up to bracket bound {_BRACKET_CAP:g}"
            )
        hi *= 2.0
        f_hi = f(hi)
    f_lo = f(lo)
    while f_lo > 0.0:
        if -lo >= _BRACKET_CAP:
            raise MapInversionError(
                f"component {i}: no sign change down to bracket bound {-_BRACKET_CAP:g}"
            )
        lo *= 2.0
        f_lo = f(lo)

    # Starting at 0 (always inside the initial bracket) keeps the identity
    # map's inverse bit-exact: one Newton step lands on the target.
    x = 0.0
    max_deriv = 0.0
    for _ in range(_MAX_NEWTON):
        fx = f(x)
        if abs(fx) <= tol:
            return x
        if fx > 0.0:
            hi = x
        else:
            lo = x
        d = fprime(x)
        max_deriv = max(max_deriv, d)
        if d > _DERIV_FLOOR:
            x_new = x - fx / d
            if not (lo < x_new < hi):
                x_new = 0.5 * (lo + hi)
        else:
            x_new = 0.5 * (lo + hi)
        x = x_new
    if max_deriv < _DERIV_FLOOR:
        raise MapInversionError(
            f"component {i}: derivative below {_DERIV_FLOOR:g} throughout bracket "
            "(degenerate monotonicity)"
        )
    raise MapInversionError(
        f"component {i}: no convergence within {_MAX_NEWTON} Newton iterations"
    )


@dataclass
class DeepMap:
    """Composition of triangular stages, applied first to last.

    ``eval(r)`` computes stage_k(...stage_2(stage_1(r))...), so the most
    recently appended stage acts on the output side.
    """

    stages: list[TriangularMap] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("DeepMap requires at least one stage")
        dims = {stage.d for stage in self.stages}
        if len(dims) != 1:
            raise ValueError(f"stages disagree on dimension: {sorted(dims)}")

    @property
    def d(self) -> int:
        return self.stages[0].d

    def eval(self, points: np.ndarray) -> np.ndarray:
        x = points
        for stage in self.stages:
            x = stage.eval(x)
        return x

    def log_det_jacobian(self, points: np.ndarray) -> np.ndarray | float:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        x = np.atleast_2d(pts)
        total = np.zeros(x.shape[0])
        for stage in self.stages:
            total = total + stage.log_det_jacobian(x)
            x = stage.eval(x)
        return float(total[0]) if single else total

    def invert(self, theta: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        x = np.asarray(theta, dtype=float)
        for stage in reversed(self.stages):
            x = stage.invert(x, tol=tol)
        return x


def compose(stages: list[TriangularMap]) -> DeepMap:
    """Compose triangular stages into a deep map (first stage applied first)."""
    return DeepMap(stages=list(stages))


def pullback_logdensity(map_obj, log_target, r: np.ndarray) -> float:
    """log of the pullback density log pi(T(r)) + log det dT(r) at one point."""
    r = np.asarray(r, dtype=float)
    theta = map_obj.eval(r)
    return float(log_target(theta)) + float(map_obj.log_det_jacobian(r))


def identity_map(
    d: int,
    ell_L: int = 1,
    ell_R: int = 0,
    q: int = DEFAULT_QUADRATURE_ORDER,
) -> TriangularMap:
    """The identity on R^d: T^L = 0, T^R = 1, in bases of the given degrees."""
    components = []
    for i in range(1, d + 1):
        set_L = total_degree_set(d, i - 1, ell_L)
        set_R = total_degree_set(d, i, ell_R)
        coeffs_R = np.zeros(len(set_R))
        coeffs_R[0] = 1.0
        components.append(
            MapComponent(
                i=i,
                set_L=set_L,
                set_R=set_R,
                coeffs_L=np.zeros(len(set_L)),
                coeffs_R=coeffs_R,
                q=q,
            )
        )
    return TriangularMap(d=d, components=components)


def gaussian_map(
    mean: np.ndarray, cov: np.ndarray, q: int = DEFAULT_QUADRATURE_ORDER
) -> TriangularMap:
    """Exact triangular transport from N(0, I) to N(mean, cov).

    T(r) = mean + L r with L the lower Cholesky factor of cov, encoded as
    linear off-diagonal parts plus constant integrands sqrt(L_ii).
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.shape[0]
    L = np.linalg.cholesky(cov)
    components = []
    for i in range(1, d + 1):
        set_L = total_degree_set(d, i - 1, 1)
        coeffs_L = np.zeros(len(set_L))
        for row, j in enumerate(set_L.indices):
            deg = int(j.sum())
            if deg == 0:
                coeffs_L[row] = mean[i - 1]
            elif deg == 1:
                k = int(np.argmax(j))
                coeffs_L[row] = L[i - 1, k]
        set_R = total_degree_set(d, i, 0)
        components.append(
            MapComponent(
                i=i,
                set_L=set_L,
                set_R=set_R,
                coeffs_L=coeffs_L,
                coeffs_R=np.array([np.sqrt(L[i - 1, i - 1])]),
                q=q,
            )
        )
    return TriangularMap(d=d, components=components)


def map_to_json(map_obj) -> dict:
    """Serialize a TriangularMap or DeepMap to a JSON-ready dict.

    Index sets are stored as (d, i, ell) triples implicit in the component
    records and regenerated on load; coefficients round-trip bitwise through
    their shortest decimal representation.
    """
    if isinstance(map_obj, TriangularMap):
        stages = [map_obj]
        d = map_obj.d
    elif isinstance(map_obj, DeepMap):
        stages = map_obj.stages
        d = map_obj.d
    else:
        raise TypeError(f"cannot serialize object of type {type(map_obj).__name__}")
    return {
        "d": d,
        "stages": [
            {
                "components": [
                    {
                        "i": comp.i,
                        "ell_L": comp.set_L.ell,
                        "ell_R": comp.set_R.ell,
                        "coeffs_L": comp.coeffs_L.tolist(),
                        "coeffs_R": comp.coeffs_R.tolist(),
                        "q": comp.q,
                    }
                    for comp in stage.components
                ]
            }
            for stage in stages
        ],
    }


def map_from_json(data: dict) -> DeepMap:
    """Rebuild a deep map from its JSON dict (single-stage maps included)."""
    d = int(data["d"])
    stages = []
    for stage_rec in data["stages"]:
        components = []
        for rec in stage_rec["components"]:
            i = int(rec["i"])
            set_L = total_degree_set(d, i - 1, int(rec["ell_L"]))
            set_R = total_degree_set(d, i, int(rec["ell_R"]))
            components.append(
                MapComponent(
                    i=i,
                    set_L=set_L,
                    set_R=set_R,
                    coeffs_L=np.asarray(rec["coeffs_L"], dtype=float),
                    coeffs_R=np.asarray(rec["coeffs_R"], dtype=float),
                    q=int(rec.get("q", DEFAULT_QUADRATURE_ORDER)),
                )
            )
        stages.append(TriangularMap(d=d, components=components))
    return DeepMap(stages=stages)


def save_map(path, map_obj) -> None:
    """Write a map to a JSON file (floats keep full double precision)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(map_to_json(map_obj), fh, indent=2)
        fh.write("\n")


def load_map(path) -> DeepMap:
    with open(path, encoding="utf-8") as fh:
        return map_from_json(json.load(fh))
