"""Global adaptive Gauss-Kronrod quadrature on finite and semi-infinite intervals.

Panels are 7-point Gauss / 15-point Kronrod pairs; |K15 - G7| is the panel
error estimate. The panel with the largest estimate is bisected until the
summed estimate meets max(abs_tol, rel_tol * |value|).

Integrands must be side-effect free: a call may evaluate them in any order.
"""
import heapq
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from errors import DomainError, NonConvergence, NonFiniteEvaluation
from settings import env_float, env_int

# Kronrod abscissae (positive half, descending) and weights; Gauss nodes are the odd entries.
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)

NODES = np.array([-x for x in _XGK[:7]] + [0.0] + list(reversed(_XGK[:7])))
KRONROD_WEIGHTS = np.array(list(_WGK[:7]) + [_WGK[7]] + list(reversed(_WGK[:7])))
GAUSS_WEIGHTS = np.array([0.0, _WG[0], 0.0, _WG[1], 0.0, _WG[2], 0.0, _WG[3],
                          0.0, _WG[2], 0.0, _WG[1], 0.0, _WG[0], 0.0])


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError('abs_tol', 'must be > 0')
        if not self.rel_tol > 0:
            raise DomainError('rel_tol', 'must be > 0')
        if self.max_subdivisions < 1:
            raise DomainError('max_subdivisions', 'must be >= 1')

    @classmethod
    def from_env(cls) -> 'QuadratureSpec':
        return cls(
            abs_tol=env_float('CEV_QUAD_ABS_TOL', 1e-10),
            rel_tol=env_float('CEV_QUAD_REL_TOL', 1e-8),
            max_subdivisions=env_int('CEV_QUAD_MAX_SUBDIVISIONS', 2000),
        )

    def tolerance(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


@dataclass(frozen=True)
class IntegrationResult:
    value: float
    error_estimate: float
    evaluations: int
    converged: bool
    subdivisions: int = 1


def _panel(f: Callable[[float], float], a: float, b: float) -> Tuple[float, float]:
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    xs = center + half * NODES
    fx = np.empty(15)
    for i, x in enumerate(xs):
        v = f(float(x))
        if not math.isfinite(v):
            raise NonFiniteEvaluation(float(x))
        fx[i] = v
    kronrod = half * float(np.dot(KRONROD_WEIGHTS, fx))
    gauss = half * float(np.dot(GAUSS_WEIGHTS, fx))
    return kronrod, abs(kronrod - gauss)


def integrate_adaptive(f: Callable[[float], float], a: float, b: float,
                       spec: QuadratureSpec = QuadratureSpec(), strict: bool = True) -> IntegrationResult:
    """Integrate f over [a, b]; raises NonConvergence when max_subdivisions is exhausted (strict)."""
    if not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError('interval', 'integrate_adaptive needs finite limits')
    if not a < b:
        raise DomainError('interval', f'expected a < b, got [{a}, {b}]')

    value, err = _panel(f, a, b)
    evaluations = 15
    # max-heap on the panel error estimate
    heap: List[Tuple[float, float, float, float, float]] = [(-err, a, b, value, err)]
    total, total_err = value, err
    subdivisions = 1

    while total_err > spec.tolerance(total):
        if subdivisions >= spec.max_subdivisions:
            break
        _, lo, hi, v, e = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # panel below floating-point resolution
            heapq.heappush(heap, (-e, lo, hi, v, e))
            break
        v1, e1 = _panel(f, lo, mid)
        v2, e2 = _panel(f, mid, hi)
        evaluations += 30
        subdivisions += 1
        heapq.heappush(heap, (-e1, lo, mid, v1, e1))
        heapq.heappush(heap, (-e2, mid, hi, v2, e2))
        total += v1 + v2 - v
        total_err += e1 + e2 - e
        if subdivisions % 64 == 0:
            # refresh the running sums against drift
            total = math.fsum(p[3] for p in heap)
            total_err = math.fsum(p[4] for p in heap)

    total = math.fsum(p[3] for p in heap)
    total_err = math.fsum(p[4] for p in heap)
    converged = total_err <= spec.tolerance(total)
    if not converged and strict:
        raise NonConvergence(total_err)
    return IntegrationResult(value=total, error_estimate=total_err, evaluations=evaluations,
                             converged=converged, subdivisions=subdivisions)


def integrate_upper_semi_infinite(f: Callable[[float], float], a: float,
                                  spec: QuadratureSpec = QuadratureSpec(), strict: bool = True) -> IntegrationResult:
    """Integrate f over [a, inf) through y = a + u/(1-u), u in [0, 1)."""
    if not math.isfinite(a):
        raise DomainError('interval', 'lower limit must be finite')

    def mapped(u: float) -> float:
        if u >= 1.0:
            return 0.0
        w = 1.0 - u
        return f(a + u / w) / (w * w)

    return integrate_adaptive(mapped, 0.0, 1.0, spec, strict=strict)


def integrate(f: Callable[[float], float], a: float, b: float = math.inf,
              spec: QuadratureSpec = QuadratureSpec(), strict: bool = True) -> IntegrationResult:
    if b == math.inf:
        return integrate_upper_semi_infinite(f, a, spec, strict=strict)
    return integrate_adaptive(f, a, b, spec, strict=strict)
