"""Noise estimation, covariance propagation and significance testing.

Nodal displacement errors are modelled as i.i.d. zero-mean Gaussian with
standard deviation sigma per component.  The residual sum of squares of a
rigid fit then carries 3n - 6 degrees of freedom per experiment, the
estimated deflection is Gaussian with a covariance that follows from the
normal equations, and compliance elements whose confidence interval
contains zero are treated as structural zeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .compliance import ComplianceMatrix, Experiment
from .errors import (
    DegenerateGeometry,
    InsufficientDof,
    MissingCovariance,
    NotCanonical,
    TooFewRemaining,
)
from .estimation import DEGENERACY_RTOL, FitResult, moment_matrix
from .field import DisplacementField, centroid

DEFAULT_OUTLIER_FRACTION = 0.10
DEFAULT_CONFIDENCE_MULTIPLIER = 3.0


@dataclass(frozen=True)
class NoiseEstimate:
    """Pooled nodal noise level recovered from fit residuals."""

    sigma: float
    dof: int
    per_experiment_sigma: tuple[float, ...]


def estimate_sigma(fits: Sequence[FitResult]) -> NoiseEstimate:
    """Pool fit residuals into one nodal noise estimate.

    Each experiment contributes its objective (residual sum of squares)
    with 3n - 6 degrees of freedom; sigma^2 is the ratio of the pooled
    sums.  Raises :class:`InsufficientDof` for fits with n < 3.
    """
    if not fits:
        raise InsufficientDof("no fits supplied")
    total_objective = 0.0
    total_dof = 0
    per_experiment = []
    for fit in fits:
        dof = 3 * fit.n - 6
        if dof <= 0:
            raise InsufficientDof(
                f"fit with {fit.n} nodes has no residual degrees of freedom")
        per_experiment.append(math.sqrt(fit.objective / dof))
        total_objective += fit.objective
        total_dof += dof
    return NoiseEstimate(math.sqrt(total_objective / total_dof), total_dof,
                         tuple(per_experiment))


@dataclass(frozen=True)
class DeflectionCovariance:
    """Covariance of an estimated deflection: translation mm^2, rotation rad^2."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        for name in ("translation", "rotation"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.shape != (3, 3):
                raise ValueError(f"{name} covariance must be 3x3")
            m = (m + m.T) / 2.0
            m.flags.writeable = False
            object.__setattr__(self, name, m)

    def translation_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.translation))

    def rotation_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.rotation))

    def component_std(self) -> np.ndarray:
        """Standard deviations of the 6 deflection components."""
        return np.concatenate([self.translation_std(), self.rotation_std()])


def deflection_covariance(field: DisplacementField, sigma: float) -> DeflectionCovariance:
    """Covariance of the linearized estimate for noise level `sigma`.

    Translation: (sigma^2 / n) I about the field centroid.  Rotation:
    sigma^2 times the inverse of the rotation normal matrix.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if field.n < 3:
        raise DegenerateGeometry("covariance needs at least 3 nodes")
    rel = field.positions - centroid(field)
    m = moment_matrix(rel)
    eig = np.linalg.eigvalsh(m)
    if eig[0] <= DEGENERACY_RTOL * np.trace(m):
        raise DegenerateGeometry(
            "rotation normal matrix is singular for this node layout")
    cov_translation = (sigma ** 2 / field.n) * np.eye(3)
    inv = np.linalg.inv(m)
    cov_rotation = sigma ** 2 * (inv + inv.T) / 2.0
    return DeflectionCovariance(cov_translation, cov_rotation)


def filter_outliers(field: DisplacementField, fit: FitResult,
                    fraction: float = DEFAULT_OUTLIER_FRACTION,
                    ranking: str = "max-axis",
                    ) -> tuple[DisplacementField, np.ndarray]:
    """Drop the worst-fitting nodes of a field.

    Nodes are ranked by the largest per-axis absolute residual of `fit`
    (``ranking="norm"`` uses the residual vector norm instead) and the
    worst ``ceil(fraction * n)`` are removed in a single pass.  Survivor
    order is preserved.  Returns the reduced field and the integer
    indices of the removed nodes.

    Raises :class:`TooFewRemaining` if fewer than 3 nodes would survive.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    if fit.n != field.n:
        raise ValueError("fit residuals do not match the field")
    n = field.n
    remove = math.ceil(fraction * n)
    if remove == 0:
        return field, np.empty(0, dtype=int)
    if n - remove < 3:
        raise TooFewRemaining(
            f"removing {remove} of {n} nodes leaves fewer than 3")
    if ranking == "max-axis":
        score = np.abs(fit.residuals).max(axis=1)
    elif ranking == "norm":
        score = np.linalg.norm(fit.residuals, axis=1)
    else:
        raise ValueError(f"unknown ranking {ranking!r}")
    # Stable sort makes tie handling deterministic (earlier index survives).
    order = np.argsort(score, kind="stable")
    removed = np.sort(order[n - remove:])
    keep = np.ones(n, dtype=bool)
    keep[removed] = False
    reduced = DisplacementField(field.positions[keep], field.displacements[keep],
                                field.reference_point, centered=field.centered)
    return reduced, removed


@dataclass(frozen=True)
class SignificanceElement:
    row: int
    col: int
    estimate: float
    halfwidth: float
    significant: bool
    safety_factor: float | None


@dataclass(frozen=True)
class SignificanceReport:
    """Per-element confidence intervals of a compliance matrix."""

    elements: tuple[SignificanceElement, ...]
    multiplier: float
    confidence_level: float

    def to_json_dict(self) -> dict:
        return {
            "multiplier": self.multiplier,
            "confidence_level": self.confidence_level,
            "elements": [
                {
                    "row": e.row,
                    "col": e.col,
                    "estimate": e.estimate,
                    "halfwidth": e.halfwidth,
                    "significant": e.significant,
                    "safety_factor": None if e.safety_factor is None
                    or not math.isfinite(e.safety_factor) else e.safety_factor,
                }
                for e in self.elements
            ],
        }


def significance_test(matrix: ComplianceMatrix,
                      experiments: Sequence[Experiment],
                      covariances: Sequence[DeflectionCovariance],
                      level_multiplier: float = DEFAULT_CONFIDENCE_MULTIPLIER,
                      ) -> tuple[SignificanceReport, ComplianceMatrix]:
    """Zero out compliance elements indistinguishable from zero.

    The experiments must form a canonical scheme so every column of the
    matrix maps to exactly one experiment.  The confidence halfwidth of
    element (i, j) is ``level_multiplier`` times the standard deviation
    of deflection component i of the column-j experiment, divided by the
    wrench magnitude.  Elements whose interval contains zero are set to
    zero and recorded in the significance mask; significant elements
    report the safety factor |estimate| / halfwidth.
    """
    if level_multiplier <= 0:
        raise ValueError("level_multiplier must be positive")
    if len(covariances) != len(experiments) or any(c is None for c in covariances):
        raise MissingCovariance("need one deflection covariance per experiment")
    column_exp: dict[int, int] = {}
    for idx, exp in enumerate(experiments):
        single = exp.wrench.single_component()
        if single is None:
            raise NotCanonical("significance test needs a canonical wrench scheme")
        col, _ = single
        if col in column_exp:
            raise NotCanonical("duplicate wrench component in experiment set")
        column_exp[col] = idx
    if len(column_exp) != 6 or len(experiments) != 6:
        raise NotCanonical("significance test needs all six canonical wrenches")

    halfwidth = np.empty((6, 6))
    for col in range(6):
        idx = column_exp[col]
        _, magnitude = experiments[idx].wrench.single_component()
        std6 = covariances[idx].component_std()
        halfwidth[:, col] = level_multiplier * std6 / abs(magnitude)

    significant = np.abs(matrix.k) > halfwidth
    zeroed = np.where(significant, matrix.k, 0.0)
    elements = []
    for i in range(6):
        for j in range(6):
            est = float(matrix.k[i, j])
            hw = float(halfwidth[i, j])
            if significant[i, j]:
                safety = abs(est) / hw if hw > 0 else math.inf
            else:
                safety = None
            elements.append(SignificanceElement(i + 1, j + 1, est, hw,
                                                bool(significant[i, j]), safety))
    confidence = math.erf(level_multiplier / math.sqrt(2.0))
    report = SignificanceReport(tuple(elements), float(level_multiplier), confidence)
    result = ComplianceMatrix(zeroed, significant, symmetrized=matrix.symmetrized)
    return report, result
