"""End-to-end identification pipeline from fields to a compliance matrix.

The stages follow the processing order used throughout the package:
estimate each experiment, pool residuals into a noise level, drop
outlier nodes, re-estimate, assemble the matrix, zero insignificant
elements and finally symmetrize.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as _field
from typing import Sequence

import numpy as np

from .compliance import (
    ComplianceMatrix,
    Experiment,
    Wrench,
    assemble_canonical,
    assemble_overdetermined,
    symmetrize,
)
from .estimation import AngleExtractionMethod, FitResult, estimate_lin, estimate_svd
from .field import DisplacementField
from .stats import (
    DEFAULT_CONFIDENCE_MULTIPLIER,
    DEFAULT_OUTLIER_FRACTION,
    DeflectionCovariance,
    NoiseEstimate,
    SignificanceReport,
    deflection_covariance,
    estimate_sigma,
    filter_outliers,
    significance_test,
)

log = logging.getLogger("stiffid")


@dataclass(frozen=True)
class LoadCase:
    """One experiment handed to the pipeline: centered field plus wrench."""

    field: DisplacementField
    wrench: Wrench
    source: str = ""


@dataclass(frozen=True)
class IdentifyOptions:
    estimator: str = "lin"
    angles: AngleExtractionMethod = AngleExtractionMethod.AVERAGED
    outlier_fraction: float = DEFAULT_OUTLIER_FRACTION
    confidence_multiplier: float = DEFAULT_CONFIDENCE_MULTIPLIER
    symmetrize: bool = True

    def __post_init__(self):
        if self.estimator not in ("lin", "svd"):
            raise ValueError(f"estimator must be 'lin' or 'svd', got {self.estimator!r}")
        object.__setattr__(self, "angles", AngleExtractionMethod(self.angles))


@dataclass(frozen=True)
class IdentificationResult:
    matrix: ComplianceMatrix
    assembled: ComplianceMatrix
    significance: SignificanceReport | None
    noise: NoiseEstimate
    fits: tuple[FitResult, ...]
    covariances: tuple[DeflectionCovariance, ...]
    removed: tuple[tuple[int, ...], ...]
    canonical: bool

    def diagnostics(self) -> dict:
        """Per-stage run log entries, JSON-serializable."""
        return {
            "experiments": [
                {
                    "nodes": fit.n,
                    "sigma": self.noise.per_experiment_sigma[i],
                    "removed_nodes": len(self.removed[i]),
                }
                for i, fit in enumerate(self.fits)
            ],
            "sigma": self.noise.sigma,
            "dof": self.noise.dof,
            "canonical": self.canonical,
            "asymmetry": self.assembled.asymmetry(),
        }


def _estimate(field: DisplacementField, options: IdentifyOptions) -> FitResult:
    if options.estimator == "svd":
        return estimate_svd(field, options.angles)
    return estimate_lin(field)


def run_identification(cases: Sequence[LoadCase],
                       options: IdentifyOptions = IdentifyOptions(),
                       ) -> IdentificationResult:
    """Run the full identification pipeline over a set of load cases.

    Fields must be centered (and already restricted to their sensor
    region).  With six single-component wrenches the matrix is assembled
    column by column and significance-tested; any other admissible set
    is reduced by least squares and the significance stage is skipped.
    """
    initial_fits = [_estimate(case.field, options) for case in cases]
    noise = estimate_sigma(initial_fits)
    log.info("pooled noise sigma=%.6g from %d experiments", noise.sigma, len(cases))

    fields = []
    fits = []
    removed: list[tuple[int, ...]] = []
    for case, fit in zip(cases, initial_fits):
        if options.outlier_fraction > 0.0:
            reduced, dropped = filter_outliers(case.field, fit,
                                               options.outlier_fraction)
        else:
            reduced, dropped = case.field, np.empty(0, dtype=int)
        fields.append(reduced)
        removed.append(tuple(int(i) for i in dropped))
        fits.append(_estimate(reduced, options) if len(dropped) else fit)
        log.info("experiment %s: n=%d, removed=%d", case.source or "?",
                 reduced.n, len(dropped))

    covariances = tuple(deflection_covariance(f, noise.sigma) for f in fields)
    experiments = [Experiment(case.wrench, fit.deflection, case.source)
                   for case, fit in zip(cases, fits)]

    canonical = (len(experiments) == 6
                 and all(e.wrench.single_component() is not None for e in experiments)
                 and len({e.wrench.single_component()[0] for e in experiments}) == 6)
    if canonical:
        assembled = assemble_canonical(experiments)
        report, matrix = significance_test(assembled, experiments, covariances,
                                           options.confidence_multiplier)
    else:
        assembled = assemble_overdetermined(experiments)
        report, matrix = None, assembled
        log.info("non-canonical wrench set: significance test skipped")
    log.info("assembled matrix asymmetry %.3e", assembled.asymmetry())

    if options.symmetrize:
        matrix = symmetrize(matrix)
    return IdentificationResult(matrix, assembled, report, noise,
                                tuple(fits), covariances, tuple(removed),
                                canonical)
