"""Stability sets in the covariance order and the worst-case principle.

An ensemble A' belongs to the stability set of A when its second moment
is dominated by that of A in the semidefinite order. The projection cost
is monotone along that order for every estimator, so the supremum of the
cost over the whole set is attained at A itself. This module samples the
set constructively, realizes baseline perturbations exactly, and checks
the extremal property numerically.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .cost_minimizer import HSOperator, cost_difference_bound, cost_decomposed
from .covariance import loewner_dominates
from .errors import DegenerateSpec, ShapeMismatch
from .measure_ensemble import (
    BaselineEnsemble,
    BaselineSpec,
    MeasureSpace,
    SourceEnsemble,
    ensemble_distance,
    second_moment,
)
from .representation import RepresentationOperator


@dataclass(frozen=True)
class EnvelopeReport:
    """Outcome of a worst-case check against dominated samples.

    member            no sampled cost exceeded the reference beyond tol
    lambda_min_margin worst domination margin among the samples
    cost_reference    cost at the reference ensemble
    cost_samples      (sample id, cost) pairs; id 0 is the reference
                      ensemble itself, i.e. the undeformed sample
    max_violation     max over samples of cost_sample - cost_reference
    """

    member: bool
    lambda_min_margin: float
    cost_reference: float
    cost_samples: list[tuple[int, float]]
    max_violation: float

    def as_dict(self) -> dict:
        return {
            "member": self.member,
            "lambda_min_margin": self.lambda_min_margin,
            "cost_reference": self.cost_reference,
            "cost_samples": [[int(i), float(c)] for i, c in self.cost_samples],
            "max_violation": self.max_violation,
        }


@dataclass(frozen=True)
class ClosureReport:
    """Cost gaps of approximating ensembles against a limit ensemble."""

    distances: list[float]
    gaps: list[float]
    bounds: list[float]
    gaps_within_bound: bool
    gaps_monotone: bool
    max_gap: float


def _thread_cap() -> int | None:
    """Worker cap from ENVMM_THREADS; 0 or unset means automatic.

    Automatic resolves to sequential evaluation because the per-sample
    work is BLAS-bound and already parallel inside numpy.
    """
    raw = os.environ.get("ENVMM_THREADS", "0").strip()
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap < 0:
        cap = 0
    return None if cap in (0, 1) else cap


def is_member(
    candidate: SourceEnsemble, reference: SourceEnsemble, tol: float = 1e-9
) -> tuple[bool, float]:
    """Membership of candidate in the stability set of reference.

    Only second moments enter, so the two ensembles may live on
    different measure spaces. Returns the verdict and the bottom
    eigenvalue of the covariance gap.
    """
    if (candidate.d, candidate.p) != (reference.d, reference.p):
        raise ShapeMismatch("block shapes differ")
    return loewner_dominates(second_moment(reference), second_moment(candidate), tol=tol)


def sample_dominated(
    reference: SourceEnsemble,
    seed: int,
    n_samples: int,
    shrink_floor: float = 0.0,
) -> list[SourceEnsemble]:
    """Draw ensembles whose second moments are dominated by construction.

    The reference covariance is diagonalized as U L U^T; each sample
    applies K = U D U^T with diagonal D uniform in [shrink_floor, 1] to
    every atom, giving the exact second moment U D^2 L U^T <= U L U^T.
    Drawing D = I would reproduce the reference ensemble itself.
    """
    if not 0.0 <= shrink_floor <= 1.0:
        raise ValueError("shrink_floor must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    _, evecs = np.linalg.eigh(second_moment(reference).matrix)
    flat = reference.flat_values
    m, dim = flat.shape
    out = []
    for _ in range(n_samples):
        diag = rng.uniform(shrink_floor, 1.0, size=dim)
        contraction = (evecs * diag[None, :]) @ evecs.T
        shrunk = flat @ contraction.T
        out.append(
            SourceEnsemble(
                space=reference.space,
                values=shrunk.reshape(m, reference.d, reference.p),
            )
        )
    return out


def _ones_fixing_orthogonal(n: int, rng: np.random.Generator) -> NDArray:
    """Random orthogonal matrix fixing the all-ones direction."""
    basis = np.linalg.qr(
        np.column_stack([np.ones(n) / np.sqrt(n), rng.standard_normal((n, n - 1))])
    )[0]
    # make the first basis column the normalized ones vector exactly
    if basis[0, 0] < 0:
        basis = -basis
    gauss = rng.standard_normal((n - 1, n - 1))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))[None, :]
    block = np.eye(n)
    block[1:, 1:] = q
    return basis @ block @ basis.T


def fit_baseline(
    a: SourceEnsemble, spec: BaselineSpec, seed: int
) -> tuple[SourceEnsemble, BaselineEnsemble]:
    """Realize a perturbation with prescribed second moment, uncorrelated
    with the source.

    The source space is expanded by an auxiliary factor carrying one
    plus/minus atom pair per retained eigendirection of sigma_xi, values
    scaled so the product-measure second moment reproduces sigma_xi and
    the auxiliary mean vanishes; the latter forces an exactly zero cross
    moment against any function of the source factor alone. The seed
    mixes the auxiliary atoms by an orthogonal map fixing constants, so
    distinct seeds give genuinely different realizations with identical
    second-order statistics. Returns the source lifted to the product
    space together with the realized baseline.
    """
    if spec.dim != a.d * a.p:
        raise ShapeMismatch("baseline spec dimension does not match the ensemble")
    evals, evecs = np.linalg.eigh(spec.sigma_xi)
    lam_max = max(float(evals[-1]), 0.0)
    if float(evals[0]) < -1e-10 * max(1.0, lam_max):
        raise DegenerateSpec(
            f"sigma_xi eigenvalue {evals[0]:.3e} below the PSD tolerance"
        )
    kept = evals > 1e-12 * max(lam_max, np.finfo(float).tiny)
    rank = int(kept.sum())
    m, d, p = a.space.m, a.d, a.p
    if rank == 0:
        zero = BaselineEnsemble(
            space=a.space, values=np.zeros((m, d, p)), spec=spec
        )
        return a, zero

    mass = a.space.total_mass
    rng = np.random.default_rng(seed)
    # plus/minus pair per retained direction, unit aux weights 0.5 each
    directions = evecs[:, kept] * np.sqrt(rank * evals[kept] / mass)[None, :]
    aux_values = np.zeros((2 * rank, d * p))
    aux_values[0::2] = directions.T
    aux_values[1::2] = -directions.T
    mix = _ones_fixing_orthogonal(2 * rank, rng)
    aux_values = mix @ aux_values

    # product measure keeping the source marginal: w_{j,l} = mu_j / (2 rank)
    weights = np.repeat(a.space.weights, 2 * rank) / (2 * rank)
    space = MeasureSpace(weights=weights)
    lifted = SourceEnsemble(
        space=space, values=np.repeat(a.values, 2 * rank, axis=0)
    )
    xi = BaselineEnsemble(
        space=space,
        values=np.tile(aux_values, (m, 1)).reshape(m * 2 * rank, d, p),
        spec=spec,
    )
    return lifted, xi


def verify_extremal(
    a: SourceEnsemble,
    spec: BaselineSpec,
    rep: RepresentationOperator,
    estimators: list[HSOperator],
    seed: int,
    n_samples: int,
    tol: float = 1e-9,
    shrink_floor: float = 0.0,
) -> EnvelopeReport:
    """Check that no dominated sample beats the reference cost.

    Sample 0 is the reference ensemble itself (the identity contraction),
    which must attain the supremum exactly; the rest are random
    contractions. Costs use the covariance split, so the baseline enters
    only through its spec. When several estimators are given the report
    carries the worst one: membership requires every estimator's
    violation to stay within tol * (1 + its reference cost).
    """
    if not estimators:
        raise ValueError("at least one estimator is required")
    samples = [a] + sample_dominated(a, seed, n_samples, shrink_floor)
    sig_ref = second_moment(a)
    margins = [
        loewner_dominates(sig_ref, second_moment(s), tol=tol)[1] for s in samples[1:]
    ]
    lambda_min_margin = float(min(margins)) if margins else 0.0

    def eval_estimator(est: HSOperator) -> tuple[float, list[float]]:
        ref = cost_decomposed(a, spec, rep, est).total
        cap = _thread_cap()
        if cap is None:
            costs = [cost_decomposed(s, spec, rep, est).total for s in samples]
        else:
            with ThreadPoolExecutor(max_workers=cap) as pool:
                costs = list(
                    pool.map(lambda s: cost_decomposed(s, spec, rep, est).total, samples)
                )
        return ref, costs

    member = True
    worst = None
    for est in estimators:
        ref, costs = eval_estimator(est)
        violation = max(c - ref for c in costs)
        if violation > tol * (1.0 + ref):
            member = False
        if worst is None or violation > worst[0]:
            worst = (violation, ref, costs)
    violation, ref, costs = worst
    return EnvelopeReport(
        member=member,
        lambda_min_margin=lambda_min_margin,
        cost_reference=float(ref),
        cost_samples=[(i, float(c)) for i, c in enumerate(costs)],
        max_violation=float(violation),
    )


def closure_regression(
    a_limit: SourceEnsemble,
    approximants: list[SourceEnsemble],
    rep: RepresentationOperator,
    spec: BaselineSpec,
    est: HSOperator,
    tol: float = 1e-9,
) -> ClosureReport:
    """Cost gaps along a sequence converging to a limit ensemble.

    The baseline part of the cost is shared, so each gap is the absolute
    difference of source parts. Every gap must sit under the Lipschitz
    bound, and gaps must shrink (within tol slack) as the distance to
    the limit shrinks.
    """
    h_limit = cost_decomposed(a_limit, spec, rep, est).source_part
    distances, gaps, bounds = [], [], []
    for approx in approximants:
        distances.append(ensemble_distance(approx, a_limit))
        gaps.append(
            abs(cost_decomposed(approx, spec, rep, est).source_part - h_limit)
        )
        bounds.append(cost_difference_bound(approx, a_limit, rep, est))
    within = all(g <= b + tol for g, b in zip(gaps, bounds))
    order = sorted(range(len(distances)), key=lambda i: -distances[i])
    slack = tol * (1.0 + (max(gaps) if gaps else 0.0))
    monotone = all(
        gaps[order[i]] + slack >= gaps[order[i + 1]] for i in range(len(order) - 1)
    )
    return ClosureReport(
        distances=[float(v) for v in distances],
        gaps=[float(v) for v in gaps],
        bounds=[float(v) for v in bounds],
        gaps_within_bound=within,
        gaps_monotone=monotone,
        max_gap=float(max(gaps)) if gaps else 0.0,
    )
