import logging
from typing import Optional

from joblib import Parallel, delayed

from .exceptions import FoldTooSmall, InsufficientData
from .meta_learner import (LEARNERS, NUISANCE_FREE, CateModel, LearnerParams, ObservedDataset,
                           parse_learner_id)
from .sample_splitting import (Procedure, ProcedureContext, ProcedureSpec, assign_folds)
from .seeding import Stream, substreams

logger = logging.getLogger(__name__)


def _fit_rotation(learner_id, data, params, folds, role_map, stream, procedure) -> CateModel:
    ctx = ProcedureContext.from_folds(folds, role_map, stream, procedure)
    try:
        return LEARNERS[learner_id](data, params, ctx)
    except InsufficientData as e:
        fold = ctx.fold_of_component(e.role) if e.role else None
        raise FoldTooSmall(fold, e.role or "unknown", e) from e


def run_procedure(learner_id: str, data: ObservedDataset, spec: ProcedureSpec,
                  params: Optional[LearnerParams] = None, stream: Stream = 0,
                  n_jobs: int = 1) -> CateModel:
    """
    Fit one meta-learner under full-sample estimation, double sample-splitting or double
    cross-fitting.

    S, SW and T have no extra nuisance functions and always use the full sample.

    Args:
        learner_id: S, SW, T, X, DR or R
        data: training data
        spec: procedure kind and fold count
        params: base learner and propensity handling
        stream: seed stream of this fit
        n_jobs: joblib workers for the cross-fitting rotations

    Returns:
        CateModel
    """
    learner_id = parse_learner_id(learner_id)
    params = params or LearnerParams()
    fold_stream, fit_stream = substreams(stream, 2)
    kind = spec.kind

    if kind is not Procedure.FULL_SAMPLE and learner_id in NUISANCE_FREE:
        logger.info(f"{learner_id}-learner has no separate nuisance functions, "
                    f"'{kind.value}' falls back to full-sample estimation")
        kind = Procedure.FULL_SAMPLE

    if kind is Procedure.FULL_SAMPLE:
        return LEARNERS[learner_id](data, params, ProcedureContext.full_sample(data.n, fit_stream))

    folds = assign_folds(data.n, spec.K, fold_stream)
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(f"{learner_id}-learner {kind.value}: fold sizes {folds.sizes()}")

    if kind is Procedure.SAMPLE_SPLIT:
        return _fit_rotation(learner_id, data, params, folds, spec.rotations()[0], fit_stream,
                             kind.value)

    rotation_maps = spec.rotations()
    rotation_streams = substreams(fit_stream, len(rotation_maps))
    rotations = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fit_rotation)(learner_id, data, params, folds, role_map, rotation_stream, kind.value)
        for role_map, rotation_stream in zip(rotation_maps, rotation_streams)
    )
    return CateModel(learner_id, kind.value, data.p,
                     rotations=tuple(rotations),
                     oob_fallbacks=sum(model.oob_fallbacks for model in rotations))
