import logging
import time
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .data_generator import (SimulatedDataset, generate_dataset, get_design,
                             random_correlation_matrix, sample_training)
from .estimation_procedure import run_procedure
from .exceptions import InvalidInput
from .experiment_config import ExperimentConfig, ExperimentProfiles, load_column_map
from .forest_config import ForestConfig, ForestParams
from .meta_learner import NUISANCE_FREE, LearnerParams
from .panel_store import PanelStore, panel_key
from .performance_metrics import PredictionPanel, summarize
from .prediction_panel import PredictionPanelBuffer
from .random_forest import RandomForestLearner
from .results import ResultRow, ResultTable
from .sample_splitting import Procedure, ProcedureSpec
from .semisynthetic import load_semisynthetic
from .seeding import (AUGMENTATION_REPLICATION, VALIDATION_REPLICATION, derive_seed,
                      substreams)

logger = logging.getLogger(__name__)

SEMISYNTH_DESIGN_ID = 0
SEMISYNTH_LABEL = "semisynth"


class Meta(type):
    _forest_config = ForestConfig()
    _profiles = ExperimentProfiles()

    @property
    def forest_config(cls):
        return cls._forest_config

    @property
    def profiles(cls):
        return cls._profiles

    class TargetConfig(Enum):
        FOREST = 1
        PROFILES = 2
        ALL = 3

    def load_config(cls, target=TargetConfig.ALL):
        if target == cls.TargetConfig.FOREST:
            cls._forest_config.load_config()
        elif target == cls.TargetConfig.PROFILES:
            cls._profiles.load_config()
        else:
            cls._forest_config.load_config()
            cls._profiles.load_config()


class _Cell:
    """(learner, procedure) 1 組分のレプリケーション別スロット"""

    def __init__(self, learner: str, procedure: str, replications: int, m: int):
        self.learner = learner
        self.procedure = procedure
        self.buffer = PredictionPanelBuffer(replications, m)
        self.oob_fallbacks = np.zeros(replications, dtype=np.int64)
        self.seconds = np.zeros(replications, dtype=np.float64)
        self.fingerprints: Dict[int, str] = {}


class CellOutcome(NamedTuple):
    predictions: Optional[np.ndarray]
    oob_fallbacks: int = 0
    seconds: float = 0.0
    error: Optional[str] = None


class ReplicationOutcome(NamedTuple):
    """1 レプリケーション分の結果 (ワーカープロセスから親へ返す)"""
    replication: int
    fingerprint: Optional[str]
    redraws: int
    cells: Tuple[CellOutcome, ...]
    error: Optional[str] = None


##########################################
# MonteCarloExperiment class
##########################################
class MonteCarloExperiment(metaclass=Meta):
    """
    Monte Carlo comparison of meta-learners and estimation procedures.

    For every training size, each replication draws one training set that all learner /
    procedure cells share and fits every cell. Replications run on a joblib process pool and
    return their outcomes; the parent writes each one into its replication slot. Seeds are
    derived from (master seed, design, learner, procedure, replication) so results do not
    depend on the worker count.
    """

    def __init__(self, config: ExperimentConfig, base_learner: Any = None):
        self.config = config.validate()
        if base_learner is None:
            params = ForestParams(n_trees=config.n_trees, mtry=config.mtry,
                                  min_leaf=config.min_leaf)
            base_learner = RandomForestLearner(params, n_jobs=config.forest_jobs)
        self.learner_params = LearnerParams(base_learner=base_learner,
                                            propensity_clip=config.propensity_clip)
        self.design_label = SEMISYNTH_LABEL if config.semisynthetic else get_design(config.design_id).design_id
        self.design_code = SEMISYNTH_DESIGN_ID if config.semisynthetic else int(config.design_id)
        self.panel_store = PanelStore(config.panel_dir) if config.panel_dir else None
        self._source: Optional[SimulatedDataset] = None
        self._shared_corr: Optional[np.ndarray] = None

    ############################################################
    # データ
    ############################################################
    def _seed(self, replication: int, learner: Optional[str] = None,
              procedure: Optional[str] = None) -> int:
        return derive_seed(self.config.master_seed, self.design_code, learner, procedure, replication)

    def prepare_validation(self) -> SimulatedDataset:
        """Validation set drawn once per experiment and reused across training sizes."""
        config = self.config
        validation_seed = self._seed(VALIDATION_REPLICATION)
        if config.semisynthetic:
            colmap = load_column_map(config.colmap_path) if config.colmap_path else None
            self._source = load_semisynthetic(config.data_path, self._seed(AUGMENTATION_REPLICATION),
                                              colmap=colmap, augment_p=config.augment_p)
            _, validation = sample_training(self._source, 1, config.n_validation, validation_seed)
            return validation

        design = get_design(config.design_id)
        data_stream, corr_stream = substreams(validation_seed, 2)
        if not config.fresh_correlation:
            self._shared_corr = random_correlation_matrix(design.p, corr_stream)
        return generate_dataset(design, config.n_validation, data_stream, corr=self._shared_corr)

    def training_data(self, n_train: int, replication: int) -> SimulatedDataset:
        config = self.config
        seed = self._seed(replication)
        if config.semisynthetic:
            training, _ = sample_training(self._source, n_train, config.n_validation, seed,
                                          validation_stream=self._seed(VALIDATION_REPLICATION))
            return training
        return generate_dataset(config.design_id, n_train, seed, corr=self._shared_corr)

    ############################################################
    # レプリケーション
    ############################################################
    def _fit_predict(self, learner: str, procedure: str, training: SimulatedDataset,
                     validation: SimulatedDataset, replication: int):
        # S / SW / T ignore the procedure, so they share the full-sample seed
        seed_procedure = Procedure.FULL_SAMPLE.value if learner in NUISANCE_FREE else procedure
        model = run_procedure(learner, training.data, ProcedureSpec(procedure),
                              self.learner_params,
                              stream=self._seed(replication, learner, seed_procedure))
        return model.predict(validation.X), model.oob_fallbacks

    def run_replication(self, n_train: int, replication: int, cells: Sequence[Tuple[str, str]],
                        validation: SimulatedDataset) -> ReplicationOutcome:
        """
        Fit every (learner, procedure) cell on one training draw.

        Failures are returned, not raised, so one bad replication never stops the others.
        S / SW / T are fitted once; their other procedures reuse the predictions with a
        runtime of 0.
        """
        try:
            training = self.training_data(n_train, replication)
        except Exception as e:
            return ReplicationOutcome(replication, None, 0, (), error=f"{type(e).__name__}: {e}")

        nuisance_free: Dict[str, Tuple[np.ndarray, int]] = {}
        outcomes = []
        for learner, procedure in cells:
            if learner in nuisance_free:
                predictions, fallbacks = nuisance_free[learner]
                outcomes.append(CellOutcome(predictions, fallbacks, 0.0))
                continue
            started = time.perf_counter()
            try:
                predictions, fallbacks = self._fit_predict(learner, procedure, training,
                                                           validation, replication)
            except Exception as e:
                outcomes.append(CellOutcome(None, error=f"{type(e).__name__}: {e}"))
                continue
            if learner in NUISANCE_FREE:
                nuisance_free[learner] = (predictions, fallbacks)
            outcomes.append(CellOutcome(predictions, fallbacks, time.perf_counter() - started))
        return ReplicationOutcome(replication, training.data.fingerprint(), training.redraws,
                                  tuple(outcomes))

    def _record(self, outcome: ReplicationOutcome, n_train: int, cells: List[_Cell],
                redraws: np.ndarray) -> None:
        r = outcome.replication
        if outcome.error is not None:
            logger.warning(f"n_train={n_train} replication {r}: data generation failed: {outcome.error}")
            for cell in cells:
                cell.buffer.fail(r, outcome.error)
            return
        redraws[r] = outcome.redraws
        for cell, result in zip(cells, outcome.cells):
            cell.fingerprints[r] = outcome.fingerprint
            if result.error is not None:
                logger.warning(f"{cell.learner}-{cell.procedure} n_train={n_train} "
                               f"replication {r} failed: {result.error}")
                cell.buffer.fail(r, result.error)
                continue
            cell.buffer.put(r, result.predictions)
            cell.oob_fallbacks[r] = result.oob_fallbacks
            cell.seconds[r] = result.seconds

    ############################################################
    # セル集計
    ############################################################
    def _summarize_cell(self, cell: _Cell, n_train: int, replications: int,
                        validation: SimulatedDataset, redraws: np.ndarray) -> ResultRow:
        buffer = cell.buffer
        row = ResultRow(design=self.design_label, learner=cell.learner, procedure=cell.procedure,
                        n_train=n_train, replications=buffer.size(),
                        redraws=int(redraws.sum()),
                        oob_fallbacks=int(cell.oob_fallbacks.sum()),
                        failed_reps=buffer.failed_replications(),
                        fingerprints=dict(cell.fingerprints))
        if self.config.record_runtime:
            row.runtime_s = float(cell.seconds.sum())

        if buffer.size() < 2:
            causes = [buffer.failures[r] for r in row.failed_reps]
            row.aborted = (f"{buffer.size()} of {replications} replications succeeded"
                           + (f" ({causes[0]})" if causes else ""))
            logger.error(f"Cell design={self.design_label} {cell.learner}-{cell.procedure} "
                         f"n_train={n_train} aborted: {row.aborted}")
            return row

        panel = PredictionPanel(validation.tau_true, buffer.completed())
        row.summary = summarize(panel)
        if self.panel_store is not None:
            self.panel_store.save_panel(panel, panel_key(self.design_label, cell.learner,
                                                         cell.procedure, n_train),
                                        design=self.design_label, learner=cell.learner,
                                        procedure=cell.procedure, n_train=n_train,
                                        failed_reps=row.failed_reps)
        if row.oob_fallbacks:
            logger.warning(f"{cell.learner}-{cell.procedure} n_train={n_train}: "
                           f"{row.oob_fallbacks} out-of-bag fallbacks")
        logger.info(f"Cell design={self.design_label} {cell.learner}-{cell.procedure} "
                    f"n_train={n_train} done: R={buffer.size()} rmse={row.summary.rmse_mean:.4f} "
                    f"({cell.seconds.sum():.1f}s)")
        return row

    def _aborted_rows(self, n_train: int, replications: int, cause: str) -> List[ResultRow]:
        return [ResultRow(design=self.design_label, learner=learner, procedure=procedure,
                          n_train=n_train, replications=0, aborted=cause,
                          failed_reps=list(range(replications)))
                for learner in self.config.learners for procedure in self.config.procedures]

    def run(self) -> ResultTable:
        config = self.config
        table = ResultTable()
        try:
            validation = self.prepare_validation()
        except Exception as e:
            logger.error(f"Validation data for design {self.design_label} failed: {e}")
            for n_train, replications in config.schedule:
                for row in self._aborted_rows(n_train, replications, f"{type(e).__name__}: {e}"):
                    table.add(row)
            return table

        for n_train, replications in config.schedule:
            cells = [_Cell(learner, procedure, replications, validation.n)
                     for learner in config.learners for procedure in config.procedures]
            redraws = np.zeros(replications, dtype=np.int64)
            logger.info(f"Design {self.design_label}, n_train={n_train}: {replications} replications, "
                        f"{len(cells)} cells, {config.n_jobs} workers")
            cell_keys = [(cell.learner, cell.procedure) for cell in cells]
            outcomes = Parallel(n_jobs=config.n_jobs, prefer="processes")(
                delayed(self.run_replication)(n_train, r, cell_keys, validation)
                for r in range(replications)
            )
            for outcome in outcomes:
                self._record(outcome, n_train, cells, redraws)
            for cell in cells:
                table.add(self._summarize_cell(cell, n_train, replications, validation, redraws))
        return table


def run_experiment(config: ExperimentConfig, base_learner: Any = None) -> ResultTable:
    if not isinstance(config, ExperimentConfig):
        raise InvalidInput(f"Expected an ExperimentConfig, got {type(config).__name__}")
    return MonteCarloExperiment(config, base_learner=base_learner).run()
