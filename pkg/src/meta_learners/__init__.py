from .data_generator import DESIGNS, describe_dataset, generate_dataset, sample_training
from .estimation_procedure import run_procedure
from .experiment_config import ExperimentConfig, ExperimentProfiles, load_column_map
from .forest_config import ForestConfig, ForestParams
from .meta_learner import LEARNERS, LearnerParams, ObservedDataset
from .monte_carlo_experiment import MonteCarloExperiment, run_experiment
from .panel_store import PanelStore
from .performance_metrics import PredictionPanel, aggregate, jarque_bera, per_obs_metrics, summarize
from .random_forest import RandomForestLearner, fit_forest
from .results import ResultTable, emit_plot_data, read_results, write_results
from .sample_splitting import Procedure, ProcedureSpec
from .semisynthetic import load_semisynthetic

__all__ = [
    "DESIGNS", "describe_dataset", "generate_dataset", "sample_training",
    "run_procedure",
    "ExperimentConfig", "ExperimentProfiles", "load_column_map",
    "ForestConfig", "ForestParams",
    "LEARNERS", "LearnerParams", "ObservedDataset",
    "MonteCarloExperiment", "run_experiment",
    "PanelStore",
    "PredictionPanel", "aggregate", "jarque_bera", "per_obs_metrics", "summarize",
    "RandomForestLearner", "fit_forest",
    "ResultTable", "emit_plot_data", "read_results", "write_results",
    "Procedure", "ProcedureSpec",
    "load_semisynthetic",
]
