import json
import logging
import os
from pathlib import Path

from meta_learners import (ExperimentConfig, MonteCarloExperiment, PanelStore, ResultTable,
                           describe_dataset, emit_plot_data, read_results, summarize,
                           write_results)
from meta_learners.exceptions import MetaLearnerError
from meta_learners.results import ResultRow

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ABORTED = 2


class MonteCarloService:
    """main.py のサブコマンドごとのハンドラ"""

    workers = 1
    results_dir = "results"

    ############################################################
    # 設定の組み立て
    ############################################################
    @staticmethod
    def _split(value):
        if value is None:
            return None
        if isinstance(value, str):
            value = value.split(",")
        return tuple(v.strip() for v in value if str(v).strip())

    @classmethod
    def _ints(cls, value):
        items = cls._split(value)
        return None if items is None else tuple(int(v) for v in items)

    @classmethod
    def build_config(cls, options: dict, semisynthetic: bool = False) -> ExperimentConfig:
        """
        CLI options -> ExperimentConfig

        Precedence is CLI flag > profile > forest config file > built-in default.
        """
        forest_config = MonteCarloExperiment.forest_config
        profile = options.get("profile") or "desk"
        if semisynthetic and not profile.startswith("semisynth-"):
            profile = f"semisynth-{profile}"

        config = ExperimentConfig.from_profile(
            profile, MonteCarloExperiment.profiles,
            mtry=forest_config.mtry,
            min_leaf=forest_config.min_leaf,
            forest_jobs=forest_config.n_jobs,
            n_jobs=cls.workers,
        )
        overrides = {
            "design_id": None if semisynthetic else options.get("design"),
            "data_path": options.get("data") if semisynthetic else None,
            "colmap_path": options.get("colmap"),
            "augment_p": options.get("augment_p"),
            "learners": cls._split(options.get("learners")),
            "procedures": cls._split(options.get("procedures")),
            "n_train": cls._ints(options.get("n_train")),
            "replications": cls._ints(options.get("replications")),
            "n_validation": options.get("n_validation"),
            "n_trees": options.get("trees"),
            "min_leaf": options.get("min_leaf"),
            "mtry": options.get("mtry"),
            "master_seed": options.get("seed"),
            "propensity_clip": options.get("propensity_clip"),
            "panel_dir": options.get("save_panels"),
            "n_jobs": options.get("workers"),
        }
        config = config.with_overrides(**overrides)
        if options.get("no_runtime"):
            config = config.with_overrides(record_runtime=False)
        if options.get("fixed_correlation"):
            config = config.with_overrides(fresh_correlation=False)
        return config.validate()

    @classmethod
    def _output_path(cls, options: dict, stem: str) -> str:
        fmt = options.get("format") or "csv"
        return options.get("out") or os.path.join(cls.results_dir, f"{stem}.{fmt}")

    ############################################################
    # サブコマンド
    ############################################################
    @classmethod
    def _run(cls, options: dict, semisynthetic: bool) -> int:
        try:
            config = cls.build_config(options, semisynthetic=semisynthetic)
            experiment = MonteCarloExperiment(config)
        except (MetaLearnerError, ValueError) as e:
            logger.error(f"Invalid experiment configuration: {e}")
            return EXIT_ERROR

        label = "semisynth" if semisynthetic else f"design{config.design_id}"
        path = cls._output_path(options, label)
        logger.info(f"Experiment {label}: learners={','.join(config.learners)} "
                    f"procedures={','.join(config.procedures)} schedule={config.schedule} "
                    f"n_validation={config.n_validation} trees={config.n_trees} seed={config.master_seed}")

        table = experiment.run()
        try:
            write_results(table, path, options.get("format") or "csv")
        except MetaLearnerError as e:
            logger.error(str(e))
            return EXIT_ERROR

        aborted = table.aborted()
        if aborted:
            for row in aborted:
                logger.error(f"Aborted cell {row.key}: {row.aborted}")
            if options.get("strict"):
                return EXIT_ABORTED
        return EXIT_OK

    @classmethod
    def simulate(cls, options: dict) -> int:
        return cls._run(options, semisynthetic=False)

    @classmethod
    def semisynth(cls, options: dict) -> int:
        if not options.get("data"):
            logger.error("--data is required for the semi-synthetic experiment")
            return EXIT_ERROR
        return cls._run(options, semisynthetic=True)

    @classmethod
    def metrics(cls, options: dict) -> int:
        """保存済みの予測パネルから指標を再計算する"""
        source = options.get("panels")
        if not source or not Path(source).exists():
            logger.error(f"Prediction panel path not found: {source}")
            return EXIT_ERROR

        store = PanelStore(source if Path(source).is_dir() else str(Path(source).parent))
        table = ResultTable()
        for key, panel in PanelStore.load_panels(source):
            meta = store.load_metadata(key)
            try:
                summary = summarize(panel)
            except MetaLearnerError as e:
                logger.warning(f"Panel {key} skipped: {e}")
                continue
            table.add(ResultRow(design=meta.get("design", key), learner=meta.get("learner", ""),
                                procedure=meta.get("procedure", ""),
                                n_train=int(meta.get("n_train", 0)), replications=panel.R,
                                summary=summary, failed_reps=list(meta.get("failed_reps", []))))

        path = cls._output_path(options, "metrics")
        try:
            write_results(table, path, options.get("format") or "csv")
        except MetaLearnerError as e:
            logger.error(str(e))
            return EXIT_ERROR
        return EXIT_OK

    @classmethod
    def emit_plotdata(cls, options: dict) -> int:
        source = options.get("results")
        if not source or not Path(source).exists():
            logger.error(f"Result file not found: {source}")
            return EXIT_ERROR
        out = options.get("out") or os.path.join(cls.results_dir, f"{Path(source).stem}-plot.csv")
        try:
            emit_plot_data(read_results(source), out)
        except MetaLearnerError as e:
            logger.error(str(e))
            return EXIT_ERROR
        return EXIT_OK

    @classmethod
    def describe(cls, options: dict) -> int:
        """検証データ (シミュレーション / 準合成) の記述統計を JSON で出力"""
        semisynthetic = bool(options.get("data"))
        try:
            config = cls.build_config(options, semisynthetic=semisynthetic)
            dataset = MonteCarloExperiment(config).prepare_validation()
        except (MetaLearnerError, ValueError, OSError) as e:
            logger.error(f"Describe failed: {e}")
            return EXIT_ERROR
        label = "semisynth" if semisynthetic else f"design{config.design_id}"

        summary = {"data": label, **describe_dataset(dataset)}
        text = json.dumps(summary, ensure_ascii=False, indent=2)
        if options.get("out"):
            os.makedirs(os.path.dirname(os.path.abspath(options["out"])), exist_ok=True)
            with open(options["out"], "w", encoding="utf-8") as f:
                f.write(text + "\n")
            logger.info(f"Descriptive summary written to {options['out']}")
        else:
            print(text)
        return EXIT_OK
