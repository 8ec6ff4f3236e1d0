# メタラーナー Monte Carlo シミュレーション CLI

import argparse
import logging
import os
import sys
from pathlib import Path
from dotenv import load_dotenv

LOG_FORMAT = "%(asctime)s %(levelname)-5s %(message)s (%(name)-12s)"

# config ディレクトリ作成
Path("config").mkdir(parents=True, exist_ok=True)

############################################################
class AppConfig:
    _env_path = Path("config/app-config.env")
    log_level = "INFO"
    workers = 1
    results_dir = "results"

    @classmethod
    def load(cls):
        # 環境変数が設定ファイルより優先される
        load_dotenv(dotenv_path=cls._env_path, override=False)
        cls.log_level = os.getenv("LOG_LEVEL", cls.log_level)
        cls.results_dir = os.getenv("RESULTS_DIR", cls.results_dir)
        try:
            cls.workers = max(1, int(os.getenv("METALEARNERS_WORKERS", cls.workers)))
        except ValueError:
            cls.workers = 1

# 設定ファイル読み込み
AppConfig.load()

# ログレベルを設定
try:
    logging.basicConfig(
        level=AppConfig.log_level,
        format=LOG_FORMAT,
        datefmt='%y-%m-%d %H:%M'
    )
except (ValueError, TypeError):
    print(f"ERROR: Log level '{AppConfig.log_level}' is invalid.")
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, datefmt='%y-%m-%d %H:%M')
    AppConfig.log_level = logging.INFO

############################################################

# ログオブジェクトを作成
logger = logging.getLogger(__name__)

from src.monte_carlo_service import MonteCarloService
from meta_learners import MonteCarloExperiment

MonteCarloService.workers = AppConfig.workers
MonteCarloService.results_dir = AppConfig.results_dir


############################################################
# Command line
############################################################
def _add_experiment_options(parser):
    parser.add_argument("--learners", help="comma-separated subset of S,SW,T,X,DR,R")
    parser.add_argument("--procedures", help="comma-separated subset of full,split,crossfit")
    parser.add_argument("--n-train", dest="n_train", help="comma-separated training sizes")
    parser.add_argument("--replications", help="comma-separated replication counts (paired with --n-train)")
    parser.add_argument("--n-validation", dest="n_validation", type=int)
    parser.add_argument("--trees", type=int)
    parser.add_argument("--min-leaf", dest="min_leaf", type=int)
    parser.add_argument("--mtry", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--propensity-clip", dest="propensity_clip", type=float)
    parser.add_argument("--workers", type=int, help="replication workers (default: METALEARNERS_WORKERS)")
    parser.add_argument("--out")
    parser.add_argument("--format", choices=["csv", "json"], default="csv")
    parser.add_argument("--profile", default="desk", help="desk or paper")
    parser.add_argument("--save-panels", dest="save_panels", metavar="DIR")
    parser.add_argument("--no-runtime", dest="no_runtime", action="store_true",
                        help="leave runtime_s blank for byte-identical reruns")
    parser.add_argument("--strict", action="store_true", help="exit nonzero when a cell aborted")


def _add_semisynth_options(parser, required=True):
    parser.add_argument("--data", required=required, help="ACIC 2018 csv file")
    parser.add_argument("--colmap", help="role -> header JSON (default config/semisynth-colmap.json)")
    parser.add_argument("--augment-p", dest="augment_p", type=int, default=90)


def build_parser():
    parser = argparse.ArgumentParser(prog="main.py",
                                     description="Monte Carlo comparison of CATE meta-learners")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="synthetic designs 1-6")
    simulate.add_argument("--design", type=int, default=6)
    simulate.add_argument("--fixed-correlation", dest="fixed_correlation", action="store_true",
                          help="draw one covariate correlation matrix for all replications")
    _add_experiment_options(simulate)

    semisynth = commands.add_parser("semisynth", help="semi-synthetic ACIC experiment")
    _add_semisynth_options(semisynth)
    _add_experiment_options(semisynth)

    metrics = commands.add_parser("metrics", help="recompute summaries from saved prediction panels")
    metrics.add_argument("--panels", required=True, help="panel directory or .npz file")
    metrics.add_argument("--out")
    metrics.add_argument("--format", choices=["csv", "json"], default="csv")

    plot = commands.add_parser("emit-plotdata", help="long-format summary-vs-n_train data")
    plot.add_argument("--results", required=True, help="result file written by simulate/semisynth")
    plot.add_argument("--out")

    describe = commands.add_parser("describe", help="descriptive statistics of the validation data")
    describe.add_argument("--design", type=int, default=6)
    describe.add_argument("--n-validation", dest="n_validation", type=int)
    describe.add_argument("--seed", type=int)
    describe.add_argument("--profile", default="desk")
    describe.add_argument("--out")
    _add_semisynth_options(describe, required=False)
    return parser


HANDLERS = {
    "simulate": MonteCarloService.simulate,
    "semisynth": MonteCarloService.semisynth,
    "metrics": MonteCarloService.metrics,
    "emit-plotdata": MonteCarloService.emit_plotdata,
    "describe": MonteCarloService.describe,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    MonteCarloExperiment.load_config()
    return HANDLERS[args.command](vars(args))


############################################################
if __name__ == "__main__":
    sys.exit(main())
