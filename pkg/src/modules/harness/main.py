import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

from models.oblivious_boosting import BoostConfig, ModelFormatError, ModelVersionError
from modules.data_io import ParseError
from modules.objectives import SmoothingConfig, SmoothingDistribution, StochasticRankConfig
from modules.ranking_core import ConfigurationError, ContractViolationError

from .harness import RankingHarness, UsageError

EXIT_USAGE = 1
EXIT_DATA = 2


class HarnessArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def neighbor_window(text: str):
    if text == "all":
        return "all"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must be a positive integer or 'all', got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"window must be a positive integer or 'all', got '{text}'")
    return value


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--train", required=True, type=Path)
    parser.add_argument("--valid", type=Path)
    parser.add_argument("--loss", default="yetirank",
                        help="query-rmse | lambdamart:<metric> | yetirank | yetiloss:<metric> | stochasticrank:<metric>")
    parser.add_argument("--metric", help="evaluation metric: ndcg@K, mrr, map, err, expdcg (default: the loss target)")
    parser.add_argument("--iterations", type=int, default=1000)
    parser.add_argument("--learning-rate", type=float, default=0.03)
    parser.add_argument("--depth", type=int, default=6)
    parser.add_argument("--l2-leaf-reg", type=float, default=3.0)
    parser.add_argument("--permutations", type=int, default=10)
    parser.add_argument("--decay-b", type=float, default=0.85)
    parser.add_argument("--smoothing", choices=[d.value for d in SmoothingDistribution], default="logistic")
    parser.add_argument("--neighbor-window", type=neighbor_window, default=1)
    parser.add_argument("--exact-distance", action="store_true",
                        help="weigh only pairs exactly --neighbor-window positions apart")
    parser.add_argument("--sigma", type=float, default=1.0)
    parser.add_argument("--mu", type=float, default=0.0)
    parser.add_argument("--model-shrink-rate", type=float, default=0.0)
    parser.add_argument("--diffusion-temperature", type=float, default=1e9)
    parser.add_argument("--min-data-in-leaf", type=int, default=10)
    parser.add_argument("--early-stopping-rounds", type=int)
    parser.add_argument("--no-best-model", action="store_true", help="keep every tree instead of truncating")
    parser.add_argument("--seed", type=int, default=int(os.getenv("RANKFORGE_SEED", "0")))


def config_from_args(args) -> BoostConfig:
    return BoostConfig(
        loss=args.loss,
        eval_metric=args.metric,
        iterations=args.iterations,
        learning_rate=args.learning_rate,
        depth=args.depth,
        l2_leaf_reg=args.l2_leaf_reg,
        min_data_in_leaf=args.min_data_in_leaf,
        decay_b=args.decay_b,
        neighbor_window=args.neighbor_window,
        exact_distance=args.exact_distance,
        smoothing=SmoothingConfig(args.smoothing, args.permutations, args.seed),
        stochastic=StochasticRankConfig(args.sigma, args.mu, args.model_shrink_rate, args.diffusion_temperature),
        early_stopping_rounds=args.early_stopping_rounds,
        use_best_model=not args.no_best_model,
        seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = HarnessArgumentParser(prog="rankforge", description="Gradient boosted learning-to-rank harness.")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=HarnessArgumentParser)

    train = commands.add_parser("train", help="train a model")
    _add_training_flags(train)
    train.add_argument("--model-out", required=True, type=Path)
    train.add_argument("--log-out", type=Path)

    predict = commands.add_parser("predict", help="score documents")
    predict.add_argument("model", type=Path)
    predict.add_argument("data", type=Path)
    predict.add_argument("--out", type=Path)

    evaluate = commands.add_parser("evaluate", help="mean metric values x100")
    evaluate.add_argument("model", type=Path)
    evaluate.add_argument("data", type=Path)
    evaluate.add_argument("--metric", action="append", dest="metrics", required=True)
    evaluate.add_argument("--per-query", action="store_true")

    compare = commands.add_parser("compare", help="paired one-tailed t-test of model A over model B")
    compare.add_argument("model_a", type=Path)
    compare.add_argument("model_b", type=Path)
    compare.add_argument("data", type=Path)
    compare.add_argument("--metric", required=True)

    gap = commands.add_parser("gap", help="train metric, test metric and their gap")
    gap.add_argument("model", type=Path)
    gap.add_argument("train_data", type=Path)
    gap.add_argument("test_data", type=Path)
    gap.add_argument("--metric", required=True)

    tune = commands.add_parser("tune", help="random search over learning rate, depth and regularization")
    _add_training_flags(tune)
    tune.add_argument("--budget", type=int, default=20)
    tune.add_argument("--n-jobs", type=int, default=1)
    tune.add_argument("--trials-out", type=Path)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        harness = RankingHarness(json_output=args.json)
        if args.command == "train":
            harness.cmd_train(args.train, args.valid, config_from_args(args), args.model_out, args.log_out)
        elif args.command == "predict":
            harness.cmd_predict(args.model, args.data, args.out)
        elif args.command == "evaluate":
            harness.cmd_evaluate(args.model, args.data, args.metrics, args.per_query)
        elif args.command == "compare":
            harness.cmd_compare(args.model_a, args.model_b, args.data, args.metric)
        elif args.command == "gap":
            harness.cmd_gap(args.model, args.train_data, args.test_data, args.metric)
        elif args.command == "tune":
            if args.valid is None:
                raise UsageError("tune needs --valid")
            harness.cmd_tune(args.train, args.valid, config_from_args(args), args.budget, args.seed,
                             args.n_jobs, args.trials_out)
    except (UsageError, ConfigurationError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ModelFormatError, ModelVersionError, ContractViolationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


def main(argv=None):
    load_dotenv()
    logging.basicConfig(
        level=os.getenv("RANKFORGE_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
