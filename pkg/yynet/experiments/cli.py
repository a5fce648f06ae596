import argparse
import os
import sys

import structlog

from yynet.data.batches import EpochBatchLoader
from yynet.data.cifar10 import FULL_COUNTS, load_cifar10
from yynet.data.normalization import cached_stats, channel_statistics
from yynet.experiments.ablation import run_ablation
from yynet.experiments.config_file import load_configs, save_configs
from yynet.learn.checkpoint import TrainingCheckpoint
from yynet.learn.evaluation import evaluate
from yynet.learn.trainer import YYNetLearner, make_loaders, run_training
from yynet.model.fusion import CONCAT, GATE, FusionFormula
from yynet.model.parameter_count import ParameterTable, param_count
from yynet.model.reconcile import reconcile_internals
from yynet.model.yynet import YYNet
from yynet.util.errors import ConfigError, DataError, NonFiniteError, TrainingDivergedError, YYNetError
from yynet.util.log_util import configure_logging, level_from_flags
from yynet.util.plot import plot_training_curves

log = structlog.get_logger()

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

DATA_DIR_VARIABLE = "YYNET_CIFAR10_DIR"
STATS_FILE = "normalization_stats.txt"
CONFIG_FILE = "config.json"
CURVES_FILE = "curves.png"


class UsageError(ConfigError):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def add_common_flags(parser):
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="log debug events")
    verbosity.add_argument("--quiet", action="store_true", help="log warnings and errors only")


def add_data_flags(parser):
    parser.add_argument(
        "--data", default=os.environ.get(DATA_DIR_VARIABLE), help=f"CIFAR-10 binary directory (default ${DATA_DIR_VARIABLE})"
    )
    parser.add_argument(
        "--any-size", action="store_true", help="accept data directories without the full 50,000/10,000 records"
    )


def make_parser():
    parser = ArgumentParser(prog="yynet", description="Yin-Yang convolutional networks on CIFAR-10")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    train = commands.add_parser("train", help="train a model and write metrics and checkpoints")
    train.add_argument("--config", default="cifar10-16", help="JSON config file or preset name")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--seed", type=int)
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--resume", help="checkpoint to continue from")
    train.add_argument("--plot", action="store_true", help=f"write {CURVES_FILE}")
    train.add_argument("--no-progress", action="store_true", help="hide progress bars")
    add_data_flags(train)
    add_common_flags(train)

    evaluate_parser = commands.add_parser("eval", help="print the test accuracy of a checkpoint")
    evaluate_parser.add_argument("--checkpoint", required=True)
    weights = evaluate_parser.add_mutually_exclusive_group()
    weights.add_argument("--ema", dest="use_ema", action="store_true", default=None, help="use averaged weights")
    weights.add_argument("--live", dest="use_ema", action="store_false", help="use live weights")
    evaluate_parser.add_argument("--shuffle-labels", action="store_true", help="sanity check at chance level")
    evaluate_parser.add_argument("--batch-size", type=int, default=256)
    add_data_flags(evaluate_parser)
    add_common_flags(evaluate_parser)

    inspect = commands.add_parser("inspect", help="print the parameter table of a configuration or checkpoint")
    source = inspect.add_mutually_exclusive_group()
    source.add_argument("--config", help="JSON config file or preset name")
    source.add_argument("--checkpoint")
    inspect.add_argument("--reconcile", action="store_true", help="search MBConv internals against published counts")
    inspect.add_argument("--depth", type=int, default=0, help="group rows by name prefix of this depth (0: no grouping)")
    add_common_flags(inspect)

    ablate = commands.add_parser("ablate", help="compare fusion formulas over several runs")
    ablate.add_argument("--config", default="cifar10-16", help="JSON config file or preset name")
    ablate.add_argument("--out", required=True)
    ablate.add_argument("--runs", type=int, default=3)
    ablate.add_argument("--epochs", type=int)
    ablate.add_argument("--seed", type=int)
    ablate.add_argument("--batch-size", type=int)
    ablate.add_argument(
        "--formulas", nargs="+", type=FusionFormula.parse, default=list(FusionFormula), help="formulas to compare"
    )
    ablate.add_argument(
        "--concat-baseline", action="store_true", help="also train on concatenated embeddings (twice the channels)"
    )
    ablate.add_argument("--no-progress", action="store_true")
    add_data_flags(ablate)
    add_common_flags(ablate)
    return parser


def train_overrides(args):
    overrides = {}
    for name in ("seed", "epochs", "batch_size"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return overrides


def read_data(args):
    if not args.data:
        raise UsageError(f"--data is required when ${DATA_DIR_VARIABLE} is not set")
    return load_cifar10(args.data, expected_counts=None if args.any_size else FULL_COUNTS)


def cmd_train(args):
    train_split, test_split = read_data(args)
    os.makedirs(args.out, exist_ok=True)
    progress = {"show_progress": not args.no_progress}

    if args.resume:
        checkpoint = TrainingCheckpoint.load(args.resume)
        train_config = checkpoint.train_config
        train_split = train_split.subset(train_config.train_subset, seed=train_config.seed)
        test_split = test_split.subset(train_config.test_subset, seed=train_config.seed)
        loaders = make_loaders(train_split, test_split, train_config, checkpoint.stats)
        learner = YYNetLearner.from_checkpoint(checkpoint, *loaders, out_dir=args.out, **progress)
        learner.learn()
    else:
        model_config, train_config = load_configs(args.config)
        train_config = train_config.replace(**train_overrides(args)).validate()
        save_configs(os.path.join(args.out, CONFIG_FILE), model_config, train_config)
        subset = train_split.subset(train_config.train_subset, seed=train_config.seed)
        stats = cached_stats(subset, os.path.join(args.out, STATS_FILE), refresh=True)
        learner = run_training(
            model_config, train_config, train_split, test_split, out_dir=args.out, stats=stats, **progress
        )

    accuracy = learner.last_row.test_accuracy
    print(f"final test accuracy: {accuracy:.4f}")
    if args.plot:
        plot_training_curves(learner.metrics.rows, os.path.join(args.out, CURVES_FILE))
    return EXIT_OK


def cmd_eval(args):
    checkpoint = TrainingCheckpoint.load(args.checkpoint)
    model = checkpoint.restore_model()
    state = checkpoint.restore_optimizer_state(model)
    train_config = checkpoint.train_config
    use_ema = train_config.ema_eval if args.use_ema is None else args.use_ema
    if use_ema and not checkpoint.ema_active:
        log.warning("averaged weights not active yet in this checkpoint; evaluating live weights", step=checkpoint.step)

    train_split, test_split = read_data(args)
    test_split = test_split.subset(train_config.test_subset, seed=train_config.seed)
    stats = checkpoint.stats
    if stats is None:
        stats = channel_statistics(train_split.subset(train_config.train_subset, seed=train_config.seed))
    if args.shuffle_labels:
        test_split = test_split.shuffled_labels(seed=train_config.seed)

    loader = EpochBatchLoader(test_split, args.batch_size, shuffle=False, stats=stats)
    accuracy, used_shadow = evaluate(model, state, loader, use_ema=use_ema)
    print(f"test accuracy: {accuracy:.4f} ({'averaged' if used_shadow else 'live'} weights)")
    return EXIT_OK


def cmd_inspect(args):
    if args.checkpoint:
        model = TrainingCheckpoint.load(args.checkpoint).restore_model()
    else:
        model_config, _ = load_configs(args.config or "cifar10-16")
        model = YYNet(model_config)

    table = ParameterTable.of(model)
    if args.depth > 0:
        for prefix, count in table.by_prefix(args.depth).items():
            print(f"{prefix:<28}{count:>12,}")
        print(f"{'total':<28}{table.total:>12,}")
    else:
        print(table.format())
    if model.config.fusion_mode == GATE:
        concat_total = param_count(YYNet(model.config.replace(fusion_mode=CONCAT)))
        print(f"{'concatenation baseline':<28}{concat_total:>12,} ({concat_total - table.total:+,})")
    print()
    print(f"{'layer':<28}{'channels':>9}{'size':>6}")
    for name, channels, size in model.stride_trace():
        print(f"{name:<28}{channels:>9}{size:>6}")

    if args.reconcile:
        report = reconcile_internals()
        print()
        print(report.format())
    return EXIT_OK


def cmd_ablate(args):
    train_split, test_split = read_data(args)
    model_config, train_config = load_configs(args.config)
    if args.seed is not None:
        train_config = train_config.replace(seed=args.seed)
    report = run_ablation(
        model_config,
        train_config,
        train_split,
        test_split,
        runs=args.runs,
        epochs=args.epochs,
        batch_size=args.batch_size,
        out_dir=args.out,
        formulas=tuple(args.formulas),
        concat_baseline=args.concat_baseline,
        show_progress=not args.no_progress,
    )
    print(report.format())
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "inspect": cmd_inspect, "ablate": cmd_ablate}


def main(argv=None):
    """Runs one command and returns its exit code: 0 success, 1 usage or configuration, 2 data, 3 divergence."""
    try:
        args = make_parser().parse_args(argv)
        configure_logging(level_from_flags(args.verbose, args.quiet))
        return COMMANDS[args.command](args)
    except (TrainingDivergedError, NonFiniteError) as e:
        return report_failure(e, EXIT_DIVERGED)
    except DataError as e:
        return report_failure(e, EXIT_DATA)
    except YYNetError as e:
        return report_failure(e, EXIT_USAGE)


def report_failure(error, code):
    log.error("command failed", error=type(error).__name__, exit_code=code)
    print(f"yynet: error: {error}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
