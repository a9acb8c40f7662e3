"""
Command line entry point: one subcommand per pipeline step.
"""

import argparse
from contextlib import nullcontext
import logging
import sys
from typing import Any, Callable, Dict, Optional, Sequence

from threadpoolctl import threadpool_limits

from deepform.commands.base_command import Command
from deepform.commands.pipeline.bench_command import BenchCommand
from deepform.commands.pipeline.embed_command import EmbedCommand
from deepform.commands.pipeline.evaluate_command import EvaluateCommand
from deepform.commands.pipeline.form_command import FormationMethod, FormCommand
from deepform.commands.pipeline.gradcheck_command import DESK_OVERRIDES, GradCheckCommand
from deepform.commands.pipeline.ingest_command import IngestCommand
from deepform.commands.pipeline.recommend_command import DEFAULT_TOP_N, RecommendCommand
from deepform.commands.pipeline.sweep_command import DEFAULT_SWEEP_K, SweepCommand
from deepform.commands.pipeline.synth_command import SynthCommand
from deepform.commands.pipeline.train_command import TrainCommand
from deepform.errors import UsageError, exit_code_for
from deepform.evaluation.pipeline import DEFAULT_K_LIST, DEFAULT_NEGATIVES, EvaluationMode
from deepform.groupform.formation_engine import DEFAULT_BENCH_K, DEFAULT_K
from deepform.grouprec.aggregation import AggregationStrategy
from deepform.grouprec.preferences import PreferenceSource
from deepform.ingest.ingest_engine import DEFAULT_MIN_INTERACTIONS, DEFAULT_SPLIT_RATIO, DELIMITERS
from deepform.models.state.config import load_config, parse_overrides, resolve_seed, with_seed
from deepform.models.state.run_context import RunContext
from deepform.utils.log import setup_logging

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def int_list(text: str) -> list[int]:
    """Parse ``5,10,20`` into integers."""
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _strategy(text: str) -> AggregationStrategy:
    try:
        return AggregationStrategy.from_name(text)
    except UsageError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (default: DEEPFORM_SEED or 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepform", description="Deep group formation and group recommendation")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS threads; 1 gives bit-reproducible runs")
    parser.add_argument("--log-file", default=None, help="also write the full debug log here")
    parser.add_argument("--log-level", default="INFO", choices=LOG_LEVELS, help="console log level")
    parser.add_argument("--progress", action="store_true", help="show a training progress bar")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an interaction log into a dataset cache")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-interactions", type=int, default=DEFAULT_MIN_INTERACTIONS)
    p.add_argument("--split-ratio", type=float, default=DEFAULT_SPLIT_RATIO)
    p.add_argument("--delimiter", choices=sorted(DELIMITERS), default=None)
    p.add_argument("--max-users", type=int, default=None, help="keep only the most active users")
    _add_seed(p)

    p = sub.add_parser("train", help="train the model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--log", dest="train_log", default=None, help="training log CSV path")
    _add_config_args(p)
    _add_seed(p)

    p = sub.add_parser("embed", help="compute final user embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("form", help="partition users into K groups")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--dataset", default=None, help="user ids, and the ratings for baseline methods")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--method", choices=[m.value for m in FormationMethod], default=FormationMethod.DEEPFORM.value)
    p.add_argument("--max-group-size", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("bench", help="time group formation over a list of K")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k-list", type=int_list, default=list(DEFAULT_BENCH_K))
    p.add_argument("--out", required=True)
    p.add_argument("--plot", default=None, help="write a timing figure here")
    _add_seed(p)

    p = sub.add_parser("recommend", help="ranked item lists per group")
    p.add_argument("--groups", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--strategy", type=_strategy, default=AggregationStrategy.AVG)
    p.add_argument("--preferences", choices=[s.value for s in PreferenceSource],
                   default=PreferenceSource.USER_KNN.value)
    p.add_argument("--top-n", type=int, default=DEFAULT_TOP_N)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="NDCG@k and HR@k of a grouping")
    p.add_argument("--groups", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--strategy", type=_strategy, default=AggregationStrategy.AVG)
    p.add_argument("--k-list", type=int_list, default=list(DEFAULT_K_LIST))
    p.add_argument("--mode", choices=[m.value for m in EvaluationMode], default=EvaluationMode.FULL.value)
    p.add_argument("--negatives", type=int, default=DEFAULT_NEGATIVES)
    p.add_argument("--preferences", choices=[s.value for s in PreferenceSource],
                   default=PreferenceSource.USER_KNN.value)
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("gradcheck", help="finite-difference gradient report")
    p.add_argument("--users", type=int, default=12)
    p.add_argument("--items", type=int, default=10)
    p.add_argument("--coords", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out", default=None)
    _add_config_args(p)
    _add_seed(p)

    p = sub.add_parser("synth", help="generate a planted-block dataset")
    p.add_argument("--users", type=int, default=300)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--blocks", type=int, default=None, help="number of flat blocks")
    group.add_argument("--branching", type=int_list, default=None, help="children per level, e.g. 3,2")
    p.add_argument("--items", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--split-ratio", type=float, default=DEFAULT_SPLIT_RATIO)
    p.add_argument("--out", required=True, help="output directory")
    _add_seed(p)

    p = sub.add_parser("sweep", help="accuracy against the number of groups")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--k-values", type=int_list, default=list(DEFAULT_SWEEP_K))
    p.add_argument("--strategy", type=_strategy, default=AggregationStrategy.AVG)
    p.add_argument("--k-list", type=int_list, default=list(DEFAULT_K_LIST))
    p.add_argument("--preferences", choices=[s.value for s in PreferenceSource],
                   default=PreferenceSource.USER_KNN.value)
    p.add_argument("--labels", default=None, help="ground-truth labels CSV")
    p.add_argument("--label-level", type=int, default=1)
    p.add_argument("--plot", default=None)
    p.add_argument("--out", required=True)
    _add_seed(p)
    return parser


def _train_config(args: argparse.Namespace, extra: Optional[Dict[str, Any]] = None):
    overrides = dict(extra or {})
    overrides.update(parse_overrides(args.overrides))
    config = load_config(args.config, overrides)
    return with_seed(config, resolve_seed(args.seed, config))


def _build_ingest(context: RunContext, args: argparse.Namespace) -> Command:
    return IngestCommand(context, args.input, args.out, args.min_interactions, args.split_ratio,
                         resolve_seed(args.seed), args.delimiter, args.max_users)


def _build_train(context: RunContext, args: argparse.Namespace) -> Command:
    return TrainCommand(context, args.dataset, _train_config(args), args.out_checkpoint,
                        args.resume, args.train_log)


def _build_embed(context: RunContext, args: argparse.Namespace) -> Command:
    return EmbedCommand(context, args.checkpoint, args.dataset, args.out)


def _build_form(context: RunContext, args: argparse.Namespace) -> Command:
    return FormCommand(context, args.out, args.k, resolve_seed(args.seed), FormationMethod(args.method),
                       args.embeddings, args.dataset, args.max_group_size)


def _build_bench(context: RunContext, args: argparse.Namespace) -> Command:
    return BenchCommand(context, args.embeddings, args.out, args.k_list, resolve_seed(args.seed), args.plot)


def _build_recommend(context: RunContext, args: argparse.Namespace) -> Command:
    return RecommendCommand(context, args.groups, args.dataset, args.out, args.strategy, args.top_n,
                            PreferenceSource(args.preferences))


def _build_evaluate(context: RunContext, args: argparse.Namespace) -> Command:
    return EvaluateCommand(context, args.groups, args.dataset, args.out, args.strategy, args.k_list,
                           EvaluationMode(args.mode), args.negatives, PreferenceSource(args.preferences),
                           resolve_seed(args.seed))


def _build_gradcheck(context: RunContext, args: argparse.Namespace) -> Command:
    config = _train_config(args, DESK_OVERRIDES)
    return GradCheckCommand(context, config, args.out, args.users, args.items,
                            n_coords=args.coords, tolerance=args.tolerance)


def _build_synth(context: RunContext, args: argparse.Namespace) -> Command:
    branching = args.branching or [args.blocks if args.blocks is not None else 3]
    return SynthCommand(context, args.out, args.users, branching, args.items, args.noise,
                        resolve_seed(args.seed), args.split_ratio)


def _build_sweep(context: RunContext, args: argparse.Namespace) -> Command:
    return SweepCommand(context, args.embeddings, args.dataset, args.out, args.k_values, args.strategy,
                        args.k_list, PreferenceSource(args.preferences), resolve_seed(args.seed),
                        args.labels, args.label_level, args.plot)


BUILDERS: Dict[str, Callable[[RunContext, argparse.Namespace], Command]] = {
    "ingest": _build_ingest,
    "train": _build_train,
    "embed": _build_embed,
    "form": _build_form,
    "bench": _build_bench,
    "recommend": _build_recommend,
    "evaluate": _build_evaluate,
    "gradcheck": _build_gradcheck,
    "synth": _build_synth,
    "sweep": _build_sweep,
}


def _summary(command: str, result: Any) -> Optional[str]:
    """Text echoed to stdout after a command succeeds."""
    if command in ("ingest", "synth"):
        return " ".join(f"{key}={value}" for key, value in result.to_dict().items())
    if command == "evaluate" or command == "gradcheck":
        return result.to_text()
    if command == "form":
        return f"groups={result.n_groups} formation_ms={result.wall_time_ms:.3f}"
    if command == "bench":
        return result.frame.to_string(index=False)
    if command == "sweep":
        return result.to_string(index=False)
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(log_file=args.log_file, cli_level=getattr(logging, args.log_level))

    limits = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
    try:
        with limits:
            context = RunContext(show_progress=args.progress)
            command = BUILDERS[args.command](context, args)
            result = context.command_executor.execute_command(command)
    except Exception as e:
        code = exit_code_for(e)
        if code == 1:
            logger.exception(f"{args.command} failed")
        else:
            logger.error(f"{args.command} failed: {e}")
        return code

    summary = _summary(args.command, result)
    if summary:
        print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
