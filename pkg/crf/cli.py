"""
Command-line front end

    crf train    --train PATH --templates PATH --model PATH [options]
    crf tag      --model PATH --input PATH [--mode viterbi|marginal]
    crf eval     --gold PATH --pred PATH
    crf bench    [--labels M ...] [--length T ...] [--instances N] [--repeat R]
    crf inspect  --model PATH [--top K]
    crf fixture  --kind label-bias|synthetic --output PATH [--seed N]

Command output goes to stdout; logs go to stderr.

Exit codes:
    0  success
    1  any other toolkit error
    2  malformed corpus, template or model file; gold/prediction misalignment
    3  optimizer stall (the trace is written, the model is not)
    4  conflicting flags
"""

import argparse
import sys
import time
from pathlib import Path
from typing import List, Optional, TextIO

import numpy as np
from pydantic import ValidationError

from crf.conll import annotate_conll, as_corpus, read_conll, write_conll
from crf.errors import AlignmentError, CorpusFormatError, CRFError, ModelFileError
from crf.features import featurize_corpus, load_templates
from crf.fixtures import (
    label_bias_corpus,
    sample_synthetic_corpus,
    synthetic_chain_model,
    synthetic_vocabulary,
)
from crf.models.chain import LinearChainModel, tag, train_chain_crf
from crf.models.hcrf import HcrfModel, hcrf_tag
from crf.models.memm import MemmModel, memm_tag
from crf.models.serialization import load_model, model_type_of, save_model
from crf.objectives import RegularizerSpec, chain_cll
from crf.optimize import LbfgsConfig, SgdConfig
from utils.config import CRFSettings, get_settings
from utils.evaluation import evaluate_labels
from utils.logging_config import get_logger, log_performance, setup_logging, timed_operation

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INPUT = 2
EXIT_STALL = 3
EXIT_CONFLICT = 4


class FlagConflictError(CRFError):
    """Two command-line flags cannot be combined"""


# =============================================================================
# train
# =============================================================================


def _training_setup(args: argparse.Namespace, settings: CRFSettings):
    if args.l1 is not None and args.sigma2 is not None:
        raise FlagConflictError("--l1 and --sigma2 are mutually exclusive")
    if args.l1 is not None and args.optimizer == "sgd":
        raise FlagConflictError("--l1 trains by proximal gradient; it cannot be combined with sgd")
    if args.l2_refit and args.l1 is None:
        raise FlagConflictError("--l2-refit only applies to --l1 training")
    sigma2 = args.sigma2 if args.sigma2 is not None else settings.sigma2
    reg = RegularizerSpec.l1(args.l1) if args.l1 is not None else RegularizerSpec.l2(sigma2)
    if args.optimizer == "sgd":
        optimizer = SgdConfig(
            sigma2=sigma2,
            epochs=args.epochs or settings.sgd_epochs,
            seed=args.seed,
            calibration_fraction=settings.sgd_calibration_fraction,
        )
    else:
        optimizer = LbfgsConfig(
            memory=settings.lbfgs_memory,
            grad_tol=settings.lbfgs_grad_tol,
            rel_obj_tol=settings.lbfgs_rel_obj_tol,
            max_iters=args.max_iters or settings.lbfgs_max_iters,
        )
    return reg, optimizer


def cmd_train(args: argparse.Namespace, settings: CRFSettings, out: TextIO) -> int:
    reg, optimizer = _training_setup(args, settings)
    corpus = as_corpus(read_conll(args.train, labeled=True))
    templates = load_templates(args.templates)
    model_path = Path(args.model)
    trace_path = Path(args.trace) if args.trace else model_path.with_name(model_path.name + ".trace")
    workers = args.workers if args.workers is not None else settings.workers

    started = time.perf_counter()
    model = train_chain_crf(
        corpus,
        templates,
        optimizer=optimizer,
        reg=reg,
        epsilon_unsupported=args.epsilon_unsupported,
        warmup_iters=settings.unsupported_warmup_iters,
        feature_mode=args.feature_mode,
        standardize=args.standardize,
        l2_refit=args.l2_refit,
        refit_sigma2=settings.sigma2,
        workers=workers,
        seed=args.seed,
        trace_file=trace_path,
    )
    log_performance(
        logger, "cmd_train", (time.perf_counter() - started) * 1000.0, workers=workers
    )

    space = model.space
    out.write(f"instances\t{len(corpus)}\n")
    out.write(f"labels\t{space.num_labels}\n")
    out.write(f"observations\t{len(space.node_observations) + len(space.edge_observations)}\n")
    out.write(f"parameters\t{space.num_features}\n")
    out.write(f"nonzero_fraction\t{model.nonzero_fraction()!r}\n")
    for line in model.trace.format_lines():
        out.write(line + "\n")

    if model.stalled:
        logger.error("training_stalled", trace=str(trace_path))
        return EXIT_STALL
    save_model(model, model_path)
    return EXIT_OK


# =============================================================================
# tag / eval
# =============================================================================


def _tagger(model: LinearChainModel, mode: str):
    if isinstance(model, HcrfModel):
        return lambda tokens: _unpack(hcrf_tag(model, tokens, mode))
    if isinstance(model, MemmModel):
        return lambda tokens: (memm_tag(model, tokens), None)
    return lambda tokens: _unpack(tag(model, tokens, mode))


def _unpack(result):
    return result.labels, result.confidences


def cmd_tag(args: argparse.Namespace, settings: CRFSettings, out: TextIO) -> int:
    model = load_model(args.model)
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise CorpusFormatError(f"{args.input} is not valid UTF-8: {e}") from e
    with timed_operation(logger, "cmd_tag", mode=args.mode):
        out.write(annotate_conll(text, _tagger(model, args.mode), labeled=args.labeled))
    return EXIT_OK


def _column(path: str, column: int) -> List[List[str]]:
    sequences = read_conll(path, labeled=False)
    try:
        return [[token[column] for token in sequence.tokens] for sequence in sequences]
    except IndexError as e:
        raise CorpusFormatError(f"{path} has no column {column}") from e


def cmd_eval(args: argparse.Namespace, settings: CRFSettings, out: TextIO) -> int:
    report = evaluate_labels(_column(args.gold, args.gold_column), _column(args.pred, args.pred_column))
    if args.format in ("text", "both"):
        out.write(report.format_text() + "\n")
    if args.format == "both":
        out.write("\n")
    if args.format in ("tsv", "both"):
        out.write("\n".join(report.to_lines()) + "\n")
    return EXIT_OK


# =============================================================================
# bench / inspect / fixture
# =============================================================================


def bench_dataset(num_labels: int, length: int, instances: int, seed: int = 0):
    """Random-word, random-label chains with every label pair featurized"""
    rng = np.random.default_rng(seed)
    model = synthetic_chain_model(num_labels=num_labels, seed=seed)
    vocabulary = synthetic_vocabulary(model)
    labels = model.labels
    corpus = [
        (
            [(vocabulary[int(v)],) for v in rng.integers(0, len(vocabulary), size=length)],
            [labels[int(y)] for y in rng.integers(0, num_labels, size=length)],
        )
        for _ in range(instances)
    ]
    dataset = featurize_corpus(corpus, model.templates, mode="full")
    weights = rng.normal(0.0, 0.1, size=dataset.space.num_features)
    return dataset, weights


def cmd_bench(args: argparse.Namespace, settings: CRFSettings, out: TextIO) -> int:
    if args.instances < 1 or args.repeat < 1 or min(args.labels + args.length) < 1:
        raise FlagConflictError("benchmark sizes must be positive")
    out.write("labels\tlength\tinstances\tseconds\n")
    for m in args.labels:
        for t in args.length:
            dataset, weights = bench_dataset(m, t, args.instances, args.seed)
            timings = []
            for _ in range(args.repeat):
                started = time.perf_counter()
                chain_cll(weights, dataset)
                timings.append(time.perf_counter() - started)
            best = min(timings)
            log_performance(logger, "bench_cell", best * 1000.0, labels=m, length=t)
            out.write(f"{m}\t{t}\t{args.instances}\t{best:.6f}\n")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace, settings: CRFSettings, out: TextIO) -> int:
    model = load_model(args.model)
    space = model.space
    out.write(f"model_type\t{model_type_of(model)}\n")
    out.write(f"labels\t{space.num_labels}\n")
    out.write(f"templates\t{len(model.templates)}\n")
    out.write(f"parameters\t{space.num_features}\n")
    out.write(f"nonzero_fraction\t{model.nonzero_fraction()!r}\n")
    for key in sorted(model.metadata):
        out.write(f"meta:{key}\t{model.metadata[key]}\n")
    for key, weight in model.top_features(args.top):
        out.write(f"{key}\t{weight!r}\n")
    return EXIT_OK


def cmd_fixture(args: argparse.Namespace, settings: CRFSettings, out: TextIO) -> int:
    if args.kind == "label-bias":
        corpus = label_bias_corpus(args.sequences, seed=args.seed)
    else:
        model = synthetic_chain_model(
            num_labels=args.num_labels, coupling=args.coupling, seed=args.seed
        )
        corpus = sample_synthetic_corpus(model, args.sequences, args.length, seed=args.seed + 1)
    path = write_conll(args.output, corpus)
    out.write(f"sequences\t{len(corpus)}\n")
    logger.info("fixture_written", kind=args.kind, path=str(path), sequences=len(corpus))
    return EXIT_OK


# =============================================================================
# Entry point
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crf",
        description="Conditional random field toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", default=None, help="Override CRF_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Train a linear-chain CRF on a CoNLL corpus")
    train.add_argument("--train", required=True, help="Labeled CoNLL training file")
    train.add_argument("--templates", required=True, help="Feature template file")
    train.add_argument("--model", required=True, help="Output model file")
    train.add_argument("--trace", default=None, help="Trace file (default: MODEL.trace)")
    train.add_argument("--optimizer", choices=["lbfgs", "sgd"], default="lbfgs")
    train.add_argument("--sigma2", type=float, default=None, help="L2 prior variance")
    train.add_argument("--l1", type=float, default=None, help="L1 strength (proximal training)")
    train.add_argument(
        "--l2-refit",
        action="store_true",
        help="Re-estimate the weights selected by --l1 under L2",
    )
    train.add_argument("--epsilon-unsupported", type=float, default=None)
    train.add_argument("--feature-mode", choices=["supported", "full"], default="supported")
    train.add_argument("--standardize", action="store_true")
    train.add_argument("--workers", type=int, default=None)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--max-iters", type=int, default=None)
    train.add_argument("--epochs", type=int, default=None)
    train.set_defaults(handler=cmd_train)

    tag_parser = sub.add_parser("tag", help="Append predicted labels to a CoNLL file")
    tag_parser.add_argument("--model", required=True)
    tag_parser.add_argument("--input", required=True)
    tag_parser.add_argument("--mode", choices=["viterbi", "marginal"], default="viterbi")
    tag_parser.add_argument(
        "--labeled",
        action="store_true",
        help="Input's final column is a gold label (kept, not used as a feature)",
    )
    tag_parser.set_defaults(handler=cmd_tag)

    evaluate = sub.add_parser("eval", help="Score predictions against gold labels")
    evaluate.add_argument("--gold", required=True)
    evaluate.add_argument("--pred", required=True)
    evaluate.add_argument("--gold-column", type=int, default=-1)
    evaluate.add_argument("--pred-column", type=int, default=-1)
    evaluate.add_argument("--format", choices=["text", "tsv", "both"], default="both")
    evaluate.set_defaults(handler=cmd_eval)

    bench = sub.add_parser("bench", help="Time gradient evaluations over an M x T grid")
    bench.add_argument("--labels", type=int, nargs="+", default=[64, 128, 256])
    bench.add_argument("--length", type=int, nargs="+", default=[10, 20, 40])
    bench.add_argument("--instances", type=int, default=5)
    bench.add_argument("--repeat", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(handler=cmd_bench)

    inspect = sub.add_parser("inspect", help="Print model statistics and top features")
    inspect.add_argument("--model", required=True)
    inspect.add_argument("--top", type=int, default=20)
    inspect.set_defaults(handler=cmd_inspect)

    fixture = sub.add_parser("fixture", help="Write a deterministic fixture corpus")
    fixture.add_argument("--kind", choices=["label-bias", "synthetic"], required=True)
    fixture.add_argument("--output", required=True)
    fixture.add_argument("--seed", type=int, default=0)
    fixture.add_argument("--sequences", type=int, default=100)
    fixture.add_argument("--length", type=int, default=10)
    fixture.add_argument("--num-labels", type=int, default=3)
    fixture.add_argument("--coupling", type=float, default=2.0)
    fixture.set_defaults(handler=cmd_fixture)
    return parser


def main(argv: Optional[List[str]] = None, out: Optional[TextIO] = None) -> int:
    """Run one command; returns the process exit code"""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(
        log_level=args.log_level or settings.log_level,
        json_logs=settings.json_logs,
        log_file=settings.log_file,
        stream=sys.stderr,
    )
    out = out if out is not None else sys.stdout
    try:
        return args.handler(args, settings, out)
    except FlagConflictError as e:
        logger.error("flag_conflict", command=args.command, error=str(e))
        return EXIT_CONFLICT
    except (CorpusFormatError, AlignmentError, ModelFileError) as e:
        logger.error("input_error", command=args.command, error=str(e))
        return EXIT_INPUT
    except OSError as e:
        logger.error("input_error", command=args.command, error=str(e))
        return EXIT_INPUT
    except ValidationError as e:
        logger.error("invalid_option", command=args.command, error=str(e))
        return EXIT_ERROR
    except CRFError as e:
        logger.error("command_failed", command=args.command, error=str(e))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
