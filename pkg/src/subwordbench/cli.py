"""Command-line entry point: ``subwordbench <command> [options]``.

Commands::

    learn    train a segmentation model from tokenized text
    apply    segment text with a model (streaming)
    detok    undo ``apply`` (streaming)
    tune     pick the MDL corpus weight against gold segmentations
    score    BLEU / CHRF3 of a hypothesis file against a reference file
    compare  Dunn's test of every method against the best, per task
    bayes    fit the task + method linear model to a score table
    report   all of the above for a score table

Exit status: 0 success, 1 usage error, 2 I/O error, 3 invalid input or
failed convergence check.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import tempfile
from contextlib import contextmanager
from itertools import chain
from typing import Callable, Iterator

from . import __version__
from .bpe import HEADER_PREFIX as BPE_HEADER
from .bpe import SENTENCE, TOKEN, BpeModel, detokenize, learn_bpe_sentence, learn_bpe_token
from .corpus import FormatError, count_frequencies, load_analyses, load_corpus, load_gold, merge_frequencies
from .hybrid import HEADER_PREFIX as HYBRID_HEADER
from .hybrid import HybridModel, build_hybrid, detokenize_hybrid_text, learn_fallback_analyzer
from .metrics import EvalPair, chrf, corpus_bleu
from .morph import BEST_MATCH, DEFAULT_ALPHA_GRID, FIRST
from .morph import HEADER_PREFIX as MDL_HEADER
from .morph import MdlModel, constrain_vocab, render_lmvr_style, segment_mdl, train_mdl, tune_corpusweight
from .reference import reference_summary
from .stats import (
    BASELINE,
    BLEU,
    CHRF3,
    ConvergenceError,
    PosteriorSummary,
    SamplerConfig,
    ScoreTable,
    best_count_report,
    dunn_all,
    fit_bayes_linear,
    normalize_metric,
    pairwise_tau,
    resample_summary,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3
SCHEMES = ("bpe-token", "bpe-sentence", "mdl", "mdl-constrained", "hybrid")
SEED_ENV = "SUBWORDBENCH_SEED"
DEFAULT_ALPHA = 1.0

log = logging.getLogger("subwordbench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- argument types -----------------------------------------------------------


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _alpha(text: str) -> float:
    value = float(text)
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"corpus weight must be positive, got {text}")
    return value


def _alpha_grid(text: str) -> tuple[float, ...]:
    items = [s for s in text.replace(",", " ").split() if s]
    if not items:
        raise argparse.ArgumentTypeError("empty alpha grid")
    return tuple(_alpha(s) for s in items)


def _metric(text: str) -> str:
    if text.strip().lower() == "all":
        return "all"
    try:
        return normalize_metric(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return 0
    try:
        return _seed(raw.strip())
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"{SEED_ENV}: {exc}") from None


# -- parser -------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, seed: int) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value defaults, overridden by flags")
    p.add_argument("--seed", type=_seed, default=seed, help=f"random seed (default: ${SEED_ENV} or 0)")
    p.add_argument("-o", "--out", metavar="FILE", help="output file (default: stdout where allowed)")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")


def _add_score_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scores", metavar="CSV", help="score table: task,method,seed,metric,score")
    p.add_argument("--reference", action="store_true",
                   help="resample the bundled published aggregates instead of reading --scores")
    p.add_argument("--seeds", type=_positive, default=5, help="seeds per cell with --reference (default 5)")


def build_parser(seed: int = 0) -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="subwordbench", description="Subword segmentation benchmark toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    subs = {}

    p = sub.add_parser("learn", help="train a segmentation model")
    p.add_argument("inputs", nargs="+", metavar="CORPUS", help="tokenized text, one sentence per line")
    p.add_argument("--scheme", choices=SCHEMES, default="bpe-token")
    p.add_argument("--joint", action="store_true", help="learn one model from all inputs")
    p.add_argument("--merges", type=_non_negative, default=5000, help="BPE merge operations (default 5000)")
    p.add_argument("--vocab-budget", type=_positive, default=2500,
                   help="vocabulary budget for mdl-constrained and hybrid (default 2500)")
    p.add_argument("--alpha", type=_alpha, help="MDL corpus weight; tuned on --gold when omitted")
    p.add_argument("--alpha-grid", type=_alpha_grid, default=DEFAULT_ALPHA_GRID,
                   help="comma-separated grid for tuning")
    p.add_argument("--gold", metavar="FILE", help="gold segmentations for tuning the corpus weight")
    p.add_argument("--analyses", metavar="FILE", help="word<TAB>stem<TAB>suffixes for the hybrid scheme")
    p.add_argument("--max-suffixes", type=_non_negative, default=50,
                   help="suffix inventory of the built-in analyzer when --analyses is absent (default 50)")
    p.add_argument("--restarts", type=_non_negative, default=2, help="random restarts of MDL training")
    p.add_argument("--lowercase", action="store_true", help="lowercase the input first")
    subs["learn"] = p

    for name, text in (("apply", "segment text"), ("detok", "undo segmentation")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--model", metavar="FILE", help="model written by learn")
        p.add_argument("--in", dest="input", metavar="FILE", help="input text (default: stdin)")
        if name == "apply":
            p.add_argument("--lowercase", action="store_true", help="lowercase the input first")
        subs[name] = p

    p = sub.add_parser("tune", help="corpus weight sweep against gold segmentations")
    p.add_argument("inputs", nargs="+", metavar="CORPUS")
    p.add_argument("--gold", metavar="FILE")
    p.add_argument("--alpha-grid", type=_alpha_grid, default=DEFAULT_ALPHA_GRID)
    p.add_argument("--policy", choices=(BEST_MATCH, FIRST), default=BEST_MATCH,
                   help="how gold alternatives are matched (default best-match)")
    p.add_argument("--restarts", type=_non_negative, default=2)
    p.add_argument("--lowercase", action="store_true")
    subs["tune"] = p

    p = sub.add_parser("score", help="BLEU and CHRF3 of detokenized output")
    p.add_argument("--hyp", metavar="FILE")
    p.add_argument("--ref", metavar="FILE")
    p.add_argument("--metric", type=_metric, default="all", help="BLEU, CHRF3 or all (default)")
    p.add_argument("--case-sensitive", action="store_true", help="do not lowercase before scoring")
    subs["score"] = p

    p = sub.add_parser("compare", help="Dunn's test against the best method")
    _add_score_source(p)
    p.add_argument("--metric", type=_metric, default="all")
    subs["compare"] = p

    p = sub.add_parser("bayes", help="fit the task + method linear model")
    _add_score_source(p)
    p.add_argument("--metric", type=_metric, default=BLEU)
    p.add_argument("--chains", type=_positive, default=4)
    p.add_argument("--draws", type=_positive, default=2000)
    p.add_argument("--warmup", type=_non_negative, default=2000)
    p.add_argument("--baseline", default=BASELINE, help=f"method for pairwise differences ({BASELINE})")
    subs["bayes"] = p

    p = sub.add_parser("report", help="score tables, tie counts, Dunn p-values and the Bayesian fit")
    _add_score_source(p)
    p.add_argument("--metric", type=_metric, default="all")
    p.add_argument("--chains", type=_positive, default=4)
    p.add_argument("--draws", type=_positive, default=2000)
    p.add_argument("--warmup", type=_non_negative, default=2000)
    p.add_argument("--baseline", default=BASELINE)
    p.add_argument("--no-bayes", action="store_true", help="skip the Bayesian fit")
    subs["report"] = p

    for p in subs.values():
        _add_common(p, seed)
    return parser, subs


def read_config(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{line_no}: expected 'key = value'")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _config_defaults(p: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    actions = {a.dest: a for a in p._actions if a.option_strings}
    out = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"config: unknown option {key!r} for {p.prog}")
        try:
            if isinstance(action, argparse._StoreTrueAction):
                value = _bool(raw)
            elif action.type is not None:
                value = action.type(raw)
            else:
                value = raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"config: {key}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config: {key}: {value!r} not one of {', '.join(map(str, action.choices))}")
        out[key] = value
    return out


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser, subs = build_parser(_default_seed())
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("subwordbench: missing command (try --help)")
    if args.config:
        try:
            values = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        subs[args.command].set_defaults(**_config_defaults(subs[args.command], values))
        args = parser.parse_args(argv)
    return args


def _require(args, *names: str) -> None:
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"{args.command}: --{name.replace('_', '-')} is required")


# -- output helpers -----------------------------------------------------------


@contextmanager
def atomic_writer(path: str | None):
    """Text handle that replaces ``path`` only on success; stdout if None."""
    if path is None:
        yield sys.stdout
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".subwordbench-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _write(path: str | None, text: str) -> None:
    with atomic_writer(path) as fh:
        fh.write(text)


def _check_inputs(*paths: str | None) -> None:
    for path in paths:
        if path is not None and not os.path.isfile(path):
            raise FileNotFoundError(f"no such file: {path}")


def _check_output(path: str | None) -> None:
    if path is None:
        return
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"output directory does not exist: {directory}")
    if os.path.isdir(path):
        raise IsADirectoryError(f"output path is a directory: {path}")


def _stream_lines(path: str | None) -> Iterator[tuple[str, str]]:
    """Yield ``(text, line_ending)``; the ending is empty on a final unterminated line."""
    fh = open(path, "rb") if path else sys.stdin.buffer
    try:
        for line_no, raw in enumerate(fh, 1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError(path or "<stdin>", line_no, f"invalid UTF-8 ({exc.reason})") from None
            body = text.rstrip("\r\n")
            yield body, "\n" if len(body) != len(text) else ""
    finally:
        if path:
            fh.close()


# -- models -------------------------------------------------------------------


def load_model(path: str):
    """Return ``(scheme, model)`` for any model file written by ``learn``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    head = text.split("\n", 1)[0].split(" ", 1)[0]
    if head == BPE_HEADER:
        model = BpeModel.loads(text)
        return ("bpe-token" if model.mode == TOKEN else "bpe-sentence"), model
    if head == MDL_HEADER:
        model = MdlModel.loads(text)
        return ("mdl" if model.vocab_budget is None else "mdl-constrained"), model
    if head == HYBRID_HEADER:
        return "hybrid", HybridModel.loads(text)
    raise ValueError(f"{path}: not a subwordbench model file")


def segmenter(scheme: str, model) -> Callable[[str], list[str]]:
    if scheme.startswith("bpe") or scheme == "hybrid":
        return model.segment
    return lambda line: [p for w in line.split() for p in render_lmvr_style(segment_mdl(model, w))]


def desegmenter(scheme: str, model) -> Callable[[list[str]], str]:
    if scheme == "bpe-token":
        return lambda pieces: detokenize(pieces, TOKEN)
    if scheme == "bpe-sentence":
        return lambda pieces: detokenize(pieces, SENTENCE, model.marker)
    return detokenize_hybrid_text


def _frequencies(args):
    if len(args.inputs) > 1 and not getattr(args, "joint", True):
        raise UsageError(f"{args.command}: several inputs need --joint")
    _check_inputs(*args.inputs)
    corpora = [load_corpus(p, args.lowercase) for p in args.inputs]
    freq = merge_frequencies(*(count_frequencies(c) for c in corpora))
    if not freq:
        raise ValueError("input corpus has no tokens")
    return corpora, freq


# -- commands -----------------------------------------------------------------


def cmd_learn(args) -> int:
    _require(args, "out")
    _check_inputs(args.gold, args.analyses)
    _check_output(args.out)
    corpora, freq = _frequencies(args)
    log.info("%d word types, %d tokens", len(freq), sum(freq.values()))
    scheme = args.scheme
    if scheme == "bpe-token":
        model = learn_bpe_token(freq, args.merges, args.seed)
        log.info("learned %d merges", len(model.merges))
    elif scheme == "bpe-sentence":
        model = learn_bpe_sentence(chain.from_iterable(corpora), args.merges, args.seed)
        log.info("learned %d merges", len(model.merges))
    elif scheme in ("mdl", "mdl-constrained"):
        alpha = args.alpha
        if alpha is None and args.gold:
            gold = load_gold(args.gold)
            alpha, rows = tune_corpusweight(freq, gold, args.alpha_grid, args.seed)
            for a, rep in rows:
                log.info("alpha %g: boundary F1 %.4f", a, rep.f1)
        if alpha is None:
            alpha = DEFAULT_ALPHA
        log.info("training MDL segmenter at alpha %g", alpha)
        model = train_mdl(freq, alpha, args.seed, args.restarts)
        if scheme == "mdl-constrained":
            model = constrain_vocab(model, args.vocab_budget)
        log.info("%d morphs", len(model.lexicon))
    else:
        if args.analyses:
            analyses = load_analyses(args.analyses)
        else:
            analyses = learn_fallback_analyzer(freq, args.max_suffixes)
        model = build_hybrid(analyses, freq, args.vocab_budget)
        log.info("%d stem merges, %d suffixes, %d symbols",
                 len(model.stem_bpe.merges), len(model.suffix_set), model.vocab_size)
    _write(args.out, model.dumps())
    return EXIT_OK


def _transform(args, fn: Callable[[str], str]) -> int:
    _require(args, "model")
    _check_inputs(args.model, args.input)
    _check_output(args.out)
    with atomic_writer(args.out) as out:
        for text, ending in _stream_lines(args.input):
            out.write(fn(text) + ending)
    return EXIT_OK


def cmd_apply(args) -> int:
    _require(args, "model")
    _check_inputs(args.model)
    scheme, model = load_model(args.model)
    segment = segmenter(scheme, model)
    lower = args.lowercase
    return _transform(args, lambda line: " ".join(segment(line.lower() if lower else line)))


def cmd_detok(args) -> int:
    _require(args, "model")
    _check_inputs(args.model)
    scheme, model = load_model(args.model)
    join = desegmenter(scheme, model)
    return _transform(args, lambda line: join(line.split()))


def cmd_tune(args) -> int:
    _require(args, "gold")
    _check_inputs(args.gold)
    _check_output(args.out)
    _, freq = _frequencies(args)
    gold = load_gold(args.gold)
    best, rows = tune_corpusweight(freq, gold, args.alpha_grid, args.seed, args.policy)
    lines = ["alpha\tprecision\trecall\tf1"]
    for a, rep in rows:
        lines.append(f"{a!r}\t{rep.precision!r}\t{rep.recall!r}\t{rep.f1!r}")
    lines.append(f"# best alpha {best!r}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_score(args) -> int:
    _require(args, "hyp", "ref")
    _check_inputs(args.hyp, args.ref)
    _check_output(args.out)
    pair = EvalPair.from_files(args.hyp, args.ref)
    lower = not args.case_sensitive
    metrics = [BLEU, CHRF3] if args.metric == "all" else [args.metric]
    values = {BLEU: lambda: corpus_bleu(pair, lowercase=lower), CHRF3: lambda: chrf(pair, lowercase=lower)}
    scores = [(m, values[m]()) for m in metrics]
    if args.out:
        _write(args.out, "".join(f"{m}\t{s!r}\n" for m, s in scores))
    else:
        _write(None, "".join(f"{m}\t{s:.2f}\n" for m, s in scores))
    return EXIT_OK


def load_scores(args) -> ScoreTable:
    if args.reference and args.scores:
        raise UsageError(f"{args.command}: use either --scores or --reference")
    if args.reference:
        return resample_summary(reference_summary(), args.seeds, args.seed)
    _require(args, "scores")
    _check_inputs(args.scores)
    table = ScoreTable.load(args.scores)
    if not len(table):
        raise ValueError(f"{args.scores}: no score records")
    return table


def _metrics(args, table: ScoreTable) -> list[str]:
    if args.metric == "all":
        return table.metrics()
    if args.metric not in table.metrics():
        raise ValueError(f"no {args.metric} scores in the table")
    return [args.metric]


def _table(headers: list[str], rows: list[list[str]], align: str) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]

    def fmt(cells):
        out = []
        for cell, width, a in zip(cells, widths, align):
            out.append(cell.ljust(width) if a == "l" else cell.rjust(width))
        return "  ".join(out).rstrip()

    return [fmt(headers), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]


def _fmt_p(p: float) -> str:
    return f"{p:.3f}"


def dunn_section(table: ScoreTable, metrics: list[str]) -> tuple[list[str], list[list]]:
    text, records = [], []
    reports = [r for m in metrics for r in dunn_all(table, m)]
    for metric in metrics:
        rows = []
        for rep in (r for r in reports if r.metric == metric):
            for m in sorted(rep.p):
                flag = "best" if m == rep.best else ("*" if rep.p[m] <= 0.05 else "")
                rows.append([rep.task, m, f"{rep.means[m]:.2f}", f"{rep.z[m]:.3f}", _fmt_p(rep.p[m]), flag])
                records.append(["dunn", metric, rep.task, m, "mean", rep.means[m]])
                records.append(["dunn", metric, rep.task, m, "z", rep.z[m]])
                records.append(["dunn", metric, rep.task, m, "p", rep.p[m]])
            records.append(["kruskal", metric, rep.task, "", "H", rep.h])
            records.append(["kruskal", metric, rep.task, "", "p", rep.h_p])
        text.append(f"Dunn's test vs best method ({metric}); * marks p <= 0.05")
        text.extend(_table(["task", "method", "mean", "z", "p", ""], rows, "llrrrl"))
        text.append("")
    counts = best_count_report(table, reports)
    methods = sorted({m for c in counts.values() for m in c})
    rows = [[m] + [str(counts.get(metric, {}).get(m, 0)) for metric in metrics] for m in methods]
    text.append("Times best or tied with best (p > 0.05)")
    text.extend(_table(["method"] + metrics, rows, "l" + "r" * len(metrics)))
    text.append("")
    for metric in metrics:
        for m in methods:
            records.append(["best_count", metric, "", m, "count", counts.get(metric, {}).get(m, 0)])
    return text, records


def cell_section(table: ScoreTable, metrics: list[str]) -> tuple[list[str], list[list]]:
    text, records = [], []
    reports = {(r.task, r.metric): r for m in metrics for r in dunn_all(table, m)}
    tasks = sorted({t for m in metrics for t in table.tasks(m)})
    methods = sorted({m for mt in metrics for m in table.methods(mt)})
    rows = []
    for task in tasks:
        for method in methods:
            row = [task, method]
            for metric in metrics:
                scores = table.cell(task, method, metric)
                if not scores:
                    row.append("-")
                    continue
                mean = math.fsum(scores) / len(scores)
                sd = math.sqrt(math.fsum((x - mean) ** 2 for x in scores) / (len(scores) - 1)) if len(scores) > 1 else 0.0
                rep = reports.get((task, metric))
                mark = " "
                if rep is not None:
                    mark = "^" if rep.best == method else ("=" if rep.p.get(method, 0.0) > 0.05 else " ")
                row.append(f"{mean:.2f} ± {sd:.2f}{mark}")
                records.append(["cell", metric, task, method, "mean", mean])
                records.append(["cell", metric, task, method, "sd", sd])
                records.append(["cell", metric, task, method, "n", len(scores)])
            rows.append(row)
    text.append("Mean ± sd over seeds; ^ best mean, = not significantly different from best")
    text.extend(_table(["task", "method"] + metrics, rows, "ll" + "r" * len(metrics)))
    text.append("")
    return text, records


def bayes_section(summary: PosteriorSummary, baseline: str) -> tuple[list[str], list[list]]:
    metric = summary.metric
    text, records = [], []
    rows = []
    for name, p in summary.params.items():
        rows.append([name, f"{p.mean:.2f}", f"{p.sd:.2f}", f"{p.rhat:.3f}", f"{p.ess:.0f}"])
        records.append(["posterior", metric, "", name, "mean", p.mean])
        records.append(["posterior", metric, "", name, "sd", p.sd])
        records.append(["posterior", metric, "", name, "rhat", p.rhat])
        records.append(["posterior", metric, "", name, "ess", p.ess])
    text.append(f"Posterior of score ~ Normal(eta[task] + tau[method], eps[task]) ({metric})")
    text.extend(_table(["parameter", "mean", "sd", "R-hat", "ESS"], rows, "lrrrr"))
    text.append("")
    diffs = pairwise_tau(summary, baseline)
    rows = []
    for m, (mean, sd) in diffs.items():
        if m == baseline:
            continue
        rows.append([f"{m} - {baseline}", f"{mean:.2f}", f"{sd:.2f}"])
        records.append(["pairwise_tau", metric, "", m, "mean", mean])
        records.append(["pairwise_tau", metric, "", m, "sd", sd])
    text.append(f"Pairwise tau differences ({metric})")
    text.extend(_table(["comparison", "mean", "sd"], rows, "lrr"))
    text.append("")
    return text, records


def _records_csv(records: list[list]) -> str:
    lines = ["section,metric,task,method,statistic,value"]
    for section, metric, task, method, stat, value in records:
        cells = [section, metric, task, method, stat]
        cells = ['"' + c.replace('"', '""') + '"' if any(ch in c for ch in ',"') else c for c in cells]
        lines.append(",".join(cells) + f",{value!r}")
    return "\n".join(lines) + "\n"


def _emit(args, text: list[str], records: list[list]) -> None:
    # human-readable text always goes to stdout; -o gets the records file
    if args.out:
        _write(args.out, _records_csv(records))
    _write(None, "\n".join(text).rstrip("\n") + "\n")


def _sampler(args) -> SamplerConfig:
    if args.chains < 2:
        raise UsageError(f"{args.command}: --chains must be at least 2")
    if args.draws < 4:
        raise UsageError(f"{args.command}: --draws must be at least 4")
    return SamplerConfig(chains=args.chains, warmup=args.warmup, draws=args.draws, seed=args.seed)


def cmd_compare(args) -> int:
    _check_output(args.out)
    table = load_scores(args)
    text, records = dunn_section(table, _metrics(args, table))
    _emit(args, text, records)
    return EXIT_OK


def cmd_bayes(args) -> int:
    _check_output(args.out)
    table = load_scores(args)
    metrics = _metrics(args, table)
    text, records = [], []
    for metric in metrics:
        summary = fit_bayes_linear(table, metric, sampler=_sampler(args))
        t, r = bayes_section(summary, args.baseline)
        text += t
        records += r
    _emit(args, text, records)
    return EXIT_OK


def cmd_report(args) -> int:
    _check_output(args.out)
    table = load_scores(args)
    metrics = _metrics(args, table)
    text, records = cell_section(table, metrics)
    t, r = dunn_section(table, metrics)
    text += t
    records += r
    if not args.no_bayes:
        for metric in metrics:
            summary = fit_bayes_linear(table, metric, sampler=_sampler(args))
            t, r = bayes_section(summary, args.baseline)
            text += t
            records += r
    _emit(args, text, records)
    return EXIT_OK


COMMANDS = {
    "learn": cmd_learn,
    "apply": cmd_apply,
    "detok": cmd_detok,
    "tune": cmd_tune,
    "score": cmd_score,
    "compare": cmd_compare,
    "bayes": cmd_bayes,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"error: MCMC did not converge: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BrokenPipeError:
        # downstream closed the pipe (e.g. `| head`); nothing left to report
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return EXIT_OK
    except OSError as exc:
        name = getattr(exc, "filename", None)
        detail = exc.strerror or str(exc)
        print(f"error: {name + ': ' if name else ''}{detail}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
