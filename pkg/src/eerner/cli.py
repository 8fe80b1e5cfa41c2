"""Command-line entry point: ``eerner <subcommand> ...``.

Every option can also come from a JSON file passed with ``--config``; keys
are the option names with dashes replaced by underscores. Resolution order,
lowest to highest: built-in defaults, the config file, explicit flags.

Exit codes: 0 success, 2 usage error (bad flag, missing file, invalid
config), 1 runtime failure. Errors are printed to stderr as one JSON object
naming the failing stage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .conll import ColumnFormatConfig, read_corpus, scan_classes, write_corpus
from .corpus import AnnotatedSentence, Dataset, Document, TagSet, entity_token_ratio
from .evaluate import (BootstrapConfig, bootstrap_f1_diff, by_document, decode, gold_sequences,
                       span_prf, tune_o_bias)
from .objectives import EerConfig
from .preprocess import Variant, apply_variant, raw_view
from .samplers import EeConfig, NnsConfig, sample_ee, sample_nns
from .scorer import ScorerConfig, load_tagger
from .trainer import TrainConfig, train

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
CORPUS_FILE = "corpus.conll"
MANIFEST_FILE = "manifest.json"

log = logging.getLogger("eerner")


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, error: BaseException):
        super().__init__(f"{stage}: {error}")
        self.stage, self.error = stage, error


def _format(name: str, tab: bool) -> ColumnFormatConfig:
    sep = "\t" if tab else None
    if name == "pipeline":  # token, gold tag, observed tag ("-" = latent)
        return ColumnFormatConfig(token_column=0, tag_column=1, observation_column=2, separator=sep)
    if name == "conll":  # token ... tag; every gold entity tag observed
        return ColumnFormatConfig(token_column=0, tag_column=-1, separator=sep)
    raise UsageError(f"unknown corpus format {name!r}")


def _corpus_path(path: str | Path) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / CORPUS_FILE
    if not p.is_file():
        raise UsageError(f"corpus not found: {path}")
    return p


def _model_path(path: str | Path) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / "model.npz"
    if not p.is_file():
        raise UsageError(f"model not found: {path}")
    return p


def _read(path, args, tagset: TagSet | None = None) -> Dataset:
    return read_corpus(_corpus_path(path), _format(args.format, args.tab), tagset)


def _write(dataset: Dataset, out: Path, args) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    target = out / CORPUS_FILE
    write_corpus(dataset, target, _format("pipeline", args.tab))
    return target


def _manifest(out: Path, args, extra: dict | None = None) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {"command": args.command, "version": __version__, "seed": args.seed, "config": config}
    if extra:
        manifest.update(extra)
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, default=str))


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, default=str))


# --- subcommands -----------------------------------------------------------

def cmd_sample(args) -> dict:
    if args.scheme == "nns":
        config = NnsConfig(args.recall, args.precision, args.fp_max_len, args.seed)
    else:
        config = EeConfig(args.budget, args.per_doc_cap, args.keep_prob, args.seed)
    gold = _stage("read", _read, args.input, args)
    sampler = sample_nns if args.scheme == "nns" else sample_ee
    partial, stats = _stage("sample", sampler, gold, config)
    out = Path(args.output)
    _write(partial, out, args)
    _dump(asdict(stats), out / "stats.json")
    return {"sampler_config": asdict(config), "recall": stats.recall, "precision": stats.precision}


def cmd_preprocess(args) -> dict:
    try:
        variant = Variant(args.variant)
    except ValueError:
        raise UsageError(f"unknown variant {args.variant!r}; choose from all, short, shortest") from None
    data = _stage("read", _read, args.input, args)
    data = apply_variant(data, variant)
    if args.raw:
        data = _stage("raw", raw_view, data)
    _write(data, Path(args.output), args)
    return {"documents": len(data.documents), "sentences": data.n_sentences}


def _train_configs(args) -> tuple[ScorerConfig, TrainConfig]:
    scorer = ScorerConfig(embed_dim=args.embed_dim, window=args.window, hidden_dim=args.hidden_dim,
                          min_count=args.min_count, rng_seed=args.seed)
    eer = EerConfig(rho=args.rho, gamma=args.gamma, lambda_u=args.lambda_u)
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, max_batch_tokens=args.max_batch_tokens,
                     learning_rate=args.lr, schedule=args.schedule, optimizer=args.optimizer,
                     rng_seed=args.seed, eer=eer, checkpoint_every=args.checkpoint_every)
    return scorer, tc


def cmd_train(args) -> dict:
    scorer, tc = _train_configs(args)
    data = _stage("read", _read, args.input, args)
    dev = _stage("read", _read, args.dev, args, data.tagset) if args.dev else None
    if args.raw:
        data = _stage("raw", raw_view, data)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    if args.resume is None and log_path.exists():
        log_path.unlink()
    tagger, report = _stage("train", train, data, scorer, tc, dev=dev, checkpoint_dir=out,
                            resume=args.resume, log_path=log_path)
    _dump(report.to_json(), out / "report.json")
    return {"scorer_config": asdict(scorer), "train_config": asdict(tc),
            "final_rho_hat": report.final_rho_hat}


def cmd_decode(args) -> dict:
    tagger = _stage("load", load_tagger, _model_path(args.model))
    data = _stage("read", _read, args.input, args, tagger.tagset)
    bias = args.o_bias
    extra = {}
    if args.tune_on:
        dev = _stage("read", _read, args.tune_on, args, tagger.tagset)
        search = _stage("tune", tune_o_bias, tagger, dev)
        bias = search.best
        extra["bias_scores"] = search.scores
    pred = _stage("decode", decode, tagger, data, bias)
    docs, k = [], 0
    for doc in data.documents:
        sents = []
        for s in doc.sentences:
            sents.append(AnnotatedSentence(s.tokens, s.observed, pred[k]))
            k += 1
        docs.append(Document(doc.id, tuple(sents)))
    _write(data.replace(docs), Path(args.output), args)
    return {"o_bias": bias, **extra}


def _pair(gold_path, pred_paths, args) -> tuple[Dataset, list[Dataset]]:
    fmt = _format(args.format, args.tab)
    pfmt = _format("pipeline", args.tab)
    paths = [_corpus_path(p) for p in pred_paths]
    gold_file = _corpus_path(gold_path)
    classes = set(_stage("read", scan_classes, gold_file, fmt))
    for p in paths:
        classes |= set(_stage("read", scan_classes, p, pfmt))
    tagset = TagSet(tuple(sorted(classes)))
    gold = _stage("read", read_corpus, gold_file, fmt, tagset)
    preds = [_stage("read", read_corpus, p, pfmt, tagset) for p in paths]
    for p, d in zip(pred_paths, preds):
        if [len(s) for s in d.sentences()] != [len(s) for s in gold.sentences()]:
            raise StageError("align", ValueError(f"{p} does not align with the gold corpus"))
    return gold, preds


def cmd_eval(args) -> dict:
    gold, (pred,) = _pair(args.gold, [args.pred], args)
    prf = span_prf(gold_sequences(pred), gold_sequences(gold), gold.tagset)
    metrics = {**asdict(prf), "gold_entity_ratio": entity_token_ratio(gold),
               "predicted_entity_ratio": entity_token_ratio(pred)}
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _dump(metrics, out / "metrics.json")
    print(json.dumps(metrics))
    return {"f1": prf.f1}


def cmd_significance(args) -> dict:
    config = BootstrapConfig(args.iterations, args.confidence, args.seed)
    gold, (a, b) = _pair(args.gold, [args.pred_a, args.pred_b], args)
    g = by_document(gold, gold_sequences(gold))
    result = _stage("bootstrap", bootstrap_f1_diff, by_document(a, gold_sequences(a)),
                    by_document(b, gold_sequences(b)), g, gold.tagset, config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _dump(asdict(result), out / "significance.json")
    print(json.dumps(asdict(result)))
    return {"bootstrap_config": asdict(config)}


def cmd_bench(args) -> dict:
    from .synthetic import (ConsistencyConfig, ExperimentSpec, SyntheticTaskConfig, format_sweep,
                            run_rho_gamma_sweep, run_sample_size_sweep, run_consistency_experiment)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.experiment == "consistency":
        config = ConsistencyConfig(task=SyntheticTaskConfig(rng_seed=args.seed), m_train=args.m_train,
                                   m_test=args.m_test)
        report = _stage("bench", run_consistency_experiment, config)
        sizes = [int(m) for m in args.sizes.split(",")] if args.sizes else []
        scaling = _stage("bench", run_sample_size_sweep, config, sizes) if sizes else []
        _dump({"paired": report, "sample_sizes": scaling}, out / "consistency.json")
        rows = [{"m_train": report["m_train"], "run": run, **vals} for run, vals in report["runs"].items()]
        rows += [{"m_train": r["m_train"], "run": "eer", **r["runs"]["eer"]} for r in scaling]
        _write_csv(rows, out / "consistency.csv")
        return {"consistency_config": asdict(config)}
    spec = ExperimentSpec(seeds=tuple(int(s) for s in args.seeds.split(",")), m_train=args.m_train,
                          m_test=args.m_test, output_dir=str(out))
    result = _stage("bench", run_rho_gamma_sweep, spec)
    print(format_sweep(result))
    return {"sweep_spec": asdict(spec)}


def _write_csv(rows: list[dict], path: Path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _stage(name: str, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (UsageError, StageError):
        raise
    except Exception as err:  # noqa: BLE001 - reported with the stage name
        raise StageError(name, err) from err


# --- parser ----------------------------------------------------------------

REQUIRED = {
    "sample": ("input", "output", "scheme"),
    "preprocess": ("input", "output", "variant"),
    "train": ("input", "output"),
    "decode": ("model", "input", "output"),
    "eval": ("gold", "pred", "output"),
    "significance": ("gold", "pred_a", "pred_b", "output"),
    "bench": ("experiment", "output"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="eerner", description="Partially annotated NER with an expected entity ratio loss.")
    parser.add_argument("--version", action="version", version=f"eerner {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    subs = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file of option values (flags override it)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-v", "--verbose", action="count", default=0)
        p.add_argument("--format", default="pipeline", choices=("pipeline", "conll"),
                       help="input columns: pipeline = token gold observed; conll = token ... tag")
        p.add_argument("--tab", action="store_true", help="tab-separated columns")
        subs[name] = p
        return p

    p = add("sample", cmd_sample, "simulate partial annotation of a gold corpus")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--scheme", choices=("nns", "ee"))
    p.add_argument("--recall", type=float, default=0.5)
    p.add_argument("--precision", type=float, default=0.9)
    p.add_argument("--fp-max-len", type=int, default=2)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--per-doc-cap", type=int, default=10)
    p.add_argument("--keep-prob", type=float, default=0.8)

    p = add("preprocess", cmd_preprocess, "drop unannotated documents or sentences")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--variant", help="all | short | shortest")
    p.add_argument("--raw", action="store_true", help="also observe O wherever feasible (Raw baseline)")

    p = add("train", cmd_train, "train a tagger on observed tags")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--dev")
    p.add_argument("--resume")
    p.add_argument("--raw", action="store_true", help="treat unobserved tokens as O")
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--window", type=int, default=1)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-batch-tokens", type=int)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--schedule", default="slanted", choices=("slanted", "constant", "transformer"))
    p.add_argument("--optimizer", default="adam", choices=("adam", "sgd"))
    p.add_argument("--rho", type=float, default=0.15)
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--lambda-u", type=float, default=10.0)
    p.add_argument("--checkpoint-every", type=int, default=0)

    p = add("decode", cmd_decode, "tag a corpus with a trained model")
    p.add_argument("--model")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--o-bias", type=float, default=0.0)
    p.add_argument("--tune-on", help="dev corpus for choosing the O bias by grid search")

    p = add("eval", cmd_eval, "span precision, recall and F1 of predictions")
    p.add_argument("--gold")
    p.add_argument("--pred")
    p.add_argument("--output")

    p = add("significance", cmd_significance, "paired bootstrap CI for an F1 difference")
    p.add_argument("--gold")
    p.add_argument("--pred-a")
    p.add_argument("--pred-b")
    p.add_argument("--output")
    p.add_argument("--iterations", type=int, default=10_000)
    p.add_argument("--confidence", type=float, default=0.99)

    p = add("bench", cmd_bench, "synthetic experiments")
    p.add_argument("experiment", nargs="?", choices=("consistency", "sweep"))
    p.add_argument("--output")
    p.add_argument("--m-train", type=int, default=2000)
    p.add_argument("--m-test", type=int, default=500)
    p.add_argument("--sizes", default="500,2000,8000", help="comma-separated training sizes; empty to skip")
    p.add_argument("--seeds", default="0,1,2")
    return parser, subs


def parse_args(argv) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        raise UsageError("a subcommand is required")
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config {args.config}: {err}") from None
        if not isinstance(values, dict):
            raise UsageError("config file must hold a JSON object")
        known = set(vars(args))
        unknown = sorted(set(values) - known - {"command", "func"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub = subs[args.command]
        sub.set_defaults(**{k: v for k, v in values.items() if k not in ("command", "func", "config")})
        args = parser.parse_args(argv)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s) "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))
    return args


def dispatch(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as err:
        _report("usage", err, "usage")
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        extra = args.func(args)
    except UsageError as err:
        _report("validate", err, "usage")
        return EXIT_USAGE
    except StageError as err:
        _report(err.stage, err.error, "runtime")
        return EXIT_RUNTIME
    except ValueError as err:  # config validation before work starts
        _report("validate", err, "usage")
        return EXIT_USAGE
    out = Path(getattr(args, "output"))
    _manifest(out, args, {"result": extra})
    return EXIT_OK


def _report(stage: str, err: BaseException, kind: str) -> None:
    print(json.dumps({"error": str(err), "type": type(err).__name__, "stage": stage, "kind": kind}),
          file=sys.stderr)


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
