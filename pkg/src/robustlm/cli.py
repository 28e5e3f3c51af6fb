"""Command-line entry point wiring the modules into reproducible pipelines.

Every command writes a run manifest next to its outputs; re-running with
--config <manifest> replays the stored arguments (explicit flags win).
Exit codes: 0 success, 1 usage error, 2 runtime error. Output paths are
guarded by a lockfile so concurrent commands cannot collide.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import baseline as baseline_mod
from . import topics as topics_mod
from .corpus import (
    MixtureSpec,
    Vocabulary,
    build_vocabulary,
    encode,
    mix_corpora,
    read_corpus,
    write_mixture,
)
from .dro import DEFAULT_ALPHA_FLOOR, DEFAULT_EWMA_DECAY, DEFAULT_MIN_RATIO, DroConfig, train
from .evaluate import (
    SweepCell,
    loss_scatter,
    perplexity,
    run_sweep,
    subpopulation_sweep,
    write_scatter_csv,
)
from .manifest import load_manifest_args, output_lock, write_run_manifest
from .models import NeuralNGramModel, TabularModel, load_checkpoint, save_checkpoint
from .synthetic import LanguageSpec, make_corpus_file
from .toy import TOY_ALPHA, run_toy


class CliError(Exception):
    """Usage-level error raised after parsing (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, single-line diagnostic
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip() != ""]


def _strings(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip() != ""]


def _manifest_args(args: argparse.Namespace) -> dict:
    skip = {"func", "config", "command"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def cmd_build_vocab(args) -> None:
    corpora = [read_corpus(p) for p in args.corpus]
    vocab = build_vocabulary(corpora, top_k=args.top_k)
    out = Path(args.out)
    with output_lock(out.parent):
        vocab.save(out)
        write_run_manifest(out.parent, "build-vocab", _manifest_args(args), args.corpus, [out])
    print(f"wrote vocabulary of {len(vocab)} tokens to {out}")


def cmd_mix(args) -> None:
    spec = MixtureSpec(
        target_corpus=str(args.target),
        nuisance_corpus=str(args.nuisance),
        alpha_train=args.alpha_train,
        target_count=args.target_count,
        seed=args.seed,
    )
    mixed = mix_corpora(spec)
    out = Path(args.out)
    with output_lock(out.parent):
        write_mixture(out, mixed, spec)
        write_run_manifest(
            out.parent, "mix", _manifest_args(args), [args.target, args.nuisance], [out]
        )
    print(f"wrote {len(mixed)} mixed sentences to {out}")


def cmd_cluster(args) -> None:
    if args.oracle_labels is None and args.vocab is None:
        raise CliError("cluster requires --vocab (LDA mode) or --oracle-labels")
    sentences = read_corpus(args.corpus, apply_filter=False)
    if args.oracle_labels is not None:
        labels = Path(args.oracle_labels).read_text(encoding="utf-8").splitlines()
        if len(labels) != len(sentences):
            raise CliError(
                f"label file has {len(labels)} lines but corpus has {len(sentences)}"
            )
        assignments, tag_ids = topics_mod.load_oracle_topics(labels)
        num_topics = len(tag_ids)
    else:
        vocab = Vocabulary.load(args.vocab)
        encoded = [encode(s, vocab) for s in sentences]
        state = topics_mod.fit_lda(
            encoded,
            num_topics=args.k,
            alpha_prior=args.alpha_prior,
            beta_prior=args.beta_prior,
            iterations=args.iters,
            seed=args.seed,
            vocab_size=len(vocab),
        )
        assignments = topics_mod.assign_all_topics(state)
        num_topics = args.k
    out = Path(args.out)
    with output_lock(out.parent):
        topics_mod.write_assignments(out, assignments, num_topics)
        inputs = [args.corpus, args.vocab, args.oracle_labels]
        write_run_manifest(out.parent, "cluster", _manifest_args(args), inputs, [out])
    print(f"wrote {len(assignments)} assignments over K={num_topics} topics to {out}")


def _build_model(args, vocab: Vocabulary, encoded) -> TabularModel | NeuralNGramModel:
    if args.model == "tabular":
        seen: dict[tuple[int, ...], None] = {}
        for s in encoded:
            seen.setdefault(tuple(s.ids))
        return TabularModel(outcomes=list(seen))
    return NeuralNGramModel(
        vocab_size=len(vocab),
        context_size=args.context_size,
        embed_dim=args.embed_dim,
        hidden_dim=args.hidden_dim,
        seed=args.seed,
    )


def cmd_train(args) -> None:
    if args.objective == "mle":
        if args.alpha is not None:
            print("warning: objective mle ignores --alpha", file=sys.stderr)
        alpha = 1.0
    else:
        if args.alpha is None:
            raise CliError(f"objective {args.objective} requires --alpha")
        alpha = args.alpha
    vocab = Vocabulary.load(args.vocab)
    sentences = read_corpus(args.corpus, apply_filter=False)
    encoded = [encode(s, vocab) for s in sentences]
    assignments, num_topics = topics_mod.read_assignments(args.topics)
    if len(assignments) != len(encoded):
        raise CliError(
            f"topic file has {len(assignments)} rows but corpus has {len(encoded)} sentences"
        )
    pairs = [(encoded[a.sentence_index], a.topic_id) for a in assignments]

    config = DroConfig(
        objective=args.objective,
        alpha=alpha,
        lr=args.lr,
        steps=args.steps,
        batch_size=args.batch_size,
        ewma_decay=args.ewma_decay,
        min_ratio=args.min_ratio,
        seed=args.seed,
        alpha_floor=args.alpha_floor,
        p_train=tuple(_floats(args.p_train)) if args.p_train else None,
    )
    out_dir = Path(args.out_dir)
    with output_lock(out_dir):
        baselines = None
        if args.objective == "topic-cvar":
            baselines = baseline_mod.fit_topic_baselines(pairs, num_topics, vocab_size=len(vocab))
            for k, model_k in baselines.items():
                baseline_mod.save_baseline(model_k, out_dir / baseline_mod.baseline_filename(k))
        model = _build_model(args, vocab, encoded)
        model, log = train(config, pairs, model, baselines=baselines, num_topics=num_topics)
        ckpt = out_dir / "model.ckpt"
        save_checkpoint(model, ckpt, vocab_hash=vocab.content_hash(), seed=args.seed)
        log.to_csv(out_dir / "train_log.csv")
        write_run_manifest(
            out_dir,
            "train",
            _manifest_args(args),
            [args.corpus, args.vocab, args.topics],
            [ckpt, out_dir / "train_log.csv"],
        )
    if log.effective_alpha != config.alpha and args.objective != "mle":
        print(f"note: alpha {config.alpha} clamped to {log.effective_alpha} (stability floor)")
    print(f"trained {args.objective} for {args.steps} steps; checkpoint at {ckpt}")


def cmd_eval(args) -> None:
    model = load_checkpoint(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    aligned = args.topics is not None
    sentences = read_corpus(args.corpus, apply_filter=not aligned)
    encoded = [encode(s, vocab) for s in sentences]
    topic_ids = None
    baselines = None
    if aligned:
        assignments, num_topics = topics_mod.read_assignments(args.topics)
        if len(assignments) != len(encoded):
            raise CliError(
                f"topic file has {len(assignments)} rows but corpus has {len(encoded)} sentences"
            )
        topic_ids = [a.topic_id for a in assignments]
        if args.baseline_dir is not None:
            baselines = {}
            for k in range(num_topics):
                path = Path(args.baseline_dir) / baseline_mod.baseline_filename(k)
                if path.is_file():
                    baselines[k] = baseline_mod.load_baseline(path)
    report = perplexity(
        model, encoded, topic_ids=topic_ids, baselines=baselines, corpus_name=Path(args.corpus).stem
    )
    out_dir = Path(args.out_dir)
    with output_lock(out_dir):
        report.to_json(out_dir / "eval.json")
        write_run_manifest(
            out_dir,
            "eval",
            _manifest_args(args),
            [args.checkpoint, args.corpus, args.vocab, args.topics],
            [out_dir / "eval.json"],
        )
    print(f"perplexity {report.perplexity:.4f} over {report.token_count} tokens")


def cmd_toy(args) -> None:
    from .figures import render_toy_panels

    report = run_toy(
        steps=args.steps,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        alpha=args.alpha,
    )
    out_dir = Path(args.out_dir)
    with output_lock(out_dir):
        report.to_json(out_dir / "toy_report.json")
        report.to_csv(out_dir / "toy_distributions.csv")
        render_toy_panels(report, out_dir / "toy_panels.png")
        write_run_manifest(
            out_dir,
            "toy",
            _manifest_args(args),
            [],
            [out_dir / "toy_report.json", out_dir / "toy_distributions.csv", out_dir / "toy_panels.png"],
        )
    for name, mode in sorted(report.modes.items()):
        kls = ", ".join(f"KL[{t}]={v:.3f}" for t, v in sorted(mode.kl_by_topic.items()))
        print(f"{name:>18}: p(f)={mode.p_ungrammatical:.4f}  {kls}")


def cmd_sweep(args) -> None:
    from .figures import render_alpha_choice, render_sweep_curves

    grid = _floats(args.alpha_train_grid)
    objectives = _strings(args.objectives)
    if not grid or not objectives:
        raise CliError("--alpha-train-grid and --objectives must be nonempty")
    mixture = MixtureSpec(
        target_corpus=str(args.target),
        nuisance_corpus=str(args.nuisance),
        alpha_train=grid[0],
        target_count=args.target_count,
        seed=args.seed,
    )
    base_config = DroConfig(
        objective=objectives[0],
        alpha=grid[0],
        lr=args.lr,
        steps=args.steps,
        batch_size=args.batch_size,
        ewma_decay=args.ewma_decay,
        min_ratio=args.min_ratio,
        seed=args.seed,
        alpha_floor=args.alpha_floor,
    )
    out_dir = Path(args.out_dir)
    sweep_kwargs = dict(
        top_k=args.top_k,
        topic_mode=args.topic_mode,
        context_size=args.context_size,
        embed_dim=args.embed_dim,
        hidden_dim=args.hidden_dim,
    )
    with output_lock(out_dir):
        if args.alphas:
            if len(grid) != 1:
                raise CliError("--alphas requires a single-element --alpha-train-grid")
            cells = [
                SweepCell(alpha_train=grid[0], objective=obj, alpha=a)
                for obj in objectives
                for a in ([grid[0]] if obj == "mle" else _floats(args.alphas))
            ]
            result = run_sweep(cells, base_config, mixture, args.test, out_dir, **sweep_kwargs)
        else:
            result = subpopulation_sweep(
                grid, objectives, base_config, mixture, args.test, out_dir, **sweep_kwargs
            )
        result.to_csv(out_dir / "sweep.csv")
        artifacts = [out_dir / "sweep.csv"]
        if args.alphas:
            cvar_rows = [r for r in result.rows if r.objective != "mle"]
            mle_rows = [r for r in result.rows if r.objective == "mle"]
            render_alpha_choice(
                cvar_rows, out_dir / "alpha_choice.png", mle_rows[0] if mle_rows else None
            )
            artifacts.append(out_dir / "alpha_choice.png")
        else:
            render_sweep_curves(result.rows, out_dir / "sweep_perplexity.png")
            artifacts.append(out_dir / "sweep_perplexity.png")
        write_run_manifest(
            out_dir,
            "sweep",
            _manifest_args(args),
            [args.target, args.nuisance, args.test],
            artifacts,
        )
    print(f"swept {len(result.rows)} cells; table at {out_dir / 'sweep.csv'}")


def cmd_scatter(args) -> None:
    from .figures import render_scatter

    model_a = load_checkpoint(args.checkpoint_a)
    model_b = load_checkpoint(args.checkpoint_b)
    vocab = Vocabulary.load(args.vocab)
    sentences = read_corpus(args.corpus, apply_filter=args.labels is None)
    if args.labels is not None:
        labels = Path(args.labels).read_text(encoding="utf-8").splitlines()
        if len(labels) != len(sentences):
            raise CliError(f"label file has {len(labels)} lines, corpus {len(sentences)}")
        sentences = [
            type(s)(tokens=s.tokens, source_label=label, surface=s.surface)
            for s, label in zip(sentences, labels)
        ]
    encoded = [encode(s, vocab) for s in sentences]
    rows = loss_scatter(model_a, model_b, encoded)
    out_dir = Path(args.out_dir)
    with output_lock(out_dir):
        write_scatter_csv(rows, out_dir / "scatter.csv")
        render_scatter(rows, out_dir / "scatter.png")
        write_run_manifest(
            out_dir,
            "scatter",
            _manifest_args(args),
            [args.checkpoint_a, args.checkpoint_b, args.corpus],
            [out_dir / "scatter.csv", out_dir / "scatter.png"],
        )
    print(f"wrote {len(rows)} scatter rows to {out_dir / 'scatter.csv'}")


def cmd_synth(args) -> None:
    spec = LanguageSpec(
        vocab_size=args.vocab_size,
        seed=args.seed,
        concentration=args.concentration,
        mean_length=args.mean_length,
        min_length=args.min_length,
        max_length=args.max_length,
    )
    out = Path(args.out)
    with output_lock(out.parent):
        make_corpus_file(out, args.sentences, spec, sample_seed=args.sample_seed)
        write_run_manifest(out.parent, "synth", _manifest_args(args), [], [out])
    print(f"wrote {args.sentences} synthetic sentences to {out}")


def _add_train_knobs(p: _Parser) -> None:
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=500)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--ewma-decay", type=float, default=DEFAULT_EWMA_DECAY)
    p.add_argument("--min-ratio", type=float, default=DEFAULT_MIN_RATIO)
    p.add_argument("--alpha-floor", type=float, default=DEFAULT_ALPHA_FLOOR,
                   help="clamp requested alpha below this value (0 disables)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--context-size", type=int, default=4)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=64)


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="robustlm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, _Parser] = {}

    def add(name: str, func, help_text: str) -> _Parser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None,
                       help="run manifest whose stored arguments become defaults")
        p.set_defaults(func=func)
        subparsers[name] = p
        return p

    p = add("build-vocab", cmd_build_vocab, "build the fixed joint vocabulary")
    p.add_argument("--corpus", nargs="+", required=True, help="one or more corpus paths")
    p.add_argument("--top-k", type=int, default=10_000)
    p.add_argument("--out", required=True)

    p = add("mix", cmd_mix, "build an alpha_train-covered training mixture")
    p.add_argument("--target", required=True)
    p.add_argument("--nuisance", required=True)
    p.add_argument("--alpha-train", type=float, required=True)
    p.add_argument("--target-count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("cluster", cmd_cluster, "assign a topic to every sentence")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--alpha-prior", type=float, default=0.1)
    p.add_argument("--beta-prior", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle-labels", default=None,
                   help="sidecar label file: ground-truth corpus identities")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "run one training objective")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--topics", required=True, help="assignment TSV from cluster")
    p.add_argument("--objective", choices=["mle", "topic-cvar", "topic-cvar-logloss", "sentence-cvar"],
                   required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--model", choices=["tabular", "neural-ngram"], default="neural-ngram")
    p.add_argument("--p-train", default=None,
                   help="comma floats: exact topic prior instead of the streaming estimate")
    _add_train_knobs(p)
    p.add_argument("--out-dir", required=True)

    p = add("eval", cmd_eval, "perplexity report for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--topics", default=None)
    p.add_argument("--baseline-dir", default=None)
    p.add_argument("--out-dir", required=True)

    p = add("toy", cmd_toy, "run all four objectives on the built-in six-sentence instance")
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=TOY_ALPHA)
    p.add_argument("--out-dir", required=True)

    p = add("sweep", cmd_sweep, "subpopulation-shift experiment grid")
    p.add_argument("--target", required=True)
    p.add_argument("--nuisance", required=True)
    p.add_argument("--test", required=True, help="held-out target corpus")
    p.add_argument("--alpha-train-grid", default="1.0,0.7,0.4,0.2,0.1")
    p.add_argument("--objectives", default="mle,topic-cvar")
    p.add_argument("--alphas", default=None,
                   help="comma floats: sweep solver alpha at a fixed alpha_train")
    p.add_argument("--target-count", type=int, required=True)
    p.add_argument("--top-k", type=int, default=10_000)
    p.add_argument("--topic-mode", choices=["oracle", "lda"], default="oracle")
    _add_train_knobs(p)
    p.add_argument("--out-dir", required=True)

    p = add("scatter", cmd_scatter, "per-sentence loss table for two checkpoints")
    p.add_argument("--checkpoint-a", required=True)
    p.add_argument("--checkpoint-b", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--labels", default=None, help="sidecar label file for coloring")
    p.add_argument("--out-dir", required=True)

    p = add("synth", cmd_synth, "emit a synthetic bigram-language corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--sentences", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-seed", type=int, default=None)
    p.add_argument("--concentration", type=float, default=2.5)
    p.add_argument("--mean-length", type=float, default=8.0)
    p.add_argument("--min-length", type=int, default=3)
    p.add_argument("--max-length", type=int, default=30)

    return parser, subparsers


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            stored = load_manifest_args(args.config)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        sub = subparsers[args.command]
        known = {a.dest for a in sub._actions}
        sub.set_defaults(**{k: v for k, v in stored.items() if k in known})
        for action in sub._actions:
            if action.dest in stored:
                action.required = False
        args = parser.parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
