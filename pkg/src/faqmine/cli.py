"""Command-line pipeline: ingest, preprocess, mine, assemble, evaluate, export, serve."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import date
from pathlib import Path

from . import __version__, assembly, corpus, evaluation, exports, preprocess, topics


def _digest(path: str | Path) -> str:
    return hashlib.sha1(Path(path).read_bytes()).hexdigest()


def _run_id(parent: str, params: dict) -> str:
    payload = parent + "|" + json.dumps(params, sort_keys=True)
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:16]


def _provenance(parent: str, params: dict) -> dict:
    return {"run_id": _run_id(parent, params), "parent": parent, "params": params}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    after = date.fromisoformat(args.after) if args.after else None
    result = corpus.load_corpus(args.input, label=args.label, after=after)
    for error in result.errors:
        print(f"warning: {error.path}: {error.message}", file=sys.stderr)
    corpus.write_corpus_json(result.conversations, args.out)
    print(f"{len(result.conversations)} conversations -> {args.out}")
    return 0 if not result.errors else 1


def cmd_preprocess(args) -> int:
    conversations = corpus.load_corpus_file(args.corpus)
    config = preprocess.ViewConfig(
        rules=preprocess.load_rules(args.rules) if args.rules else preprocess.default_rules(),
        stopwords=(
            preprocess.load_wordlist(args.stopwords)
            if args.stopwords
            else preprocess.default_stopwords()
        ),
        domain_stopwords=(
            preprocess.load_wordlist(args.domain_stopwords)
            if args.domain_stopwords
            else frozenset()
        ),
        strip_rules=not args.no_rules,
        prune_sentences=not args.no_repeated_sentences,
        filter_stopwords=not args.no_stopword_filter,
        drop_long=not args.no_long_paragraph_filter,
        drop_punctuation_heavy=not args.no_punctuation_filter,
    )
    views = preprocess.preprocess_corpus(conversations, config)
    preprocess.write_views_json(views, args.out)
    n_tokens = sum(len(e.tokens) for v in views for e in v.entries)
    print(f"{len(views)} conversations, {n_tokens} mining tokens -> {args.out}")
    return 0


def cmd_mine(args) -> int:
    views = preprocess.load_views_file(args.views)
    _, lda_corpus = topics.build_lda_corpus(views)
    model = topics.fit(
        lda_corpus,
        args.topics,
        iterations=args.iterations,
        seed=args.seed,
        optimize_every=args.optimize_every,
        burn_in=args.burn_in,
    )
    params = {
        "topics": args.topics,
        "iterations": args.iterations,
        "seed": args.seed,
        "optimize_every": args.optimize_every,
        "burn_in": args.burn_in,
    }
    topics.save_model(model, args.out, provenance=_provenance(_digest(args.views), params))
    print(
        f"model: K={args.topics}, V={model.vocabulary.size}, "
        f"{len(model.doc_ids)} docs ({len(lda_corpus.excluded)} empty excluded) -> {args.out}"
    )
    return 0


def cmd_assemble(args) -> int:
    views = preprocess.load_views_file(args.views)
    model = topics.load_model(args.model)
    association = topics.associate(model, args.assoc_threshold)
    config = assembly.AssemblyConfig(
        question_cos_threshold=args.q_threshold,
        answer_cos_threshold=args.a_threshold,
        max_question_chars=args.max_qlen,
        faq_min_ratio=args.faq_ratio,
    )
    candidates = assembly.assemble(association, model, views, config)
    kept, removed = assembly.split_unfocused(candidates, config.faq_min_ratio)
    params = {
        "assoc_threshold": args.assoc_threshold,
        "q_threshold": args.q_threshold,
        "a_threshold": args.a_threshold,
        "max_qlen": args.max_qlen,
        "faq_ratio": args.faq_ratio,
    }
    assembly.write_faqs_json(
        candidates,
        args.out,
        filtered_ids=[c.topic_id for c in removed],
        provenance=_provenance(_digest(args.model), params),
    )
    total = sum(len(c.qas) for c in kept)
    print(
        f"{len(kept)} FAQs ({len(removed)} filtered as unfocused), {total} Q&A pairs -> {args.out}"
    )
    return 0


def cmd_evaluate(args) -> int:
    conversations = corpus.load_corpus_file(args.corpus)
    labeled = corpus.LabeledCorpus.from_conversations(conversations)
    config = evaluation.PipelineConfig(
        n_topics=args.topics,
        iterations=args.iterations,
        burn_in=args.burn_in,
        optimize_every=args.optimize_every,
        seed=args.seed,
        assoc_threshold=args.assoc_threshold,
    )
    reports = evaluation.run_reconstruction(labeled, config)
    evaluation.write_reconstruction_csv(reports, args.out)
    print(evaluation.format_reconstruction_table(reports))
    print(f"report -> {args.out}")
    if args.sweep:
        deviations = []
        for spec in args.sweep:
            name, _, value = spec.partition("=")
            if not value:
                raise SystemExit(f"sweep spec must be name=value, got {spec!r}")
            deviations.append((name, value))
        rows = evaluation.parameter_sweep(labeled, deviations, config)
        sweep_out = args.sweep_out or str(Path(args.out).with_suffix("")) + "-sweep.csv"
        evaluation.write_sweep_csv(rows, sweep_out)
        print()
        print(evaluation.format_sweep_table(rows))
        print(f"sweep -> {sweep_out}")
    return 0


def cmd_synth(args) -> int:
    spec = evaluation.SyntheticSpec(
        n_lists=args.lists,
        convs_per_list=args.convs,
        exclusive_words=args.exclusive_words,
        shared_words=args.shared_words,
        seed=args.seed,
        long_noise_prob=args.noise,
    )
    labeled = evaluation.synthesize_labeled_corpus(spec)
    corpus.write_corpus_json(labeled.conversations, args.out)
    print(f"{len(labeled.conversations)} conversations over {args.lists} lists -> {args.out}")
    return 0


def cmd_export(args) -> int:
    candidates, filtered, provenance = assembly.load_faqs_file(args.faq)
    by_id = {c.topic_id: c for c in candidates}
    if args.id not in by_id:
        raise SystemExit(f"no FAQ with topic id {args.id} in {args.faq}")
    faq = exports.finalize_candidate(
        by_id[args.id],
        run_id=str(provenance.get("run_id", "")),
        params=provenance.get("params", {}),
        finalized=False,
    )
    try:
        if args.format == "xml":
            document = exports.export_xml(faq, allow_unreviewed=args.allow_unreviewed)
        else:
            document = exports.export_html(faq, allow_unreviewed=args.allow_unreviewed)
    except exports.ExportError as exc:
        raise SystemExit(str(exc))
    Path(args.out).write_text(document, encoding="utf-8")
    print(f"{args.format} export of topic {args.id} -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    serve(args.project, port=args.port, static_dir=args.static, host=args.host)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faqmine",
        description="Extract reviewable FAQs from software-development discussions.",
    )
    parser.add_argument("--version", action="version", version=f"faqmine {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse mbox/JSON archives into a conversation corpus")
    p.add_argument("--input", nargs="+", required=True, help="mbox or corpus-JSON files")
    p.add_argument("--label", required=True, help="source list label")
    p.add_argument("--after", help="drop conversations opened before this date (YYYY-MM-DD)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="build display and mining views")
    p.add_argument("--corpus", required=True)
    p.add_argument("--rules", help="boilerplate regex file (default: bundled rules)")
    p.add_argument("--stopwords", help="stopword file (default: bundled English list)")
    p.add_argument("--domain-stopwords", help="project-specific stopword file")
    p.add_argument("--no-rules", action="store_true")
    p.add_argument("--no-repeated-sentences", action="store_true")
    p.add_argument("--no-stopword-filter", action="store_true")
    p.add_argument("--no-long-paragraph-filter", action="store_true")
    p.add_argument("--no-punctuation-filter", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("mine", help="fit the topic model over mining views")
    p.add_argument("--views", required=True)
    p.add_argument("--topics", type=int, required=True)
    p.add_argument("--iterations", type=int, default=topics.DEFAULT_ITERATIONS)
    p.add_argument("--burn-in", type=int, default=topics.DEFAULT_BURN_IN)
    p.add_argument("--optimize-every", type=int, default=topics.DEFAULT_OPTIMIZE_EVERY)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("assemble", help="select, score and order Q&A pairs per topic")
    p.add_argument("--model", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--assoc-threshold", type=float, default=0.25)
    p.add_argument("--q-threshold", type=float, default=assembly.DEFAULT_COS_THRESHOLD)
    p.add_argument("--a-threshold", type=float, default=assembly.DEFAULT_COS_THRESHOLD)
    p.add_argument("--max-qlen", type=int, default=assembly.DEFAULT_MAX_QUESTION_CHARS)
    p.add_argument("--faq-ratio", type=float, default=assembly.DEFAULT_FAQ_MIN_RATIO)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("evaluate", help="mailing-list reconstruction metrics and sweeps")
    p.add_argument("--corpus", required=True, help="labeled corpus JSON")
    p.add_argument("--topics", type=int, help="default: number of source lists")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--burn-in", type=int, default=150)
    p.add_argument("--optimize-every", type=int, default=25)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--assoc-threshold", type=float, default=0.25)
    p.add_argument(
        "--sweep",
        nargs="*",
        metavar="NAME=VALUE",
        help=f"parameter deviations; names: {', '.join(evaluation.SWEEP_PARAMETERS)}",
    )
    p.add_argument("--sweep-out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--lists", type=int, default=5)
    p.add_argument("--convs", type=int, default=120)
    p.add_argument("--exclusive-words", type=int, default=40)
    p.add_argument("--shared-words", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.18)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export", help="export one FAQ as XML or HTML")
    p.add_argument("--faq", required=True, help="faqs.json from assemble")
    p.add_argument("--id", type=int, required=True, help="topic id")
    p.add_argument("--format", choices=("xml", "html"), default="xml")
    p.add_argument(
        "--allow-unreviewed",
        action="store_true",
        help="export without a completed review session",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="serve the review API (and UI, if built)")
    p.add_argument("--project", required=True, help="directory containing faqs.json")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="static UI bundle directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
