"""Command-line entry point: ``pdfir <command> ...``.

Exit codes: 0 success (repaired parses included), 1 usage error, 2 I/O error,
3 configuration or checkpoint mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, pdf_to_org
from .attacks import ATTACKS, AttackBudget, compute_tra
from .config import ConfigError, PipelineConfig, load_manifest
from .corpus import sentences_from_org, split_corpus
from .embed import ObjectEmbedder, cloze_eval, majority_cloze_baseline
from .embed.checkpoint import CheckpointError
from .gin import Metrics, build_aorg, load_classifier
from .ir import convert_document, read_program, write_program
from .org import build_org, save_org
from .parser import parse_document

logger = logging.getLogger("pdfir")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers


def _pdf_files(source: Path) -> list[Path]:
    if source.is_file():
        return [source]
    if source.is_dir():
        return sorted(p for p in source.rglob("*") if p.is_file() and p.suffix.lower() == ".pdf")
    raise FileNotFoundError(f"no such file or directory: {source}")


def _org_from_path(path) -> object:
    return pdf_to_org(Path(path).read_bytes())


def _orgs(paths, jobs: int) -> list:
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_org_from_path, paths))
    return [_org_from_path(p) for p in paths]


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_log(path: Path, rows) -> None:
    """Tab-separated ``epoch loss metric`` lines."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["epoch\tloss\tmetric"]
    for i, (loss, metric) in enumerate(rows, start=1):
        lines.append(f"{i}\t{loss:.6f}\t{'nan' if metric is None else f'{metric:.6f}'}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _config(args, **overrides) -> PipelineConfig:
    return PipelineConfig.load(getattr(args, "config", None), {"seed": getattr(args, "seed", None), **overrides})


def _embedding_tag(embedder: ObjectEmbedder) -> str:
    return f"{embedder.scheme}:{embedder.config_hash()}:{embedder.vocab_.digest()[:16]}"


def _load_pair(args):
    embedder = ObjectEmbedder.load(args.embedding)
    model = load_classifier(args.model)
    expected = model.checkpoint_extra_.get("embedding")
    if expected != _embedding_tag(embedder):
        raise CheckpointError(
            f"classifier was trained on embedding {expected}, but {args.embedding} is {_embedding_tag(embedder)}")
    return embedder, model


def _aorgs(orgs, embedder, labels=None, names=None):
    labels = labels or [None] * len(orgs)
    names = names or [""] * len(orgs)
    return [build_aorg(o, embedder, y, n) for o, y, n in zip(orgs, labels, names)]


# ---------------------------------------------------------------------------
# commands


def cmd_parse(args) -> int:
    source = Path(args.input)
    files = _pdf_files(source)
    out = Path(args.out)
    for path in files:
        doc = parse_document(path.read_bytes())
        program = convert_document(doc)
        target = out if source.is_file() else out / path.relative_to(source).with_suffix("")
        write_program(program, target)
        (target / "diagnostics.tsv").write_text("".join(e.format() + "\n" for e in doc.diagnostics),
                                                encoding="utf-8")
        print(f"{path}\t{len(doc.objects)}\t{','.join(sorted(set(doc.codes))) or '-'}")
    return EXIT_OK


def cmd_graph(args) -> int:
    program = read_program(args.input)
    org = build_org(program)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_org(org, out)
    print(f"{out}\t{len(org)} nodes\t{len(org.edges)} edges")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _config(args, scheme=args.scheme, **{"embed.epochs": args.epochs})
    manifest = load_manifest(args.data)
    orgs = _orgs(manifest.paths, args.jobs)
    train, test, valid = split_corpus(list(range(len(orgs))), (0.7, 0.2, 0.1), cfg.seed)
    embedder = cfg.make_embedder().fit([orgs[i] for i in train])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    embedder.save(out)
    _write_log(Path(args.log or f"{out}.log"), [(loss, None) for loss in embedder.history_])
    held_out = valid or test
    sentences = [s.tokens for i in held_out for s in sentences_from_org(orgs[i]) if s.tokens]
    metrics = {"scheme": embedder.scheme, "config_hash": cfg.digest(),
               "embedding": _embedding_tag(embedder), "vocab_size": len(embedder.vocab_),
               "split": {"train": len(train), "test": len(test), "valid": len(valid)}}
    if sentences:
        metrics["cloze_accuracy"] = cloze_eval(embedder, sentences, cfg.seed)
        metrics["cloze_majority_baseline"] = majority_cloze_baseline(embedder.vocab_, sentences, cfg.seed)
        metrics["cloze_chance"] = 1.0 / max(1, len(embedder.vocab_) - 5)
    _write_json(Path(args.metrics or f"{out}.metrics.json"), metrics)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def _labeled_split(cfg, n):
    return split_corpus(list(range(n)), (0.7, 0.3), cfg.seed)


def cmd_train(args) -> int:
    overrides = {"classifier": "dnn" if args.dnn_baseline else None}
    if args.epochs is not None:
        overrides["dnn.epochs" if args.dnn_baseline else "gin.epochs"] = args.epochs
    cfg = _config(args, **overrides)
    embedder = ObjectEmbedder.load(args.embedding)
    manifest = load_manifest(args.data)
    orgs = _orgs(manifest.paths, args.jobs)
    aorgs = _aorgs(orgs, embedder, manifest.labels, [str(p) for p in manifest.paths])
    train, test = _labeled_split(cfg, len(aorgs))
    model = cfg.make_classifier().fit([aorgs[i] for i in train])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out, extra={"embedding": _embedding_tag(embedder), "config_hash": cfg.digest()})
    _write_log(Path(args.log or f"{out}.log"), [(h["loss"], h["acc"]) for h in model.history_])
    metrics = {"model": model.kind, "config_hash": cfg.digest(), "n_train": len(train), "n_test": len(test)}
    if test:
        metrics["test"] = Metrics.from_predictions(
            [aorgs[i].label for i in test], model.predict([aorgs[i] for i in test])).as_dict()
    _write_json(Path(args.metrics or f"{out}.metrics.json"), metrics)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_classify(args) -> int:
    embedder, model = _load_pair(args)
    files = _pdf_files(Path(args.input))
    aorgs = _aorgs(_orgs(files, args.jobs), embedder)
    proba = model.predict_proba(aorgs) if aorgs else np.zeros((0, 2))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["path", "label", "confidence_malicious"])
    for path, p in zip(files, proba):
        writer.writerow([str(path), "malicious" if p[1] > p[0] else "benign", f"{p[1]:.6f}"])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_eval(args) -> int:
    embedder, model = _load_pair(args)
    manifest = load_manifest(args.data)
    aorgs = _aorgs(_orgs(manifest.paths, args.jobs), embedder, manifest.labels)
    metrics = Metrics.from_predictions(manifest.labels, model.predict(aorgs)).as_dict()
    if args.out:
        _write_json(Path(args.out), metrics)
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_attack(args) -> int:
    overrides = {"attack.method": args.method, "attack.max_queries": args.max_queries}
    if args.budgets:
        try:
            overrides["attack.budgets"] = [int(b) for b in args.budgets.split(",")]
        except ValueError:
            raise UsageError(f"--budgets expects comma-separated integers, got {args.budgets!r}") from None
    cfg = _config(args, **overrides)
    embedder, model = _load_pair(args)
    if cfg.attack["method"] == "gradargmax" and model.kind != "gin":
        raise ConfigError("gradargmax needs a GIN classifier")
    manifest = load_manifest(args.data)
    names = [str(p) for p in manifest.paths]
    aorgs = _aorgs(_orgs(manifest.paths, args.jobs), embedder, manifest.labels, names)
    if args.split == "test":
        _, test = _labeled_split(cfg, len(aorgs))
        aorgs = [aorgs[i] for i in sorted(test)]
    if not aorgs:
        raise ConfigError("no samples to attack")
    a = cfg.attack
    method = a["method"]
    extra = {}
    if method == "genetic":
        extra = {"population": a["population"], "generations": a["generations"], "mutation_rate": a["mutation_rate"]}
    elif method == "random_noise":
        extra = {"sigma": a["sigma"], "k": a["k"]}
    rows, reports_out = [], []
    for budget in a["budgets"]:
        reports = []
        for i, g in enumerate(aorgs):
            kw = dict(extra)
            if method != "gradargmax":
                kw["rng"] = np.random.default_rng([cfg.seed, i])
            report = ATTACKS[method](model, g, budget=AttackBudget(budget, a["max_queries"]), **kw).report
            reports.append(report)
            reports_out.append({"budget": budget, **report.to_dict()})
        rows.append((budget, compute_tra(reports), float(np.mean([r.rpr for r in reports]))))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in reports_out), encoding="utf-8")
    summary = Path(args.summary or out.with_suffix(".csv"))
    lines = ["budget,tra,mean_rpr"] + [f"{b},{t:.6f},{r:.6f}" for b, t, r in rows]
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import malformed_fixtures, write_corpus

    out = Path(args.out)
    write_corpus(out, args.benign, args.malicious, args.seed)
    if args.fixtures:
        fx = out / "malformed"
        fx.mkdir(parents=True, exist_ok=True)
        expected = {}
        for name, data, codes in malformed_fixtures(args.seed):
            (fx / f"{name}.pdf").write_bytes(data)
            expected[name] = sorted(codes)
        _write_json(fx / "expected.json", expected)
    print(f"{out}\t{args.benign} benign\t{args.malicious} malicious")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pdfir", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True, config=True, jobs=True):
        if data:
            sp.add_argument("--data", required=True, help="manifest CSV or directory with benign/ and malicious/")
        if config:
            sp.add_argument("--config", help="JSON configuration file; flags override it")
            sp.add_argument("--seed", type=int)
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes for parsing")

    sp = sub.add_parser("parse", help="PDF file or directory -> IR files and repair diagnostics")
    sp.add_argument("input")
    sp.add_argument("-o", "--out", required=True)
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("graph", help="IR file -> object reference graph JSON")
    sp.add_argument("input")
    sp.add_argument("-o", "--out", required=True)
    sp.set_defaults(func=cmd_graph)

    sp = sub.add_parser("pretrain", help="train an embedding model on a corpus")
    common(sp)
    sp.add_argument("--scheme", choices=["cbow", "pvdm", "bert"])
    sp.add_argument("--epochs", type=int)
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--log")
    sp.add_argument("--metrics")
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("train", help="train a graph classifier on embedded graphs")
    common(sp)
    sp.add_argument("--embedding", required=True)
    sp.add_argument("--dnn-baseline", action="store_true", help="mean-pooled DNN instead of GIN")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--log")
    sp.add_argument("--metrics")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("classify", help="label PDFs as CSV rows")
    sp.add_argument("input")
    sp.add_argument("--embedding", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("-o", "--out")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("eval", help="classification metrics on a labeled set")
    common(sp, config=False)
    sp.add_argument("--embedding", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("-o", "--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("attack", help="run an attack over edit budgets")
    common(sp)
    sp.add_argument("--embedding", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--method", choices=sorted(ATTACKS))
    sp.add_argument("--budgets", help="comma-separated edit budgets")
    sp.add_argument("--max-queries", type=int)
    sp.add_argument("--split", choices=["test", "all"], default="test")
    sp.add_argument("-o", "--out", required=True, help="per-sample reports (JSON lines)")
    sp.add_argument("--summary", help="sweep CSV, default next to --out")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("synth", help="write a synthetic labeled corpus")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--benign", type=int, default=100)
    sp.add_argument("--malicious", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--fixtures", action="store_true", help="also write the malformed fixture set")
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("pdfir: error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"pdfir: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except OSError as exc:
        print(f"pdfir: {exc}", file=sys.stderr)
        return EXIT_IO
    except UsageError as exc:
        print(f"pdfir: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
