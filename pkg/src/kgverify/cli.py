"""Command-line entry point: ``kgverify {ingest,sample,verify,report}``.

Exit codes: 0 clean, 1 usage or configuration error, 2 partial run failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from kgverify.agent import SessionRecord, run_batch
from kgverify.bench import (
    InsufficientPositives,
    aggregate_stats,
    build_testset,
    build_type_index,
    compute_metrics,
    read_testset,
    write_testset,
)
from kgverify.config import ABLATIONS, CLI_MODES, ConfigError, RunConfig, load_config
from kgverify.graph import GraphLoadError, KnowledgeGraph, ResolutionError, Triple, read_triples, resolve
from kgverify.llm import UsageLedger
from kgverify.runtime import build_encoder, build_graph, build_runtime, pricing

log = logging.getLogger("kgverify")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--dataset", help="directory holding triples.tsv, entities.tsv, relations.tsv, test_positives.tsv")
    p.add_argument("--mode", choices=sorted(CLI_MODES), help="agent, rag (single-shot baseline) or zeroshot")
    p.add_argument("--ablate", nargs="*", choices=ABLATIONS, help="component groups to switch off")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="test-set size")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--out", help="output file")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgverify", description="Agentic knowledge-graph triple verification")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("ingest", help="load a graph, write the index cache, print counts")
    _common(p)
    p = sub.add_parser("sample", help="write a balanced labeled test set")
    _common(p)
    p = sub.add_parser("verify", help="verify one triple or a test-set file")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--triple", help="'head|relation|tail' by identifier, label or alias")
    src.add_argument("--input", help="test-set file (line-delimited records)")
    p = sub.add_parser("report", help="metrics, tool statistics and cost tables")
    _common(p)
    p.add_argument("--sessions", nargs="+", required=True, help="session record files")
    p.add_argument("--testset", help="test-set file the sessions were run on")
    p.add_argument("--force", action="store_true", help="accept session files with mixed config checksums")
    return parser


def _dataset_overrides(path: str | None) -> dict:
    if path is None:
        return {}
    d = Path(path)
    if not d.is_dir():
        raise UsageError(f"dataset directory not found: {d}")
    out: dict = {"dataset": d.name}
    for key, name in (("triples", "triples.tsv"), ("entities", "entities.tsv"),
                      ("relations", "relations.tsv"), ("test_positives", "test_positives.tsv")):
        if (d / name).exists():
            out[key] = str((d / name).resolve())
    if "triples" not in out:
        raise UsageError(f"{d} has no triples.tsv")
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {
        **_dataset_overrides(args.dataset),
        "mode": args.mode, "seed": args.seed, "n": args.n, "concurrency": args.concurrency,
        "ablate": list(args.ablate) if args.ablate is not None else None,
    }
    cfg = cfg.with_overrides(overrides)
    if not cfg.triples:
        raise ConfigError("no dataset configured (set 'triples' in the config or pass --dataset)")
    return cfg


def _default_out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out_dir) / name


def _write_config_sidecar(out: Path, cfg: RunConfig) -> None:
    side = out.with_name(out.name + ".config.json")
    payload = {"checksum": cfg.checksum(), "config": cfg.as_dict()}
    side.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _file_state(path: str | None) -> tuple[int, int] | None:
    if path is None or not os.path.exists(path):
        return None
    st = os.stat(path)
    return st.st_mtime_ns, st.st_size


# --------------------------------------------------------------------------- commands


def cmd_ingest(cfg: RunConfig, out: str | None = None) -> int:
    cache = out or cfg.cache or str(_default_out(cfg, f"{cfg.dataset}.kgcache"))
    Path(cache).parent.mkdir(parents=True, exist_ok=True)
    before = _file_state(cache)
    g = build_graph(RunConfig(**{**cfg.as_dict(), "cache": cache}))
    hit = before is not None and before == _file_state(cache)
    s = g.summary()
    print(f"{s['entities']:,} entities / {s['relations']:,} relations / {s['triples']:,} triples")
    print(f"cache: {'hit' if hit else 'written'} ({cache})")
    return EXIT_OK


def _positives(cfg: RunConfig, g: KnowledgeGraph) -> list[Triple]:
    if cfg.test_positives:
        return read_triples(cfg.test_positives)
    log.warning("no test_positives configured; sampling from the graph itself")
    return sorted(g.triples)


def cmd_sample(cfg: RunConfig, out: str | None) -> int:
    g = build_graph(cfg)
    idx = build_type_index(g, cfg.typing_relations)
    items = build_testset(_positives(cfg, g), g, idx, cfg.n, cfg.seed, cfg.exclude_known_facts)
    path = Path(out) if out else _default_out(cfg, "testset.jsonl")
    path.parent.mkdir(parents=True, exist_ok=True)
    write_testset(path, items, cfg.checksum())
    _write_config_sidecar(path, cfg)
    n_true = sum(i.label for i in items)
    fallbacks = sum(1 for i in items if i.fallback)
    print(f"wrote {len(items)} triples ({n_true} true / {len(items) - n_true} false) to {path}; seed {cfg.seed}")
    if fallbacks:
        print(f"{fallbacks} negatives used the shared-type fallback pool")
    return EXIT_OK


def parse_triple_arg(text: str, g: KnowledgeGraph, cfg: RunConfig) -> Triple:
    parts = [p.strip() for p in text.split("|")]
    if len(parts) != 3 or not all(parts):
        raise UsageError(f"--triple expects 'head|relation|tail', got {text!r}")
    enc = build_encoder(cfg)
    try:
        h = resolve(g, parts[0], "entity", enc, min_similarity=cfg.min_similarity)
        r = resolve(g, parts[1], "relation", enc, min_similarity=cfg.min_similarity)
        t = resolve(g, parts[2], "entity", enc, min_similarity=cfg.min_similarity)
    except ResolutionError as exc:
        raise UsageError(str(exc)) from exc
    return Triple(h, r, t)


def cmd_verify(cfg: RunConfig, triple: str | None, input_path: str | None, out: str | None) -> int:
    rt = build_runtime(cfg)
    if triple is not None:
        items: list[tuple[Triple, bool | None]] = [(parse_triple_arg(triple, rt.graph, cfg), None)]
    else:
        labeled, _ = read_testset(input_path)
        items = [(i.triple, i.label) for i in labeled]
    ledger = UsageLedger(pricing(cfg))
    records = run_batch(items, rt.env, rt.session, rt.backends, concurrency=cfg.concurrency, ledger=ledger)
    path = Path(out) if out else _default_out(cfg, "sessions.jsonl")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    _write_config_sidecar(path, cfg)
    failed = [r for r in records if r.error]
    if triple is not None:
        rec = records[0]
        v = rec.verdict
        print(f"Target: {rec.target_text}")
        if v.valid_format:
            print(f"Verdict: {v.label}")
            print(f"Because: {v.explanation}")
            for turn in v.evidence_chain:
                step = rec.steps[turn - 1]
                print(f"  [evidence {turn}] {step.action_text}")
                for line in step.result.rendering.splitlines():
                    print(f"      {line}")
        else:
            print(f"Verdict: invalid ({rec.error or 'unparseable final answer'})")
    print(f"{len(records)} sessions, {len(failed)} failed; records in {path}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _read_sessions(paths: Sequence[str]) -> list[SessionRecord]:
    out = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip():
                    try:
                        out.append(SessionRecord.from_json(line))
                    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                        raise UsageError(f"{p}:{lineno}: bad session record: {exc}") from exc
    return out


def _align(sessions: list[SessionRecord], testset_path: str) -> list[bool]:
    items, _ = read_testset(testset_path)
    truths = []
    for s in sessions:
        try:
            i = int(s.session_id)
        except ValueError:
            raise UsageError(f"session id {s.session_id!r} is not a test-set position") from None
        if not 0 <= i < len(items) or items[i].triple != s.target:
            raise UsageError(f"session {s.session_id} does not match the test set entry at that position")
        truths.append(items[i].label)
    return truths


def cmd_report(cfg: RunConfig, session_paths: Sequence[str], testset: str | None, out: str | None, force: bool) -> int:
    sessions = _read_sessions(session_paths)
    if not sessions:
        print("no sessions to report")
        return EXIT_OK
    checksums = sorted({s.config_checksum for s in sessions})
    if len(checksums) > 1 and not force:
        raise UsageError(f"session files mix config checksums {checksums}; pass --force to combine them")
    sessions.sort(key=lambda s: (s.session_id, s.config_checksum))
    if testset:
        truths = _align(sessions, testset)
        for s, t in zip(sessions, truths):
            s.truth = t
    elif any(s.truth is None for s in sessions):
        raise UsageError("sessions carry no ground truth; pass --testset")
    else:
        truths = [bool(s.truth) for s in sessions]
    metrics = compute_metrics([s.prediction for s in sessions], truths)
    stats = aggregate_stats(sessions, pricing(cfg))
    print(metrics.render(cfg.dataset))
    print()
    print(stats.render())
    print(f"\nconfig checksum(s): {', '.join(c or '(none)' for c in checksums)}")
    if out:
        payload = {"metrics": metrics.as_dict(), "stats": stats.records(), "config_checksums": checksums}
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if args.command == "ingest":
            return cmd_ingest(cfg, args.out)
        if args.command == "sample":
            return cmd_sample(cfg, args.out)
        if args.command == "verify":
            return cmd_verify(cfg, args.triple, args.input, args.out)
        return cmd_report(cfg, args.sessions, args.testset, args.out, args.force)
    except (UsageError, ConfigError, InsufficientPositives) as exc:
        print(f"kgverify: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"kgverify: error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphLoadError, ValueError) as exc:
        print(f"kgverify: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
