"""Aggregate sentence embeddings into per-report topic blocks and write outputs.

Inputs:

* a corpus directory of ``<report_id>.txt`` files, one sentence per line;
* ``labels.csv``: report_id, sentence_idx, label [, sentiment in pos/neg/neu];
* ``meta.csv``: report_id, firm_id, analyst_id, broker_id, release_date
  [, recommendation, eps_forecast, target_price].

Per report and group the block is the token-weighted mean of that group's
sentence vectors and the group weight is its token share, so the weights sum
to one and the consumer's reconstruction identity holds exactly.

Reports are processed in deterministic batches; every completed batch is
appended to a JSONL journal, so an interrupted run resumes where it stopped
and produces output identical to an uninterrupted one.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binformat import write_embeddings
from .providers import embed_with_retries

log = logging.getLogger(__name__)

META_FIELDS = ["report_id", "firm_id", "analyst_id", "broker_id", "release_date"]
OPTIONAL_META = ["recommendation", "eps_forecast", "target_price"]
REPORT_HEADER = META_FIELDS[:1] + META_FIELDS[1:] + OPTIONAL_META + ["n_pos", "n_neg", "n_sent"]


@dataclass
class AdapterJob:
    corpus_dir: Path
    labels_path: Path
    meta_path: Path
    out_dir: Path
    provider_name: str = "hash"
    model: str | None = None
    dim: int = 64
    batch_size: int = 16          # reports per provider batch
    journal_path: Path | None = None
    max_attempts: int = 5
    base_delay: float = 0.5

    def __post_init__(self):
        self.corpus_dir = Path(self.corpus_dir)
        self.labels_path = Path(self.labels_path)
        self.meta_path = Path(self.meta_path)
        self.out_dir = Path(self.out_dir)
        if self.journal_path is None:
            self.journal_path = self.out_dir / "journal.jsonl"


@dataclass
class ReportText:
    report_id: str
    sentences: list[str]
    labels: list[str]
    sentiments: list[str] = field(default_factory=list)


def load_labels(path) -> dict[str, dict[int, tuple[str, str]]]:
    out: dict[str, dict[int, tuple[str, str]]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"report_id", "sentence_idx", "label"}
        if not required <= set(reader.fieldnames or []):
            raise ValueError(f"{path}: needs columns {sorted(required)}")
        for row in reader:
            idx = int(row["sentence_idx"])
            sentiment = (row.get("sentiment") or "neu").strip()
            out.setdefault(row["report_id"], {})[idx] = (row["label"].strip(), sentiment)
    return out


def load_meta(path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in META_FIELDS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in reader:
            out[row["report_id"]] = row
    return out


def collect_reports(job: AdapterJob) -> tuple[list[ReportText], list[str]]:
    """Pair corpus files with their sentence labels, in deterministic order."""
    labels = load_labels(job.labels_path)
    reports = []
    group_set: set[str] = set()
    for path in sorted(job.corpus_dir.glob("*.txt")):
        rid = path.stem
        sentences = [line.strip() for line in path.read_text().splitlines() if line.strip()]
        if rid not in labels:
            raise ValueError(f"no labels for report {rid!r}")
        label_map = labels[rid]
        missing = [i for i in range(len(sentences)) if i not in label_map]
        if missing:
            raise ValueError(f"report {rid!r}: unlabeled sentences {missing[:5]}")
        labs = [label_map[i][0] for i in range(len(sentences))]
        sents = [label_map[i][1] for i in range(len(sentences))]
        group_set.update(labs)
        reports.append(ReportText(rid, sentences, labs, sents))
    return reports, sorted(group_set)


def aggregate_report(
    report: ReportText, vectors: np.ndarray, tokens: list[int], groups: list[str]
) -> tuple[np.ndarray, np.ndarray]:
    """Token-weighted group means and token-share weights for one report."""
    g, d = len(groups), vectors.shape[1]
    sums = np.zeros((g, d))
    tok = np.zeros(g)
    pos = {lab: k for k, lab in enumerate(groups)}
    for vec, n_tok, lab in zip(vectors, tokens, report.labels):
        k = pos[lab]
        sums[k] += n_tok * vec
        tok[k] += n_tok
    blocks = np.zeros((g, d))
    nonzero = tok > 0
    blocks[nonzero] = sums[nonzero] / tok[nonzero, None]
    weights = tok / tok.sum()
    return weights, blocks


def _journal_append(path: Path, entry: dict) -> None:
    with open(path, "a") as f:
        f.write(json.dumps(entry, sort_keys=True) + "\n")


def _journal_load(path: Path) -> dict[int, dict]:
    done = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            done[entry["batch"]] = entry
    return done


def embed_corpus(job: AdapterJob, provider=None) -> dict:
    """Run the conversion; resumable via the journal. Returns run metadata."""
    from .providers import make_provider

    provider = provider or make_provider(job.provider_name, dim=job.dim, model=job.model)
    job.out_dir.mkdir(parents=True, exist_ok=True)
    reports, groups = collect_reports(job)
    meta = load_meta(job.meta_path)
    missing_meta = [r.report_id for r in reports if r.report_id not in meta]
    if missing_meta:
        raise ValueError(f"meta.csv is missing reports {missing_meta[:5]}")

    batches = [reports[i : i + job.batch_size] for i in range(0, len(reports), job.batch_size)]
    done = _journal_load(job.journal_path)
    if done:
        log.info("resuming: %d of %d batches already journaled", len(done), len(batches))

    dim: int | None = None
    for entry in done.values():
        for rec in entry["reports"].values():
            dim = len(rec["blocks"][0])
            break
        break

    for bi, batch in enumerate(batches):
        if bi in done:
            continue
        texts = [s for rep in batch for s in rep.sentences]
        vectors, tokens = embed_with_retries(
            provider, texts, max_attempts=job.max_attempts, base_delay=job.base_delay
        )
        vectors = np.asarray(vectors, dtype=np.float64)
        if dim is None:
            dim = vectors.shape[1]
        elif vectors.shape[1] != dim:
            raise ValueError(
                f"embedding dimension drifted from {dim} to {vectors.shape[1]} in batch {bi}"
            )
        entry = {"batch": bi, "reports": {}}
        offset = 0
        for rep in batch:
            n = len(rep.sentences)
            weights, blocks = aggregate_report(
                rep, vectors[offset : offset + n], tokens[offset : offset + n], groups
            )
            offset += n
            entry["reports"][rep.report_id] = {
                "weights": weights.tolist(),
                "blocks": blocks.tolist(),
                "n_pos": sum(1 for s in rep.sentiments if s == "pos"),
                "n_neg": sum(1 for s in rep.sentiments if s == "neg"),
                "n_sent": n,
            }
        _journal_append(job.journal_path, entry)
        done[bi] = entry

    # assemble outputs in corpus order from the journal
    per_report = {}
    for entry in done.values():
        per_report.update(entry["reports"])
    order = [r.report_id for r in reports]
    weights = np.array([per_report[r]["weights"] for r in order])
    blocks = np.array([per_report[r]["blocks"] for r in order], dtype=np.float32)
    write_embeddings(job.out_dir / "embeddings.bin", groups, order, weights, blocks)

    with open(job.out_dir / "reports.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_HEADER)
        for rid in order:
            m = meta[rid]
            rec = per_report[rid]
            writer.writerow(
                [rid] + [m[c] for c in META_FIELDS[1:]]
                + [m.get(c, "") or "" for c in OPTIONAL_META]
                + [rec["n_pos"], rec["n_neg"], rec["n_sent"]]
            )

    run_meta = {
        **provider.metadata(),
        "groups": groups,
        "n_reports": len(order),
        "batch_size": job.batch_size,
        "journal": str(job.journal_path),
    }
    (job.out_dir / "adapter_meta.json").write_text(json.dumps(run_meta, indent=2, sort_keys=True))
    return run_meta
