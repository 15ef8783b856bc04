"""Convert the upstream StaQC distribution into JSONL corpus files.

The upstream Python subset ships as pickle files mapping question ids to
titles and (question id, snippet position) keys to code snippets, one set
annotated automatically and one by hand. Output is three JSONL files in
the corpus schema consumed by the codesearch pipeline, plus a manifest
with counts and content checksums.

These pickles come from a known dataset distribution; do not point this
tool at untrusted files.
"""

from __future__ import annotations

import hashlib
import json
import pickle
import random
from dataclasses import dataclass, field
from pathlib import Path

# upstream filenames, as distributed in the StaQC repository's
# code_solution_labeled_data/source directory (Python subset)
AUTO_TITLES = "python_how_to_do_it_by_classifier_multiple_qid_to_title.pickle"
AUTO_SNIPPETS = "python_how_to_do_it_by_classifier_multiple_iid_to_code.pickle"
MANUAL_TITLES = "python_manually_annotated_qid_to_title.pickle"
MANUAL_SNIPPETS = "python_manually_annotated_iid_to_code.pickle"

TRAIN_FILE = "train_auto.jsonl"
DEV_FILE = "manual_dev.jsonl"
EVAL_FILE = "manual_eval.jsonl"
MANIFEST_FILE = "manifest.json"

_SCHEMA_KEYS = {"id", "question", "code", "origin"}
_ORIGINS = {"train_auto", "manual_dev", "manual_eval"}


class ConversionError(Exception):
    pass


@dataclass
class StaqcRecord:
    """One (question, snippet) pair from the upstream distribution."""

    question_id: int
    answer_pos: int
    title: str
    code: str

    @property
    def pair_id(self) -> str:
        return f"{self.question_id}-{self.answer_pos}"


@dataclass
class ConversionResult:
    out_dir: Path
    counts: dict[str, int]
    skipped: int
    checksums: dict[str, str] = field(default_factory=dict)


def _load_pickle(staqc_dir: Path, name: str):
    path = staqc_dir / name
    if not path.is_file():
        raise ConversionError(f"missing upstream file: {path}")
    try:
        with open(path, "rb") as fh:
            return pickle.load(fh, encoding="latin-1")
    except Exception as exc:
        raise ConversionError(f"corrupt upstream file: {path} ({exc})") from exc


def _normalize_key(key) -> tuple[int, int]:
    """Snippet keys are (question_id, position) tuples; position may be missing."""
    if isinstance(key, tuple) and len(key) == 2:
        return int(key[0]), int(key[1])
    return int(key), 0


def _collect(titles: dict, snippets: dict, source_name: str) -> tuple[list[StaqcRecord], int]:
    records = []
    skipped = 0
    for key in sorted(snippets, key=_normalize_key):
        question_id, answer_pos = _normalize_key(key)
        if question_id not in titles:
            raise ConversionError(
                f"{source_name}: question {question_id} has a snippet but no title"
            )
        title = str(titles[question_id])
        code = str(snippets[key])
        if not title.strip() or not code.strip():
            skipped += 1
            continue
        records.append(StaqcRecord(question_id, answer_pos, title, code))
    return records, skipped


def _write_jsonl(records: list[StaqcRecord], origin: str, path: Path) -> int:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "id": rec.pair_id,
                        "question": rec.title,
                        "code": rec.code,
                        "origin": origin,
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
    return len(records)


def validate_corpus_file(path: Path) -> int:
    """Check a JSONL file against the corpus schema; returns the line count."""
    seen: set[str] = set()
    count = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConversionError(f"{path}:{lineno}: invalid JSON") from exc
            if set(rec) != _SCHEMA_KEYS:
                raise ConversionError(f"{path}:{lineno}: wrong keys {sorted(rec)}")
            if rec["origin"] not in _ORIGINS:
                raise ConversionError(f"{path}:{lineno}: bad origin {rec['origin']!r}")
            if not str(rec["question"]).strip() or not str(rec["code"]).strip():
                raise ConversionError(f"{path}:{lineno}: empty question or code")
            if rec["id"] in seen:
                raise ConversionError(f"{path}:{lineno}: duplicate id {rec['id']!r}")
            seen.add(rec["id"])
            count += 1
    return count


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def convert(staqc_dir: str | Path, out_dir: str | Path, dev_eval_seed: int) -> ConversionResult:
    """Produce train_auto / manual_dev / manual_eval JSONL files plus a manifest.

    The manually annotated pairs are shuffled under `dev_eval_seed` and cut
    in half (dev gets the extra pair when the count is odd).
    """
    staqc_dir = Path(staqc_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    auto_titles = _load_pickle(staqc_dir, AUTO_TITLES)
    auto_snippets = _load_pickle(staqc_dir, AUTO_SNIPPETS)
    manual_titles = _load_pickle(staqc_dir, MANUAL_TITLES)
    manual_snippets = _load_pickle(staqc_dir, MANUAL_SNIPPETS)

    auto_records, skipped_auto = _collect(auto_titles, auto_snippets, AUTO_SNIPPETS)
    manual_records, skipped_manual = _collect(manual_titles, manual_snippets, MANUAL_SNIPPETS)

    shuffled = list(manual_records)
    random.Random(dev_eval_seed).shuffle(shuffled)
    half = (len(shuffled) + 1) // 2
    dev = sorted(shuffled[:half], key=lambda r: (r.question_id, r.answer_pos))
    eval_ = sorted(shuffled[half:], key=lambda r: (r.question_id, r.answer_pos))

    counts = {
        TRAIN_FILE: _write_jsonl(auto_records, "train_auto", out_dir / TRAIN_FILE),
        DEV_FILE: _write_jsonl(dev, "manual_dev", out_dir / DEV_FILE),
        EVAL_FILE: _write_jsonl(eval_, "manual_eval", out_dir / EVAL_FILE),
    }
    for name, expected in counts.items():
        validated = validate_corpus_file(out_dir / name)
        if validated != expected:
            raise ConversionError(f"{name}: wrote {expected} pairs but validated {validated}")

    result = ConversionResult(
        out_dir=out_dir,
        counts=counts,
        skipped=skipped_auto + skipped_manual,
        checksums={name: _sha256(out_dir / name) for name in counts},
    )
    manifest = {
        "seed": dev_eval_seed,
        "pairs": counts,
        "skipped": result.skipped,
        "sha256": result.checksums,
    }
    (out_dir / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return result
