"""Disambiguation instances and the two-file on-disk layout.

The data file is UTF-8 text, one instance per LF-terminated line, with
exactly 12 tab-separated columns: target word, full phrase, then ten
candidate image ids.  The gold file carries one image id per line,
aligned with the data file by line number.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import DatasetError
from .util import normalize_ws

N_CANDIDATES = 10


@dataclass(frozen=True)
class VwsdInstance:
    """One problem: an ambiguous word, its context phrase, ten images."""

    instance_id: str
    target_word: str
    context_word: str
    full_phrase: str
    candidate_ids: tuple[str, ...]
    gold_id: str

    def gold_position(self) -> int:
        """0-based slot of the gold image among the candidates."""
        return self.candidate_ids.index(self.gold_id)


@dataclass(frozen=True)
class Dataset:
    instances: tuple[VwsdInstance, ...]
    image_ids: frozenset[str]

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DatasetError(f"no such file: {path}") from None
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def _context_from(phrase: str, target: str) -> str:
    # Context is whatever remains of the phrase once the target word is
    # dropped; multi-word remainders are fine.  A phrase that does not
    # contain the target at all is kept whole.
    tokens = phrase.split()
    if target in tokens:
        tokens.remove(target)
        rest = " ".join(tokens)
        if rest:
            return rest
    return phrase


def _instance_id_width(n_lines: int) -> int:
    return max(4, len(str(max(n_lines - 1, 0))))


def load_dataset(data_path: str | Path, gold_path: str | Path) -> Dataset:
    """Parse and cross-validate the data/gold file pair."""
    data_path = Path(data_path)
    gold_path = Path(gold_path)
    data_lines = _read_lines(data_path)
    gold_lines = _read_lines(gold_path)
    if len(data_lines) != len(gold_lines):
        raise DatasetError(
            f"line count mismatch: {data_path} has {len(data_lines)} instances "
            f"but {gold_path} has {len(gold_lines)} answers"
        )

    width = _instance_id_width(len(data_lines))
    instances: list[VwsdInstance] = []
    for lineno, (line, gold_line) in enumerate(zip(data_lines, gold_lines), start=1):
        cols = line.split("\t")
        if len(cols) != 2 + N_CANDIDATES:
            raise DatasetError(
                f"{data_path}:{lineno}: expected {2 + N_CANDIDATES} tab-separated "
                f"columns, got {len(cols)}"
            )
        target = normalize_ws(cols[0])
        phrase = normalize_ws(cols[1])
        if not phrase:
            raise DatasetError(f"{data_path}:{lineno}: empty phrase")
        candidates = tuple(c.strip() for c in cols[2:])
        if any(not c for c in candidates):
            raise DatasetError(f"{data_path}:{lineno}: blank candidate image id")
        if len(set(candidates)) != N_CANDIDATES:
            raise DatasetError(f"{data_path}:{lineno}: candidate image ids must be distinct")
        gold_id = gold_line.strip()
        if gold_id not in candidates:
            raise DatasetError(
                f"{gold_path}:{lineno}: gold id {gold_id!r} is not among the candidates"
            )
        instances.append(
            VwsdInstance(
                instance_id=str(lineno - 1).zfill(width),
                target_word=target,
                context_word=_context_from(phrase, target),
                full_phrase=phrase,
                candidate_ids=candidates,
                gold_id=gold_id,
            )
        )

    image_ids = frozenset(c for inst in instances for c in inst.candidate_ids)
    return Dataset(instances=tuple(instances), image_ids=image_ids)


def write_dataset(dataset: Dataset, data_path: str | Path, gold_path: str | Path) -> None:
    """Serialize back to the two-file layout (inverse of load_dataset)."""
    data_lines = []
    gold_lines = []
    for inst in dataset.instances:
        data_lines.append("\t".join((inst.target_word, inst.full_phrase) + inst.candidate_ids))
        gold_lines.append(inst.gold_id)
    Path(data_path).write_text("".join(l + "\n" for l in data_lines), encoding="utf-8")
    Path(gold_path).write_text("".join(l + "\n" for l in gold_lines), encoding="utf-8")
