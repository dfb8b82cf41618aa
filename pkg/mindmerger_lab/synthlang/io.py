"""Plain-text corpus files.

Each dataset is one ``<name>.tsv`` file with one record per line::

    <language>\\t<kind>\\t<source tokens>\\t<target tokens>\\t<gold>

Tokens are space separated; ``kind`` is ``math``, ``compare``, ``translate`` or ``text`` (LM
pretraining lines, whose target and gold are empty). ``manifest.json`` lists the counts and seed.
"""

from pathlib import Path

from mindmerger_lab.core import TaskKind
from mindmerger_lab.synthlang.corpora import CorpusBundle, TextLine
from mindmerger_lab.synthlang.tasks import TaskExample
from mindmerger_lab.utils import canonical_json, write_text_atomic


TEXT_KIND = "text"
MANIFEST = "manifest.json"


def format_record(record: TaskExample | TextLine) -> str:
    if isinstance(record, TextLine):
        return "\t".join([record.language, TEXT_KIND, " ".join(record.tokens), "", ""])
    return "\t".join(
        [
            record.language,
            record.kind.value,
            " ".join(record.source),
            " ".join(record.target),
            record.gold,
        ]
    )


def parse_record(line: str) -> TaskExample | TextLine:
    fields = line.rstrip("\n").split("\t")
    if len(fields) != 5:
        raise ValueError(f"Corpus line must have 5 tab-separated fields, got {len(fields)}")
    language, kind, source, target, gold = fields
    tokens = tuple(source.split())
    if kind == TEXT_KIND:
        return TextLine(language, tokens)
    # the English source is not stored; it is recoverable through inverse_render
    return TaskExample(language, TaskKind(kind), tokens, tuple(target.split()), gold, ())


def write_records(path: Path, records) -> int:
    lines = [format_record(record) for record in records]
    write_text_atomic(path, "".join(f"{line}\n" for line in lines))
    return len(lines)


def read_records(path: Path) -> list[TaskExample | TextLine]:
    with open(path, encoding="utf-8") as file:
        return [parse_record(line) for line in file if line.strip()]


def write_corpus(bundle: CorpusBundle, out_dir: Path) -> dict[str, int]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name in (
        "lm_pretrain",
        "encoder_pairs",
        "mapping_pairs",
        "english_tasks",
        "query_translation",
        "translation_heldout",
    ):
        written[name] = write_records(out_dir / f"{name}.tsv", bundle.dataset(name))
    for name, sets in (("eval", bundle.eval_sets), ("ood_eval", bundle.ood_eval_sets)):
        records = [example for lang_id in bundle.world.languages for example in sets[lang_id]]
        written[name] = write_records(out_dir / f"{name}.tsv", records)
    pool = [
        TextLine(lang_id, sentence)
        for lang_id in bundle.world.languages
        for sentence in bundle.alignment_pool[lang_id]
    ]
    written["alignment_pool"] = write_records(out_dir / "alignment_pool.tsv", pool)
    write_text_atomic(out_dir / MANIFEST, canonical_json(bundle.manifest()) + "\n")
    return written
