import json

import pytest

from mindmerger_lab.core import TaskKind
from mindmerger_lab.synthlang.corpora import TextLine
from mindmerger_lab.synthlang.io import MANIFEST, format_record, parse_record, read_records, write_corpus
from mindmerger_lab.synthlang.tasks import math_example_from_expression


@pytest.mark.unit
class TestCorpusFilesUnit:
    def test_record_line(self):
        example = math_example_from_expression([2, 3], ["+"], "tom", "cups")
        line = format_record(example)
        assert line.split("\t")[:2] == ["en", "math"]
        assert line.endswith("\t5")

        parsed = parse_record(line + "\n")
        assert parsed.kind is TaskKind.MATH
        assert parsed.source == example.source
        assert parsed.target == example.target
        assert parsed.gold == "5"

    def test_text_line(self):
        parsed = parse_record(format_record(TextLine("hi1", ("hi1.w001", "."))))
        assert parsed == TextLine("hi1", ("hi1.w001", "."))

    def test_malformed_line(self):
        with pytest.raises(ValueError, match="5 tab-separated fields"):
            parse_record("en\tmath\tonly three")

    def test_write_corpus(self, tmp_path, tiny_bundle):
        written = write_corpus(tiny_bundle, tmp_path / "corpus")

        assert written["eval"] == 12
        assert written["alignment_pool"] == 12
        assert written["query_translation"] == 12
        assert len(read_records(tmp_path / "corpus" / "mapping_pairs.tsv")) == written["mapping_pairs"]
        manifest = json.loads((tmp_path / "corpus" / MANIFEST).read_text(encoding="utf-8"))
        assert manifest == json.loads(json.dumps(tiny_bundle.manifest()))

    def test_write_corpus_is_byte_stable(self, tmp_path, tiny_bundle):
        write_corpus(tiny_bundle, tmp_path / "a")
        write_corpus(tiny_bundle, tmp_path / "b")
        for path in sorted((tmp_path / "a").iterdir()):
            assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()
