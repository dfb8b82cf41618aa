import pytest

from mindmerger_lab.utils import (
    canonical_json,
    exception_to_str,
    load_template,
    stable_hash,
    write_template,
    write_text_atomic,
)


@pytest.mark.unit
class TestUtilsUnit:
    def test_exception_to_str(self):
        assert exception_to_str(ValueError("bad value")) == "ValueError: bad value"

    def test_canonical_json(self):
        assert canonical_json({"b": [1, 2], "a": "ü"}) == '{"a":"ü","b":[1,2]}'

    def test_stable_hash_ignores_key_order(self):
        first = stable_hash({"a": 1, "b": {"c": 2, "d": 3}})
        second = stable_hash({"b": {"d": 3, "c": 2}, "a": 1})
        assert first == second
        assert len(first) == 16
        assert stable_hash({"a": 2}) != stable_hash({"a": 1})

    def test_write_text_atomic(self, tmp_path):
        path = tmp_path / "nested" / "file.json"
        write_text_atomic(path, "one\n")
        write_text_atomic(path, "two\n")
        assert path.read_bytes() == b"two\n"
        assert [p.name for p in path.parent.iterdir()] == ["file.json"]

    def test_templates(self, tmp_path):
        path = tmp_path / "mindlab.yml"
        write_template("mindlab.yml", path)
        assert path.read_text(encoding="utf-8") == load_template("mindlab.yml")

    def test_missing_template(self):
        with pytest.raises(FileNotFoundError):
            load_template("missing.yml")
