import hashlib
from importlib import resources
import json
from pathlib import Path
from typing import Any


def exception_to_str(exception: Exception) -> str:
    return f"{type(exception).__name__}: {exception!s}"


def load_template(template_name: str) -> str:
    return resources.files("mindmerger_lab.template").joinpath(template_name).read_text(
        encoding="utf-8"
    )


def write_template(template_name: str, dst_path: Path) -> None:
    template = load_template(template_name)
    with open(dst_path, "w", encoding="utf-8") as file:
        file.write(template)


def canonical_json(obj: Any) -> str:
    """Serialize ``obj`` with sorted keys and no insignificant whitespace.

    Two structurally equal objects always produce the same string, which is what makes the
    fingerprints and metrics files byte-stable.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def stable_hash(obj: Any, length: int = 16) -> str:
    digest = hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
    return digest[:length]


def write_text_atomic(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    with open(tmp_path, "w", encoding="utf-8", newline="\n") as file:
        file.write(content)
    tmp_path.replace(path)
