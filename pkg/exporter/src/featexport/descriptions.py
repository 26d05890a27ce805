"""Description-file parsing.

Input files are UTF-8 text, one record per blank-line-separated block: the
first line names the class, the remaining lines are its description.  A block
with a single line uses the class name itself as the description (the common
case for object templates).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

OBJECT_TEMPLATE = "a photo of {object}"


def object_template(name: str) -> str:
    return OBJECT_TEMPLATE.format(object=name)


@dataclass
class DescriptionSet:
    entries: list[tuple[str, str]]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("description set is empty")
        names = [name for name, _ in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        for name, text in self.entries:
            if not text.strip():
                raise ValueError(f"empty description for {name!r}")

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    @property
    def texts(self) -> list[str]:
        return [text for _, text in self.entries]

    @classmethod
    def parse(cls, text: str) -> "DescriptionSet":
        entries = []
        for block in text.split("\n\n"):
            lines = [line.strip() for line in block.splitlines() if line.strip()]
            if not lines:
                continue
            name = lines[0]
            description = " ".join(lines[1:]) if len(lines) > 1 else name
            entries.append((name, description))
        return cls(entries)

    @classmethod
    def load(cls, path) -> "DescriptionSet":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def from_object_names(cls, names: list[str]) -> "DescriptionSet":
        """Template-expanded object set: 'a photo of <object>'."""
        return cls([(name, object_template(name)) for name in names])
