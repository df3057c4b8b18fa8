"""Minimal ``[section]`` / ``key = value`` text format with line tracking.

Used for the run configuration files and for the shipped tap-table presets.
Comments start with '#' or ';'. Values keep everything after the first '='.
"""

from __future__ import annotations

from dataclasses import dataclass


class ConfigParseError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ConfigValue:
    value: str
    line_no: int


def parse_sections(text: str) -> dict[str, dict[str, ConfigValue]]:
    """Parse into {section: {key: ConfigValue}}; duplicate keys are errors."""
    sections: dict[str, dict[str, ConfigValue]] = {}
    current: str | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigParseError(f"malformed section header {line!r}", line_no)
            current = line[1:-1].strip().lower()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {line!r}", line_no)
        if current is None:
            raise ConfigParseError("key outside any [section]", line_no)
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.split("#", 1)[0].split(";", 1)[0].strip()
        if key in sections[current]:
            raise ConfigParseError(f"duplicate key {key!r} in [{current}]", line_no)
        sections[current][key] = ConfigValue(value=value, line_no=line_no)
    return sections
