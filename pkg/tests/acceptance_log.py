"""Collects acceptance verdict lines for the end-of-run summary block."""

LINES: list[str] = []


def record(line: str) -> None:
    LINES.append(line)
