"""Collects one pass/fail line per acceptance criterion."""

import re

LINES: list[str] = []


def record(number: int, ok: bool, text: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}"
    LINES.append(line)
    print(line)


def sort_key(line: str) -> int:
    return int(re.search(r"criterion (\d+)", line).group(1))
