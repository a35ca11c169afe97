"""One pass/fail line per acceptance criterion, printed in the pytest summary."""

from __future__ import annotations

RESULTS: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    RESULTS[number] = line
    print(line)
