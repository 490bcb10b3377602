"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: dict[str, str] = {}


def report(letter: str, ok: bool, detail: str) -> None:
    line = f"criterion {letter}: {'PASS' if ok else 'FAIL'} | {detail}"
    LINES[letter] = line
    print(line)
