"""Collects one result line per acceptance criterion for the terminal summary."""

LINES: dict = {}


def record(number: int, ok: bool, detail: str) -> bool:
    LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(LINES[number])
    return ok


def note(key: str, text: str):
    LINES[key] = f"info: {text}"
    print(LINES[key])
