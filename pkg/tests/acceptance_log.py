"""Collects one verdict line per acceptance criterion for the terminal summary."""

RESULTS: dict[int, tuple[bool, str, str]] = {}


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    RESULTS[number] = (bool(passed), title, detail)
    return bool(passed)


def lines() -> list[str]:
    out = []
    for n in sorted(RESULTS):
        ok, title, detail = RESULTS[n]
        out.append(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    return out
