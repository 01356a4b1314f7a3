"""PASS / FAIL lines collected by the acceptance tests and echoed in the pytest summary."""
LINES: list[str] = []


def record(n: int, ok: bool, detail: str, seconds: float) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} ({seconds:.1f}s)"
    LINES.append(line)
    print(line, flush=True)
