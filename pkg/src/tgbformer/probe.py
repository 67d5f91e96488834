"""Runtime invariant collection for forward passes."""

from __future__ import annotations


class Probe:
    """Accumulates named pass/fail checks; a name fails if any check under it fails.

    Forward functions take ``probe=None`` and only evaluate their invariants
    when a probe is supplied, so ordinary calls pay nothing.
    """

    def __init__(self):
        self.results: dict[str, bool] = {}

    def check(self, name: str, ok) -> None:
        self.results[name] = self.results.get(name, True) and bool(ok)

    def passed(self) -> bool:
        return all(self.results.values())
