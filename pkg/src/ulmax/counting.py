from dataclasses import dataclass


@dataclass
class OpCounter:
    """Per-run tallies of communication rounds, LOO calls and oracle queries."""

    comm: int = 0
    loo: int = 0
    queries: int = 0

    def reset(self):
        self.comm = self.loo = self.queries = 0
