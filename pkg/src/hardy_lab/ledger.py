"""Constants ledger: fitted constants recorded per configuration.

Regression tests compare against history, not absolute truth.  The ledger
is a flat JSON file keyed by "module/invariant/n/N/kind"; each entry stores
the fitted value, a relative tolerance, and a timestamp.  Refitting an
existing key requires an explicit opt-in.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import LedgerMissing


def ledger_key(module: str, invariant: str, n: int, N: int, kind: str) -> str:
    return f"{module}/{invariant}/n{n}/N{N}/{kind}"


@dataclass
class ConstantsLedger:
    path: Path

    def __post_init__(self):
        self.path = Path(self.path)

    def load(self) -> dict:
        if not self.path.exists():
            raise LedgerMissing(f"no ledger at {self.path}")
        return json.loads(self.path.read_text())

    def load_or_empty(self) -> dict:
        try:
            return self.load()
        except LedgerMissing:
            return {}

    def record(self, key: str, value: float, tolerance: float = 0.25, refit: bool = False):
        data = self.load_or_empty()
        if key in data and not refit:
            raise ValueError(
                f"ledger already holds {key!r}; pass refit to overwrite"
            )
        data[key] = {
            "value": float(value),
            "tolerance": float(tolerance),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(data, indent=2, sort_keys=True))

    def diff(self, current: dict) -> list:
        """Entries of `current` that moved beyond their recorded tolerance.

        Returns a list of (key, recorded, current, tolerance); keys absent
        from the ledger are ignored (they are new fits, not drifts).
        """
        data = self.load()
        drifted = []
        for key, value in current.items():
            if key not in data:
                continue
            rec = data[key]
            ref = rec["value"]
            tol = rec["tolerance"]
            denom = max(abs(ref), 1e-300)
            if abs(value - ref) / denom > tol:
                drifted.append((key, ref, float(value), tol))
        return drifted

    def show_rows(self) -> list:
        data = self.load_or_empty()
        return [
            (key, entry["value"], entry["tolerance"], entry["timestamp"])
            for key, entry in sorted(data.items())
        ]
