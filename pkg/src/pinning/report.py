"""Check outcomes and their JSON form."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

PASSED = "passed"
FAILED = "failed"
REFUSED = "refused"
INFORMATIONAL = "informational"


def plain(x):
    """Convert numpy scalars/arrays and non-finite floats for JSON output."""
    if isinstance(x, dict):
        return {str(k): plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def dumps(obj) -> str:
    # json writes floats with repr, i.e. the shortest string that round-trips
    return json.dumps(plain(obj), indent=2, allow_nan=False)


@dataclass
class CheckReport:
    check_id: str
    params: dict
    margins: dict
    band: dict
    passed: bool | None
    status: str
    notes: list = field(default_factory=list)

    @classmethod
    def refused(cls, check_id: str, params: dict, reason: str) -> "CheckReport":
        return cls(check_id, params, {}, {}, None, REFUSED, [reason])

    @property
    def failed(self) -> bool:
        return self.status == FAILED

    def to_dict(self) -> dict:
        return plain({"check_id": self.check_id, "params": self.params, "margins": self.margins,
                      "band": self.band, "pass": self.passed, "status": self.status,
                      "notes": self.notes})

    def to_json(self) -> str:
        return dumps(self.to_dict())
