"""Result rows and their CSV / JSON serialization."""
from dataclasses import dataclass, field
import csv
import io
import json
import math
import os

import numpy as np

from ..errors import InvalidArgument

_LEAD = ("experiment",)
_TAIL = ("metric", "value", "stderr", "trials")


@dataclass
class ResultRow:
    experiment: str
    metric: str
    value: float
    stderr: float
    trials: int
    params: dict = field(default_factory=dict)

    def to_record(self):
        rec = {"experiment": self.experiment}
        for k in sorted(self.params):
            rec[k] = _plain(self.params[k])
        rec.update(metric=self.metric, value=_plain(self.value), stderr=_plain(self.stderr),
                   trials=int(self.trials))
        return rec


def _plain(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def mean_stderr(x):
    """Mean and standard error of a 1-D sample (stderr 0 for one value)."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return math.nan, math.nan
    m = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return m, se


def columns(records):
    keys = set()
    for r in records:
        keys.update(r)
    mid = sorted(keys - set(_LEAD) - set(_TAIL))
    return list(_LEAD) + mid + list(_TAIL)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return json.dumps(v)
    return str(v)


def render(rows, fmt):
    """Serialize rows to a string in ``fmt`` ("csv" or "json")."""
    if not rows:
        raise InvalidArgument("no result rows to emit")
    recs = [r.to_record() if isinstance(r, ResultRow) else dict(r) for r in rows]
    if fmt == "json":
        return json.dumps(recs, indent=1) + "\n"
    if fmt != "csv":
        raise InvalidArgument(f"unknown format {fmt!r}")
    cols = columns(recs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(cols)
    for r in recs:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def emit(rows, fmt="csv", path=None):
    """Write rows to ``path`` (stdout when None). Nothing is written for no rows."""
    text = render(rows, fmt)
    if path is None:
        import sys
        sys.stdout.write(text)
        return
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
