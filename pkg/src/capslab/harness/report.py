"""Aggregate per-seed results into comparison tables."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .config import MODES
from .runner import RunResult

# Sm is printed in thousandths so table cells stay readable
SM_SCALE = 1e3


@dataclass
class Aggregate:
    mean: float | None
    std: float | None
    median: float | None

    @classmethod
    def of(cls, values) -> "Aggregate":
        vals = [v for v in values if v is not None]
        if not vals:
            return cls(None, None, None)
        arr = np.asarray(vals, dtype=float)
        return cls(float(arr.mean()), float(arr.std()), float(np.median(arr)))


@dataclass
class ReportRow:
    label: str
    seeds: int
    failed: int
    f_s: float | None
    reward: Aggregate
    sm: Aggregate
    mae: Aggregate
    shift_reward: Aggregate | None = None
    shift_sm: Aggregate | None = None
    shift_mae: Aggregate | None = None
    filtered_sm: Aggregate | None = None


@dataclass
class ComparisonReport:
    rows: list[ReportRow]
    baseline: str | None
    deltas: dict[str, dict[str, float | None]]
    results: dict[str, list[RunResult]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "rows": [asdict(r) for r in self.rows],
            "deltas": self.deltas,
            "results": {k: [r.to_dict() for r in v] for k, v in self.results.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        rows = []
        for r in d["rows"]:
            r = dict(r)
            for key, value in r.items():
                if isinstance(value, dict):
                    r[key] = Aggregate(**value)
            rows.append(ReportRow(**r))
        results = {k: [RunResult.from_dict(x) for x in v] for k, v in d.get("results", {}).items()}
        return cls(rows, d.get("baseline"), d.get("deltas", {}), results)

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        return cls.from_dict(json.loads(text))

    def row(self, label: str) -> ReportRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def _maybe(results, key: str, attr: str) -> Aggregate | None:
    blocks = [getattr(r, key) for r in results if not r.failed]
    if not any(b is not None for b in blocks):
        return None
    return Aggregate.of(getattr(b, attr) if b is not None else None for b in blocks)


def _row(label: str, results: list[RunResult]) -> ReportRow:
    ok = [r for r in results if not r.failed]
    return ReportRow(
        label=label,
        seeds=len(results),
        failed=len(results) - len(ok),
        f_s=ok[0].f_s if ok else None,
        reward=Aggregate.of(r.eval.reward_mean for r in ok),
        sm=Aggregate.of(r.eval.sm for r in ok),
        mae=Aggregate.of(r.eval.mae for r in ok),
        shift_reward=_maybe(results, "shift", "reward_mean"),
        shift_sm=_maybe(results, "shift", "sm"),
        shift_mae=_maybe(results, "shift", "mae"),
        filtered_sm=_maybe(results, "filtered", "sm"),
    )


def _pct(value: float | None, base: float | None) -> float | None:
    if value is None or base is None or base == 0:
        return None
    return 100.0 * (value - base) / abs(base)


def build_report(groups: dict[str, list[RunResult]], baseline: str | None = "vanilla") -> ComparisonReport:
    """Rows in the order given, seeds sorted; deltas are against ``baseline`` if present."""
    groups = {k: sorted(v, key=lambda r: r.seed) for k, v in groups.items()}
    rows = [_row(label, results) for label, results in groups.items()]
    base = next((r for r in rows if r.label == baseline), None)
    deltas = {}
    if base is not None:
        for r in rows:
            if r.label != baseline:
                deltas[r.label] = {
                    "reward_pct": _pct(r.reward.mean, base.reward.mean),
                    "sm_pct": _pct(r.sm.mean, base.sm.mean),
                }
    return ComparisonReport(rows, baseline if base is not None else None, deltas, dict(groups))


def _cell(agg: Aggregate | None, scale: float = 1.0, digits: int = 2) -> str:
    if agg is None or agg.mean is None:
        return "-"
    return f"{agg.mean * scale:.{digits}f} ± {agg.std * scale:.{digits}f}"


def _pct_cell(v: float | None) -> str:
    return "-" if v is None else f"{v:+.1f}%"


def report_render(report: ComparisonReport) -> str:
    """Aligned plain-text table. Sm is shown x1e3."""
    has_shift = any(r.shift_sm is not None for r in report.rows)
    has_filter = any(r.filtered_sm is not None for r in report.rows)
    header = ["config", "seeds", "failed", "reward", "Sm x1e3", "MAE"]
    if report.baseline:
        header += ["d reward", "d Sm"]
    if has_shift:
        header += ["shift reward", "shift Sm x1e3", "shift MAE"]
    if has_filter:
        header += ["filtered Sm x1e3"]
    lines = []
    for r in report.rows:
        cells = [r.label, str(r.seeds), str(r.failed), _cell(r.reward), _cell(r.sm, SM_SCALE), _cell(r.mae, digits=3)]
        if report.baseline:
            d = report.deltas.get(r.label, {})
            cells += [_pct_cell(d.get("reward_pct")), _pct_cell(d.get("sm_pct"))]
        if has_shift:
            cells += [_cell(r.shift_reward), _cell(r.shift_sm, SM_SCALE), _cell(r.shift_mae, digits=3)]
        if has_filter:
            cells += [_cell(r.filtered_sm, SM_SCALE)]
        lines.append(cells)
    widths = [max(len(row[i]) for row in [header] + lines) for i in range(len(header))]

    def fmt(row):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip()

    out = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(row) for row in lines]
    f_s = sorted({r.f_s for r in report.rows if r.f_s is not None})
    if f_s:
        out.append(f"Sm sampling rate f_s = {', '.join(f'{f:g}' for f in f_s)} Hz")
    return "\n".join(out) + "\n"


def write_report(report: ComparisonReport, run_dir: Path) -> None:
    run_dir = Path(run_dir)
    (run_dir / "report.json").write_text(report.to_json())
    (run_dir / "report.txt").write_text(report_render(report))


def collect_results(run_dir: Path) -> dict[str, list[RunResult]]:
    """Re-read persisted ``result.json`` files from a run or sweep directory.

    A sweep directory has one subdirectory per mode; a plain run has the
    seed directories at its root.
    """
    run_dir = Path(run_dir)
    groups: dict[str, list[RunResult]] = {}
    files = sorted(run_dir.glob("**/seed_*/result.json"))
    if not files:
        raise ParseError(f"no seed_*/result.json files under {run_dir}")
    for path in files:
        try:
            result = RunResult.from_dict(json.loads(path.read_text()))
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            raise ParseError(f"{path}: {exc}") from exc
        groups.setdefault(result.label, []).append(result)
    known = [m for m in MODES if m in groups]
    order = known + sorted(k for k in groups if k not in known)
    return {k: groups[k] for k in order}
