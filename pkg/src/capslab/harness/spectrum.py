"""Action log to amplitude spectrum CSV and smoothness summary."""
from __future__ import annotations

from pathlib import Path

from ..caps import SmoothnessReport, smoothness
from ..envs import read_action_log


def spectrum_export(log_path, f_s: float, out_dir=None, window: str | None = None) -> SmoothnessReport:
    """Compute the spectrum of every action channel in a trajectory CSV.

    With ``out_dir`` set, writes ``spectrum.csv`` (freq plus one amplitude
    column per channel) and ``sm.json`` there.
    """
    actions = read_action_log(log_path)
    names = [f"action_{i}" for i in range(actions.shape[1])]
    report = smoothness(actions, f_s, window=window, channel_names=names)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "spectrum.csv").write_text(report.to_csv())
        (out / "sm.json").write_text(report.to_json() + "\n")
    return report
