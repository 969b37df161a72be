"""
実行時間記録のテスト
"""
import sys
from pathlib import Path

import pytest

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from run_tracker import RunTracker, StageTiming, format_stage


def test_stages_are_summed_by_name():
    tracker = RunTracker()
    with tracker.stage("metric"):
        pass
    with tracker.stage("solve"):
        pass
    with tracker.stage("solve"):
        pass
    timings = tracker.to_dict()
    assert set(timings) == {"metric", "solve"}
    assert len(tracker.stages) == 3
    assert timings["solve"] == pytest.approx(tracker.stages[1].seconds + tracker.stages[2].seconds)
    assert tracker.get_total_seconds() >= 0.0


def test_stage_recorded_on_exception():
    tracker = RunTracker()
    with pytest.raises(RuntimeError):
        with tracker.stage("broken"):
            raise RuntimeError("boom")
    assert "broken" in tracker.to_dict(), "例外時も記録されるはず"


def test_summary_text():
    tracker = RunTracker()
    assert tracker.get_summary() == "時間の記録なし"
    with tracker.stage("mean"):
        pass
    summary = tracker.get_summary()
    assert "1段階" in summary
    assert summary.splitlines()[1].startswith("⏱️ mean: "), "段階ごとの行が続くはず"
    assert format_stage(StageTiming(name="mean", seconds=1.5)) == "⏱️ mean: 1.500 秒"
