"""
Kantorovich平均 - 実行時間の記録
段階ごとの所要時間を記録し、実行レポートの timings に渡す
"""
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, Iterator, List


@dataclass
class StageTiming:
    """1段階の所要時間"""
    name: str
    seconds: float
    timestamp: str = field(default_factory=lambda: datetime.now().strftime("%Y-%m-%d %H:%M:%S"))


def format_stage(timing: StageTiming) -> str:
    """
    所要時間を表示用にフォーマット

    Args:
        timing: 段階の記録

    Returns:
        str: フォーマットされた文字列
    """
    return f"⏱️ {timing.name}: {timing.seconds:.3f} 秒"


class RunTracker:
    """実行時間追跡クラス"""

    def __init__(self):
        self.stages: List[StageTiming] = []

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        """with ブロックの所要時間を name で記録（例外時も記録する）"""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.stages.append(StageTiming(name=name, seconds=time.perf_counter() - start))

    def get_total_seconds(self) -> float:
        """合計時間を取得"""
        return sum(s.seconds for s in self.stages)

    def to_dict(self) -> Dict[str, float]:
        """段階名ごとの合計秒数（同名の段階は足し合わせる）"""
        out: Dict[str, float] = {}
        for s in self.stages:
            out[s.name] = out.get(s.name, 0.0) + s.seconds
        return out

    def get_summary(self) -> str:
        """時間サマリを取得"""
        if not self.stages:
            return "時間の記録なし"
        header = f"⏱️ 合計 {self.get_total_seconds():.3f} 秒 ({len(self.stages)}段階)"
        return "\n".join([header] + [format_stage(s) for s in self.stages])
