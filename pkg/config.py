"""
Kantorovich平均 - 実行時設定
環境変数 / .env から読み込む（python-dotenv）
"""
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

# 環境変数読み込み
load_dotenv()


class RuntimeSettings(BaseModel):
    """実行時設定（CLIフラグで上書き可能）"""
    metric_cap: int = Field(default=20000, ge=2, description="密な距離行列の最大サイズ d")
    threads: int = Field(default=1, ge=1, description="並列ワーカー数（--threads 未指定時）")
    log_level: str = Field(default="INFO", description="ログレベル")
    triangle_cap: int = Field(default=512, ge=3, description="三角不等式チェックを行う最大 d")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        v = v.strip().upper()
        if v not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"不明なログレベルです: {v}")
        return v


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        return default


_settings: Optional[RuntimeSettings] = None


def get_settings(reload: bool = False) -> RuntimeSettings:
    """
    実行時設定を取得（初回のみ環境変数を読む）

    Args:
        reload: Trueの場合、環境変数を読み直す

    Returns:
        RuntimeSettings: 実行時設定
    """
    global _settings
    if _settings is None or reload:
        _settings = RuntimeSettings(
            metric_cap=_env_int("KMEAN_METRIC_CAP", 20000),
            threads=_env_int("KMEAN_THREADS", 1),
            log_level=os.getenv("KMEAN_LOG_LEVEL", "INFO") or "INFO",
            triangle_cap=_env_int("KMEAN_TRIANGLE_CAP", 512),
        )
    return _settings
