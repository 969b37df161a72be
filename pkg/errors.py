"""
Kantorovich平均 - エラー定義
型付き例外と終了コードの対応（CLIで使用）
"""
from typing import Any, Dict, List, Optional

# 終了コード
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOT_CONVERGED = 3


class KantorovichError(Exception):
    """本パッケージの全エラーの基底クラス"""
    code: str = "KantorovichError"
    exit_code: int = EXIT_DATA
    base_message: str = "処理に失敗しました"

    def __init__(self, detail: Optional[str] = None, **context: Any):
        self.detail = detail
        self.context: Dict[str, Any] = context
        message = self.base_message if not detail else f"{self.base_message}: {detail}"
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        """レポート用の辞書表現"""
        return {"code": self.code, "message": str(self), **self.context}


def _error(name: str, message: str, exit_code: int = EXIT_DATA) -> type:
    return type(name, (KantorovichError,), {"code": name, "base_message": message, "exit_code": exit_code})


# ==================== core ====================
EmptyCollection = _error("EmptyCollection", "ヒストグラムが1件もありません")
AllZeroCollection = _error("AllZeroCollection", "全てのヒストグラムの質量が0です")
DegenerateMetric = _error("DegenerateMetric", "距離行列のサイズが2未満です")
ZeroMedianMetric = _error("ZeroMedianMetric", "非対角成分の中央値が0のため λ を自動設定できません")
InvalidMetric = _error("InvalidMetric", "距離行列が距離の公理を満たしません")


class NegativeOrNonFiniteEntry(KantorovichError):
    """負値またはNaN/Infを含む入力"""
    code = "NegativeOrNonFiniteEntry"
    base_message = "負の値または非有限値が含まれています"

    def __init__(self, index: Any, value: float):
        super().__init__(f"位置 {index} の値 {value}", index=str(index), value=str(value))
        self.index = index


# ==================== metric_build ====================
MetricTooLarge = _error("MetricTooLarge", "距離行列が上限サイズを超えています")
InvalidMask = _error("InvalidMask", "マスクが不正です")


class DisconnectedMesh(KantorovichError):
    """辺グラフが非連結"""
    code = "DisconnectedMesh"
    base_message = "メッシュの辺グラフが連結ではありません"

    def __init__(self, component_sizes: List[int]):
        super().__init__(f"連結成分のサイズ {component_sizes}", component_sizes=component_sizes)
        self.component_sizes = component_sizes


# ==================== sinkhorn / kantorovich / barycenter ====================
NotConverged = _error("NotConverged", "反復が収束しませんでした", EXIT_NOT_CONVERGED)
MassMismatch = _error("MassMismatch", "2つの周辺分布の総質量が一致しません")
NonFiniteKernel = _error("NonFiniteKernel", "カーネル exp(-λC) が非有限になりました")
ZeroEntryInFirstMarginal = _error("ZeroEntryInFirstMarginal", "第1周辺分布に0の成分があるため勾配を定義できません")
NonPositiveDelta = _error("NonPositiveDelta", "仮想点コスト Δ は正でなければなりません")
MassExceedsOne = _error("MassExceedsOne", "ヒストグラムの質量が1を超えています")
ZeroRealMass = _error("ZeroRealMass", "実在ビンの質量が全て0のため射影できません")

# ==================== oracle / simulate ====================
SizeGuard = _error("SizeGuard", "厳密ソルバーの対象サイズを超えています")
SubdivisionOutOfRange = _error("SubdivisionOutOfRange", "細分割回数は0〜5の範囲で指定してください")
InvalidLabel = _error("InvalidLabel", "ラベルが不正です")


# ==================== io ====================
class ParseError(KantorovichError):
    """行番号付きの解析エラー"""
    code = "ParseError"
    base_message = "ファイルの解析に失敗しました"

    def __init__(self, detail: str, line: Optional[int] = None, column: Optional[int] = None):
        where = ""
        if line is not None:
            where = f"{line}行目"
            if column is not None:
                where += f" {column}列目"
            where += ": "
        super().__init__(f"{where}{detail}", line=line, column=column)
        self.line = line
        self.column = column


def _parse_error(name: str, message: str) -> type:
    return type(name, (ParseError,), {"code": name, "base_message": message})


MalformedHeader = _parse_error("MalformedHeader", "OFFヘッダーが不正です")
NonTriangleFace = _parse_error("NonTriangleFace", "三角形以外の面が含まれています")
IndexOutOfRange = _parse_error("IndexOutOfRange", "頂点インデックスが範囲外です")
MissingField = _parse_error("MissingField", "必須フィールドがありません")
BadMaskIndex = _parse_error("BadMaskIndex", "マスクのインデックスが不正です")
RaggedRows = _parse_error("RaggedRows", "行ごとの列数が揃っていません")
NonNumericField = _parse_error("NonNumericField", "数値でないフィールドがあります")
BadMagic = _parse_error("BadMagic", "距離キャッシュのマジックナンバーが不正です")
VersionUnsupported = _parse_error("VersionUnsupported", "距離キャッシュのバージョンに対応していません")
TruncatedPayload = _parse_error("TruncatedPayload", "距離キャッシュのデータが途中で切れています")
