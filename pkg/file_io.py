"""
Kantorovich平均 - ファイル入出力
OFFメッシュ、格子仕様JSON、CSV行列、距離キャッシュ（KMET）、ラベルJSON、レポートJSON
"""
import json
import re
import struct
from typing import Any, Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

import errors
from metric_build import as_ground_metric
from models import GridSpec, GroundMetric, Label, TriMesh
from utils import get_logger

logger = get_logger(__name__)

CACHE_MAGIC = b"KMET"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sIQ")

# 10進表記（指数部は任意）。nan / inf は受け付けない
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
# ASCII の10進整数のみ（全角数字・上付き数字・"--2" は不可）
_INTEGER = re.compile(r"^[+-]?[0-9]+$")


def _format_float(x: float) -> str:
    """最短で往復一致する10進表記"""
    return repr(float(x))


def _content_lines(text: str) -> Iterator[Tuple[int, str]]:
    """コメント（#以降）と空行を除いた (行番号, 内容)"""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_number(token: str, line: int, column: int) -> float:
    if not _NUMBER.match(token):
        raise errors.NonNumericField(f"'{token}'", line=line, column=column)
    return float(token)


def _parse_int(token: str, line: int, column: int) -> int:
    if not _INTEGER.match(token):
        raise errors.NonNumericField(f"'{token}'（整数が必要です）", line=line, column=column)
    return int(token)


# ==================== OFFメッシュ ====================
def parse_off(text: str) -> TriMesh:
    """
    OFF形式のテキストを読み込む（面は0始まりの三角形のみ）

    Args:
        text: ファイル内容

    Returns:
        TriMesh: 検証済みメッシュ
    """
    lines = _content_lines(text)
    first = next(lines, None)
    if first is None or first[1] != "OFF":
        raise errors.MalformedHeader("先頭行が 'OFF' ではありません", line=first[0] if first else 1)

    counts = next(lines, None)
    if counts is None:
        raise errors.MalformedHeader("頂点数・面数の行がありません", line=first[0] + 1)
    lineno, content = counts
    fields = content.split()
    if len(fields) not in (2, 3) or not all(_INTEGER.match(f) and not f.startswith("-") for f in fields):
        raise errors.MalformedHeader(f"'nv nf ne' の形式ではありません: '{content}'", line=lineno)
    nv, nf = int(fields[0]), int(fields[1])

    vertices = np.zeros((nv, 3))
    for k in range(nv):
        entry = next(lines, None)
        if entry is None:
            raise errors.MalformedHeader(f"頂点が {nv} 個に足りません（{k} 個）", line=lineno)
        lineno, content = entry
        tokens = content.split()
        if len(tokens) != 3:
            raise errors.ParseError(f"頂点行は 'x y z' の3つの値が必要です（{len(tokens)} 個）", line=lineno)
        vertices[k] = [_parse_number(t, lineno, col) for col, t in enumerate(tokens, start=1)]

    faces = np.zeros((nf, 3), dtype=np.int64)
    for k in range(nf):
        entry = next(lines, None)
        if entry is None:
            raise errors.MalformedHeader(f"面が {nf} 個に足りません（{k} 個）", line=lineno)
        lineno, content = entry
        tokens = content.split()
        values = [_parse_int(t, lineno, col) for col, t in enumerate(tokens, start=1)]
        count = values[0]
        if count != 3 or len(tokens) != 4:
            raise errors.NonTriangleFace(f"頂点数 {count} の面", line=lineno)
        for col, idx in enumerate(values[1:], start=2):
            if not 0 <= idx < nv:
                raise errors.IndexOutOfRange(f"インデックス {idx}（頂点数 {nv}）", line=lineno, column=col)
            faces[k, col - 2] = idx

    try:
        mesh = TriMesh(vertices=vertices, faces=faces)
    except ValidationError as e:
        raise errors.ParseError(e.errors()[0].get("msg", str(e))) from e
    logger.debug(f"OFFを読み込みました: 頂点={nv}, 面={nf}")
    return mesh


def write_off(mesh: TriMesh) -> str:
    """TriMesh を OFF テキストに変換（座標は往復一致する表記）"""
    out = ["OFF", f"{mesh.n_vertices} {len(mesh.faces)} 0"]
    for x, y, z in mesh.vertices:
        out.append(f"{_format_float(x)} {_format_float(y)} {_format_float(z)}")
    for i, j, k in mesh.faces:
        out.append(f"3 {i} {j} {k}")
    return "\n".join(out) + "\n"


# ==================== 格子仕様 ====================
def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise errors.ParseError(e.msg, line=e.lineno, column=e.colno) from e


def parse_gridspec(text: str) -> GridSpec:
    """
    {"shape": [nx,ny,nz], "voxel_size_mm": [dx,dy,dz], "mask": [...]} を読み込む

    Args:
        text: JSONテキスト

    Returns:
        GridSpec: mask 省略時は全ボクセル
    """
    data = _load_json(text)
    if not isinstance(data, dict):
        raise errors.ParseError("JSONオブジェクトが必要です", line=1)
    for key in ("shape", "voxel_size_mm"):
        if key not in data:
            raise errors.MissingField(f"'{key}'")

    try:
        spec = GridSpec(shape=data["shape"], voxel_size_mm=data["voxel_size_mm"])
    except ValidationError as e:
        raise errors.ParseError(e.errors()[0].get("msg", str(e))) from e

    mask = data.get("mask")
    if mask is None:
        return spec
    if not isinstance(mask, list):
        raise errors.BadMaskIndex("mask は整数の配列で指定してください")
    previous = -1
    for pos, idx in enumerate(mask):
        if isinstance(idx, bool) or not isinstance(idx, int):
            raise errors.BadMaskIndex(f"mask[{pos}] = {idx!r} は整数ではありません")
        if not 0 <= idx < spec.n_voxels:
            raise errors.BadMaskIndex(f"mask[{pos}] = {idx}（ボクセル数 {spec.n_voxels}）")
        if idx <= previous:
            raise errors.BadMaskIndex(f"mask[{pos}] = {idx} が昇順になっていません")
        previous = idx
    return spec.model_copy(update={"mask": list(mask)})


# ==================== CSV ====================
def read_matrix_csv(text: str) -> np.ndarray:
    """
    1行1被験者、ヘッダーなしのCSVを N×d 行列として読む

    Args:
        text: CSVテキスト（空行は無視）

    Returns:
        np.ndarray: N×d 行列（行がなければ 0×0）
    """
    rows: List[List[float]] = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = [t.strip() for t in line.split(",")]
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise errors.RaggedRows(f"{len(tokens)} 列（先頭行は {width} 列）", line=lineno)
        rows.append([_parse_number(t, lineno, col) for col, t in enumerate(tokens, start=1)])
    if not rows:
        return np.zeros((0, 0))
    return np.asarray(rows, dtype=float)


def write_vector_csv(vector: Sequence[float]) -> str:
    """ベクトルを1行のCSVに（往復一致する表記）"""
    return ",".join(_format_float(x) for x in vector) + "\n"


def write_matrix_csv(rows: Sequence[Sequence[float]]) -> str:
    """行列を1行1行ずつCSVに"""
    return "".join(write_vector_csv(r) for r in rows)


# ==================== 距離キャッシュ ====================
def write_metric_cache(D: Union[GroundMetric, np.ndarray]) -> bytes:
    """
    KMET形式: "KMET" + version(<u4) + d(<u8) + d·d 個の <f8（行優先）

    Args:
        D: 距離行列

    Returns:
        bytes: ファイル内容
    """
    arr = D.D if isinstance(D, GroundMetric) else np.asarray(D, dtype=float)
    d = int(arr.shape[0])
    payload = np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C")
    return _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, d) + payload


def read_metric_cache_raw(data: bytes) -> np.ndarray:
    """
    KMET形式を読み込む（距離の公理は検証しない。validate コマンド用）

    Args:
        data: ファイル内容

    Returns:
        np.ndarray: d×d 行列
    """
    if len(data) < 4 or data[:4] != CACHE_MAGIC:
        raise errors.BadMagic(f"先頭4バイト {bytes(data[:4])!r}")
    if len(data) < _CACHE_HEADER.size:
        raise errors.TruncatedPayload(f"ヘッダーが {len(data)} バイトしかありません")
    _, version, d = _CACHE_HEADER.unpack_from(data, 0)
    if version != CACHE_VERSION:
        raise errors.VersionUnsupported(f"version={version}")
    expected = d * d * 8
    available = len(data) - _CACHE_HEADER.size
    if available < expected:
        raise errors.TruncatedPayload(f"オフセット {len(data)}: {expected} バイト必要なところ {available} バイト")
    if available > expected:
        raise errors.ParseError(f"オフセット {_CACHE_HEADER.size + expected} 以降に余分なデータがあります")
    return np.frombuffer(data, dtype="<f8", count=d * d, offset=_CACHE_HEADER.size).astype(float).reshape(d, d)


def read_metric_cache(data: bytes) -> GroundMetric:
    """KMET形式を読み込み、距離行列として検証する"""
    return as_ground_metric(read_metric_cache_raw(data))


# ==================== ラベル・レポート ====================
def _label_from(obj: Any, where: str) -> Label:
    if not isinstance(obj, dict):
        raise errors.ParseError(f"{where}: JSONオブジェクトが必要です")
    for key in ("name", "vertex_ids"):
        if key not in obj:
            raise errors.MissingField(f"{where}: '{key}'")
    try:
        return Label(name=obj["name"], vertex_ids=obj["vertex_ids"])
    except ValidationError as e:
        raise errors.InvalidLabel(f"{where}: {e.errors()[0].get('msg', str(e))}") from e


def read_label_json(text: str) -> List[Label]:
    """
    {"name", "vertex_ids"} のオブジェクト、またはその配列を読む

    Returns:
        List[Label]: ラベル一覧
    """
    data = _load_json(text)
    items = data if isinstance(data, list) else [data]
    return [_label_from(obj, f"ラベル[{k}]") for k, obj in enumerate(items)]


def write_label_json(labels: Sequence[Label]) -> str:
    return json.dumps([lab.model_dump() for lab in labels], ensure_ascii=False, indent=2) + "\n"


def write_json_report(report: Union[BaseModel, Dict[str, Any]]) -> str:
    """
    レポートをJSONテキストに（キー順は固定、同じ入力なら同じバイト列）

    Args:
        report: pydanticモデルまたは辞書

    Returns:
        str: JSONテキスト
    """
    data = report.model_dump(mode="json") if isinstance(report, BaseModel) else report
    return json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
