"""
ファイル入出力のテスト: OFF・格子仕様・CSV・距離キャッシュ・ラベル
"""
import json
import sys
from pathlib import Path

import numpy as np
import pytest

# プロジェクトルートをパスに追加
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import errors
from file_io import (
    parse_gridspec,
    parse_off,
    read_label_json,
    read_matrix_csv,
    read_metric_cache,
    write_json_report,
    write_label_json,
    write_matrix_csv,
    write_metric_cache,
    write_off,
    write_vector_csv,
)
from models import GroundMetric, Label, TriMesh

MINIMAL_OFF = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


# ==================== OFF ====================
def test_parse_minimal_off():
    mesh = parse_off(MINIMAL_OFF)
    assert mesh.n_vertices == 3
    assert mesh.faces.tolist() == [[0, 1, 2]]


def test_parse_off_with_comments_and_blank_lines():
    text = "# comment\nOFF\n\n3 1 0  # counts\n0 0 0\n1 0 0\n0 1 0\n# face\n3 0 1 2\n"
    assert parse_off(text).n_vertices == 3


def test_parse_off_errors():
    with pytest.raises(errors.NonTriangleFace) as exc:
        parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 2 3\n")
    assert exc.value.line == 7
    with pytest.raises(errors.MalformedHeader):
        parse_off("3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    with pytest.raises(errors.IndexOutOfRange) as exc:
        parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n")
    assert exc.value.line == 6
    assert exc.value.column == 4
    with pytest.raises(errors.NonNumericField):
        parse_off("OFF\n3 1 0\n0 0 0\nx 0 0\n0 1 0\n3 0 1 2\n")
    with pytest.raises(errors.MalformedHeader):
        parse_off("OFF\n3 1 0\n0 0 0\n")


@pytest.mark.parametrize("token", ["--2", "²", "２", "1.0", "+-1"])
def test_parse_off_face_tokens_must_be_ascii_integers(token):
    with pytest.raises(errors.NonNumericField) as exc:
        parse_off(f"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 {token}\n")
    assert exc.value.line == 6
    assert exc.value.column == 4


@pytest.mark.parametrize("counts", ["3 ¹ 0", "-3 1 0", "３ 1 0", "3 1 --0"])
def test_parse_off_counts_must_be_ascii_integers(counts):
    with pytest.raises(errors.MalformedHeader) as exc:
        parse_off(f"OFF\n{counts}\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    assert exc.value.line == 2


def test_off_write_then_read():
    mesh = TriMesh(vertices=[[0.1, 0.2, 0.3], [1.0, 1e-300, 0], [0, 1, 5]], faces=[[0, 1, 2]])
    again = parse_off(write_off(mesh))
    np.testing.assert_array_equal(again.vertices, mesh.vertices)
    np.testing.assert_array_equal(again.faces, mesh.faces)


# ==================== 格子仕様 ====================
def test_parse_gridspec_examples():
    assert parse_gridspec('{"shape":[2,1,1],"voxel_size_mm":[3,3,3]}').d == 2
    assert parse_gridspec('{"shape":[3,1,1],"voxel_size_mm":[3,3,3],"mask":[0,2]}').d == 2


def test_parse_gridspec_errors():
    with pytest.raises(errors.BadMaskIndex):
        parse_gridspec('{"shape":[2,2,2],"voxel_size_mm":[1,1,1],"mask":[9]}')
    with pytest.raises(errors.BadMaskIndex):
        parse_gridspec('{"shape":[3,1,1],"voxel_size_mm":[1,1,1],"mask":[2,0]}')
    with pytest.raises(errors.MissingField):
        parse_gridspec('{"shape":[2,1,1]}')
    with pytest.raises(errors.ParseError) as exc:
        parse_gridspec('{"shape": [2,1,1],\n "voxel_size_mm": }')
    assert exc.value.line == 2


# ==================== CSV ====================
def test_read_matrix_csv_example():
    X = read_matrix_csv("1,0\n0.5,0.5\n")
    np.testing.assert_array_equal(X, [[1.0, 0.0], [0.5, 0.5]])


def test_csv_round_trip_is_exact():
    v = [0.1, 1e-300, 5.0, 1 / 3, 2.5e17]
    back = read_matrix_csv(write_vector_csv(v))
    assert back[0].tolist() == v
    M = np.random.default_rng(60).random((4, 3))
    assert np.array_equal(read_matrix_csv(write_matrix_csv(M)), M)


def test_csv_errors():
    with pytest.raises(errors.NonNumericField) as exc:
        read_matrix_csv("1,a\n")
    assert (exc.value.line, exc.value.column) == (1, 2)
    with pytest.raises(errors.RaggedRows) as exc:
        read_matrix_csv("1,2\n3\n")
    assert exc.value.line == 2
    with pytest.raises(errors.NonNumericField):
        read_matrix_csv("nan,1\n")


# ==================== 距離キャッシュ ====================
def test_metric_cache_layout():
    data = write_metric_cache(GroundMetric(D=[[0, 3], [3, 0]]))
    assert len(data) == 48
    assert data[:4] == b"KMET"
    assert data[4:8] == (1).to_bytes(4, "little")
    assert data[8:16] == (2).to_bytes(8, "little")


def test_metric_cache_round_trip_bitwise():
    rng = np.random.default_rng(61)
    pts = rng.random((5, 2))
    D = GroundMetric(D=np.linalg.norm(pts[:, None] - pts[None, :], axis=2))
    data = write_metric_cache(D)
    back = read_metric_cache(data)
    assert back.D.tobytes() == D.D.tobytes()
    assert write_metric_cache(back) == data


def test_metric_cache_errors():
    data = write_metric_cache(GroundMetric(D=[[0, 3], [3, 0]]))
    with pytest.raises(errors.BadMagic):
        read_metric_cache(b"XMET" + data[4:])
    with pytest.raises(errors.TruncatedPayload):
        read_metric_cache(data[:-8])
    with pytest.raises(errors.VersionUnsupported):
        read_metric_cache(data[:4] + (2).to_bytes(4, "little") + data[8:])
    bad = np.array([[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(errors.InvalidMetric):
        read_metric_cache(write_metric_cache(bad))


# ==================== ラベル・レポート ====================
def test_label_json_round_trip():
    labels = [Label(name="A", vertex_ids=[3, 1, 2]), Label(name="B", vertex_ids=[7])]
    back = read_label_json(write_label_json(labels))
    assert [lab.model_dump() for lab in back] == [lab.model_dump() for lab in labels]
    single = read_label_json('{"name": "C", "vertex_ids": [0, 4]}')
    assert single[0].vertex_ids == [0, 4]


def test_label_json_errors():
    with pytest.raises(errors.MissingField):
        read_label_json('{"name": "A"}')
    with pytest.raises(errors.InvalidLabel):
        read_label_json('{"name": "A", "vertex_ids": []}')


def test_json_report_is_stable():
    text = write_json_report({"b": 1, "a": [1.5, 2]})
    assert text == write_json_report({"a": [1.5, 2], "b": 1})
    assert json.loads(text) == {"a": [1.5, 2], "b": 1}
