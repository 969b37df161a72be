"""
Kantorovich平均 - サンプルデータ
スモークテストやCLIの動作確認で使用できる小さな入力ファイル
"""

# ==================== メッシュ用サンプル ====================

# 正八面体（半径10mm、6頂点・8面）
SAMPLE_OFF = """OFF
# regular octahedron, radius 10 mm
6 8 0
10 0 0
-10 0 0
0 10 0
0 -10 0
0 0 10
0 0 -10
3 0 2 4
3 2 1 4
3 1 3 4
3 3 0 4
3 2 0 5
3 1 2 5
3 3 1 5
3 0 3 5
"""

# 正八面体上の3被験者（1行1被験者）
SAMPLE_HISTOGRAMS_CSV = """0.5,0,0.2,0,0,0
0,0.4,0,0,0.3,0
0.6,0,0,0.1,0,0
"""

SAMPLE_LABELS_JSON = """[
  {"name": "ROI1", "vertex_ids": [0, 2]},
  {"name": "ROI2", "vertex_ids": [1, 3]}
]
"""

# ==================== ボクセル格子用サンプル ====================

SAMPLE_GRIDSPEC = """{
  "shape": [3, 3, 1],
  "voxel_size_mm": [3.0, 3.0, 3.0]
}
"""

SAMPLE_GRID_CSV = """1,0,0,0,0,0,0,0,0
0,0,0,0,1,0,0,0,0
0,0,0,0,0,0,0,0,2
"""
