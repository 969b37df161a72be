"""
Kantorovich平均 - Markdownエクスポート
シミュレーション結果・重心計算結果の要約をMarkdown形式で出力する
"""
from typing import List, Optional

from models import BarycenterReport, SimulationReport


def _solver_lines(report: BarycenterReport) -> List[str]:
    cfg = report.config_resolved
    lines = []
    lines.append(f"- **p**: {cfg.p}")
    lines.append(f"- **λ**: {float(cfg.lam):.6g}")
    lines.append(f"- **ステップ幅 c**: {float(cfg.step_c):.6g}")
    lines.append(f"- **ρ（正規化後）**: {float(cfg.rho):.6g}")
    lines.append(f"- **質量（元データ単位）**: {report.rho_scaled:.6g}")
    lines.append(f"- **スケール s**: {report.scale!r}")
    lines.append(f"- **Δ**: 最小 {min(report.delta_value):.6g} / 最大 {max(report.delta_value):.6g}")
    return lines


def export_barycenter_to_md(report: BarycenterReport, timestamp: Optional[str] = None) -> str:
    """
    重心計算の結果をMarkdown形式でエクスポート

    Args:
        report: 重心計算の結果
        timestamp: 生成日時（省略時は記載しない）

    Returns:
        str: Markdown形式の文字列
    """
    lines = []
    lines.append("# Kantorovich平均 - 計算結果")
    lines.append("")
    if timestamp:
        lines.append(f"**生成日時**: {timestamp}")
        lines.append("")

    lines.append("## 収束状況")
    lines.append("")
    if report.converged:
        lines.append(f"✅ {report.iterations} 反復で収束しました")
    else:
        lines.append(f"⚠️ {report.iterations} 反復で収束しませんでした（結果は未認証です）")
        lines.append(f"- **出力した反復**: {report.returned_iteration}（目的関数が最小の反復）")
    if report.change_trajectory:
        lines.append(f"- **最終変化量（ℓ1）**: {report.change_trajectory[-1]:.3e}")
    if report.objective_trajectory:
        lines.append(
            f"- **目的関数**: {report.objective_trajectory[0]:.10g} → {report.objective_trajectory[-1]:.10g}"
        )
    lines.append(f"- **Sinkhorn反復の合計**: {report.inner_iterations_total}")
    if report.inner_not_converged:
        lines.append(f"- **収束しなかったSinkhorn求解**: {report.inner_not_converged}")
    lines.append("")

    lines.append("## パラメータ")
    lines.append("")
    lines.extend(_solver_lines(report))
    adm = report.admissibility
    if adm is not None and not (adm.strict_norm and adm.metric_ok):
        lines.append("")
        lines.append(
            f"⚠️ Δ が許容条件を満たしていません（行: {adm.max_row_violation:.3g}, "
            f"Lipschitz: {adm.max_lipschitz_violation:.3g}, 距離: {adm.max_metric_violation:.3g}）"
        )
    lines.append("")
    return "\n".join(lines)


def export_simulation_to_md(report: SimulationReport, timestamp: Optional[str] = None) -> str:
    """
    シミュレーション結果をMarkdown形式でエクスポート

    Args:
        report: シミュレーション結果
        timestamp: 生成日時（省略時は記載しない）

    Returns:
        str: Markdown形式の文字列
    """
    cfg = report.config
    lines = []
    lines.append("# Kantorovich平均 - シミュレーション結果")
    lines.append("")
    if timestamp:
        lines.append(f"**生成日時**: {timestamp}")
        lines.append("")

    lines.append("## 設定")
    lines.append("")
    lines.append(f"- **頂点数 d**: {report.d}")
    lines.append(f"- **被験者数**: {cfg.n_subjects}")
    lines.append(f"- **乱数シード**: {cfg.seed}")
    lines.append(f"- **振幅**: 切断正規分布（平均 {cfg.amp_mean}, 標準偏差 {cfg.amp_std}）")
    lines.append(f"- **平滑化 FWHM**: {cfg.fwhm_mm} mm")
    for label in report.labels:
        lines.append(f"- **ラベル {label.name}**: {len(label.vertex_ids)} 頂点")
    lines.append("")

    lines.append("## 手法の比較")
    lines.append("")
    lines.append("| 手法 | ピーク | ピーク頂点 | ラベル内 | 総質量 | ラベル内質量比 |")
    lines.append("|---|---:|---:|:---:|---:|---:|")
    for m in report.methods:
        inside = "✅" if m.peak_in_labels else "❌"
        lines.append(
            f"| {m.name} | {m.peak:.4g} | {m.peak_index} | {inside} | {m.total_mass:.6g} | {m.label_mass_fraction:.4f} |"
        )
    lines.append("")
    lines.append(f"被験者ごとのピーク振幅の平均: {report.subject_peak_mean:.4g}")
    lines.append("")

    lines.append("---")
    lines.append("")
    body = export_barycenter_to_md(report.barycenter)
    # 見出しを1段下げて埋め込む
    lines.extend("#" + line if line.startswith("#") else line for line in body.splitlines())
    lines.append("")
    return "\n".join(lines)
