"""
Kantorovich平均 - PDFエクスポート機能
シミュレーション結果をPDF形式で出力する（CLIの --pdf）
"""
from typing import List

from fpdf import FPDF
from fpdf.enums import XPos, YPos

from models import SimulationReport


def _safe_encode(text: str) -> str:
    """
    コアフォントで表示できない文字を置き換える

    Args:
        text: エンコード対象のテキスト

    Returns:
        str: latin-1 で表現できるテキスト
    """
    if not text:
        return ""
    return str(text).encode("latin-1", errors="replace").decode("latin-1")


class PDFReport(FPDF):
    """PDFレポート生成クラス"""

    def __init__(self, title: str):
        super().__init__()
        self.title_text = title
        self.set_auto_page_break(auto=True, margin=20)
        self.add_page()

    def header(self):
        """ヘッダー"""
        self.set_font("Helvetica", "B", 16)
        self.cell(0, 10, _safe_encode(self.title_text), new_x=XPos.LMARGIN, new_y=YPos.NEXT, align="C")
        self.ln(5)

    def footer(self):
        """フッター"""
        self.set_y(-15)
        self.set_font("Helvetica", "I", 8)
        self.cell(0, 10, f"Page {self.page_no()}", align="C")

    def add_section_title(self, title: str):
        """セクションタイトルを追加"""
        self.ln(5)
        self.set_font("Helvetica", "B", 12)
        self.cell(0, 10, _safe_encode(title), new_x=XPos.LMARGIN, new_y=YPos.NEXT)
        self.ln(2)

    def add_text(self, text: str, font_size=10, style=""):
        """1行のテキストを追加"""
        self.set_font("Helvetica", style, font_size)
        self.cell(0, 6, _safe_encode(text), new_x=XPos.LMARGIN, new_y=YPos.NEXT)

    def add_table(self, header: List[str], rows: List[List[str]], widths: List[float]):
        """罫線付きの表を追加"""
        self.set_font("Helvetica", "B", 9)
        for text, w in zip(header, widths):
            self.cell(w, 7, _safe_encode(text), border=1, align="C")
        self.ln(7)
        self.set_font("Helvetica", "", 9)
        for row in rows:
            for text, w in zip(row, widths):
                self.cell(w, 6, _safe_encode(text), border=1, align="R")
            self.ln(6)


def generate_simulation_pdf(report: SimulationReport) -> bytes:
    """
    シミュレーション結果をPDF形式で生成

    Args:
        report: シミュレーション結果

    Returns:
        bytes: PDFデータ
    """
    pdf = PDFReport("Kantorovich Mean - Simulation Report")
    cfg = report.config
    solver = report.barycenter.config_resolved

    pdf.add_section_title("Setup")
    pdf.add_text(f"Vertices: {report.d}   Subjects: {cfg.n_subjects}   Seed: {cfg.seed}", font_size=9)
    pdf.add_text(f"Amplitude: truncated normal (mean {cfg.amp_mean}, std {cfg.amp_std})", font_size=9)
    pdf.add_text(f"Smoothing FWHM: {cfg.fwhm_mm} mm", font_size=9)
    for label in report.labels:
        pdf.add_text(f"Label {label.name}: {len(label.vertex_ids)} vertices", font_size=9)

    pdf.add_section_title("Methods")
    rows = [
        [
            m.name,
            f"{m.peak:.4g}",
            str(m.peak_index),
            "yes" if m.peak_in_labels else "no",
            f"{m.total_mass:.4g}",
            f"{m.label_mass_fraction:.3f}",
        ]
        for m in report.methods
    ]
    pdf.add_table(
        ["Method", "Peak", "Peak vertex", "In labels", "Mass", "Label fraction"],
        rows,
        [34, 26, 28, 24, 28, 40],
    )
    pdf.ln(3)
    pdf.add_text(f"Mean of individual subject peaks: {report.subject_peak_mean:.4g}", font_size=9)

    bary = report.barycenter
    pdf.add_section_title("Kantorovich Mean Solver")
    pdf.add_text(f"p = {solver.p}, lambda = {float(solver.lam):.6g}, step c = {float(solver.step_c):.6g}", font_size=9)
    pdf.add_text(f"rho (scaled) = {float(solver.rho):.6g}, mass in data units = {bary.rho_scaled:.6g}", font_size=9)
    status = "converged" if bary.converged else "NOT converged"
    pdf.add_text(f"Outer iterations: {bary.iterations} ({status})", font_size=9, style="B")
    if bary.objective_trajectory:
        pdf.add_text(
            f"Objective: {bary.objective_trajectory[0]:.6g} -> {bary.objective_trajectory[-1]:.6g}",
            font_size=9,
        )
    pdf.add_text(
        f"Inner Sinkhorn iterations: {bary.inner_iterations_total} (not converged: {bary.inner_not_converged})",
        font_size=9,
    )

    return bytes(pdf.output())
