"""
Kantorovich平均 - コマンドラインインターフェース
metric / distance / barycenter / mean / smooth / simulate / validate の各サブコマンド
"""
import argparse
import json
import platform
import sys
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

import errors
from baselines import euclidean_mean, smoothed_mean
from barycenter import kantorovich_mean
from config import get_settings
from core import auto_lambda, rescale_collection, resolve_config
from exporter import export_barycenter_to_md, export_simulation_to_md
from file_io import (
    parse_gridspec,
    parse_off,
    read_label_json,
    read_matrix_csv,
    read_metric_cache,
    read_metric_cache_raw,
    write_json_report,
    write_label_json,
    write_metric_cache,
    write_vector_csv,
)
from input_validator import validate_histogram_matrix, validate_inputs_match, validate_solver_config
from kantorovich import build_augmented, kantorovich_distance
from metric_build import grid_metric, mesh_geodesic_metric, validate_metric
from models import GroundMetric, Marker, RunReport, SimConfig, SolverConfig
from run_tracker import RunTracker
from simulate import METHOD_KANTOROVICH, METHOD_MEAN, METHOD_SMOOTHED, run_grid_simulation, run_simulation
from utils import get_logger, set_log_level

logger = get_logger(__name__)

_PACKAGES = ("numpy", "scipy", "pydantic", "python-dotenv", "fpdf2")
_METHOD_FILES = {
    METHOD_MEAN: "mean.csv",
    METHOD_SMOOTHED: "mean_smoothed.csv",
    METHOD_KANTOROVICH: "kantorovich_mean.csv",
}


class UsageError(Exception):
    """コマンドラインの使い方の誤り（終了コード1）"""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


# ==================== 引数の解釈 ====================
def _auto_or_float(marker: Marker):
    def parse(text: str) -> Union[float, Marker]:
        if text.strip().lower() == marker.value:
            return marker
        try:
            return float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"'{marker.value}' または数値を指定してください: {text}")
    return parse


def _add_metric_source(parser: argparse.ArgumentParser, required: bool = True):
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument("--mesh", type=Path, help="OFFメッシュ（測地距離）")
    group.add_argument("--grid", type=Path, help="格子仕様JSON（ユークリッド距離）")
    group.add_argument("--metric-cache", type=Path, help="KMET形式の距離キャッシュ")


def _add_solver_options(parser: argparse.ArgumentParser):
    parser.add_argument("--p", type=float, default=1.0, help="コストの指数 p（既定: 1）")
    parser.add_argument("--lambda", dest="lam", type=_auto_or_float(Marker.AUTO), default=Marker.AUTO,
                        help="エントロピー正則化 λ（auto = 100/median）")
    parser.add_argument("--q", type=float, default=95.0, help="Δ を決める分位点（%%）")
    parser.add_argument("--delta", type=float, default=None, help="Δ を一定値で直接指定")


def build_parser() -> argparse.ArgumentParser:
    """
    サブコマンドを持つ引数パーサーを作成

    Returns:
        argparse.ArgumentParser: パーサー
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="ワーカー数（既定: KMEAN_THREADS）")
    common.add_argument("--log-level", default=None, help="DEBUG / INFO / WARNING / ERROR")
    common.add_argument("--run-report", type=Path, default=None, help="実行レポートJSONの出力先")

    parser = _Parser(prog="kmean", description="Kantorovich距離と質量制約付き重心の計算")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("metric", parents=[common], help="距離行列を構築してキャッシュに保存")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--mesh", type=Path)
    group.add_argument("--grid", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--validate", action="store_true", help="距離の公理チェック結果も表示")

    p = sub.add_parser("distance", parents=[common], help="2つのヒストグラム間の Kantorovich 距離")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    _add_metric_source(p)
    _add_solver_options(p)
    p.add_argument("--exact", action="store_true", help="正則化なしの厳密OT（d+1 ≤ 64）")

    p = sub.add_parser("barycenter", parents=[common], help="Kantorovich平均（質量制約付き重心）")
    p.add_argument("--inputs", type=Path, required=True, help="N×d のCSV")
    _add_metric_source(p)
    _add_solver_options(p)
    p.add_argument("--step", type=_auto_or_float(Marker.AUTO), default=Marker.AUTO, help="ステップ幅 c")
    p.add_argument("--rho", type=_auto_or_float(Marker.MEAN), default=Marker.MEAN, help="目標質量（mean = 平均質量）")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True, help="重心計算レポートJSON")
    p.add_argument("--summary", type=Path, default=None, help="Markdown要約の出力先")

    p = sub.add_parser("mean", parents=[common], help="算術平均")
    p.add_argument("--inputs", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("smooth", parents=[common], help="ガウス平滑化後の平均")
    p.add_argument("--inputs", type=Path, required=True)
    p.add_argument("--fwhm", type=float, default=8.0)
    _add_metric_source(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("simulate", parents=[common], help="Mean / Mean (S) / Kantorovich平均の比較シミュレーション")
    p.add_argument("--subdivisions", type=int, default=3)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--fwhm", type=float, default=8.0)
    p.add_argument("--radius", type=float, default=30.0, help="球面の半径（mm、icosphere(3) で頂点間隔が約4〜5mm）")
    p.add_argument("--label-size", type=int, default=25)
    p.add_argument("--labels", type=Path, default=None, help="ラベルJSON（省略時は2つの測地キャップ）")
    p.add_argument("--grid", type=Path, default=None, help="球面の代わりにボクセル格子で実行")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--pdf", action="store_true", help="PDF要約も出力")

    p = sub.add_parser("validate", parents=[common], help="距離キャッシュの公理チェック")
    p.add_argument("--metric-cache", type=Path, required=True)
    p.add_argument("--no-triangle", action="store_true", help="三角不等式のチェックを省略")
    return parser


# ==================== 入出力の補助 ====================
def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"ファイルを読み込めません: {path} ({e.strerror})") from e


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as e:
        raise UsageError(f"ファイルを読み込めません: {path} ({e.strerror})") from e


def _write(path: Path, content: Union[str, bytes], outputs: List[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(content, bytes):
        path.write_bytes(content)
    else:
        path.write_text(content, encoding="utf-8")
    outputs.append(str(path))


def _load_metric(args: argparse.Namespace, threads: int) -> GroundMetric:
    if getattr(args, "mesh", None) is not None:
        return mesh_geodesic_metric(parse_off(_read_text(args.mesh)), threads=threads)
    if getattr(args, "grid", None) is not None:
        return grid_metric(parse_gridspec(_read_text(args.grid)))
    return read_metric_cache(_read_bytes(args.metric_cache))


def _load_matrix(path: Path) -> np.ndarray:
    X = read_matrix_csv(_read_text(path))
    ok, error, warning = validate_histogram_matrix(X)
    if not ok:
        raise errors.EmptyCollection(error) if X.size == 0 else errors.KantorovichError(f"{path}: {error}")
    if warning:
        logger.warning(warning)
    return X


def _load_vector(path: Path) -> np.ndarray:
    X = read_matrix_csv(_read_text(path))
    if X.shape[0] != 1:
        raise errors.KantorovichError(f"{path}: 1行のベクトルが必要です（{X.shape[0]} 行）")
    return X[0]


def _check_match(X: np.ndarray, D: GroundMetric) -> None:
    ok, error = validate_inputs_match(X, D)
    if not ok:
        raise errors.KantorovichError(error)


def _versions() -> Dict[str, str]:
    out = {"python": platform.python_version()}
    for name in _PACKAGES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = "unknown"
    return out


def _emit(data: Dict[str, Any]) -> None:
    print(json.dumps(data, ensure_ascii=False, sort_keys=True))


# ==================== サブコマンド ====================
def _solver_config(threads: int, **fields) -> SolverConfig:
    """引数から SolverConfig を作る（範囲外の値は使い方の誤り）"""
    try:
        return SolverConfig(threads=threads, **fields)
    except ValueError as e:
        raise UsageError(f"パラメータが不正です: {e}") from e


def cmd_metric(args, tracker: RunTracker, run: Dict[str, Any], threads: int) -> int:
    with tracker.stage("metric"):
        D = _load_metric(args, threads)
    run["parameters"].update({"d": D.d, "source": str(args.mesh or args.grid)})
    _write(args.out, write_metric_cache(D), run["outputs"])
    if args.validate:
        with tracker.stage("validate"):
            _emit(validate_metric(D).model_dump())
    logger.info(f"距離キャッシュを保存しました: {args.out}（d={D.d}）")
    return errors.EXIT_OK


def cmd_distance(args, tracker: RunTracker, run: Dict[str, Any], threads: int) -> int:
    cfg = _solver_config(threads, p=args.p, lam=args.lam, q=args.q)
    with tracker.stage("metric"):
        D = _load_metric(args, threads)
    a, b = _load_vector(args.a), _load_vector(args.b)
    _check_match(a.reshape(1, -1), D)
    _check_match(b.reshape(1, -1), D)

    if args.delta is not None:
        aug = build_augmented(D, delta=args.delta, p=cfg.p)
    else:
        aug = build_augmented(D, q=cfg.q, p=cfg.p)
    lam: Union[float, Marker] = Marker.EXACT if args.exact else cfg.lam
    if lam == Marker.AUTO:
        lam = auto_lambda(D)
    with tracker.stage("distance"):
        out = kantorovich_distance(a, b, aug, lam)

    run["parameters"].update({
        "p": cfg.p, "q": aug.q, "lambda": lam.value if isinstance(lam, Marker) else lam,
        "delta_min": float(aug.delta.min()), "delta_max": float(aug.delta.max()),
    })
    _emit({**out, "lambda": run["parameters"]["lambda"]})
    return errors.EXIT_OK if out["converged"] else errors.EXIT_NOT_CONVERGED


def cmd_barycenter(args, tracker: RunTracker, run: Dict[str, Any], threads: int) -> int:
    with tracker.stage("metric"):
        D = _load_metric(args, threads)
    X = _load_matrix(args.inputs)
    _check_match(X, D)
    c = rescale_collection(X)

    cfg = _solver_config(
        threads, p=args.p, lam=args.lam, q=args.q, step_c=args.step, rho=args.rho,
        tol_outer=args.tol, max_outer=args.max_iter,
        delta=[args.delta] * D.d if args.delta is not None else None,
    )
    resolved = resolve_config(cfg, D, c)
    ok, error, warning = validate_solver_config(resolved, D)
    if not ok:
        raise errors.KantorovichError(error)
    if warning:
        logger.warning(warning)

    with tracker.stage("barycenter"):
        report = kantorovich_mean(c, D, resolved, threads=threads)
    run["parameters"].update(report.config_resolved.model_dump(mode="json"))
    run["parameters"].update({"N": c.n, "d": c.d, "scale": c.scale})

    _write(args.out, write_vector_csv(report.barycenter), run["outputs"])
    _write(args.report, write_json_report(report), run["outputs"])
    if args.summary is not None:
        _write(args.summary, export_barycenter_to_md(report), run["outputs"])
    if not report.converged:
        logger.warning("重心は収束していません。結果はレポートで未収束として記録されています")
        return errors.EXIT_NOT_CONVERGED
    return errors.EXIT_OK


def cmd_mean(args, tracker: RunTracker, run: Dict[str, Any], threads: int) -> int:
    X = _load_matrix(args.inputs)
    with tracker.stage("mean"):
        m = euclidean_mean(X)
    run["parameters"].update({"N": int(X.shape[0]), "d": int(X.shape[1])})
    _write(args.out, write_vector_csv(m), run["outputs"])
    return errors.EXIT_OK


def cmd_smooth(args, tracker: RunTracker, run: Dict[str, Any], threads: int) -> int:
    if not args.fwhm > 0:
        raise UsageError(f"--fwhm は正の数で指定してください（実際: {args.fwhm}）")
    with tracker.stage("metric"):
        D = _load_metric(args, threads)
    X = _load_matrix(args.inputs)
    _check_match(X, D)
    with tracker.stage("smooth"):
        m = smoothed_mean(X, D, args.fwhm, threads=threads)
    run["parameters"].update({"N": int(X.shape[0]), "d": D.d, "fwhm_mm": args.fwhm})
    _write(args.out, write_vector_csv(m), run["outputs"])
    return errors.EXIT_OK


def cmd_simulate(args, tracker: RunTracker, run: Dict[str, Any], threads: int) -> int:
    if args.grid is None and not 0 <= args.subdivisions <= 5:
        raise errors.SubdivisionOutOfRange(f"subdivisions={args.subdivisions}")
    labels = read_label_json(_read_text(args.labels)) if args.labels is not None else None
    try:
        cfg = SimConfig(
            n_subjects=args.subjects, seed=args.seed, fwhm_mm=args.fwhm,
            subdivisions=args.subdivisions if args.grid is None else 0,
            radius_mm=args.radius, label_size=args.label_size, labels=labels,
            solver=SolverConfig(threads=threads),
        )
    except ValueError as e:
        raise UsageError(str(e)) from e

    with tracker.stage("simulate"):
        if args.grid is not None:
            report = run_grid_simulation(cfg, parse_gridspec(_read_text(args.grid)), threads=threads)
        else:
            report = run_simulation(cfg, threads=threads)
    run["parameters"].update(cfg.model_dump(mode="json", exclude={"solver", "labels"}))
    run["parameters"]["solver"] = report.barycenter.config_resolved.model_dump(mode="json")

    out_dir: Path = args.out_dir
    outputs = run["outputs"]
    _write(out_dir / "simulation_report.json", write_json_report(report), outputs)
    _write(out_dir / "labels.json", write_label_json(report.labels), outputs)
    for m in report.methods:
        _write(out_dir / _METHOD_FILES[m.name], write_vector_csv(m.vector), outputs)
    _write(out_dir / "summary.md", export_simulation_to_md(report), outputs)
    if args.pdf:
        from pdf_export import generate_simulation_pdf

        _write(out_dir / "summary.pdf", generate_simulation_pdf(report), outputs)

    for m in report.methods:
        print(f"{m.name}: peak={m.peak:.4g} (vertex {m.peak_index}), label fraction={m.label_mass_fraction:.4f}")
    if not report.barycenter.converged:
        return errors.EXIT_NOT_CONVERGED
    return errors.EXIT_OK


def cmd_validate(args, tracker: RunTracker, run: Dict[str, Any], threads: int) -> int:
    A = read_metric_cache_raw(_read_bytes(args.metric_cache))
    with tracker.stage("validate"):
        report = validate_metric(A, check_triangle=not args.no_triangle)
    run["parameters"].update({"d": report.d})
    _emit(report.model_dump())
    return errors.EXIT_OK if report.is_metric else errors.EXIT_DATA


COMMANDS = {
    "metric": cmd_metric,
    "distance": cmd_distance,
    "barycenter": cmd_barycenter,
    "mean": cmd_mean,
    "smooth": cmd_smooth,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def _run_report_path(args: argparse.Namespace) -> Path:
    if args.run_report is not None:
        return args.run_report
    if args.command == "simulate":
        return args.out_dir / "run_report.json"
    return Path("run_report.json")


def main(argv: Optional[List[str]] = None) -> int:
    """
    CLIのエントリーポイント

    Args:
        argv: 引数（Noneなら sys.argv[1:]）

    Returns:
        int: 終了コード（0 成功 / 1 使い方の誤り / 2 データ・検証エラー / 3 未収束）
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return errors.EXIT_USAGE
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    if args.log_level:
        set_log_level(args.log_level)
    threads = args.threads if args.threads is not None else get_settings().threads
    if threads < 1:
        print("--threads は1以上で指定してください", file=sys.stderr)
        return errors.EXIT_USAGE

    tracker = RunTracker()
    run: Dict[str, Any] = {"parameters": {"threads": threads}, "outputs": [], "error": None}
    try:
        exit_code = COMMANDS[args.command](args, tracker, run, threads)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        exit_code = errors.EXIT_USAGE
        run["error"] = {"code": "UsageError", "message": str(e)}
    except errors.KantorovichError as e:
        logger.error(str(e))
        print(f"エラー: {e}", file=sys.stderr)
        exit_code = e.exit_code
        run["error"] = e.to_dict()

    report = RunReport(
        command=args.command,
        argv=argv,
        parameters=run["parameters"],
        versions=_versions(),
        timings=tracker.to_dict(),
        outputs=run["outputs"],
        exit_code=exit_code,
        error=run["error"],
    )
    path = _run_report_path(args)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(write_json_report(report), encoding="utf-8")
    except OSError as e:
        logger.warning(f"実行レポートを書き込めませんでした: {path} ({e.strerror})")
    logger.info(tracker.get_summary())
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
