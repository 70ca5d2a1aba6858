"""
状態発展から理論上の AFDP-ATPP 曲線を計算し、CSV に書き出すコマンド。

このスクリプトは以下の手順で処理を行います:
1. 設定ファイルの σ と [[methods]] の組ごとに、モデルのパラメータを作る。
2. build_curve で ATPP のグリッド上の点を計算する。
3. `method,q,lambda,s,atpp,afdp` の CSV を (手法, q, σ) ごとに書き出す。

使用例:
    python manage.py theory_curve --config lab.toml --out results/

エラー処理:
    - tuning=tuned は理論曲線では使えないため ConfigError（終了コード 2）。
    - 状態発展の不動点が無い、または到達できない ATPP は終了コード 3。
"""

import logging
from pathlib import Path

from selections.config import LabConfig
from selections.constants import Tuning
from selections.exceptions import ConfigError
from selections.management.commands._base import LabCommand, LabOutcome, tag
from selections.selection_theory import build_curve, write_curve_csv

logger = logging.getLogger("selections")


class Command(LabCommand):
    help = "状態発展から理論上の AFDP-ATPP 曲線を計算する"
    command_name = "theory_curve"

    def run_lab(self, config: LabConfig, out_dir: Path, threads: int) -> LabOutcome:
        """
        (手法, q, σ) ごとに理論曲線の CSV を書き出す。

        Args:
            config (LabConfig): 検証済みの設定。
            out_dir (Path): 出力ディレクトリ。
            threads (int): 使わない（理論曲線は逐次に計算する）。

        Returns:
            LabOutcome: 書き出したファイルとタスクのステータス。
        """
        if not config.methods:
            raise ConfigError("methods", "手法を 1 つ以上指定してください")
        for i, spec in enumerate(config.methods):
            if spec.tuning == Tuning.TUNED:
                raise ConfigError(f"methods[{i}].tuning", "理論曲線では tuned を使えません")

        outcome = LabOutcome()
        for sigma in config.sigmas:
            for spec in config.methods:
                model = config.model(sigma, spec.q)
                curve = build_curve(
                    spec.method, model, config.prior, spec.q, spec.tuning, config.atpp_grid
                )
                name = f"theory_{spec.method.value}_q{tag(spec.q)}_sigma{tag(sigma)}.csv"
                outcome.files.append(write_curve_csv(curve, out_dir / name))
                outcome.succeed(name, f"点の数={len(curve.points)}")
        return outcome
