"""
モンテカルロ実験で経験的な FDP-TPP 曲線を集計し、CSV に書き出すコマンド。

このスクリプトは以下の手順で処理を行います:
1. 設定ファイルの σ ごとに実験の設定を作る。
2. run_experiment で反復を並列に実行し、ATPP のグリッド上の FDP を平均する。
3. `method,q,atpp,mean_fdp,std_fdp,mean_mse` の CSV を σ ごとに書き出す。

使用例:
    python manage.py simulate --config lab.toml --out results/ --threads 4

エラー処理:
    - 成功した反復の割合が BRIDGELAB_FAILURE_TOLERANCE（既定 0.9）未満なら終了コード 3。
"""

import logging
from pathlib import Path

from django.conf import settings

from selections.config import LabConfig
from selections.exceptions import BridgeLabError
from selections.management.commands._base import LabCommand, LabOutcome, tag
from selections.pipeline import run_experiment, write_report_csv

logger = logging.getLogger("selections")


class Command(LabCommand):
    help = "モンテカルロ実験で経験的な FDP-TPP 曲線を集計する"
    command_name = "simulate"

    def run_lab(self, config: LabConfig, out_dir: Path, threads: int) -> LabOutcome:
        """
        σ ごとに実験を実行して集計の CSV を書き出す。

        Args:
            config (LabConfig): 検証済みの設定。
            out_dir (Path): 出力ディレクトリ。
            threads (int): joblib のワーカー数。

        Returns:
            LabOutcome: 書き出したファイルと反復ごとのステータス。

        Raises:
            BridgeLabError: 成功した反復の割合が許容値を下回った場合。
        """
        outcome = LabOutcome()
        for sigma in config.sigmas:
            experiment = config.experiment(sigma)
            report = run_experiment(experiment, n_jobs=threads)
            failed = {failure.index: failure.message for failure in report.failures}
            for index in range(experiment.replicates):
                key = f"sigma={tag(sigma)}/replicate={index}"
                if index in failed:
                    outcome.fail(key, failed[index])
                else:
                    outcome.succeed(key)
            ratio = report.succeeded / experiment.replicates
            if ratio < settings.BRIDGELAB_FAILURE_TOLERANCE:
                raise BridgeLabError(
                    f"成功した反復が少なすぎます: sigma={sigma}, "
                    f"成功={report.succeeded}/{experiment.replicates}"
                )
            path = write_report_csv(report, out_dir / f"simulate_sigma{tag(sigma)}.csv")
            outcome.files.append(path)
        return outcome
