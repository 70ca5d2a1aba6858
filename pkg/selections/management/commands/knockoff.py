"""
fixed-X ノックオフで変数を選び、FDP と TPP を集計して CSV に書き出すコマンド。

このスクリプトは以下の手順で処理を行います:
1. 設定ファイルの σ ごとに実験の設定を作る（experiment.fdr_target が必要）。
2. run_knockoff_experiment で反復を並列に実行する。
3. `method,q,fdr_target,mean_fdp,std_fdp,mean_tpp,mean_selected` の CSV を σ ごとに書き出す。

使用例:
    python manage.py knockoff --config lab.toml --out results/ --threads 4

エラー処理:
    - fdr_target が無い、手法が lasso・two_stage 以外、tuning=optimal の場合は ConfigError（終了コード 2）。
    - n < 2p の場合は UnsupportedRegimeError（終了コード 4）。
    - 成功した反復の割合が BRIDGELAB_FAILURE_TOLERANCE 未満なら終了コード 3。
"""

import logging
from pathlib import Path

from django.conf import settings

from selections.config import LabConfig
from selections.constants import Tuning
from selections.exceptions import BridgeLabError, ConfigError
from selections.management.commands._base import LabCommand, LabOutcome, tag
from selections.pipeline import KNOCKOFF_METHODS, run_knockoff_experiment, write_knockoff_csv

logger = logging.getLogger("selections")


class Command(LabCommand):
    help = "fixed-X ノックオフで変数を選び、FDP と TPP を集計する"
    command_name = "knockoff"

    @staticmethod
    def validate(config: LabConfig) -> None:
        """
        ノックオフで使えない設定を ConfigError にする。

        Args:
            config (LabConfig): 検証済みの設定。
        """
        if config.fdr_target is None:
            raise ConfigError("experiment.fdr_target", "knockoff には必須です")
        for i, spec in enumerate(config.methods):
            if spec.method not in KNOCKOFF_METHODS:
                raise ConfigError(f"methods[{i}].method", "knockoff では lasso か two_stage です")
            if spec.tuning == Tuning.OPTIMAL:
                raise ConfigError(f"methods[{i}].tuning", "knockoff では λ の値か tuned です")

    def run_lab(self, config: LabConfig, out_dir: Path, threads: int) -> LabOutcome:
        """
        σ ごとにノックオフの実験を実行して集計の CSV を書き出す。

        Args:
            config (LabConfig): 検証済みの設定。
            out_dir (Path): 出力ディレクトリ。
            threads (int): joblib のワーカー数。

        Returns:
            LabOutcome: 書き出したファイルと反復ごとのステータス。
        """
        self.validate(config)
        outcome = LabOutcome()
        for sigma in config.sigmas:
            experiment = config.experiment(sigma)
            report = run_knockoff_experiment(experiment, n_jobs=threads)
            failed = {failure.index: failure.message for failure in report.failures}
            for index in range(experiment.replicates):
                key = f"sigma={tag(sigma)}/replicate={index}"
                if index in failed:
                    outcome.fail(key, failed[index])
                else:
                    outcome.succeed(key)
            if report.succeeded / experiment.replicates < settings.BRIDGELAB_FAILURE_TOLERANCE:
                raise BridgeLabError(
                    f"成功した反復が少なすぎます: sigma={sigma}, "
                    f"成功={report.succeeded}/{experiment.replicates}"
                )
            path = write_knockoff_csv(report, out_dir / f"knockoff_sigma{tag(sigma)}.csv")
            outcome.files.append(path)
        return outcome
