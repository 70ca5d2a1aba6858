"""
状態発展から最適な (α*, τ*, λ*, AMSE) を求め、表示して CSV に書き出すコマンド。

このスクリプトは以下の手順で処理を行います:
1. [tune] の q と [model] の σ の組ごとに optimal_tuning を解く。
2. 結果を標準出力に表示し、`q,sigma,alpha,tau,lambda,amse` の CSV に書き出す。

使用例:
    python manage.py tune --config lab.toml --out results/

エラー処理:
    - [tune] の q が無い場合は ConfigError（終了コード 2）。
    - 不動点が無い場合は終了コード 3。
"""

import csv
import logging
from pathlib import Path

from selections.config import LabConfig
from selections.constants import CSV_FLOAT_FORMAT
from selections.exceptions import ConfigError
from selections.management.commands._base import LabCommand, LabOutcome, tag
from selections.state_evolution import optimal_tuning, ridge_optimal_alpha

logger = logging.getLogger("selections")

TUNE_CSV_HEADER = ("q", "sigma", "alpha", "tau", "lambda", "amse")


class Command(LabCommand):
    help = "状態発展から最適なチューニング (α*, τ*, λ*, AMSE) を求める"
    command_name = "tune"

    def run_lab(self, config: LabConfig, out_dir: Path, threads: int) -> LabOutcome:
        """
        (q, σ) ごとに最適なチューニングを求めて CSV に書き出す。

        Args:
            config (LabConfig): 検証済みの設定。
            out_dir (Path): 出力ディレクトリ。
            threads (int): 使わない。

        Returns:
            LabOutcome: 書き出したファイルとタスクのステータス。
        """
        if not config.tune_q:
            raise ConfigError("tune.q", "必須です")
        outcome = LabOutcome()
        rows = []
        for q in config.tune_q:
            for sigma in config.sigmas:
                model = config.model(sigma, q)
                se = optimal_tuning(model, config.prior)
                if q == 2.0:
                    logger.debug(
                        f"リッジの閉形式との比較: alpha={se.alpha}, "
                        f"閉形式={ridge_optimal_alpha(model, config.prior)}"
                    )
                self.stdout.write(
                    f"q={tag(q)} sigma={tag(sigma)} alpha={se.alpha:.10g} tau={se.tau:.10g} "
                    f"lambda={se.lam:.10g} amse={se.amse:.10g}"
                )
                rows.append((q, sigma, se.alpha, se.tau, se.lam, se.amse))
                outcome.succeed(f"q={tag(q)}/sigma={tag(sigma)}")

        path = out_dir / "tune.csv"
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TUNE_CSV_HEADER)
            for row in rows:
                writer.writerow([CSV_FLOAT_FORMAT.format(value) for value in row])
        outcome.files.append(path)
        return outcome
