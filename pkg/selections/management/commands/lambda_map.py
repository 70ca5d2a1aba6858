"""
与えた λ から状態発展の解 (α, τ, AMSE) を求め、CSV に書き出すコマンド。

このスクリプトは以下の手順で処理を行います:
1. [lambda_map] の q と λ、[model] の σ の組ごとに solve_given_lambda を解く。
2. `q,sigma,lambda,alpha,tau,amse` の CSV に書き出す。
   到達できない λ はその行を nan にし、タスクを失敗として記録する。

使用例:
    python manage.py lambda_map --config lab.toml --out results/

エラー処理:
    - [lambda_map] の q または lambdas が無い場合は ConfigError（終了コード 2）。
"""

import csv
import logging
import math
from pathlib import Path

from selections.config import LabConfig
from selections.constants import CSV_FLOAT_FORMAT
from selections.exceptions import ConfigError, NoFixedPointError, RangeError
from selections.management.commands._base import LabCommand, LabOutcome, tag
from selections.state_evolution import solve_given_lambda

logger = logging.getLogger("selections")

LAMBDA_MAP_CSV_HEADER = ("q", "sigma", "lambda", "alpha", "tau", "amse")


class Command(LabCommand):
    help = "与えた λ から状態発展の解 (α, τ, AMSE) を求める"
    command_name = "lambda_map"

    def run_lab(self, config: LabConfig, out_dir: Path, threads: int) -> LabOutcome:
        """
        (q, σ, λ) ごとに状態発展を解いて CSV に書き出す。

        Args:
            config (LabConfig): 検証済みの設定。
            out_dir (Path): 出力ディレクトリ。
            threads (int): 使わない。

        Returns:
            LabOutcome: 書き出したファイルとタスクのステータス。
        """
        if not config.lambda_map_q:
            raise ConfigError("lambda_map.q", "必須です")
        if not config.lambda_map_lambdas:
            raise ConfigError("lambda_map.lambdas", "必須です")
        outcome = LabOutcome()
        rows = []
        for q in config.lambda_map_q:
            for sigma in config.sigmas:
                model = config.model(sigma, q)
                for lam in config.lambda_map_lambdas:
                    key = f"q={tag(q)}/sigma={tag(sigma)}/lambda={tag(lam)}"
                    try:
                        se = solve_given_lambda(lam, model, config.prior)
                    except (RangeError, NoFixedPointError) as e:
                        logger.warning(f"λ={lam} の解を求められません: {e}")
                        rows.append((q, sigma, lam, math.nan, math.nan, math.nan))
                        outcome.fail(key, str(e))
                        continue
                    rows.append((q, sigma, lam, se.alpha, se.tau, se.amse))
                    outcome.succeed(key)

        path = out_dir / "lambda_map.csv"
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(LAMBDA_MAP_CSV_HEADER)
            for row in rows:
                writer.writerow([CSV_FLOAT_FORMAT.format(value) for value in row])
        outcome.files.append(path)
        return outcome
