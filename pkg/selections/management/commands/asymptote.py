"""
最適チューニングでの AMSE の漸近展開を q のグリッド上で計算し、CSV に書き出すコマンド。

このスクリプトは以下の手順で処理を行います:
1. [asymptote] の q_grid と expansions、[model] の σ ごとに展開を計算する。
2. `q,regime,leading,second` の CSV を σ ごとに書き出す。
   定理の前提を満たさない (q, 展開) の組は行を出さず、タスクを失敗として記録する。

使用例:
    python manage.py asymptote --config lab.toml --out results/

エラー処理:
    - [asymptote] が無い場合は ConfigError（終了コード 2）。
"""

import csv
import logging
from pathlib import Path

from selections.asymptotics import (
    ExpansionResult,
    amse_large_noise,
    amse_large_sample,
    amse_low_noise,
    amse_sparse,
    cq,
    nearly_black_rate,
)
from selections.config import NEARLY_BLACK, AsymptoteSpec, LabConfig
from selections.constants import CSV_FLOAT_FORMAT, Regime
from selections.exceptions import ConfigError, DomainError, RegimeError
from selections.management.commands._base import LabCommand, LabOutcome, tag
from selections.state_evolution import ModelParams

logger = logging.getLogger("selections")

ASYMPTOTE_CSV_HEADER = ("q", "regime", "leading", "second")


def expansion(
    name: str, q: float, config: LabConfig, spec: AsymptoteSpec, sigma: float
) -> ExpansionResult:
    """
    名前で指定した漸近展開を 1 つ計算する。

    Args:
        name (str): 展開の名前（large_noise, low_noise, large_sample, sparse, c_q, nearly_black）。
        q (float): ブリッジ指数。
        config (LabConfig): 設定（δ と事前分布）。
        spec (AsymptoteSpec): asymptote の設定。
        sigma (float): σ。

    Returns:
        ExpansionResult: 展開の結果。
    """
    model = ModelParams(delta=config.delta, sigma=sigma, q=q)
    if name == Regime.LARGE_NOISE.value:
        return amse_large_noise(q, config.prior, sigma)
    if name == Regime.LOW_NOISE.value:
        return amse_low_noise(q, model, config.prior)
    if name == Regime.LARGE_SAMPLE.value:
        return amse_large_sample(q, model, config.prior)
    if name == Regime.SPARSE.value:
        return amse_sparse(q, config.prior, sigma)
    if name == Regime.CQ.value:
        return ExpansionResult(cq(q), 0.0, Regime.CQ, "c_q は q=2 で最大値 1")
    if name == NEARLY_BLACK and spec.nearly_black_regime is not None:
        return nearly_black_rate(
            q, spec.nearly_black_regime, config.prior, sigma, spec.c_r, config.delta
        )
    raise DomainError(f"未知の展開です: {name}")


class Command(LabCommand):
    help = "最適チューニングでの AMSE の漸近展開を q のグリッド上で計算する"
    command_name = "asymptote"

    def run_lab(self, config: LabConfig, out_dir: Path, threads: int) -> LabOutcome:
        """
        σ ごとに (q, 展開) の表を CSV に書き出す。

        Args:
            config (LabConfig): 検証済みの設定。
            out_dir (Path): 出力ディレクトリ。
            threads (int): 使わない。

        Returns:
            LabOutcome: 書き出したファイルとタスクのステータス。
        """
        spec = config.asymptote
        if spec is None:
            raise ConfigError("asymptote", "必須のセクションがありません")
        outcome = LabOutcome()
        for sigma in config.sigmas:
            rows = []
            for q in spec.q_grid:
                for name in spec.expansions:
                    key = f"sigma={tag(sigma)}/q={tag(q)}/{name}"
                    try:
                        result = expansion(name, q, config, spec, sigma)
                    except (RegimeError, DomainError) as e:
                        logger.warning(f"展開を計算できません: {key}: {e}")
                        outcome.fail(key, str(e))
                        continue
                    rows.append((q, result.regime.value, result.leading, result.second_order))
                    outcome.succeed(key, result.validity_note)

            path = out_dir / f"asymptote_sigma{tag(sigma)}.csv"
            with path.open("w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(ASYMPTOTE_CSV_HEADER)
                for q, regime, leading, second in rows:
                    writer.writerow(
                        [
                            CSV_FLOAT_FORMAT.format(q),
                            regime,
                            CSV_FLOAT_FORMAT.format(leading),
                            CSV_FLOAT_FORMAT.format(second),
                        ]
                    )
            outcome.files.append(path)
        return outcome
