"""
数値実験の管理コマンドに共通する処理をまとめたモジュール。

このスクリプトは以下の手順で処理を行います:
1. --config の TOML を読み込み、--seed があれば上書きする。
2. 実行履歴（RunRecord）を作成し、各コマンドの run_lab を呼ぶ。
3. run_lab が書き出したファイルを manifest.json にまとめ、ArtifactRecord に保存する。
4. タスクごとのステータスを TaskRecord に保存し、実行履歴を完了にする。

エラー処理:
    - BridgeLabError は例外クラスの終了コード（設定 2、数値 3、対象外の設定 4）を持つ
      CommandError に変換する。
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

from django.conf import settings
from django.core.management import CommandParser
from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from bridgelab import __version__
from selections.config import LabConfig, load_config
from selections.constants import ArtifactKind, RunStatus
from selections.exceptions import BridgeLabError
from selections.models import ArtifactRecord, RunRecord, TaskRecord

logger = logging.getLogger("selections")

MANIFEST_NAME = "manifest.json"


@dataclass
class LabOutcome:
    """
    run_lab の結果。

    Attributes:
        files (list[Path]): 書き出した CSV。
        tasks (list[tuple[str, RunStatus, str]]): (タスク名, ステータス, メッセージ)。
    """

    files: list[Path] = field(default_factory=list)
    tasks: list[tuple[str, RunStatus, str]] = field(default_factory=list)

    def succeed(self, key: str, message: str = "") -> None:
        self.tasks.append((key, RunStatus.SUCCEEDED, message))

    def fail(self, key: str, message: str) -> None:
        self.tasks.append((key, RunStatus.FAILED, message))


def sha256_of(path: Path) -> str:
    """
    ファイルの SHA-256 を返す。

    Args:
        path (Path): ファイルのパス。

    Returns:
        str: 16 進表記のハッシュ値。
    """
    return hashlib.sha256(path.read_bytes()).hexdigest()


def tag(value: float) -> str:
    """ファイル名に埋め込む数値の表記（例: 0.15 -> "0.15"）。"""
    return f"{value:g}"


class LabCommand(BaseCommand):
    """
    --config / --out / --seed / --threads を受け取り、実行履歴とマニフェストを残すコマンドの基底クラス。
    """

    command_name = ""

    def add_arguments(self, parser: CommandParser) -> None:  # pragma: no cover
        """
        コマンドライン引数を追加する

        Args:
            parser (CommandParser): コマンドライン引数を解析するためのパーサー
        """
        parser.add_argument("--config", required=True, help="実験設定ファイル（TOML）")
        parser.add_argument("--out", default=None, help="出力ディレクトリ")
        parser.add_argument("--seed", type=int, default=None, help="乱数シード（設定を上書き）")
        parser.add_argument("--threads", type=int, default=None, help="並列ワーカー数")

    def run_lab(self, config: LabConfig, out_dir: Path, threads: int) -> LabOutcome:
        """
        コマンド固有の処理。サブクラスで実装する。

        Args:
            config (LabConfig): 検証済みの設定。
            out_dir (Path): 出力ディレクトリ。
            threads (int): 並列ワーカー数。

        Returns:
            LabOutcome: 書き出したファイルとタスクのステータス。
        """
        raise NotImplementedError

    def handle(self, **options: Any) -> None:
        """
        コマンドのメイン処理。
        設定を読み込んで run_lab を実行し、マニフェストと実行履歴を保存する。

        Args:
            options (dict[str, Any]): コマンドライン引数（config, out, seed, threads）。
        """
        config_path = Path(str(options["config"]))
        out_dir = Path(options["out"] or settings.BRIDGELAB_OUTPUT_DIR)
        threads = int(options["threads"] or settings.BRIDGELAB_THREADS)
        started_at = timezone.now()
        run = RunRecord.objects.create(
            command=self.command_name,
            config_path=str(config_path),
            seed="" if options["seed"] is None else str(options["seed"]),
            version=__version__,
            started_at=started_at,
        )
        try:
            config = load_config(config_path).with_seed(options["seed"])
            run.config_echo = config.echo
            run.seed = str(config.seed)
            run.save(update_fields=["config_echo", "seed", "updated_at"])
            logger.info(
                f"START {self.command_name}: config={config_path}, out={out_dir}, "
                f"seed={config.seed}, threads={threads}"
            )
            out_dir.mkdir(parents=True, exist_ok=True)
            outcome = self.run_lab(config, out_dir, threads)
            manifest = self.write_manifest(run, config, outcome, out_dir, started_at)
            self.save_outcome(run, outcome, manifest)
            run.status = RunStatus.SUCCEEDED.value
            run.exit_code = 0
            run.finished_at = timezone.now()
            run.save()
            logger.info(f"END   {self.command_name}: ファイル数={len(outcome.files)}")
        except BridgeLabError as e:
            logger.error(f"{self.command_name} が失敗しました: {e}", exc_info=True)
            run.status = RunStatus.FAILED.value
            run.exit_code = int(e.exit_code)
            run.message = str(e)
            run.finished_at = timezone.now()
            run.save()
            raise CommandError(str(e), returncode=int(e.exit_code)) from e

    def write_manifest(
        self,
        run: RunRecord,
        config: LabConfig,
        outcome: LabOutcome,
        out_dir: Path,
        started_at: datetime,
    ) -> Path:
        """
        manifest.json を書き出す。

        Args:
            run (RunRecord): 実行履歴。
            config (LabConfig): 設定。
            outcome (LabOutcome): run_lab の結果。
            out_dir (Path): 出力ディレクトリ。
            started_at (datetime): 開始日時。

        Returns:
            Path: マニフェストのパス。
        """
        manifest = {
            "run_id": run.pk,
            "command": self.command_name,
            "version": __version__,
            "config_path": run.config_path,
            "config": config.echo,
            "seed": str(config.seed),
            "started_at": started_at.isoformat(),
            "finished_at": timezone.now().isoformat(),
            "tasks": [
                {"key": key, "status": status.value, "message": message}
                for key, status, message in outcome.tasks
            ],
            "files": [
                {"path": path.name, "kind": ArtifactKind.CSV.value, "sha256": sha256_of(path)}
                for path in outcome.files
            ],
        }
        path = out_dir / MANIFEST_NAME
        path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2), encoding="utf-8")
        return path

    @staticmethod
    def save_outcome(run: RunRecord, outcome: LabOutcome, manifest: Path) -> None:
        """
        タスクと出力ファイルを保存する。同じパスのファイルは最新の実行に付け替える。

        Args:
            run (RunRecord): 実行履歴。
            outcome (LabOutcome): run_lab の結果。
            manifest (Path): マニフェストのパス。
        """
        TaskRecord.objects.bulk_create(
            TaskRecord(run=run, key=key, status=status.value, message=message)
            for key, status, message in outcome.tasks
        )
        artifacts = [(path, ArtifactKind.CSV) for path in outcome.files]
        artifacts.append((manifest, ArtifactKind.MANIFEST))
        for path, kind in artifacts:
            ArtifactRecord.objects.update_or_create(
                path=str(path.resolve()),
                defaults={"run": run, "kind": kind.value, "sha256": sha256_of(path)},
            )
