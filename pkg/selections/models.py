from django.db import models

from selections.constants import ArtifactKind, RunStatus


class RunRecord(models.Model):
    """管理コマンドの実行履歴テーブル"""

    command = models.CharField(max_length=32, verbose_name="コマンド")
    config_path = models.CharField(max_length=255, verbose_name="設定ファイル")
    config_echo = models.JSONField(default=dict, verbose_name="設定内容")
    seed = models.CharField(max_length=20, verbose_name="乱数シード")
    version = models.CharField(max_length=16, verbose_name="バージョン")
    status = models.CharField(
        max_length=16,
        choices=[(s.value, s.name) for s in RunStatus],
        default=RunStatus.RUNNING.value,
        verbose_name="ステータス",
    )
    exit_code = models.IntegerField(null=True, blank=True, verbose_name="終了コード")
    message = models.TextField(blank=True, default="", verbose_name="メッセージ")
    started_at = models.DateTimeField(verbose_name="開始日時")
    finished_at = models.DateTimeField(null=True, blank=True, verbose_name="終了日時")
    created_at = models.DateTimeField(auto_now_add=True, verbose_name="作成日時")
    updated_at = models.DateTimeField(auto_now=True, verbose_name="更新日時")

    def __str__(self):
        return f"{self.command} #{self.pk}"


class TaskRecord(models.Model):
    """実行単位（反復やグリッドの点）ごとのステータステーブル"""

    run = models.ForeignKey(
        RunRecord, on_delete=models.CASCADE, related_name="tasks", verbose_name="実行履歴"
    )
    key = models.CharField(max_length=100, verbose_name="タスク")
    status = models.CharField(
        max_length=16,
        choices=[(s.value, s.name) for s in RunStatus],
        verbose_name="ステータス",
    )
    message = models.TextField(blank=True, default="", verbose_name="メッセージ")
    created_at = models.DateTimeField(auto_now_add=True, verbose_name="作成日時")
    updated_at = models.DateTimeField(auto_now=True, verbose_name="更新日時")

    def __str__(self):
        return self.key


class ArtifactRecord(models.Model):
    """出力ファイルテーブル（同じパスは最後に書いた実行だけを指す）"""

    run = models.ForeignKey(
        RunRecord, on_delete=models.CASCADE, related_name="artifacts", verbose_name="実行履歴"
    )
    path = models.CharField(max_length=255, unique=True, verbose_name="パス")
    kind = models.CharField(
        max_length=16,
        choices=[(k.value, k.name) for k in ArtifactKind],
        verbose_name="種類",
    )
    sha256 = models.CharField(max_length=64, verbose_name="SHA-256")
    created_at = models.DateTimeField(auto_now_add=True, verbose_name="作成日時")
    updated_at = models.DateTimeField(auto_now=True, verbose_name="更新日時")

    def __str__(self):
        return self.path
