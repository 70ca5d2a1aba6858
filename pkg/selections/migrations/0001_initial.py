# Generated by Django 5.1.5 on 2026-10-19 10:24

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="RunRecord",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True, primary_key=True, serialize=False, verbose_name="ID"
                    ),
                ),
                ("command", models.CharField(max_length=32, verbose_name="コマンド")),
                ("config_path", models.CharField(max_length=255, verbose_name="設定ファイル")),
                ("config_echo", models.JSONField(default=dict, verbose_name="設定内容")),
                ("seed", models.CharField(max_length=20, verbose_name="乱数シード")),
                ("version", models.CharField(max_length=16, verbose_name="バージョン")),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("running", "RUNNING"),
                            ("succeeded", "SUCCEEDED"),
                            ("failed", "FAILED"),
                        ],
                        default="running",
                        max_length=16,
                        verbose_name="ステータス",
                    ),
                ),
                (
                    "exit_code",
                    models.IntegerField(blank=True, null=True, verbose_name="終了コード"),
                ),
                ("message", models.TextField(blank=True, default="", verbose_name="メッセージ")),
                ("started_at", models.DateTimeField(verbose_name="開始日時")),
                (
                    "finished_at",
                    models.DateTimeField(blank=True, null=True, verbose_name="終了日時"),
                ),
                ("created_at", models.DateTimeField(auto_now_add=True, verbose_name="作成日時")),
                ("updated_at", models.DateTimeField(auto_now=True, verbose_name="更新日時")),
            ],
        ),
        migrations.CreateModel(
            name="TaskRecord",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True, primary_key=True, serialize=False, verbose_name="ID"
                    ),
                ),
                ("key", models.CharField(max_length=100, verbose_name="タスク")),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("running", "RUNNING"),
                            ("succeeded", "SUCCEEDED"),
                            ("failed", "FAILED"),
                        ],
                        max_length=16,
                        verbose_name="ステータス",
                    ),
                ),
                ("message", models.TextField(blank=True, default="", verbose_name="メッセージ")),
                ("created_at", models.DateTimeField(auto_now_add=True, verbose_name="作成日時")),
                ("updated_at", models.DateTimeField(auto_now=True, verbose_name="更新日時")),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="tasks",
                        to="selections.runrecord",
                        verbose_name="実行履歴",
                    ),
                ),
            ],
        ),
        migrations.CreateModel(
            name="ArtifactRecord",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True, primary_key=True, serialize=False, verbose_name="ID"
                    ),
                ),
                ("path", models.CharField(max_length=255, unique=True, verbose_name="パス")),
                (
                    "kind",
                    models.CharField(
                        choices=[("csv", "CSV"), ("manifest", "MANIFEST")],
                        max_length=16,
                        verbose_name="種類",
                    ),
                ),
                ("sha256", models.CharField(max_length=64, verbose_name="SHA-256")),
                ("created_at", models.DateTimeField(auto_now_add=True, verbose_name="作成日時")),
                ("updated_at", models.DateTimeField(auto_now=True, verbose_name="更新日時")),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="artifacts",
                        to="selections.runrecord",
                        verbose_name="実行履歴",
                    ),
                ),
            ],
        ),
    ]
