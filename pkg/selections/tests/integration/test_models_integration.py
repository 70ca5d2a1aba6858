import pytest
from django.db import IntegrityError
from django.utils import timezone

from selections.constants import ArtifactKind, RunStatus
from selections.models import ArtifactRecord, RunRecord, TaskRecord


def _run(command="simulate"):
    return RunRecord.objects.create(
        command=command,
        config_path="lab.toml",
        seed="5",
        version="0.3.0",
        started_at=timezone.now(),
    )


@pytest.mark.django_db
class TestRunRecord:
    """
    RunRecord モデルのテストクラス。
    """

    def test_defaults(self):
        """
        作成直後は running で、終了コードと終了日時が空であることを確認。
        """
        # When: 実行履歴を作成
        run = _run()

        # Then: 既定値
        assert run.status == RunStatus.RUNNING.value
        assert run.exit_code is None
        assert run.finished_at is None
        assert run.config_echo == {}
        assert str(run) == f"simulate #{run.pk}"

    def test_cascade(self):
        """
        実行履歴を消すとタスクと出力ファイルの記録も消えることを確認。
        """
        # Given: タスクと出力ファイルを持つ実行履歴
        run = _run()
        TaskRecord.objects.create(run=run, key="replicate=0", status=RunStatus.SUCCEEDED.value)
        ArtifactRecord.objects.create(
            run=run, path="/tmp/a.csv", kind=ArtifactKind.CSV.value, sha256="0" * 64
        )

        # When: 実行履歴を削除
        run.delete()

        # Then: 関連する記録も消える
        assert TaskRecord.objects.count() == 0
        assert ArtifactRecord.objects.count() == 0


@pytest.mark.django_db
class TestArtifactRecord:
    """
    ArtifactRecord モデルのテストクラス。
    """

    def test_unique_path(self):
        """
        同じパスの出力ファイルは 2 件登録できないことを確認。
        """
        # Given: 1 件登録済み
        run = _run()
        ArtifactRecord.objects.create(
            run=run, path="/tmp/a.csv", kind=ArtifactKind.CSV.value, sha256="0" * 64
        )

        # When & Then: IntegrityError が発生
        with pytest.raises(IntegrityError):
            ArtifactRecord.objects.create(
                run=_run("tune"), path="/tmp/a.csv", kind=ArtifactKind.CSV.value, sha256="1" * 64
            )

    def test_str(self):
        """
        文字列表現がパスであることを確認。
        """
        # When: 出力ファイルを登録
        artifact = ArtifactRecord.objects.create(
            run=_run(), path="/tmp/b.csv", kind=ArtifactKind.MANIFEST.value, sha256="0" * 64
        )

        # Then: パス
        assert str(artifact) == "/tmp/b.csv"
