import hashlib

import pytest

from selections.constants import ExitCode, RunStatus
from selections.exceptions import (
    BridgeLabError,
    ConfigError,
    DegenerateFitError,
    DomainError,
    NoFixedPointError,
    RegimeError,
    UnsupportedRegimeError,
)
from selections.management.commands._base import LabOutcome, sha256_of, tag


class TestHelpers:
    """
    tag / sha256_of / LabOutcome のテストクラス。
    """

    @pytest.mark.parametrize(("value", "expected"), [(0.15, "0.15"), (2.0, "2"), (1e-4, "0.0001")])
    def test_tag(self, value, expected):
        """
        ファイル名に使う数値の表記を確認。
        """
        # When & Then: 余分な 0 の無い表記
        assert tag(value) == expected

    def test_sha256_of(self, tmp_path):
        """
        ファイルの SHA-256 が hashlib の値と一致することを確認。
        """
        # Given: ファイル
        path = tmp_path / "a.csv"
        path.write_bytes(b"q,amse\n1,0.5\n")

        # When & Then: hashlib と一致する
        assert sha256_of(path) == hashlib.sha256(b"q,amse\n1,0.5\n").hexdigest()

    def test_outcome(self):
        """
        succeed / fail がタスクを順に記録することを確認。
        """
        # Given: 空の結果
        outcome = LabOutcome()

        # When: 成功と失敗を 1 つずつ記録
        outcome.succeed("q=1")
        outcome.fail("q=2", "到達できません")

        # Then: 記録順に並ぶ
        assert outcome.tasks == [
            ("q=1", RunStatus.SUCCEEDED, ""),
            ("q=2", RunStatus.FAILED, "到達できません"),
        ]
        assert outcome.files == []


class TestExitCodes:
    """
    例外クラスの終了コードのテストクラス。
    """

    @pytest.mark.parametrize(
        ("error", "expected"),
        [
            (ConfigError("model.delta", "必須です"), ExitCode.CONFIG),
            (DomainError("q < 1"), ExitCode.NUMERIC),
            (NoFixedPointError("発散しました"), ExitCode.NUMERIC),
            (DegenerateFitError("1 - df/n = 0"), ExitCode.NUMERIC),
            (BridgeLabError("失敗"), ExitCode.NUMERIC),
            (RegimeError("δ ≤ 1"), ExitCode.UNSUPPORTED),
            (UnsupportedRegimeError("n < 2p"), ExitCode.UNSUPPORTED),
        ],
    )
    def test_exit_code(self, error, expected):
        """
        設定は 2、数値は 3、対象外の設定は 4 を返すことを確認。
        """
        # When & Then: 終了コード
        assert error.exit_code == expected

    def test_config_error_message(self):
        """
        ConfigError のメッセージに違反箇所のパスが入ることを確認。
        """
        # When: 例外を作る
        error = ConfigError("prior.epsilon", "必須です")

        # Then: パスとメッセージ
        assert error.field == "prior.epsilon"
        assert str(error) == "prior.epsilon: 必須です"
