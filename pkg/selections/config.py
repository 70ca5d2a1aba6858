"""
実験設定ファイル（TOML）を読み込み、スキーマを検証するモジュール。

このモジュールは以下の手順で処理を行います:
1. tomllib で読み込む。浮動小数点は parse_float=Decimal で十進の文字列から読む。
   数値は "0.15" のような引用符つきの十進表記でもよい。
2. 各セクションのキーを検証する。未知のセクション・キーは拒否する。
3. 検証済みの値を LabConfig（SignalPrior、DesignSpec、MethodSpec などの組）にまとめる。

使用例:
    config = load_config(Path("lab.toml"))
    experiment = config.experiment(sigma=config.sigmas[0])

エラー処理:
    - スキーマ違反は ConfigError。field に "prior.epsilon" や "methods[1].tuning" のような
      違反箇所のパスを持つ。
"""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Mapping
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any

from selections.constants import (
    DEFAULT_ATPP_GRID,
    DesignKind,
    Method,
    NearlyBlackCase,
    NoiseScaling,
    Regime,
    Tuning,
)
from selections.exceptions import BridgeLabError, ConfigError
from selections.pipeline import DesignSpec, ExperimentConfig, MethodSpec
from selections.prior import SignalPrior
from selections.state_evolution import ModelParams

logger = logging.getLogger("selections")

SECTIONS = (
    "model",
    "prior",
    "design",
    "experiment",
    "curve",
    "methods",
    "tune",
    "lambda_map",
    "asymptote",
)
SECTION_KEYS: dict[str, tuple[str, ...]] = {
    "model": ("delta", "sigma", "noise_scaling"),
    "prior": ("epsilon", "scale", "point_mass", "atoms", "weights"),
    "design": ("kind", "corr_rho", "t_nu"),
    "experiment": ("p", "replicates", "seed", "fdr_target", "lasso_path_size"),
    "curve": ("atpp_grid",),
    "methods": ("method", "q", "tuning"),
    "tune": ("q",),
    "lambda_map": ("q", "lambdas"),
    "asymptote": ("q_grid", "expansions", "nearly_black_regime", "c_r"),
}
NEARLY_BLACK = "nearly_black"
EXPANSIONS = (
    Regime.LARGE_NOISE.value,
    Regime.LOW_NOISE.value,
    Regime.LARGE_SAMPLE.value,
    Regime.SPARSE.value,
    Regime.CQ.value,
    NEARLY_BLACK,
)
Q_GRID_KEYS = ("start", "stop", "step")


@dataclass(frozen=True)
class AsymptoteSpec:
    """
    asymptote コマンドの設定。

    Attributes:
        q_grid (tuple[float, ...]): q のグリッド。
        expansions (tuple[str, ...]): 計算する展開。
        nearly_black_regime (NearlyBlackCase | None): nearly black のケース。
        c_r (float | None): θ ケースの定数。
    """

    q_grid: tuple[float, ...]
    expansions: tuple[str, ...] = EXPANSIONS[:-1]
    nearly_black_regime: NearlyBlackCase | None = None
    c_r: float | None = None


@dataclass(frozen=True)
class LabConfig:
    """
    検証済みの実験設定。

    Attributes:
        echo (dict[str, Any]): 読み込んだ設定（Decimal は文字列にした JSON 互換の辞書）。
        delta (float): サンプル比 δ。
        sigmas (tuple[float, ...]): ノイズの標準偏差の列。
        noise_scaling (NoiseScaling): ノイズのスケーリング。
        prior (SignalPrior): 事前分布。
        design (DesignSpec): 計画行列。
        methods (tuple[MethodSpec, ...]): 手法。
        atpp_grid (tuple[float, ...]): ATPP のグリッド。
        p (int | None): 変数の数。
        replicates (int): 反復回数。
        seed (int): 乱数シード。
        fdr_target (float | None): ノックオフの目標 FDR。
        lasso_path_size (int): LASSO の λ の点数。
        tune_q (tuple[float, ...]): tune コマンドの q。
        lambda_map_q (tuple[float, ...]): lambda_map コマンドの q。
        lambda_map_lambdas (tuple[float, ...]): lambda_map コマンドの λ。
        asymptote (AsymptoteSpec | None): asymptote コマンドの設定。
    """

    echo: dict[str, Any]
    delta: float
    sigmas: tuple[float, ...]
    noise_scaling: NoiseScaling
    prior: SignalPrior
    design: DesignSpec
    methods: tuple[MethodSpec, ...]
    atpp_grid: tuple[float, ...]
    p: int | None
    replicates: int
    seed: int
    fdr_target: float | None
    lasso_path_size: int
    tune_q: tuple[float, ...]
    lambda_map_q: tuple[float, ...]
    lambda_map_lambdas: tuple[float, ...]
    asymptote: AsymptoteSpec | None

    def with_seed(self, seed: int | None) -> "LabConfig":
        """コマンドラインの --seed で上書きした設定（None ならそのまま）。"""
        if seed is None:
            return self
        if not 0 <= seed < 2**64:
            raise ConfigError("--seed", f"64 ビットの非負整数である必要があります: {seed}")
        return replace(self, seed=seed)

    def model(self, sigma: float, q: float) -> ModelParams:
        """状態発展のモデル（ノイズのスケーリング込み）。"""
        return ModelParams.scaled(self.delta, sigma, q, self.noise_scaling)

    def experiment(self, sigma: float) -> ExperimentConfig:
        """
        σ を 1 つ選んだモンテカルロ実験の設定。

        Raises:
            ConfigError: experiment.p が無い、または手法が空の場合。
        """
        if self.p is None:
            raise ConfigError("experiment.p", "実験には必須です")
        if not self.methods:
            raise ConfigError("methods", "手法を 1 つ以上指定してください")
        try:
            return ExperimentConfig(
                p=self.p,
                delta=self.delta,
                prior=self.prior,
                sigma=sigma,
                methods=self.methods,
                replicates=self.replicates,
                seed=self.seed,
                noise_scaling=self.noise_scaling,
                design=self.design,
                atpp_grid=self.atpp_grid,
                fdr_target=self.fdr_target,
                lasso_path_size=self.lasso_path_size,
            )
        except BridgeLabError as e:
            raise ConfigError("experiment", str(e)) from e


def _echo(value: Any) -> Any:
    if isinstance(value, Decimal):
        return str(value)
    if isinstance(value, Mapping):
        return {key: _echo(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_echo(item) for item in value]
    return value


def _table(data: Mapping[str, Any], key: str, required: bool = False) -> dict[str, Any]:
    value = data.get(key)
    if value is None:
        if required:
            raise ConfigError(key, "必須のセクションがありません")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(key, "テーブルである必要があります")
    unknown = sorted(set(value) - set(SECTION_KEYS[key]))
    if unknown:
        raise ConfigError(f"{key}.{unknown[0]}", "未知のキーです")
    return value


def _decimal(value: Any, field: str) -> Decimal:
    if isinstance(value, bool):
        raise ConfigError(field, f"数値である必要があります: {value!r}")
    if isinstance(value, (Decimal, int)):
        return Decimal(value)
    if isinstance(value, str):
        try:
            return Decimal(value.strip())
        except InvalidOperation as e:
            raise ConfigError(field, f"十進数として読めません: {value!r}") from e
    raise ConfigError(field, f"数値である必要があります: {value!r}")


def _number(value: Any, field: str, low: float | None = None, high: float | None = None) -> float:
    number = _decimal(value, field)
    if not number.is_finite():
        raise ConfigError(field, f"有限の値である必要があります: {value!r}")
    result = float(number)
    if low is not None and result < low:
        raise ConfigError(field, f"{low} 以上である必要があります: {value!r}")
    if high is not None and result > high:
        raise ConfigError(field, f"{high} 以下である必要があります: {value!r}")
    return result


def _integer(value: Any, field: str, low: int | None = None) -> int:
    number = _decimal(value, field)
    if not number.is_finite() or number != number.to_integral_value():
        raise ConfigError(field, f"整数である必要があります: {value!r}")
    result = int(number)
    if low is not None and result < low:
        raise ConfigError(field, f"{low} 以上である必要があります: {value!r}")
    return result


def _numbers(value: Any, field: str, low: float | None = None) -> tuple[float, ...]:
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ConfigError(field, "空のリストは指定できません")
    return tuple(_number(item, f"{field}[{i}]", low) for i, item in enumerate(items))


def _choice(value: Any, field: str, enum: Any) -> Any:
    try:
        return enum(value)
    except ValueError as e:
        allowed = ", ".join(member.value for member in enum)
        raise ConfigError(field, f"{value!r} は使えません（{allowed}）") from e


def _prior(section: dict[str, Any]) -> SignalPrior:
    if "epsilon" not in section:
        raise ConfigError("prior.epsilon", "必須です")
    epsilon = _number(section["epsilon"], "prior.epsilon", 0.0, 1.0)
    scale = _number(section.get("scale", 1), "prior.scale")
    if scale <= 0:
        raise ConfigError("prior.scale", f"正である必要があります: {scale}")
    has_atoms = "atoms" in section or "weights" in section
    if ("point_mass" in section) == has_atoms:
        raise ConfigError("prior", "point_mass か atoms + weights のどちらか一方を指定してください")
    if "point_mass" in section:
        m = _number(section["point_mass"], "prior.point_mass")
        if m <= 0:
            raise ConfigError("prior.point_mass", f"正である必要があります: {m}")
        return SignalPrior.point_mass(epsilon, m, scale)
    for key in ("atoms", "weights"):
        if not isinstance(section.get(key), list):
            raise ConfigError(f"prior.{key}", "リストで指定してください")
    values = [_decimal(v, f"prior.atoms[{i}]") for i, v in enumerate(section["atoms"])]
    weights = [_decimal(w, f"prior.weights[{i}]") for i, w in enumerate(section["weights"])]
    if len(values) != len(weights) or not values:
        raise ConfigError("prior.weights", "atoms と同じ長さの空でないリストにしてください")
    if any(v <= 0 for v in values):
        raise ConfigError("prior.atoms", "アトムは正である必要があります")
    # 十進で足して 1 になるかを確かめる
    if any(w < 0 for w in weights) or sum(weights) != 1:
        raise ConfigError("prior.weights", f"和が 1 の非負値である必要があります: 和={sum(weights)}")
    return SignalPrior.discrete(
        epsilon, [float(v) for v in values], [float(w) for w in weights], scale
    )


def _design(section: dict[str, Any]) -> DesignSpec:
    kind = _choice(section.get("kind", DesignKind.IID_GAUSSIAN.value), "design.kind", DesignKind)
    rho = _number(section["corr_rho"], "design.corr_rho") if "corr_rho" in section else None
    nu = _number(section["t_nu"], "design.t_nu") if "t_nu" in section else None
    if (kind == DesignKind.TOEPLITZ_CORRELATED) != (rho is not None):
        raise ConfigError("design.corr_rho", "toeplitz_correlated のときだけ、かつ必ず指定します")
    if (kind == DesignKind.STUDENT_T) != (nu is not None):
        raise ConfigError("design.t_nu", "student_t のときだけ、かつ必ず指定します")
    if nu is not None and nu <= 2:
        raise ConfigError("design.t_nu", f"2 より大きい必要があります: {nu}")
    return DesignSpec(kind=kind, corr_rho=rho, t_nu=nu)


def _tuning(value: Any, field: str) -> Tuning | float:
    if isinstance(value, str) and value in {member.value for member in Tuning}:
        return Tuning(value)
    lam = _number(value, field, 0.0)
    return lam


def _methods(entries: Any) -> tuple[MethodSpec, ...]:
    if entries is None:
        return ()
    if not isinstance(entries, list):
        raise ConfigError("methods", "[[methods]] の配列で指定してください")
    specs = []
    for i, entry in enumerate(entries):
        path = f"methods[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(path, "テーブルである必要があります")
        unknown = sorted(set(entry) - set(SECTION_KEYS["methods"]))
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}", "未知のキーです")
        if "method" not in entry:
            raise ConfigError(f"{path}.method", "必須です")
        method = _choice(entry["method"], f"{path}.method", Method)
        q = _number(entry.get("q", 1), f"{path}.q", 1.0)
        if method == Method.LASSO and q != 1.0:
            raise ConfigError(f"{path}.q", f"lasso は q=1 のみです: {q}")
        tuning = _tuning(entry.get("tuning", Tuning.OPTIMAL.value), f"{path}.tuning")
        specs.append(MethodSpec(method=method, q=q, tuning=tuning))
    return tuple(specs)


def _q_grid(value: Any) -> tuple[float, ...]:
    field = "asymptote.q_grid"
    if isinstance(value, dict):
        unknown = sorted(set(value) - set(Q_GRID_KEYS))
        if unknown:
            raise ConfigError(f"{field}.{unknown[0]}", "未知のキーです")
        missing = [key for key in Q_GRID_KEYS if key not in value]
        if missing:
            raise ConfigError(f"{field}.{missing[0]}", "必須です")
        start = _decimal(value["start"], f"{field}.start")
        stop = _decimal(value["stop"], f"{field}.stop")
        step = _decimal(value["step"], f"{field}.step")
        if step <= 0 or stop < start:
            raise ConfigError(field, "start ≤ stop かつ step > 0 である必要があります")
        count = int((stop - start) / step) + 1
        grid = tuple(float(start + k * step) for k in range(count))
    else:
        grid = _numbers(value, field)
    if any(q < 1.0 for q in grid):
        raise ConfigError(field, f"q は 1 以上である必要があります: {grid}")
    return grid


def _asymptote(section: dict[str, Any]) -> AsymptoteSpec | None:
    if not section:
        return None
    if "q_grid" not in section:
        raise ConfigError("asymptote.q_grid", "必須です")
    q_grid = _q_grid(section["q_grid"])
    expansions = section.get("expansions", list(EXPANSIONS[:-1]))
    if not isinstance(expansions, list) or not expansions:
        raise ConfigError("asymptote.expansions", "空でないリストで指定してください")
    for i, name in enumerate(expansions):
        if name not in EXPANSIONS:
            raise ConfigError(f"asymptote.expansions[{i}]", f"{name!r} は使えません")
    case = None
    if "nearly_black_regime" in section:
        case = _choice(
            section["nearly_black_regime"], "asymptote.nearly_black_regime", NearlyBlackCase
        )
    c_r = _number(section["c_r"], "asymptote.c_r") if "c_r" in section else None
    if NEARLY_BLACK in expansions and case is None:
        raise ConfigError("asymptote.nearly_black_regime", "nearly_black には必須です")
    if case == NearlyBlackCase.THETA and (c_r is None or c_r <= 0):
        raise ConfigError("asymptote.c_r", "θ ケースには正の c_r が必要です")
    return AsymptoteSpec(q_grid, tuple(expansions), case, c_r)


def parse_config(data: Mapping[str, Any]) -> LabConfig:
    """
    読み込み済みの TOML（Decimal で読んだ辞書）を検証して LabConfig にする。

    Args:
        data (Mapping[str, Any]): TOML の内容。

    Returns:
        LabConfig: 検証済みの設定。

    Raises:
        ConfigError: スキーマ違反。
    """
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(unknown[0], "未知のセクションです")

    model = _table(data, "model", required=True)
    if "delta" not in model:
        raise ConfigError("model.delta", "必須です")
    delta = _number(model["delta"], "model.delta")
    if delta <= 0:
        raise ConfigError("model.delta", f"正である必要があります: {delta}")
    sigmas = _numbers(model.get("sigma", 1), "model.sigma", 0.0)
    scaling = _choice(
        model.get("noise_scaling", NoiseScaling.PLAIN.value), "model.noise_scaling", NoiseScaling
    )

    prior = _prior(_table(data, "prior", required=True))
    design = _design(_table(data, "design"))

    experiment = _table(data, "experiment")
    p = _integer(experiment["p"], "experiment.p", 10) if "p" in experiment else None
    replicates = _integer(experiment.get("replicates", 1), "experiment.replicates", 1)
    seed = _integer(experiment.get("seed", 0), "experiment.seed", 0)
    if seed >= 2**64:
        raise ConfigError("experiment.seed", "64 ビットの範囲を超えています")
    fdr_target = None
    if "fdr_target" in experiment:
        fdr_target = _number(experiment["fdr_target"], "experiment.fdr_target")
        if not 0.0 < fdr_target < 1.0:
            raise ConfigError("experiment.fdr_target", f"(0, 1) の範囲にしてください: {fdr_target}")
    path_size = _integer(experiment.get("lasso_path_size", 40), "experiment.lasso_path_size", 2)

    curve = _table(data, "curve")
    atpp_grid = DEFAULT_ATPP_GRID
    if "atpp_grid" in curve:
        atpp_grid = _numbers(curve["atpp_grid"], "curve.atpp_grid", 0.0)
        if any(z > 1.0 for z in atpp_grid):
            raise ConfigError("curve.atpp_grid", "ATPP は [0, 1] の範囲にしてください")

    tune = _table(data, "tune")
    lambda_map = _table(data, "lambda_map")
    tune_q = _numbers(tune["q"], "tune.q", 1.0) if "q" in tune else ()
    map_q = _numbers(lambda_map["q"], "lambda_map.q", 1.0) if "q" in lambda_map else ()
    lambdas: tuple[float, ...] = ()
    if "lambdas" in lambda_map:
        lambdas = _numbers(lambda_map["lambdas"], "lambda_map.lambdas", 0.0)

    return LabConfig(
        echo=_echo(dict(data)),
        delta=delta,
        sigmas=sigmas,
        noise_scaling=scaling,
        prior=prior,
        design=design,
        methods=_methods(data.get("methods")),
        atpp_grid=atpp_grid,
        p=p,
        replicates=replicates,
        seed=seed,
        fdr_target=fdr_target,
        lasso_path_size=path_size,
        tune_q=tune_q,
        lambda_map_q=map_q,
        lambda_map_lambdas=lambdas,
        asymptote=_asymptote(_table(data, "asymptote")),
    )


def load_config(path: Path) -> LabConfig:
    """
    設定ファイルを読み込んで検証する。

    Args:
        path (Path): TOML ファイルのパス。

    Returns:
        LabConfig: 検証済みの設定。

    Raises:
        ConfigError: ファイルが読めない、TOML として不正、またはスキーマ違反の場合。
    """
    try:
        with path.open("rb") as f:
            data = tomllib.load(f, parse_float=Decimal)
    except FileNotFoundError as e:
        raise ConfigError("--config", f"ファイルが見つかりません: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("--config", f"TOML として読めません: {e}") from e
    logger.debug(f"設定ファイルを読み込みました: {path}")
    return parse_config(data)
