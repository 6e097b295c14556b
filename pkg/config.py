import io
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from errors import ConfigError
from randomness import parse_seed
from sieve import SieveParams
from synthesis import HurstFunction, check_block_gaps
from wavelets import WaveletSpec

load_dotenv()

ENV_PREFIX = "HOLDERLAB_"
POINT_GROUPS = ("sieve", "random", "argmax")


class Settings:
    # Logging
    LOG_LEVEL = os.getenv("HOLDERLAB_LOG_LEVEL", "INFO").upper()

    # Experiment files
    CONFIG_PATH = os.getenv("HOLDERLAB_CONFIG", "holderlab.env")
    THRESHOLDS_PATH = os.getenv("HOLDERLAB_THRESHOLDS", "thresholds.json")
    OUTPUT_DIR = os.getenv("HOLDERLAB_OUTPUT_DIR", "runs")

    # Parallelism over seeds/points
    WORKERS = int(os.getenv("HOLDERLAB_WORKERS", 1))

    # Report format
    SCHEMA_VERSION = 1


settings = Settings()


def setup_logging(level: str = None) -> None:
    """Configure the root logger; everything goes to stderr, stdout is for reports."""
    logging.basicConfig(
        level=getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


class ExperimentConfig(BaseModel):
    """
    One experiment. Keys in the config file are the upper-cased field names
    (WAVELET=db4); the same keys prefixed with HOLDERLAB_ override them from
    the environment.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    # randomness
    seed: int = 1
    n_seeds: int = 1
    law: Literal["gaussian", "uniform"] = "gaussian"

    # series
    series: Literal["fh", "fH", "brownian", "prevalence"] = "fh"
    wavelet: str
    h: float = 0.5
    hurst: Optional[str] = None
    j_max: int = 16
    J_grid: Optional[int] = None
    window_lo: float = 0.0
    window_hi: float = 1.0
    blocks: str = "3,8,16"

    # sieve
    m: int = 3
    mu: int = 3
    J1: int = 4
    J_cap: int = 14
    trim_edges: bool = True

    # analysis
    j_lo: int = 6
    j_hi: Optional[int] = None
    margin: int = 4
    points_per_group: int = 4
    groups: str = "sieve,random,argmax"
    scan_points: int = 9
    thresholds: str = settings.THRESHOLDS_PATH

    # output
    output_dir: str = settings.OUTPUT_DIR
    workers: int = settings.WORKERS

    @field_validator("seed", mode="before")
    @classmethod
    def _parse_seed(cls, value):
        return parse_seed(value)

    @field_validator("wavelet")
    @classmethod
    def _check_wavelet(cls, value: str) -> str:
        return WaveletSpec.parse(value).name

    @field_validator("h")
    @classmethod
    def _check_h(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"h must lie in (0, 1), got {value}")
        return value

    @field_validator("hurst")
    @classmethod
    def _check_hurst(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return None
        return HurstFunction.parse(value).descriptor

    @field_validator("n_seeds", "m", "mu", "workers", "points_per_group", "scan_points")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"must be at least 1, got {value}")
        return value

    @field_validator("blocks")
    @classmethod
    def _check_blocks(cls, value: str) -> str:
        blocks = [int(part) for part in value.split(",") if part.strip()]
        check_block_gaps(blocks)
        return ",".join(str(b) for b in blocks)

    @field_validator("groups")
    @classmethod
    def _check_groups(cls, value: str) -> str:
        groups = [part.strip() for part in value.split(",") if part.strip()]
        unknown = set(groups) - set(POINT_GROUPS)
        if unknown or not groups:
            raise ValueError(f"groups must be a non-empty subset of {POINT_GROUPS}, got {value!r}")
        return ",".join(groups)

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.J_grid is not None and self.J_grid < self.j_max:
            raise ValueError(f"J_grid={self.J_grid} must be at least j_max={self.j_max}")
        if not self.window_lo < self.window_hi:
            raise ValueError(f"window [{self.window_lo}, {self.window_hi}] is empty")
        if self.J1 > self.J_cap:
            raise ValueError(f"J1={self.J1} exceeds J_cap={self.J_cap}")
        if self.series == "fH" and self.hurst is None:
            raise ValueError("series=fH needs a hurst descriptor")
        if self.j_lo > self.analysis_top:
            raise ValueError(f"j_lo={self.j_lo} exceeds j_hi={self.analysis_top}")
        return self

    @property
    def grid(self) -> int:
        return self.j_max + 4 if self.J_grid is None else self.J_grid

    @property
    def window(self) -> Tuple[float, float]:
        return self.window_lo, self.window_hi

    @property
    def analysis_top(self) -> int:
        return self.grid - self.margin if self.j_hi is None else self.j_hi

    @property
    def seeds(self) -> List[int]:
        return [self.seed + i for i in range(self.n_seeds)]

    @property
    def spec(self) -> WaveletSpec:
        return WaveletSpec.parse(self.wavelet)

    def sieve_params(self) -> SieveParams:
        H = self.hurst_function() if self.series == "fH" else None
        inf_K = None if H is None else H.K_bounds[0]
        exponent = self.h if inf_K is None else min(self.h, inf_K)
        if exponent * self.m < 1.0:
            name = "h" if exponent == self.h else "inf K"
            raise ConfigError(
                f"Invalid value for 'm': m={self.m} too small for {name}={exponent:.4g}, "
                f"the sieve needs m >= {math.ceil(1.0 / exponent)}",
                field="m",
            )
        return SieveParams(m=self.m, mu=self.mu, J_cap=self.J_cap, J1=self.J1, trim_edges=self.trim_edges,
                           h=self.h, inf_K=inf_K)

    @property
    def block_list(self) -> List[int]:
        return [int(part) for part in self.blocks.split(",")]

    @property
    def group_list(self) -> List[str]:
        return self.groups.split(",")

    def hurst_function(self) -> Optional[HurstFunction]:
        if self.hurst is None:
            return None
        return HurstFunction.parse(self.hurst)

    def to_env_text(self) -> str:
        lines = []
        for name in type(self).model_fields:
            value = getattr(self, name)
            if value is None:
                text = ""
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{name.upper()}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_env_text(cls, text: str) -> "ExperimentConfig":
        return cls.layered(file_values=dotenv_values(stream=io.StringIO(text)), env={})

    @classmethod
    def load(cls, path: Union[str, Path, None] = None, env: Optional[Mapping[str, str]] = None,
             overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        path = Path(path) if path is not None else Path(settings.CONFIG_PATH)
        file_values: Mapping[str, Optional[str]] = {}
        if path.exists():
            file_values = dotenv_values(path)
        elif path != Path(settings.CONFIG_PATH):
            raise ConfigError(f"Config file {path} not found", field="config")
        return cls.layered(file_values, os.environ if env is None else env, overrides or {})

    @classmethod
    def layered(cls, file_values: Mapping[str, Optional[str]], env: Mapping[str, str],
                overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """defaults < file < HOLDERLAB_* environment < explicit overrides."""
        names = {name.upper(): name for name in cls.model_fields}
        data: Dict[str, Any] = {}
        for key, value in file_values.items():
            name = names.get(key.upper())
            if name is None:
                raise ConfigError(f"Unknown config key '{key}'", field=key)
            if value not in (None, ""):
                data[name] = value
        for upper, name in names.items():
            value = env.get(ENV_PREFIX + upper)
            if value not in (None, ""):
                data[name] = value
        for name, value in (overrides or {}).items():
            if value is not None:
                data[name] = value
        if "wavelet" not in data:
            raise ConfigError("Missing required field 'wavelet'", field="wavelet")
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            error = e.errors()[0]
            field = ".".join(str(part) for part in error["loc"]) or "config"
            raise ConfigError(f"Invalid value for '{field}': {error['msg']}", field=field)
