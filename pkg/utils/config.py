"""
Toolkit configuration
Defaults can be overridden through CRF_* environment variables or a .env file
"""

from functools import lru_cache
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class CRFSettings(BaseSettings):
    """Defaults for training, inference and logging"""

    model_config = SettingsConfigDict(env_prefix="CRF_", extra="ignore")

    # Logging
    log_level: str = "INFO"
    json_logs: bool = False
    log_file: Optional[Path] = None

    # Regularization
    sigma2: float = Field(10.0, gt=0)
    l1_alpha: float = Field(1.0, ge=0)

    # L-BFGS
    lbfgs_memory: int = Field(10, ge=1)
    lbfgs_grad_tol: float = Field(1e-5, gt=0)
    lbfgs_rel_obj_tol: float = Field(1e-9, gt=0)
    lbfgs_max_iters: int = Field(500, ge=1)

    # SGD
    sgd_epochs: int = Field(20, ge=1)
    sgd_calibration_fraction: float = Field(0.1, gt=0, le=1)

    # Belief propagation
    bp_max_iters: int = Field(100, ge=1)
    bp_tolerance: float = Field(1e-6, gt=0)
    bp_damping: float = Field(0.0, ge=0, lt=1)

    # Features
    epsilon_unsupported: float = Field(0.1, gt=0, le=1)
    unsupported_warmup_iters: int = Field(5, ge=1)

    # Latent-variable training
    m_step_iters: int = Field(10, ge=1)
    hcrf_init_range: float = Field(0.1, ge=0)

    workers: int = Field(1, ge=1)
    seed: int = 0


@lru_cache(maxsize=1)
def get_settings() -> CRFSettings:
    """Load settings once per process (reads .env when present)"""
    load_dotenv()
    return CRFSettings()
