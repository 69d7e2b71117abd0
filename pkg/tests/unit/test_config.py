"""
Unit tests for toolkit settings
"""

import pytest
from pydantic import ValidationError

from utils.config import CRFSettings, get_settings


class TestCRFSettings:
    """Test defaults and environment overrides"""

    def test_defaults(self, monkeypatch):
        monkeypatch.delenv("CRF_SIGMA2", raising=False)
        settings = CRFSettings()
        assert settings.sigma2 == 10.0
        assert settings.epsilon_unsupported == 0.1
        assert settings.lbfgs_memory == 10
        assert settings.bp_damping == 0.0
        assert settings.workers == 1

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("CRF_SIGMA2", "2.5")
        monkeypatch.setenv("CRF_WORKERS", "4")
        settings = get_settings()
        assert settings.sigma2 == 2.5
        assert settings.workers == 4

    def test_settings_are_cached(self):
        assert get_settings() is get_settings()

    @pytest.mark.parametrize(
        "name,value",
        [("CRF_SIGMA2", "0"), ("CRF_BP_DAMPING", "1.0"), ("CRF_WORKERS", "0")],
    )
    def test_invalid_values(self, monkeypatch, name, value):
        monkeypatch.setenv(name, value)
        with pytest.raises(ValidationError):
            CRFSettings()
