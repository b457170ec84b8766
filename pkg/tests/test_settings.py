"""Tests for environment-driven configuration."""
import importlib

import pytest

import config.settings


@pytest.fixture
def reload_settings(monkeypatch):
    """Reload the settings module under a patched environment, then restore it."""
    def reload(**env):
        for name, value in env.items():
            monkeypatch.setenv(name, value)
        return importlib.reload(config.settings).Config

    yield reload
    monkeypatch.undo()
    importlib.reload(config.settings)


class TestEnvironment:
    def test_seed_variable_sets_the_default_seed(self, reload_settings):
        assert reload_settings(P2ILF_SEED="7").SEED == 7

    def test_unparsable_seed_falls_back_to_zero(self, reload_settings):
        assert reload_settings(P2ILF_SEED="seven").SEED == 0

    def test_render_threads_variable(self, reload_settings):
        settings = reload_settings(RENDER_THREADS="3")
        assert settings.RENDER_THREADS == 3
        assert settings.validate_config()

    def test_validation_names_every_bad_variable(self, reload_settings):
        settings = reload_settings(RENDER_THREADS="0", REGISTRATION_JOBS="0")
        with pytest.raises(ValueError, match="REGISTRATION_JOBS, RENDER_THREADS"):
            settings.validate_config()
