"""Chart-based and multimodal time-series classification benchmark."""

from src.config import AppConfig, RunConfig, SweepConfig, load_app_config

__all__ = ["AppConfig", "RunConfig", "SweepConfig", "load_app_config"]
