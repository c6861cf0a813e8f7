"""
Chart-based Time-Series Classification Benchmark

Entry point for rendering chart caches, training single configurations,
running resumable ablation sweeps, building report tables and running the
built-in self-checks.

Usage:
    uv run python main.py selfcheck
    uv run python main.py train --config sweep.toml --run.dataset GunPoint
    uv run python main.py sweep --config sweep.toml
    uv run python main.py report delta --format markdown
"""

import sys

from src.cli import main


if __name__ == "__main__":
    sys.exit(main())
