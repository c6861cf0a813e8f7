"""Tests for the vtbench project."""
