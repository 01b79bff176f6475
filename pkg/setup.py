"""Shim for tools that still invoke setup.py; metadata lives in pyproject.toml."""

from setuptools import setup

setup()
