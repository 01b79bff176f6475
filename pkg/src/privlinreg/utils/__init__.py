"""Artifact helpers."""
