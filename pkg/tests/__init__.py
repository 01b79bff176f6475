"""Tests for privlinreg."""
