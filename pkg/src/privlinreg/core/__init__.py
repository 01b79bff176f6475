"""Simulation, privacy accounting and auditing."""
