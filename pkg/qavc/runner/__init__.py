"""Scenarios, experiment configs, pipelines and verification suites."""
