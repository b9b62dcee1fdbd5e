"""Benchmark harness: system families, experiments, verification and plots."""
