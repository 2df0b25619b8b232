"""Experiment driver: scenario files, sweeps, figure data and the CLI."""
