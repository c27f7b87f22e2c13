"""Configuration, datasets, stage orchestration, sweeps, reports and the CLI."""
