"""Command-line surface of the benchmark harness."""
