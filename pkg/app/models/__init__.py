"""Search-space declarations, configuration models and study records."""
