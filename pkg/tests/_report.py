"""Criterion result lines collected during a pytest session."""
LINES = []
