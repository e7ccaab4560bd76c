"""Consistent two-level feature attribution toolkit."""
