"""Programmatic test fixture generators."""
