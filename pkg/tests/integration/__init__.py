"""Integration tests for thct-net."""
