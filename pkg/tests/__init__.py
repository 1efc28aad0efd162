"""
Tests for thct-net.
"""
