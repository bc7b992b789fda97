"""Tests for Aerie."""
