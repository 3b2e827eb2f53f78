"""Tests for the chemotactic pulse laboratory."""
