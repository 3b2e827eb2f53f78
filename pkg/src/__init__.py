"""Chemotactic pulse laboratory: macroscopic and kinetic solvers, analytics and run harness."""
