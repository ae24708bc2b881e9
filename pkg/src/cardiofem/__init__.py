"""Finite-element monodomain solver for cardiac electrophysiology."""
