"""Sparse tensor format customization engine."""
