"""Reverse-mode autodiff over a small typed IR built by tracing Python code."""
