"""Pydantic schemas for reports, configuration and artifact metadata."""
