"""Core module containing configuration, errors, logging, and shared builders."""
