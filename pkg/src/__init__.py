"""SCLENS source root."""
