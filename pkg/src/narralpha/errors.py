"""Shared exception types; the CLI maps UserError to exit code 1."""


class UserError(Exception):
    """Bad input data or configuration supplied by the caller."""


class SchemaError(UserError):
    """Input file does not conform to its documented schema."""
