class ValidationError(ValueError):
    """Bad input data or configuration: wrong shapes, out-of-range values,
    malformed files. Maps to exit code 1 in the CLI."""
