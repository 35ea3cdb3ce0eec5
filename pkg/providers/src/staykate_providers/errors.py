class ProviderError(Exception):
    """Invalid input, misalignment, or endpoint failure."""
