class AdapterError(Exception):
    """Base error for the adapter; batch failures carry shard/batch context."""
