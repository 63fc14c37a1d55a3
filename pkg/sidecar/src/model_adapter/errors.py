class AdapterError(Exception):
    """Any export failure: bad job, missing model, unreadable inputs."""
