class ConfigError(ValueError):
    """Invalid experiment configuration or configuration file."""
