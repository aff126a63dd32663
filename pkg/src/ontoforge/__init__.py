"""Clinical-trial outcome ontologies built with LLMs, merged through a sorted synonym index."""

__version__ = "0.1.0"
