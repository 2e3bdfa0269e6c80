__version__ = "1.0.0"
# Bumped by hand on release; recorded in every run manifest
