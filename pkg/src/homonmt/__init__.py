"""Translation that stays robust to homophone errors in Chinese source text."""

__version__ = "0.1.0"
