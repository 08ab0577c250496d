"""Self-play training of video-transmission policies judged by lexicographic rules."""

__version__ = "0.1.0"
