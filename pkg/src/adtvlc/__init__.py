"""Indoor visible-light channel simulator with angle diversity transmitters and beam steering."""

__version__ = "0.1.0"
