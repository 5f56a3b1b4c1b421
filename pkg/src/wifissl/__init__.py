"""Mean Teacher semi-supervised indoor localization on Wi-Fi RSSI fingerprints."""

__version__ = "0.1.0"
