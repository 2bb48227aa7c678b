"""wifidiag: deterministic Wi-Fi fault simulator and diagnosis benchmark."""

__version__ = "0.1.0"
