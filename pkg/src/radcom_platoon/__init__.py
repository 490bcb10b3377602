"""Discrete-event study of offloading platoon control traffic from ITS-G5 to
bumper-to-bumper radar communication, with safety-gap and fuel post-processing."""

__version__ = "0.1.0"
